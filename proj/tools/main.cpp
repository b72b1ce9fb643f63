// Copyright vulnforge contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "vulnforge/cli.hpp"

int main(int argc, char **argv) {
  return vulnforge::cli::run_cli(argc, argv, std::cout, std::cerr);
}
