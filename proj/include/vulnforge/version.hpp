// Copyright vulnforge contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#pragma once

namespace vulnforge {

inline constexpr const char *kToolVersion = "0.3.0";

}  // namespace vulnforge
