// Copyright vulnforge contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include <spdlog/spdlog.h>

namespace vulnforge {

// Replaces registered secret values with "***". Thread-safe.
class Redactor {
 public:
  void add_secret(std::string secret);
  std::string scrub(std::string_view text) const;

 private:
  mutable std::mutex mutex_;
  std::vector<std::string> secrets_;
};

// Process-wide redactor. Credentials are registered here as soon as they are
// read from the environment.
Redactor &global_redactor();

// Logger whose sinks only ever see scrubbed payloads.
std::shared_ptr<spdlog::logger> make_logger(const std::string &name,
                                            std::vector<spdlog::sink_ptr> sinks,
                                            Redactor &redactor = global_redactor());

// Default logger: stderr, level from VULNFORGE_LOG (info when unset).
std::shared_ptr<spdlog::logger> default_logger();

}  // namespace vulnforge
