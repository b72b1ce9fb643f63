// Copyright vulnforge contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#include "vulnforge/logging.hpp"

#include <cstdlib>

#include <spdlog/sinks/base_sink.h>
#include <spdlog/sinks/stdout_color_sinks.h>

namespace vulnforge {

void Redactor::add_secret(std::string secret) {
  if (secret.empty()) return;
  std::lock_guard lock(mutex_);
  for (const auto &s : secrets_) {
    if (s == secret) return;
  }
  secrets_.push_back(std::move(secret));
}

std::string Redactor::scrub(std::string_view text) const {
  std::string out(text);
  std::lock_guard lock(mutex_);
  for (const auto &s : secrets_) {
    std::size_t pos = 0;
    while ((pos = out.find(s, pos)) != std::string::npos) {
      out.replace(pos, s.size(), "***");
      pos += 3;
    }
  }
  return out;
}

Redactor &global_redactor() {
  static Redactor r;
  return r;
}

namespace {

class RedactingSink : public spdlog::sinks::base_sink<std::mutex> {
 public:
  RedactingSink(spdlog::sink_ptr inner, Redactor &redactor)
      : inner_(std::move(inner)), redactor_(redactor) {}

 protected:
  void sink_it_(const spdlog::details::log_msg &msg) override {
    std::string clean = redactor_.scrub(
        std::string_view(msg.payload.data(), msg.payload.size()));
    spdlog::details::log_msg copy = msg;
    copy.payload = spdlog::string_view_t(clean.data(), clean.size());
    inner_->log(copy);
  }
  void flush_() override { inner_->flush(); }

 private:
  spdlog::sink_ptr inner_;
  Redactor &redactor_;
};

}  // namespace

std::shared_ptr<spdlog::logger> make_logger(const std::string &name,
                                            std::vector<spdlog::sink_ptr> sinks,
                                            Redactor &redactor) {
  std::vector<spdlog::sink_ptr> wrapped;
  for (auto &s : sinks) {
    wrapped.push_back(std::make_shared<RedactingSink>(std::move(s), redactor));
  }
  auto logger =
      std::make_shared<spdlog::logger>(name, wrapped.begin(), wrapped.end());
  logger->set_level(spdlog::level::trace);
  return logger;
}

std::shared_ptr<spdlog::logger> default_logger() {
  static std::shared_ptr<spdlog::logger> logger = [] {
    auto l = make_logger("vulnforge",
                         {std::make_shared<spdlog::sinks::stderr_color_sink_mt>()});
    const char *level = std::getenv("VULNFORGE_LOG");
    l->set_level(level ? spdlog::level::from_str(level) : spdlog::level::info);
    return l;
  }();
  return logger;
}

}  // namespace vulnforge
