// Copyright vulnforge contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cctype>
#include <thread>

#include "vulnforge/http_backend.hpp"
#include "vulnforge/llm.hpp"
#include "vulnforge/logging.hpp"
#include "vulnforge/mock_backend.hpp"

namespace vulnforge::llm {

using namespace std::chrono;

const char *to_string(FinishReason r) {
  switch (r) {
    case FinishReason::stop:
      return "stop";
    case FinishReason::length:
      return "length";
    case FinishReason::error:
      return "error";
  }
  return "error";
}

static const char *status_name(AttemptOutcome::Status s) {
  switch (s) {
    case AttemptOutcome::Status::ok:
      return "ok";
    case AttemptOutcome::Status::transient:
      return "transient";
    case AttemptOutcome::Status::permanent:
      return "permanent";
    case AttemptOutcome::Status::unreachable:
      return "unreachable";
  }
  return "unknown";
}

void validate_request(const CompletionRequest &r) {
  if (r.system_text.empty() || r.user_text.empty()) {
    throw validation_error("completion request needs system and user text");
  }
  if (!r.sampling.valid()) {
    throw validation_error("sampling parameters out of range (temperature " +
                           std::to_string(r.sampling.temperature) + ", top_p " +
                           std::to_string(r.sampling.top_p) + ")");
  }
  if (r.max_output_tokens <= 0) {
    throw validation_error("max_output_tokens must be positive");
  }
}

RetryingClient::RetryingClient(std::unique_ptr<Transport> transport,
                               ClientOptions options,
                               std::shared_ptr<spdlog::logger> logger)
    : transport_(std::move(transport)),
      options_(options),
      logger_(logger ? std::move(logger) : default_logger()),
      sleeper_([](milliseconds d) { std::this_thread::sleep_for(d); }),
      in_flight_(std::clamp(options.max_in_flight, 1, 1024)) {}

void RetryingClient::wait_for_rate_slot() {
  if (options_.requests_per_minute <= 0) return;
  const auto interval = duration_cast<steady_clock::duration>(
      duration<double>(60.0 / options_.requests_per_minute));
  steady_clock::time_point slot;
  {
    std::lock_guard lock(mutex_);
    auto now = steady_clock::now();
    slot = std::max(now, next_slot_);
    next_slot_ = slot + interval;
  }
  auto wait = slot - steady_clock::now();
  if (wait > steady_clock::duration::zero()) {
    sleeper_(duration_cast<milliseconds>(wait));
  }
}

CompletionResult RetryingClient::complete(const CompletionRequest &request) {
  validate_request(request);
  if (options_.max_input_tokens > 0) {
    auto estimate =
        estimate_tokens(request.system_text) + estimate_tokens(request.user_text);
    if (estimate > options_.max_input_tokens) {
      throw validation_error("request of ~" + std::to_string(estimate) +
                             " tokens exceeds the provider limit of " +
                             std::to_string(options_.max_input_tokens));
    }
  }

  in_flight_.acquire();
  struct Release {
    std::counting_semaphore<1024> &s;
    ~Release() { s.release(); }
  } release{in_flight_};

  const auto started = steady_clock::now();
  const int max_attempts = 1 + std::max(0, options_.retry_budget);
  AttemptOutcome last;
  for (int attempt = 1; attempt <= max_attempts; ++attempt) {
    wait_for_rate_slot();
    auto t0 = steady_clock::now();
    last = transport_->send(request);
    auto latency = duration_cast<milliseconds>(steady_clock::now() - t0);
    {
      std::lock_guard lock(mutex_);
      log_.push_back({attempt, last.status, last.http_status, last.error, latency});
    }
    if (last.status == AttemptOutcome::Status::ok) {
      logger_->debug("model {} attempt {} ok ({} ms)", request.model_name,
                     attempt, latency.count());
      CompletionResult result;
      result.text = std::move(last.text);
      result.finish_reason = last.finish_reason;
      result.usage = last.usage;
      result.attempt_count = attempt;
      result.latency = duration_cast<milliseconds>(steady_clock::now() - started);
      std::lock_guard lock(mutex_);
      usage_.input_tokens += result.usage.input_tokens;
      usage_.output_tokens += result.usage.output_tokens;
      return result;
    }
    logger_->warn("model {} attempt {}/{} {} (status {}): {}",
                  request.model_name, attempt, max_attempts,
                  status_name(last.status), last.http_status, last.error);
    if (last.status == AttemptOutcome::Status::permanent) {
      throw BackendError("backend rejected the request (status " +
                             std::to_string(last.http_status) +
                             "): " + last.error,
                         last.http_status, attempt, false);
    }
    if (attempt < max_attempts) {
      auto backoff = options_.base_backoff * (1LL << std::min(attempt - 1, 20));
      sleeper_(std::min<milliseconds>(backoff, options_.max_backoff));
    }
  }
  bool unreachable = last.status == AttemptOutcome::Status::unreachable;
  throw BackendError("backend failed after " + std::to_string(max_attempts) +
                         " attempts (last status " +
                         std::to_string(last.http_status) + "): " + last.error,
                     last.http_status, max_attempts, unreachable);
}

Usage RetryingClient::total_usage() const {
  std::lock_guard lock(mutex_);
  return usage_;
}

std::vector<AttemptLogEntry> RetryingClient::attempt_log() const {
  std::lock_guard lock(mutex_);
  return log_;
}

std::int64_t estimate_tokens(std::string_view text) {
  std::int64_t total = 0;
  std::size_t word = 0;
  auto flush = [&] {
    if (word) total += static_cast<std::int64_t>((word + 3) / 4);
    word = 0;
  };
  for (char ch : text) {
    auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || c == '_' || c >= 0x80) {
      ++word;
      continue;
    }
    flush();
    if (!std::isspace(c)) ++total;
  }
  flush();
  return total;
}

std::unique_ptr<RetryingClient> make_client(const BackendConfig &config,
                                            std::uint64_t seed,
                                            std::shared_ptr<spdlog::logger> logger) {
  std::unique_ptr<Transport> transport;
  if (config.kind == BackendKind::mock) {
    auto mock = std::make_unique<MockTransport>(load_mock_script(config.mock_script),
                                                seed);
    if (!config.call_log.empty()) mock->set_call_log(config.call_log);
    transport = std::move(mock);
  } else {
    HttpBackendSettings http;
    http.endpoint = config.endpoint;
    http.api_key_env = config.api_key_env;
    http.timeout = config.timeout;
    transport = std::make_unique<HttpTransport>(http);
  }
  return std::make_unique<RetryingClient>(std::move(transport), config.client,
                                          std::move(logger));
}

}  // namespace vulnforge::llm
