// Copyright vulnforge contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

#include <spdlog/logger.h>

#include "vulnforge/error.hpp"
#include "vulnforge/sampling.hpp"

namespace vulnforge::llm {

enum class FinishReason { stop, length, error };

const char *to_string(FinishReason r);

struct CompletionRequest {
  std::string system_text;
  std::string user_text;
  SamplingParams sampling;
  int max_output_tokens = 2048;
  std::string model_name;
};

// Throws validation Error on empty texts, out-of-range sampling or a
// non-positive output budget.
void validate_request(const CompletionRequest &request);

struct Usage {
  std::int64_t input_tokens = 0;
  std::int64_t output_tokens = 0;
};

struct CompletionResult {
  std::string text;
  FinishReason finish_reason = FinishReason::stop;
  Usage usage;
  std::chrono::milliseconds latency{0};
  int attempt_count = 1;
};

// Outcome of a single wire attempt, before any retry policy is applied.
struct AttemptOutcome {
  enum class Status { ok, transient, permanent, unreachable };
  Status status = Status::ok;
  std::string text;
  FinishReason finish_reason = FinishReason::stop;
  Usage usage;
  int http_status = 0;
  std::string error;
};

class Transport {
 public:
  virtual ~Transport() = default;
  virtual AttemptOutcome send(const CompletionRequest &request) = 0;
};

// Permanent failure: a non-retryable status, or the retry budget ran out.
class BackendError : public Error {
 public:
  BackendError(const std::string &what, int last_status, int attempts,
               bool unreachable)
      : Error(ErrorKind::backend, what),
        last_status_(last_status),
        attempts_(attempts),
        unreachable_(unreachable) {}

  int last_status() const { return last_status_; }
  int attempts() const { return attempts_; }
  bool unreachable() const { return unreachable_; }

 private:
  int last_status_;
  int attempts_;
  bool unreachable_;
};

class LlmClient {
 public:
  virtual ~LlmClient() = default;
  virtual CompletionResult complete(const CompletionRequest &request) = 0;
};

struct ClientOptions {
  int retry_budget = 3;  // retries after the first attempt
  std::chrono::milliseconds base_backoff{500};
  std::chrono::milliseconds max_backoff{16000};
  double requests_per_minute = 0;  // 0 disables the rate limiter
  int max_in_flight = 4;
  std::int64_t max_input_tokens = 0;  // 0 disables the size check
};

struct AttemptLogEntry {
  int attempt = 0;
  AttemptOutcome::Status status = AttemptOutcome::Status::ok;
  int http_status = 0;
  std::string error;
  std::chrono::milliseconds latency{0};
};

// Applies retry with exponential backoff, a global in-flight budget and a
// request-rate limit on top of a transport. Safe for concurrent use.
class RetryingClient : public LlmClient {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  RetryingClient(std::unique_ptr<Transport> transport, ClientOptions options,
                 std::shared_ptr<spdlog::logger> logger = nullptr);

  CompletionResult complete(const CompletionRequest &request) override;

  // Replaces the real sleep used for backoff and rate limiting.
  void set_sleeper(Sleeper sleeper) { sleeper_ = std::move(sleeper); }

  Usage total_usage() const;
  std::vector<AttemptLogEntry> attempt_log() const;
  Transport &transport() { return *transport_; }

 private:
  void wait_for_rate_slot();

  std::unique_ptr<Transport> transport_;
  ClientOptions options_;
  std::shared_ptr<spdlog::logger> logger_;
  Sleeper sleeper_;
  std::counting_semaphore<1024> in_flight_;
  mutable std::mutex mutex_;
  Usage usage_;
  std::vector<AttemptLogEntry> log_;
  std::chrono::steady_clock::time_point next_slot_{};
};

// Cheap subword-style token estimate: every run of letters/digits/underscore
// costs ceil(len / 4) tokens and every other non-space character costs one.
// Used to flag budget overruns only; it is not any provider's tokenizer.
std::int64_t estimate_tokens(std::string_view text);

enum class BackendKind { mock, http };

// Everything needed to build a client for one named backend.
struct BackendConfig {
  std::string name;
  BackendKind kind = BackendKind::mock;
  std::string model;
  // mock
  std::filesystem::path mock_script;
  std::filesystem::path call_log;  // optional; one line per mock call
  // http
  std::string endpoint;
  std::string api_key_env;
  std::chrono::seconds timeout{120};
  // shared
  ClientOptions client;
};

// Builds a retrying client for the backend. The seed only affects mock
// transforms. Throws config Error when the credential variable is unset.
std::unique_ptr<RetryingClient> make_client(
    const BackendConfig &config, std::uint64_t seed,
    std::shared_ptr<spdlog::logger> logger = nullptr);

}  // namespace vulnforge::llm
