// Copyright vulnforge contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

// Deterministic, scriptable stand-in for a chat-completion endpoint.
//
// A script is an ordered rule list. The first rule whose patterns match the
// request and whose use count is not exhausted decides the outcome:
//
//   {"rules": [
//     {"match": "ORIGINAL DESIGN", "action": "transform",
//      "transform": "rename_internal"},
//     {"match": "VERDICT", "model": "^gpt", "action": "respond",
//      "text": "VERDICT: PRESENT\nRATIONALE: ..."},
//     {"action": "fail_transient", "times": 2, "status": 503},
//     {"action": "random_choice", "choices": ["YES", "NO"]}
//   ]}

#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include "vulnforge/llm.hpp"

namespace vulnforge::llm {

struct MockRule {
  enum class Action {
    respond,
    transform,
    random_choice,
    fail_transient,
    fail_permanent,
    unreachable,
  };

  std::string match_text;  // regex searched in the user text; empty = any
  std::string model_text;  // regex searched in the model name; empty = any
  Action action = Action::respond;
  std::string text;
  std::string transform;  // identity | rename_internal | comment_churn | rename_port
  std::vector<std::string> choices;
  std::optional<int> times;
  FinishReason finish = FinishReason::stop;
  int status = 0;
};

struct MockScript {
  std::vector<MockRule> rules;
};

MockScript parse_mock_script(std::string_view json_text);
MockScript load_mock_script(const std::filesystem::path &path);

class MockTransport : public Transport {
 public:
  MockTransport(MockScript script, std::uint64_t seed);

  AttemptOutcome send(const CompletionRequest &request) override;

  std::size_t calls() const { return calls_.load(); }
  void set_call_log(std::filesystem::path path) { call_log_ = std::move(path); }

 private:
  struct CompiledRule {
    MockRule rule;
    std::optional<std::regex> match;
    std::optional<std::regex> model;
    int used = 0;
  };

  std::vector<CompiledRule> rules_;
  std::uint64_t seed_;
  std::atomic<std::size_t> calls_{0};
  std::mutex mutex_;
  std::filesystem::path call_log_;
};

// Source rewrites the mock applies to the first fenced block of a prompt.
// Each returns the input unchanged when it cannot parse it.
namespace transforms {
std::string rename_internal(const std::string &source, const std::string &tag);
std::string comment_churn(const std::string &source, const std::string &tag);
std::string rename_port(const std::string &source);
}  // namespace transforms

}  // namespace vulnforge::llm
