// Copyright vulnforge contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

// Transport for OpenAI-style chat-completion endpoints.

#pragma once

#include <chrono>
#include <string>

#include "vulnforge/llm.hpp"

namespace vulnforge::llm {

struct HttpBackendSettings {
  std::string endpoint;     // e.g. https://host/v1/chat/completions
  std::string api_key_env;  // name of the variable holding the bearer token
  std::chrono::seconds timeout{120};
};

// Request body in chat-completion format.
std::string build_wire_request(const CompletionRequest &request);

// Maps a response body to an outcome. Malformed bodies are permanent failures.
AttemptOutcome parse_wire_response(int http_status, const std::string &body);

class HttpTransport : public Transport {
 public:
  // Reads the credential from the environment and registers it with the
  // global redactor. Throws config Error if the variable is unset or empty.
  explicit HttpTransport(HttpBackendSettings settings);

  AttemptOutcome send(const CompletionRequest &request) override;

 private:
  HttpBackendSettings settings_;
  std::string scheme_host_port_;
  std::string path_;
  std::string api_key_;
};

}  // namespace vulnforge::llm
