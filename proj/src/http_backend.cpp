// Copyright vulnforge contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#include "vulnforge/http_backend.hpp"

#include <cstdlib>

#include <httplib.h>
#include <json.hpp>

#include "vulnforge/logging.hpp"

namespace vulnforge::llm {

using nlohmann::json;

std::string build_wire_request(const CompletionRequest &request) {
  json messages = json::array();
  if (!request.system_text.empty()) {
    messages.push_back({{"role", "system"}, {"content", request.system_text}});
  }
  messages.push_back({{"role", "user"}, {"content", request.user_text}});
  json body = {{"model", request.model_name},
               {"messages", messages},
               {"temperature", request.sampling.temperature},
               {"top_p", request.sampling.top_p},
               {"max_tokens", request.max_output_tokens}};
  return body.dump();
}

AttemptOutcome parse_wire_response(int http_status, const std::string &body) {
  AttemptOutcome out;
  out.http_status = http_status;
  if (http_status == 429 || http_status >= 500) {
    out.status = AttemptOutcome::Status::transient;
    out.error = "HTTP " + std::to_string(http_status);
    return out;
  }
  if (http_status < 200 || http_status >= 300) {
    out.status = AttemptOutcome::Status::permanent;
    out.error = "HTTP " + std::to_string(http_status);
    // Providers explain rejected requests in the body; keep a short prefix.
    if (!body.empty()) out.error += ": " + body.substr(0, 200);
    return out;
  }
  try {
    json j = json::parse(body);
    const auto &choice = j.at("choices").at(0);
    out.text = choice.at("message").at("content").get<std::string>();
    std::string finish = choice.value("finish_reason", "stop");
    out.finish_reason = finish == "length" ? FinishReason::length : FinishReason::stop;
    if (j.contains("usage")) {
      out.usage.input_tokens = j["usage"].value("prompt_tokens", 0);
      out.usage.output_tokens = j["usage"].value("completion_tokens", 0);
    }
    out.status = AttemptOutcome::Status::ok;
  } catch (const json::exception &e) {
    out.status = AttemptOutcome::Status::permanent;
    out.error = std::string("malformed response body: ") + e.what();
  }
  return out;
}

HttpTransport::HttpTransport(HttpBackendSettings settings)
    : settings_(std::move(settings)) {
  if (settings_.api_key_env.empty()) {
    throw config_error("http backend: api_key_env is not set");
  }
  const char *key = std::getenv(settings_.api_key_env.c_str());
  if (!key || !*key) {
    throw config_error("http backend: environment variable " +
                       settings_.api_key_env + " is unset or empty");
  }
  api_key_ = key;
  global_redactor().add_secret(api_key_);

  const auto &ep = settings_.endpoint;
  auto scheme_end = ep.find("://");
  if (scheme_end == std::string::npos) {
    throw config_error("http backend: endpoint must include a scheme: " + ep);
  }
  auto path_start = ep.find('/', scheme_end + 3);
  scheme_host_port_ = ep.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : ep.substr(path_start);
}

AttemptOutcome HttpTransport::send(const CompletionRequest &request) {
  httplib::Client cli(scheme_host_port_);
  cli.set_connection_timeout(settings_.timeout);
  cli.set_read_timeout(settings_.timeout);
  cli.set_write_timeout(settings_.timeout);
  httplib::Headers headers = {{"Authorization", "Bearer " + api_key_}};
  auto res = cli.Post(path_, headers, build_wire_request(request), "application/json");
  if (!res) {
    AttemptOutcome out;
    out.status = AttemptOutcome::Status::unreachable;
    out.error = "connection failed: " + httplib::to_string(res.error());
    return out;
  }
  return parse_wire_response(res->status, res->body);
}

}  // namespace vulnforge::llm
