// Copyright vulnforge contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#include <cstdlib>
#include <random>
#include <sstream>
#include <thread>

#include <doctest.h>
#include <httplib.h>
#include <json.hpp>
#include <spdlog/sinks/ostream_sink.h>

#include "test_support.hpp"
#include "vulnforge/code_blocks.hpp"
#include "vulnforge/http_backend.hpp"
#include "vulnforge/llm.hpp"
#include "vulnforge/logging.hpp"
#include "vulnforge/mock_backend.hpp"
#include "vulnforge/rtl.hpp"

using namespace vulnforge;
using namespace vulnforge::llm;
using namespace vulnforge::testing;
using nlohmann::json;

namespace {

CompletionRequest request(std::string user = "hello") {
  CompletionRequest r;
  r.system_text = "sys";
  r.user_text = std::move(user);
  r.model_name = "mock-model";
  return r;
}

std::unique_ptr<RetryingClient> mock_client(const std::string &script,
                                            ClientOptions options = {}) {
  auto transport = std::make_unique<MockTransport>(parse_mock_script(script), 7);
  auto client = std::make_unique<RetryingClient>(std::move(transport), options);
  client->set_sleeper([](std::chrono::milliseconds) {});
  return client;
}

}  // namespace

TEST_CASE("mock respond completes in one attempt") {
  auto client = mock_client(R"({"rules": [{"action": "respond", "text": "X"}]})");
  auto result = client->complete(request());
  CHECK(result.text == "X");
  CHECK(result.attempt_count == 1);
  CHECK(result.finish_reason == FinishReason::stop);
}

TEST_CASE("transient failures are retried") {
  auto client = mock_client(R"({"rules": [
    {"action": "fail_transient", "times": 2, "status": 503},
    {"action": "respond", "text": "ok"}]})");
  std::vector<std::chrono::milliseconds> sleeps;
  client->set_sleeper([&](std::chrono::milliseconds d) { sleeps.push_back(d); });
  auto result = client->complete(request());
  CHECK(result.text == "ok");
  CHECK(result.attempt_count == 3);
  REQUIRE(sleeps.size() == 2);
  CHECK(sleeps[0].count() == 500);
  CHECK(sleeps[1].count() == 1000);
  auto log = client->attempt_log();
  REQUIRE(log.size() == 3);
  CHECK(log[0].http_status == 503);
  CHECK(log[2].status == AttemptOutcome::Status::ok);
}

TEST_CASE("retry budget exhaustion and permanent failures") {
  SUBCASE("budget") {
    ClientOptions opts;
    opts.retry_budget = 2;
    auto client = mock_client(R"({"rules": [{"action": "fail_transient"}]})", opts);
    try {
      client->complete(request());
      FAIL("expected BackendError");
    } catch (const BackendError &e) {
      CHECK(e.attempts() == 3);
      CHECK(e.last_status() == 503);
      CHECK_FALSE(e.unreachable());
      CHECK(e.kind() == ErrorKind::backend);
    }
  }
  SUBCASE("permanent is not retried") {
    auto client = mock_client(R"({"rules": [{"action": "fail_permanent", "status": 401}]})");
    try {
      client->complete(request());
      FAIL("expected BackendError");
    } catch (const BackendError &e) {
      CHECK(e.attempts() == 1);
      CHECK(e.last_status() == 401);
    }
  }
  SUBCASE("unreachable") {
    auto client = mock_client(R"({"rules": [{"action": "unreachable"}]})");
    try {
      client->complete(request());
      FAIL("expected BackendError");
    } catch (const BackendError &e) {
      CHECK(e.unreachable());
    }
  }
  SUBCASE("no rule matches") {
    auto client = mock_client(R"({"rules": [{"match": "zzz", "action": "respond"}]})");
    CHECK_THROWS_AS(client->complete(request()), BackendError);
  }
}

TEST_CASE("request validation and size limit") {
  auto client = mock_client(R"({"rules": [{"action": "respond", "text": "X"}]})");
  auto r = request();
  r.sampling.temperature = -0.1;
  CHECK_THROWS_AS(client->complete(r), Error);
  r = request();
  r.sampling.top_p = 0;
  CHECK_THROWS_AS(client->complete(r), Error);
  r = request("");
  CHECK_THROWS_AS(client->complete(r), Error);

  ClientOptions opts;
  opts.max_input_tokens = 10;
  auto small = mock_client(R"({"rules": [{"action": "respond", "text": "X"}]})", opts);
  CHECK_NOTHROW(small->complete(request("a b c")));
  try {
    small->complete(request(std::string(200, 'x')));
    FAIL("expected size error");
  } catch (const Error &e) {
    CHECK(e.kind() == ErrorKind::validation);
  }
}

TEST_CASE("mock rules: model match, times, random choice determinism") {
  const std::string script = R"({"rules": [
    {"model": "^gpt", "action": "respond", "text": "from gpt"},
    {"action": "random_choice", "choices": ["A", "B", "C", "D"]}]})";
  auto a = mock_client(script);
  auto b = mock_client(script);
  auto r = request();
  r.model_name = "gpt-x";
  CHECK(a->complete(r).text == "from gpt");
  std::set<std::string> seen;
  for (int i = 0; i < 40; ++i) {
    auto q = request("prompt " + std::to_string(i));
    auto ta = a->complete(q).text;
    CHECK(ta == b->complete(q).text);
    seen.insert(ta);
  }
  CHECK(seen.size() > 1);
  CHECK_THROWS_AS(parse_mock_script(R"({"rules": [{"action": "explode"}]})"), Error);
  CHECK_THROWS_AS(parse_mock_script("not json"), Error);
}

TEST_CASE("mock call log records one line per call") {
  TempDir dir;
  auto transport = std::make_unique<MockTransport>(
      parse_mock_script(R"({"rules": [{"action": "respond", "text": "X"}]})"), 1);
  transport->set_call_log(dir / "calls.jsonl");
  auto *raw = transport.get();
  RetryingClient client(std::move(transport), {});
  client.complete(request());
  client.complete(request("second"));
  CHECK(raw->calls() == 2);
  auto text = read_file(dir / "calls.jsonl");
  CHECK(std::count(text.begin(), text.end(), '\n') == 2);
}

TEST_CASE("rename_internal keeps the interface and renames internals") {
  const auto src = fixture("rtl/csr_regfile_trojan.sv");
  auto out = transforms::rename_internal(src, "vabcd");
  CHECK(out != src);
  auto before = rtl::parse_module(src);
  auto after = rtl::parse_module(out);
  CHECK(rtl::port_signature(before) == rtl::port_signature(after));
  REQUIRE(before.registers.size() == after.registers.size());
  for (std::size_t i = 0; i < before.registers.size(); ++i) {
    CHECK(after.registers[i].name == before.registers[i].name + "_vabcd");
  }
  auto churned = transforms::comment_churn(src, "vabcd");
  CHECK(rtl::port_signature(rtl::parse_module(churned)) == rtl::port_signature(before));
  auto renamed = transforms::rename_port(src);
  CHECK(rtl::port_signature(rtl::parse_module(renamed)) != rtl::port_signature(before));
}

TEST_CASE("transform action rewrites the first fenced block") {
  auto client = mock_client(
      R"({"rules": [{"action": "transform", "transform": "rename_internal"}]})");
  const auto src = fixture("rtl/aes_key_leak.sv");
  auto result = client->complete(request("Rewrite:\n```systemverilog\n" + src + "```\n"));
  auto code = extract_code(result.text);
  REQUIRE(code);
  CHECK(rtl::parse_module(*code).module_name == rtl::parse_module(src).module_name);
}

TEST_CASE("code extraction") {
  CHECK(fenced_blocks("a\n```v\nx\n```\nb\n```\ny y\n```\n") ==
        std::vector<std::string>{"x\n", "y y\n"});
  CHECK(extract_code("```\nshort\n```\n```sv\nmuch longer\n```")->find("longer") !=
        std::string::npos);
  auto bare = extract_code("Sure:\nmodule m(input a); endmodule\nthanks");
  REQUIRE(bare);
  CHECK(bare->rfind("module m", 0) == 0);
  CHECK_FALSE(extract_code("no code here"));
}

TEST_CASE("token estimate") {
  CHECK(estimate_tokens("") == 0);
  // assign(2) b(1) =(1) a(1) ;(1)
  CHECK(estimate_tokens("assign b = a ;") == 6);
  CHECK(estimate_tokens("   \n\t") == 0);
  std::mt19937_64 rng(5);
  const std::string alphabet = "ab_ 9;(\n";
  for (int trial = 0; trial < 200; ++trial) {
    std::string s;
    int n = static_cast<int>(rng() % 60);
    for (int i = 0; i < n; ++i) s.push_back(alphabet[rng() % alphabet.size()]);
    for (std::size_t k = 0; k <= s.size(); ++k) {
      REQUIRE(estimate_tokens(s.substr(0, k)) <= estimate_tokens(s));
    }
  }
}

TEST_CASE("wire format") {
  auto r = request("u");
  r.sampling.temperature = 0.37;
  r.sampling.top_p = 0.9;
  r.max_output_tokens = 99;
  auto j = json::parse(build_wire_request(r));
  CHECK(j["temperature"].get<double>() == 0.37);
  CHECK(j["top_p"].get<double>() == 0.9);
  CHECK(j["max_tokens"] == 99);
  CHECK(j["messages"].size() == 2);
  CHECK(j["messages"][1]["content"] == "u");

  auto ok = parse_wire_response(
      200, R"({"choices":[{"message":{"content":"hi"},"finish_reason":"length"}],
              "usage":{"prompt_tokens":3,"completion_tokens":4}})");
  CHECK(ok.status == AttemptOutcome::Status::ok);
  CHECK(ok.text == "hi");
  CHECK(ok.finish_reason == FinishReason::length);
  CHECK(ok.usage.output_tokens == 4);
  CHECK(parse_wire_response(429, "").status == AttemptOutcome::Status::transient);
  CHECK(parse_wire_response(502, "").status == AttemptOutcome::Status::transient);
  CHECK(parse_wire_response(400, "").status == AttemptOutcome::Status::permanent);
  CHECK(parse_wire_response(200, "{}").status == AttemptOutcome::Status::permanent);
}

TEST_CASE("http transport against a local server; credential never logged") {
  const std::string secret = "sk-test-7f3a9c1e55d2";
  ::setenv("VULNFORGE_TEST_KEY", secret.c_str(), 1);

  httplib::Server server;
  std::string seen_auth;
  int hits = 0;
  server.Post("/v1/chat/completions", [&](const httplib::Request &req, httplib::Response &res) {
    seen_auth = req.get_header_value("Authorization");
    if (++hits == 1) {
      res.status = 503;
      res.set_content("busy " + seen_auth, "text/plain");
      return;
    }
    auto body = json::parse(req.body);
    json reply = {{"choices", {{{"message", {{"content", "echo " + body["model"].get<std::string>()}}},
                                {"finish_reason", "stop"}}}}};
    res.set_content(reply.dump(), "application/json");
  });
  int port = server.bind_to_any_port("127.0.0.1");
  std::thread th([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  std::ostringstream captured;
  auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(captured);
  auto logger = make_logger("http-test", {sink});
  logger->set_level(spdlog::level::trace);

  BackendConfig cfg;
  cfg.kind = BackendKind::http;
  cfg.model = "m1";
  cfg.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
  cfg.api_key_env = "VULNFORGE_TEST_KEY";
  cfg.timeout = std::chrono::seconds(5);
  auto client = make_client(cfg, 0, logger);
  client->set_sleeper([](std::chrono::milliseconds) {});
  auto r = request();
  r.model_name = "m1";
  auto result = client->complete(r);
  CHECK(result.text == "echo m1");
  CHECK(result.attempt_count == 2);
  CHECK(seen_auth == "Bearer " + secret);

  logger->info("diagnostic dump: key={}", secret);
  logger->flush();
  CHECK(captured.str().find(secret) == std::string::npos);
  CHECK(captured.str().find("***") != std::string::npos);

  server.stop();
  th.join();

  cfg.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
  cfg.client.retry_budget = 1;
  auto dead = make_client(cfg, 0, logger);
  dead->set_sleeper([](std::chrono::milliseconds) {});
  try {
    dead->complete(r);
    FAIL("expected BackendError");
  } catch (const BackendError &e) {
    CHECK(e.unreachable());
  }

  ::unsetenv("VULNFORGE_MISSING_KEY");
  cfg.api_key_env = "VULNFORGE_MISSING_KEY";
  try {
    make_client(cfg, 0);
    FAIL("expected config error");
  } catch (const Error &e) {
    CHECK(e.kind() == ErrorKind::config);
  }
}
