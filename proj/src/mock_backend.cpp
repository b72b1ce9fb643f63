// Copyright vulnforge contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#include "vulnforge/mock_backend.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "vulnforge/code_blocks.hpp"
#include "vulnforge/corpus.hpp"
#include "vulnforge/digest.hpp"
#include "vulnforge/rtl.hpp"

namespace vulnforge::llm {

using nlohmann::json;

namespace {

MockRule::Action parse_action(const std::string &a) {
  if (a == "respond") return MockRule::Action::respond;
  if (a == "transform") return MockRule::Action::transform;
  if (a == "random_choice") return MockRule::Action::random_choice;
  if (a == "fail_transient") return MockRule::Action::fail_transient;
  if (a == "fail_permanent") return MockRule::Action::fail_permanent;
  if (a == "unreachable") return MockRule::Action::unreachable;
  throw config_error("mock script: unknown action '" + a + "'");
}

std::string tag_for(std::uint64_t h) {
  static constexpr char kAlphabet[] = "abcdefghijklmnopqrstuvwxyz0123456789";
  std::string tag = "v";
  for (int i = 0; i < 4; ++i) {
    tag.push_back(kAlphabet[h % 36]);
    h /= 36;
  }
  return tag;
}

}  // namespace

MockScript parse_mock_script(std::string_view json_text) {
  MockScript script;
  try {
    json j = json::parse(json_text, nullptr, true, true);
    for (const auto &r : j.at("rules")) {
      MockRule rule;
      rule.match_text = r.value("match", "");
      rule.model_text = r.value("model", "");
      rule.action = parse_action(r.value("action", "respond"));
      rule.text = r.value("text", "");
      rule.transform = r.value("transform", "identity");
      if (r.contains("choices")) {
        rule.choices = r.at("choices").get<std::vector<std::string>>();
      }
      if (r.contains("times")) rule.times = r.at("times").get<int>();
      rule.finish = r.value("finish", "stop") == "length" ? FinishReason::length
                                                          : FinishReason::stop;
      rule.status = r.value("status", 0);
      if (rule.action == MockRule::Action::random_choice && rule.choices.empty()) {
        throw config_error("mock script: random_choice rule needs choices");
      }
      static const std::set<std::string> known = {"identity", "rename_internal",
                                                  "comment_churn", "rename_port"};
      if (!known.count(rule.transform)) {
        throw config_error("mock script: unknown transform '" + rule.transform + "'");
      }
      script.rules.push_back(std::move(rule));
    }
  } catch (const json::exception &e) {
    throw config_error(std::string("mock script: ") + e.what());
  }
  return script;
}

MockScript load_mock_script(const std::filesystem::path &path) {
  return parse_mock_script(read_file(path));
}

MockTransport::MockTransport(MockScript script, std::uint64_t seed) : seed_(seed) {
  for (auto &r : script.rules) {
    CompiledRule c;
    try {
      if (!r.match_text.empty()) c.match.emplace(r.match_text);
      if (!r.model_text.empty()) c.model.emplace(r.model_text);
    } catch (const std::regex_error &e) {
      throw config_error("mock script: bad pattern: " + std::string(e.what()));
    }
    c.rule = std::move(r);
    rules_.push_back(std::move(c));
  }
}

AttemptOutcome MockTransport::send(const CompletionRequest &request) {
  ++calls_;
  const MockRule *rule = nullptr;
  {
    std::lock_guard lock(mutex_);
    if (!call_log_.empty()) {
      json line = {{"model", request.model_name},
                   {"temperature", request.sampling.temperature},
                   {"top_p", request.sampling.top_p},
                   {"user_sha256", sha256_hex(request.user_text)}};
      std::ofstream(call_log_, std::ios::app) << line.dump() << "\n";
    }
    for (auto &c : rules_) {
      if (c.rule.times && c.used >= *c.rule.times) continue;
      if (c.match && !std::regex_search(request.user_text, *c.match)) continue;
      if (c.model && !std::regex_search(request.model_name, *c.model)) continue;
      ++c.used;
      rule = &c.rule;
      break;
    }
  }

  AttemptOutcome out;
  if (!rule) {
    out.status = AttemptOutcome::Status::permanent;
    out.http_status = 400;
    out.error = "no mock rule matched the request";
    return out;
  }

  std::ostringstream key;
  key << seed_ << '\x1f' << request.model_name << '\x1f'
      << request.sampling.temperature << '\x1f' << request.sampling.top_p
      << '\x1f' << request.user_text;
  const std::uint64_t h = fnv1a64(key.str());

  switch (rule->action) {
    case MockRule::Action::fail_transient:
      out.status = AttemptOutcome::Status::transient;
      out.http_status = rule->status ? rule->status : 503;
      out.error = rule->text.empty() ? "scripted transient failure" : rule->text;
      return out;
    case MockRule::Action::fail_permanent:
      out.status = AttemptOutcome::Status::permanent;
      out.http_status = rule->status ? rule->status : 400;
      out.error = rule->text.empty() ? "scripted permanent failure" : rule->text;
      return out;
    case MockRule::Action::unreachable:
      out.status = AttemptOutcome::Status::unreachable;
      out.error = "scripted connection failure";
      return out;
    case MockRule::Action::respond:
      out.text = rule->text;
      break;
    case MockRule::Action::random_choice:
      out.text = rule->choices[h % rule->choices.size()];
      break;
    case MockRule::Action::transform: {
      auto blocks = fenced_blocks(request.user_text);
      std::string source = blocks.empty() ? std::string() : blocks.front();
      std::string rewritten;
      if (rule->transform == "rename_internal") {
        rewritten = transforms::rename_internal(source, tag_for(h));
      } else if (rule->transform == "comment_churn") {
        rewritten = transforms::comment_churn(source, tag_for(h));
      } else if (rule->transform == "rename_port") {
        rewritten = transforms::rename_port(source);
      } else {
        rewritten = source;
      }
      out.text = "Here is the rewritten module.\n\n```systemverilog\n" +
                 rewritten + "```\n";
      break;
    }
  }
  out.status = AttemptOutcome::Status::ok;
  out.http_status = 200;
  out.finish_reason = rule->finish;
  out.usage.input_tokens =
      estimate_tokens(request.system_text) + estimate_tokens(request.user_text);
  out.usage.output_tokens = estimate_tokens(out.text);
  return out;
}

namespace transforms {

namespace {

// Replaces tokens (by byte range) with new text, keeping everything else.
std::string splice(const std::string &source,
                   const std::vector<std::pair<const rtl::Token *, std::string>> &edits) {
  std::string out;
  std::size_t pos = 0;
  for (const auto &[tok, text] : edits) {
    out.append(source, pos, tok->offset - pos);
    out += text;
    pos = tok->offset + tok->text.size();
  }
  out.append(source, pos, std::string::npos);
  return out;
}

}  // namespace

std::string rename_internal(const std::string &source, const std::string &tag) {
  rtl::ModuleInfo info;
  rtl::TokenStream ts;
  try {
    info = rtl::parse_module(source);
    ts = rtl::tokenize(source);
  } catch (const Error &) {
    return source;
  }
  std::set<std::string> keep = {info.module_name};
  for (const auto &p : info.ports) keep.insert(p.name);
  for (const auto &p : info.parameters) keep.insert(p.name);
  keep.insert(info.other_modules.begin(), info.other_modules.end());

  std::vector<std::pair<const rtl::Token *, std::string>> edits;
  const auto &t = ts.tokens;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto &tok = t[i];
    if (tok.kind != rtl::TokenKind::identifier) continue;
    if (tok.offset < info.body_span.begin || tok.offset >= info.body_span.end) continue;
    if (keep.count(tok.text) || tok.text.front() == '\\') continue;
    if (i > 0 && (t[i - 1].is(".") || t[i - 1].is("::"))) continue;
    if (i + 1 < t.size() && t[i + 1].is("::")) continue;
    edits.emplace_back(&tok, tok.text + "_" + tag);
  }
  return splice(source, edits);
}

std::string comment_churn(const std::string &source, const std::string &tag) {
  std::istringstream in(source);
  std::ostringstream out;
  out << "// replica " << tag << "\n";
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    out << "  " << line;
    if (!line.empty() && line.back() == ';' && ++n % 2 == 0) {
      out << "  // " << tag;
    }
    out << "\n";
  }
  return out.str();
}

std::string rename_port(const std::string &source) {
  rtl::ModuleInfo info;
  rtl::TokenStream ts;
  try {
    info = rtl::parse_module(source);
    ts = rtl::tokenize(source);
  } catch (const Error &) {
    return source;
  }
  if (info.ports.empty()) return source;
  const std::string victim = info.ports.front().name;
  std::vector<std::pair<const rtl::Token *, std::string>> edits;
  for (const auto &tok : ts.tokens) {
    if (tok.kind == rtl::TokenKind::identifier && tok.text == victim) {
      edits.emplace_back(&tok, victim + "_renamed");
    }
  }
  return splice(source, edits);
}

}  // namespace transforms

}  // namespace vulnforge::llm
