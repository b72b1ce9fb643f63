// Copyright vulnforge contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#include "vulnforge/cli.hpp"

#include <cerrno>
#include <csignal>
#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstring>
#include <ostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/fmt/fmt.h>
#include <spdlog/sinks/basic_file_sink.h>
#include <spdlog/sinks/ostream_sink.h>

#include "vulnforge/corpus.hpp"
#include "vulnforge/digest.hpp"
#include "vulnforge/evaluator.hpp"
#include "vulnforge/ingest.hpp"
#include "vulnforge/logging.hpp"
#include "vulnforge/rtl.hpp"
#include "vulnforge/spec_gen.hpp"
#include "vulnforge/version.hpp"

namespace vulnforge::cli {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return kExitConfig;
    case ErrorKind::io: return kExitIo;
    case ErrorKind::backend: return kExitBackend;
    case ErrorKind::validation: return kExitValidation;
  }
  return kExitInternal;
}

// ---------------------------------------------------------------------------
// Config loading

namespace {

const char *json_type_name(const json &j) { return j.type_name(); }

// Reads one JSON object, remembering which keys were consumed so that
// misspelled keys are reported instead of silently ignored.
class Section {
 public:
  Section(const json &j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) {
      throw config_error(where() + ": expected an object, got " + json_type_name(j_));
    }
  }

  std::string key_path(std::string_view key) const {
    return path_.empty() ? std::string(key) : path_ + "." + std::string(key);
  }

  bool has(const char *key) {
    seen_.insert(key);
    return j_.contains(key) && !j_.at(key).is_null();
  }

  const json &raw(const char *key) {
    seen_.insert(key);
    return j_.at(key);
  }

  template <class T>
  T get(const char *key, T fallback) {
    if (!has(key)) return fallback;
    try {
      return j_.at(key).get<T>();
    } catch (const json::exception &) {
      throw config_error(key_path(key) + ": unexpected " + json_type_name(j_.at(key)));
    }
  }

  std::string str(const char *key, std::string fallback = {}) {
    if (has(key) && !j_.at(key).is_string()) {
      throw config_error(key_path(key) + ": expected a string, got " + json_type_name(j_.at(key)));
    }
    return get<std::string>(key, std::move(fallback));
  }

  double number(const char *key, double fallback) {
    if (has(key) && !j_.at(key).is_number()) {
      throw config_error(key_path(key) + ": expected a number, got " + json_type_name(j_.at(key)));
    }
    return get<double>(key, fallback);
  }

  std::int64_t integer(const char *key, std::int64_t fallback) {
    if (has(key) && !j_.at(key).is_number_integer()) {
      throw config_error(key_path(key) + ": expected an integer, got " + json_type_name(j_.at(key)));
    }
    return get<std::int64_t>(key, fallback);
  }

  bool boolean(const char *key, bool fallback) {
    if (has(key) && !j_.at(key).is_boolean()) {
      throw config_error(key_path(key) + ": expected true or false, got " + json_type_name(j_.at(key)));
    }
    return get<bool>(key, fallback);
  }

  std::vector<std::string> strings(const char *key) {
    if (!has(key)) return {};
    const auto &v = j_.at(key);
    if (!v.is_array()) throw config_error(key_path(key) + ": expected an array of strings");
    std::vector<std::string> out;
    for (const auto &e : v) {
      if (!e.is_string()) throw config_error(key_path(key) + ": expected an array of strings");
      out.push_back(e.get<std::string>());
    }
    return out;
  }

  void finish() const {
    for (const auto &[k, v] : j_.items()) {
      if (seen_.count(k)) continue;
      throw config_error(key_path(k) + ": unknown key");
    }
  }

  std::string where() const { return path_.empty() ? "config" : path_; }

 private:
  const json &j_;
  std::string path_;
  std::set<std::string> seen_;
};

fs::path resolve(const fs::path &base, const std::string &p) {
  if (p.empty()) return {};
  fs::path q(p);
  return (q.is_absolute() ? q : base / q).lexically_normal();
}

std::uint64_t seed_value(Section &s, const char *key) {
  auto v = s.integer(key, 0);
  if (v < 0) throw config_error(s.key_path(key) + ": must not be negative");
  return static_cast<std::uint64_t>(v);
}

llm::BackendConfig parse_backend(const std::string &name, const json &j, const fs::path &base) {
  Section s(j, "backends." + name);
  llm::BackendConfig b;
  b.name = name;
  for (const auto &[k, v] : j.items()) {
    if (k == "api_key_env") continue;
    std::string lower = k;
    std::transform(lower.begin(), lower.end(), lower.begin(), ::tolower);
    if (lower.find("key") != std::string::npos || lower.find("token") != std::string::npos ||
        lower.find("secret") != std::string::npos || lower.find("password") != std::string::npos) {
      if (lower.find("tokens") != std::string::npos) continue;  // max_input_tokens
      throw config_error(s.key_path(k) +
                         ": credentials are read from the environment; name the variable "
                         "with api_key_env");
    }
  }
  std::string kind = s.str("kind", "mock");
  if (kind == "mock") {
    b.kind = llm::BackendKind::mock;
  } else if (kind == "http") {
    b.kind = llm::BackendKind::http;
  } else {
    throw config_error(s.key_path("kind") + ": expected mock or http, got '" + kind + "'");
  }
  b.model = s.str("model");
  if (b.model.empty()) throw config_error(s.key_path("model") + ": required");
  b.mock_script = resolve(base, s.str("mock_script"));
  b.call_log = resolve(base, s.str("call_log"));
  b.endpoint = s.str("endpoint");
  b.api_key_env = s.str("api_key_env");
  auto timeout = s.integer("timeout_s", 120);
  if (timeout < 1) throw config_error(s.key_path("timeout_s") + ": must be at least 1");
  b.timeout = std::chrono::seconds(timeout);

  auto &c = b.client;
  c.retry_budget = static_cast<int>(s.integer("retry_budget", c.retry_budget));
  if (c.retry_budget < 0) throw config_error(s.key_path("retry_budget") + ": must not be negative");
  c.base_backoff = std::chrono::milliseconds(s.integer("base_backoff_ms", c.base_backoff.count()));
  c.max_backoff = std::chrono::milliseconds(s.integer("max_backoff_ms", c.max_backoff.count()));
  if (c.base_backoff.count() < 0 || c.max_backoff < c.base_backoff) {
    throw config_error(s.key_path("max_backoff_ms") + ": must be at least base_backoff_ms");
  }
  c.requests_per_minute = s.number("requests_per_minute", 0);
  if (c.requests_per_minute < 0) {
    throw config_error(s.key_path("requests_per_minute") + ": must not be negative");
  }
  c.max_in_flight = static_cast<int>(s.integer("max_in_flight", c.max_in_flight));
  if (c.max_in_flight < 1 || c.max_in_flight > 1024) {
    throw config_error(s.key_path("max_in_flight") + ": must be in [1, 1024]");
  }
  c.max_input_tokens = s.integer("max_input_tokens", 0);
  if (c.max_input_tokens < 0) throw config_error(s.key_path("max_input_tokens") + ": must not be negative");
  s.finish();

  if (b.kind == llm::BackendKind::mock && b.mock_script.empty()) {
    throw config_error(s.key_path("mock_script") + ": required for a mock backend");
  }
  if (b.kind == llm::BackendKind::http) {
    if (b.endpoint.find("://") == std::string::npos) {
      throw config_error(s.key_path("endpoint") + ": expected a URL with a scheme");
    }
    if (b.api_key_env.empty()) throw config_error(s.key_path("api_key_env") + ": required for an http backend");
  }
  return b;
}

void require_backend(const PipelineConfig &cfg, const std::string &name, const std::string &key) {
  if (!name.empty() && !cfg.backends.count(name)) {
    throw config_error(key + ": no backend named '" + name + "'");
  }
}

std::string scalar_text(const json &v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
  if (v.is_number()) return fmt::format("{}", v.get<double>());
  return {};
}

}  // namespace

PipelineConfig parse_pipeline_config(std::string_view text, const fs::path &base_dir) {
  json root;
  try {
    root = json::parse(text, nullptr, true, true);
  } catch (const json::parse_error &e) {
    throw config_error(std::string("config is not valid JSON: ") + e.what());
  }
  PipelineConfig cfg;
  cfg.sha256 = sha256_hex(text);
  Section top(root, "");

  std::string corpus = top.str("corpus_path");
  if (corpus.empty()) throw config_error("corpus_path: required");
  cfg.corpus_path = resolve(base_dir, corpus);
  cfg.run_log_dir = resolve(base_dir, top.str("run_log_dir", "runs"));

  if (top.has("backends")) {
    const auto &b = top.raw("backends");
    if (!b.is_object()) throw config_error("backends: expected an object");
    for (const auto &[name, j] : b.items()) cfg.backends[name] = parse_backend(name, j, base_dir);
  }

  if (top.has("spec")) {
    Section s(top.raw("spec"), "spec");
    cfg.spec.backend = s.str("backend");
    s.finish();
    require_backend(cfg, cfg.spec.backend, "spec.backend");
  }

  auto registry = replicate::StyleRegistry::builtin();
  if (top.has("replication")) {
    Section s(top.raw("replication"), "replication");
    auto &c = cfg.replication.campaign;
    if (s.has("custom_styles")) {
      const auto &cs = s.raw("custom_styles");
      if (!cs.is_object()) throw config_error("replication.custom_styles: expected an object");
      for (const auto &[name, d] : cs.items()) {
        if (!d.is_string() || d.get<std::string>().empty()) {
          throw config_error("replication.custom_styles." + name + ": expected a directive string");
        }
        cfg.replication.custom_styles[name] = d.get<std::string>();
        registry.add(CodingStyle{name}, d.get<std::string>());
      }
    }
    if (s.has("styles")) {
      c.styles.clear();
      for (const auto &name : s.strings("styles")) {
        if (!registry.find(CodingStyle{name})) {
          throw config_error("replication.styles: unknown style '" + name + "'");
        }
        c.styles.push_back(CodingStyle{name});
      }
      if (c.styles.empty()) throw config_error("replication.styles: needs at least one style");
    }
    c.replicas_per_design = static_cast<int>(s.integer("replicas_per_design", c.replicas_per_design));
    if (c.replicas_per_design < 1) throw config_error("replication.replicas_per_design: must be at least 1");
    if (s.has("temperature")) {
      const auto &t = s.raw("temperature");
      if (!t.is_array() || t.size() != 2 || !t[0].is_number() || !t[1].is_number()) {
        throw config_error("replication.temperature: expected [lo, hi]");
      }
      c.temperature_lo = t[0].get<double>();
      c.temperature_hi = t[1].get<double>();
    }
    if (!(c.temperature_lo > 0 && c.temperature_lo <= c.temperature_hi && c.temperature_hi <= 2)) {
      throw config_error("replication.temperature: must satisfy 0 < lo <= hi <= 2");
    }
    c.top_p = s.number("top_p", c.top_p);
    if (!(c.top_p > 0 && c.top_p <= 1)) throw config_error("replication.top_p: must be in (0, 1]");
    c.diversity_threshold = s.number("diversity_threshold", c.diversity_threshold);
    if (!(c.diversity_threshold > 0 && c.diversity_threshold <= 1)) {
      throw config_error("replication.diversity_threshold: must be in (0, 1]");
    }
    c.retries = static_cast<int>(s.integer("retries", c.retries));
    if (c.retries < 0) throw config_error("replication.retries: must not be negative");
    c.seed = seed_value(s, "seed");
    c.base_designs = s.strings("base_designs");
    c.include_secure_bases = s.boolean("include_secure_bases", c.include_secure_bases);
    c.max_parallel_lineages = static_cast<int>(s.integer("max_parallel_lineages", c.max_parallel_lineages));
    if (c.max_parallel_lineages < 1) throw config_error("replication.max_parallel_lineages: must be at least 1");
    c.max_output_tokens = static_cast<int>(s.integer("max_output_tokens", c.max_output_tokens));
    if (c.max_output_tokens < 1) throw config_error("replication.max_output_tokens: must be at least 1");
    cfg.replication.backend = s.str("backend");
    cfg.replication.judge_backend = s.str("judge_backend");
    cfg.replication.rejection_log = resolve(base_dir, s.str("rejection_log"));
    s.finish();
    require_backend(cfg, cfg.replication.backend, "replication.backend");
    require_backend(cfg, cfg.replication.judge_backend, "replication.judge_backend");
    if (!cfg.replication.backend.empty()) c.model = cfg.backends.at(cfg.replication.backend).model;
    if (!cfg.replication.judge_backend.empty()) {
      c.use_judge = true;
      c.judge_model = cfg.backends.at(cfg.replication.judge_backend).model;
    }
  }

  if (top.has("dataset")) {
    Section s(top.raw("dataset"), "dataset");
    auto &d = cfg.dataset;
    try {
      d.policy = dataset::pairing_policy_from_string(s.str("policy", "counterpart"));
    } catch (const Error &e) {
      throw config_error(std::string("dataset.policy: ") + e.what());
    }
    if (s.has("ratios")) {
      const auto &r = s.raw("ratios");
      if (!r.is_array() || r.size() != 3 || !r[0].is_number() || !r[1].is_number() || !r[2].is_number()) {
        throw config_error("dataset.ratios: expected [train, validation, test]");
      }
      d.ratios = {r[0].get<double>(), r[1].get<double>(), r[2].get<double>()};
    }
    if (!(d.ratios.train > 0 && d.ratios.validation > 0 && d.ratios.test > 0) ||
        std::abs(d.ratios.train + d.ratios.validation + d.ratios.test - 1.0) > 1e-9) {
      throw config_error("dataset.ratios: must be positive and sum to 1");
    }
    d.seed = seed_value(s, "seed");
    d.token_budget = s.integer("token_budget", d.token_budget);
    if (d.token_budget < 1) throw config_error("dataset.token_budget: must be at least 1");
    d.output_dir = resolve(base_dir, s.str("output_dir", "dataset"));
    d.annotate_backend = s.str("annotate_backend");
    s.finish();
    require_backend(cfg, d.annotate_backend, "dataset.annotate_backend");
  } else {
    cfg.dataset.output_dir = resolve(base_dir, "dataset");
  }

  if (top.has("training")) {
    const auto &t = top.raw("training");
    if (!t.is_object()) throw config_error("training: expected an object");
    for (const auto &[k, v] : t.items()) {
      if (!v.is_primitive() || v.is_null()) throw config_error("training." + k + ": expected a scalar");
      cfg.training[k] = scalar_text(v);
    }
    try {
      dataset::apply_overrides({}, cfg.training);
    } catch (const Error &e) {
      throw config_error(std::string("training: ") + e.what());
    }
  }

  if (top.has("eval")) {
    Section s(top.raw("eval"), "eval");
    auto &e = cfg.eval;
    e.test_path = resolve(base_dir, s.str("test_path"));
    e.log_path = resolve(base_dir, s.str("log_path"));
    e.report_stem = resolve(base_dir, s.str("report_stem"));
    e.max_parallel = static_cast<int>(s.integer("max_parallel", e.max_parallel));
    if (e.max_parallel < 1) throw config_error("eval.max_parallel: must be at least 1");
    e.seed = seed_value(s, "seed");
    if (s.has("models")) {
      const auto &models = s.raw("models");
      if (!models.is_array()) throw config_error("eval.models: expected an array");
      std::set<std::string> names;
      for (std::size_t i = 0; i < models.size(); ++i) {
        Section m(models[i], "eval.models[" + std::to_string(i) + "]");
        EvalModelConfig mc;
        mc.backend = m.str("backend");
        mc.name = m.str("name", mc.backend);
        mc.model = m.str("model");
        m.finish();
        if (mc.backend.empty()) throw config_error(m.key_path("backend") + ": required");
        require_backend(cfg, mc.backend, m.key_path("backend"));
        if (!names.insert(mc.name).second) {
          throw config_error(m.key_path("name") + ": duplicate model name '" + mc.name + "'");
        }
        e.models.push_back(std::move(mc));
      }
    }
    s.finish();
  }
  top.finish();
  return cfg;
}

PipelineConfig load_pipeline_config(const fs::path &path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error &e) {
    throw config_error(std::string("cannot read config: ") + e.what());
  }
  auto cfg = parse_pipeline_config(text, fs::absolute(path).parent_path());
  cfg.source = path;
  return cfg;
}

// ---------------------------------------------------------------------------
// Lock file

CorpusLock::CorpusLock(const fs::path &corpus_root) : path_(corpus_root / kLockName) {
  std::error_code ec;
  fs::create_directories(corpus_root, ec);
  for (int attempt = 0; attempt < 2; ++attempt) {
    int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd >= 0) {
      auto pid = std::to_string(::getpid()) + "\n";
      [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
      ::close(fd);
      return;
    }
    if (errno != EEXIST) {
      throw io_error("cannot create lock file " + path_.string() + ": " + std::strerror(errno));
    }
    long holder = 0;
    try {
      holder = std::stol(read_file(path_));
    } catch (const std::exception &) {
    }
    // A lock left by a process that no longer exists is stale.
    if (holder > 0 && ::kill(static_cast<pid_t>(holder), 0) != 0 && errno == ESRCH) {
      fs::remove(path_, ec);
      continue;
    }
    throw io_error("corpus " + corpus_root.string() + " is locked by process " +
                   std::to_string(holder) + " (" + path_.string() + ")");
  }
  throw io_error("cannot acquire lock " + path_.string());
}

CorpusLock::~CorpusLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

// ---------------------------------------------------------------------------
// Subcommands

namespace {

struct Flags {
  std::string config;
  std::string run_log_dir;
  std::string corpus;
  std::string log_level;

  std::string ingest_list;
  std::size_t ingest_limit = 0;

  std::string inspect_path;
  std::string inspect_design;
  std::string format = "text";

  std::vector<std::string> spec_designs;
  bool spec_force = false;
  bool spec_no_llm = false;

  bool dry_run = false;
  std::optional<std::uint64_t> seed;
  std::optional<int> replicas;
  std::optional<double> threshold;
  std::vector<std::string> bases;
  std::string rejection_log;

  std::string out;
  std::optional<std::string> policy;
  bool no_annotate = false;

  std::vector<std::string> set;

  std::string test_path;
  std::string log_path;
  std::vector<std::string> models;
};

class Run {
 public:
  Run(const Flags &flags, std::string subcommand, std::vector<std::string> argv,
      std::ostream &out, std::ostream &err)
      : flags_(flags), sub_(std::move(subcommand)), argv_(std::move(argv)), out_(out), err_(err) {
    started_ = utc_timestamp();
    static std::atomic<int> sequence{0};
    run_id_ = fmt::format("{}-{}-{}-{}", compact(started_), sub_, ::getpid(), sequence++);
  }

  int execute() {
    int code = kExitOk;
    try {
      setup();
      dispatch();
    } catch (const Error &e) {
      code = exit_code_for(e.kind());
      error_kind_ = to_string(e.kind());
      error_ = e.what();
    } catch (const std::exception &e) {
      code = kExitInternal;
      error_kind_ = "internal";
      error_ = e.what();
    }
    if (code != kExitOk) {
      err_ << "error (" << error_kind_ << "): " << global_redactor().scrub(error_) << "\n";
      if (logger_) logger_->error("{}", error_);
    }
    if (code == kExitOk && exit_override_) code = *exit_override_;
    write_run_log(code);
    return code;
  }

 private:
  static std::string compact(const std::string &ts) {
    std::string out;
    for (char c : ts) {
      if (std::isalnum(static_cast<unsigned char>(c))) out += c;
    }
    return out;
  }

  void setup() {
    // Defaults first so a config that fails to load still gets a run log.
    cfg_.corpus_path = flags_.corpus;
    cfg_.run_log_dir = flags_.run_log_dir.empty() ? "vulnforge-runs" : flags_.run_log_dir;
    cfg_.dataset.output_dir = "dataset";
    if (!flags_.config.empty()) {
      cfg_ = load_pipeline_config(flags_.config);
      have_config_ = true;
      if (!flags_.corpus.empty()) cfg_.corpus_path = fs::absolute(flags_.corpus).lexically_normal();
      if (!flags_.run_log_dir.empty()) cfg_.run_log_dir = flags_.run_log_dir;
    }

    std::vector<spdlog::sink_ptr> sinks{std::make_shared<spdlog::sinks::ostream_sink_mt>(err_)};
    std::error_code ec;
    fs::create_directories(cfg_.run_log_dir, ec);
    if (!ec) {
      try {
        sinks.push_back(std::make_shared<spdlog::sinks::basic_file_sink_mt>(
            (cfg_.run_log_dir / (run_id_ + ".log")).string()));
      } catch (const spdlog::spdlog_ex &) {
      }
    }
    logger_ = make_logger("vulnforge", std::move(sinks));
    std::string level = flags_.log_level;
    if (level.empty()) {
      const char *env = std::getenv("VULNFORGE_LOG");
      level = env ? env : "info";
    }
    logger_->set_level(spdlog::level::from_str(level));
    logger_->set_pattern("[%Y-%m-%dT%H:%M:%S.%e] [%l] %v");
  }

  const PipelineConfig &need_config() {
    if (!have_config_) throw config_error(sub_ + " requires --config");
    return cfg_;
  }

  const fs::path &corpus() {
    if (cfg_.corpus_path.empty()) throw config_error(sub_ + " requires a corpus (corpus_path or --corpus)");
    return cfg_.corpus_path;
  }

  std::unique_ptr<llm::RetryingClient> client_for(const std::string &backend, std::uint64_t seed) {
    const auto &b = cfg_.backends.at(backend);
    seeds_["backend." + backend] = seed;
    return llm::make_client(b, seed, logger_);
  }

  void dispatch() {
    if (sub_ == "ingest") return ingest();
    if (sub_ == "inspect") return inspect();
    if (sub_ == "spec") return spec();
    if (sub_ == "replicate") return replicate_cmd();
    if (sub_ == "build-dataset") return build_dataset();
    if (sub_ == "emit-train-config") return emit_train_config();
    if (sub_ == "eval") return eval_cmd();
    if (sub_ == "report") return report();
    throw config_error("unknown subcommand " + sub_);
  }

  void ingest() {
    CorpusLock lock(corpus());
    auto store = CorpusStore::open_or_create(corpus());
    auto result = ingest_benchmarks(store, flags_.ingest_list, flags_.ingest_limit);
    logger_->info("ingested {} new designs, {} unchanged", result.added.size(), result.unchanged.size());
    out_ << fmt::format("added {} unchanged {} total {}\n", result.added.size(),
                        result.unchanged.size(), store.records().size());
    outputs_["added"] = result.added;
    outputs_["manifest_sha256"] = sha256_hex(manifest_to_text(store.manifest()));
  }

  void inspect() {
    std::string source;
    if (!flags_.inspect_design.empty()) {
      auto store = CorpusStore::open(corpus());
      source = store.get(flags_.inspect_design).source_text;
    } else if (!flags_.inspect_path.empty()) {
      source = read_file(flags_.inspect_path);
    } else {
      throw config_error("inspect needs a file path or --design");
    }
    auto info = rtl::parse_module(source);
    out_ << (flags_.format == "json" ? rtl::module_info_to_json(info) + "\n"
                                     : rtl::module_info_to_text(info));
  }

  void spec() {
    CorpusLock lock(corpus());
    auto store = CorpusStore::open(corpus());
    std::unique_ptr<llm::RetryingClient> client;
    SpecOptions opts;
    opts.logger = logger_;
    if (!flags_.spec_no_llm && !cfg_.spec.backend.empty()) {
      client = client_for(cfg_.spec.backend, 0);
      opts.model_name = cfg_.backends.at(cfg_.spec.backend).model;
    }
    std::vector<std::string> ids = flags_.spec_designs;
    if (ids.empty()) {
      for (const auto &r : store.records()) {
        if (r.origin != Origin::replica) ids.push_back(r.design_id);
      }
    }
    int written = 0, enriched = 0, skipped = 0;
    for (const auto &id : ids) {
      auto record = store.get(id);
      if (!flags_.spec_force && store.read_sidecar(id, kSpecSuffix)) {
        ++skipped;
        continue;
      }
      auto o = opts;
      o.curator_notes = store.read_sidecar(id, kNotesSuffix);
      auto doc = generate_spec(record, client.get(), o);
      store.write_sidecar(id, kSpecSuffix, render_spec(doc));
      ++written;
      enriched += doc.provenance == SpecProvenance::llm_enriched;
    }
    out_ << fmt::format("wrote {} specifications ({} llm_enriched), skipped {}\n", written,
                        enriched, skipped);
    outputs_["specs_written"] = written;
  }

  void replicate_cmd() {
    const auto &cfg = need_config();
    auto campaign = cfg.replication.campaign;
    if (flags_.seed) campaign.seed = *flags_.seed;
    if (flags_.replicas) campaign.replicas_per_design = *flags_.replicas;
    if (flags_.threshold) campaign.diversity_threshold = *flags_.threshold;
    if (!flags_.bases.empty()) campaign.base_designs = flags_.bases;
    campaign.dry_run = flags_.dry_run;
    seeds_["replication"] = campaign.seed;

    auto registry = replicate::StyleRegistry::builtin();
    for (const auto &[name, directive] : cfg.replication.custom_styles) {
      registry.add(CodingStyle{name}, directive);
    }

    if (campaign.dry_run) {
      // Read-only: no lock, no client, nothing written under the corpus.
      auto store = CorpusStore::open(corpus());
      auto summary = replicate::run_campaign(store, campaign, nullptr, registry, logger_);
      out_ << fmt::format("dry run: {} slots planned\n", summary.plan.size());
      for (const auto &p : summary.plan) {
        out_ << fmt::format("{} slot={} replica={} style={} temperature={} top_p={}\n",
                            p.base_id, p.slot, p.replica_id, p.style.name, p.sampling.temperature,
                            p.sampling.top_p);
      }
      outputs_["planned"] = summary.plan.size();
      return;
    }

    if (cfg.replication.backend.empty()) throw config_error("replication.backend: required");
    CorpusLock lock(corpus());
    auto store = CorpusStore::open(corpus());
    auto client = client_for(cfg.replication.backend, campaign.seed);
    std::unique_ptr<llm::RetryingClient> judge;
    if (!cfg.replication.judge_backend.empty() && cfg.replication.judge_backend != cfg.replication.backend) {
      judge = client_for(cfg.replication.judge_backend, campaign.seed);
    }
    // run_campaign sends judge prompts through the same client; route them by
    // model name when the judge lives on another backend.
    struct Router : llm::LlmClient {
      llm::LlmClient *main = nullptr;
      llm::LlmClient *judge = nullptr;
      std::string judge_model;
      llm::CompletionResult complete(const llm::CompletionRequest &r) override {
        return (judge && r.model_name == judge_model ? judge : main)->complete(r);
      }
    } router;
    router.main = client.get();
    router.judge = judge.get();
    router.judge_model = campaign.judge_model;

    auto summary = replicate::run_campaign(store, campaign, &router, registry, logger_);

    fs::path rej = !flags_.rejection_log.empty()          ? fs::path(flags_.rejection_log)
                   : !cfg.replication.rejection_log.empty() ? cfg.replication.rejection_log
                                                          : cfg_.run_log_dir / (run_id_ + ".rejections.jsonl");
    std::string lines;
    for (const auto &r : summary.rejections) lines += replicate::rejection_to_json_line(r) + "\n";
    if (!rej.parent_path().empty()) fs::create_directories(rej.parent_path());
    write_file_atomic(rej, lines);

    out_ << replicate::summary_to_json(summary) << "\n";
    outputs_["summary"] = json::parse(replicate::summary_to_json(summary));
    outputs_["rejection_log"] = rej.string();
    outputs_["manifest_sha256"] = sha256_hex(manifest_to_text(store.manifest()));
    if (summary.halted) {
      err_ << "campaign halted: " << global_redactor().scrub(summary.halt_reason) << "\n";
      exit_override_ = kExitBackend;
    }
  }

  void build_dataset() {
    const auto &cfg = cfg_;
    auto d = cfg.dataset;
    if (flags_.seed) d.seed = *flags_.seed;
    if (flags_.policy) d.policy = dataset::pairing_policy_from_string(*flags_.policy);
    if (!flags_.out.empty()) d.output_dir = flags_.out;
    seeds_["dataset"] = d.seed;

    auto store = CorpusStore::open(corpus());
    auto pairs = dataset::build_pairs(store.records(), store.taxonomy(), {d.policy, d.token_budget});
    if (!d.annotate_backend.empty() && !flags_.no_annotate) {
      auto client = client_for(d.annotate_backend, d.seed);
      dataset::AnnotateOptions opts;
      opts.model_name = cfg.backends.at(d.annotate_backend).model;
      opts.token_budget = d.token_budget;
      opts.logger = logger_;
      auto n = dataset::annotate_explanations(pairs, *client, opts);
      logger_->info("annotated {} of {} rows", n, pairs.size());
    }
    std::vector<std::string> lineages;
    for (const auto &p : pairs) lineages.push_back(p.lineage_id);
    auto assignment = dataset::split_by_lineage(std::move(lineages), d.ratios, d.seed);
    dataset::emit_dataset(std::move(pairs), assignment, d.output_dir, {d.policy, d.token_budget});
    out_ << read_file(d.output_dir / "stats.json");
    outputs_["output_dir"] = d.output_dir.string();
  }

  void emit_train_config() {
    auto overrides = cfg_.training;
    for (const auto &kv : flags_.set) {
      auto eq = kv.find('=');
      if (eq == std::string::npos || eq == 0) throw config_error("--set expects key=value, got '" + kv + "'");
      overrides[kv.substr(0, eq)] = kv.substr(eq + 1);
    }
    auto text = dataset::emit_training_config(overrides, logger_);
    if (flags_.out.empty()) {
      out_ << text;
    } else {
      write_file_atomic(flags_.out, text);
      outputs_["path"] = flags_.out;
    }
    outputs_["sha256"] = sha256_hex(text);
  }

  std::vector<dataset::InstructionPair> load_rows(const fs::path &path) {
    std::vector<dataset::InstructionPair> rows;
    std::istringstream in(read_file(path));
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty()) rows.push_back(dataset::pair_from_json_line(line));
    }
    return rows;
  }

  fs::path pick(const std::string &flag, const fs::path &configured, const char *what) {
    if (!flag.empty()) return flag;
    if (configured.empty()) throw config_error(sub_ + " needs " + what);
    return configured;
  }

  void eval_cmd() {
    const auto &cfg = need_config();
    auto test = pick(flags_.test_path, cfg.eval.test_path, "a test file (eval.test_path or --test)");
    auto log = pick(flags_.log_path, cfg.eval.log_path, "a verdict log (eval.log_path or --log)");
    std::uint64_t seed = flags_.seed.value_or(cfg.eval.seed);
    seeds_["eval"] = seed;
    auto rows = load_rows(test);

    std::vector<EvalModelConfig> chosen;
    for (const auto &m : cfg.eval.models) {
      if (flags_.models.empty() ||
          std::find(flags_.models.begin(), flags_.models.end(), m.name) != flags_.models.end()) {
        chosen.push_back(m);
      }
    }
    for (const auto &name : flags_.models) {
      if (std::none_of(chosen.begin(), chosen.end(), [&](const auto &m) { return m.name == name; })) {
        throw config_error("--model: no eval model named '" + name + "'");
      }
    }
    if (chosen.empty()) throw config_error("eval.models: no models configured");

    std::map<std::string, std::unique_ptr<llm::RetryingClient>> clients;
    std::vector<eval::EvalModel> models;
    for (const auto &m : chosen) {
      auto &c = clients[m.backend];
      if (!c) c = client_for(m.backend, seed);
      models.push_back({m.name, m.model.empty() ? cfg.backends.at(m.backend).model : m.model, c.get()});
    }
    eval::EvalOptions opts;
    opts.max_parallel = cfg.eval.max_parallel;
    opts.logger = logger_;
    auto records = eval::run_eval(rows, models, log, opts);
    auto report = eval::compute_accuracy(records, rows);
    out_ << eval::render_report(report);
    if (!cfg.eval.report_stem.empty()) eval::write_report(report, cfg.eval.report_stem);
    outputs_["log"] = log.string();
    outputs_["cells"] = records.size();
  }

  void report() {
    auto test = pick(flags_.test_path, cfg_.eval.test_path, "a test file (eval.test_path or --test)");
    auto log = pick(flags_.log_path, cfg_.eval.log_path, "a verdict log (eval.log_path or --log)");
    auto report = eval::compute_accuracy(eval::read_verdict_log(log), load_rows(test));
    out_ << eval::render_report(report, eval::report_format_from_string(flags_.format));
    if (!flags_.out.empty()) {
      eval::write_report(report, flags_.out);
      outputs_["report_stem"] = flags_.out;
    }
  }

  void write_run_log(int code) {
    json j;
    j["tool_version"] = kToolVersion;
    j["run_id"] = run_id_;
    j["subcommand"] = sub_;
    j["argv"] = argv_;
    j["config_path"] = cfg_.source.string();
    j["config_sha256"] = cfg_.sha256;
    j["seeds"] = seeds_;
    j["started_at"] = started_;
    j["finished_at"] = utc_timestamp();
    j["exit_code"] = code;
    if (!error_kind_.empty()) {
      j["error_kind"] = error_kind_;
      j["error"] = error_;
    }
    j["outputs"] = outputs_;
    std::error_code ec;
    fs::create_directories(cfg_.run_log_dir, ec);
    try {
      write_file_atomic(cfg_.run_log_dir / (run_id_ + ".json"),
                        global_redactor().scrub(j.dump(2)) + "\n");
    } catch (const Error &e) {
      err_ << "warning: run log not written: " << e.what() << "\n";
    }
    if (logger_) logger_->flush();
  }

  const Flags &flags_;
  std::string sub_;
  std::vector<std::string> argv_;
  std::ostream &out_;
  std::ostream &err_;
  PipelineConfig cfg_;
  bool have_config_ = false;
  std::shared_ptr<spdlog::logger> logger_;
  std::string started_;
  std::string run_id_;
  json seeds_ = json::object();
  json outputs_ = json::object();
  std::string error_kind_;
  std::string error_;
  std::optional<int> exit_override_;
};

}  // namespace

int run_cli(int argc, const char *const *argv, std::ostream &out, std::ostream &err) {
  Flags f;
  CLI::App app{"Hardware vulnerability corpus forging and evaluation toolkit", "vulnforge"};
  app.set_version_flag("--version", kToolVersion);
  app.require_subcommand(1, 1);
  app.add_option("-c,--config", f.config, "Pipeline config file (JSON, comments allowed)");
  app.add_option("--run-log-dir", f.run_log_dir, "Directory for run logs (overrides run_log_dir)");
  app.add_option("--corpus", f.corpus, "Corpus directory (overrides corpus_path)");
  app.add_option("--log-level", f.log_level, "trace|debug|info|warn|error|off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "critical", "off"}));

  auto *ingest = app.add_subcommand("ingest", "Add benchmark designs listed in a JSON file");
  ingest->add_option("list", f.ingest_list, "Benchmark list")->required()->check(CLI::ExistingFile);
  ingest->add_option("--limit", f.ingest_limit, "Ingest at most N entries");

  auto *inspect = app.add_subcommand("inspect", "Print the parsed interface of a design");
  inspect->add_option("path", f.inspect_path, "RTL file (.v/.sv)");
  inspect->add_option("--design", f.inspect_design, "Design id in the corpus");
  inspect->add_option("--format", f.format)->check(CLI::IsMember({"text", "json"}));

  auto *spec = app.add_subcommand("spec", "Write specification documents next to designs");
  spec->add_option("--design", f.spec_designs, "Limit to these design ids");
  spec->add_flag("--force", f.spec_force, "Overwrite existing specifications");
  spec->add_flag("--no-llm", f.spec_no_llm, "Template-only documents");

  auto *rep = app.add_subcommand("replicate", "Run a replication campaign");
  rep->add_flag("--dry-run", f.dry_run, "Print the planned slots and exit");
  rep->add_option("--seed", f.seed);
  rep->add_option("--replicas", f.replicas, "Replicas per base design")->check(CLI::PositiveNumber);
  rep->add_option("--threshold", f.threshold, "Diversity threshold")->check(CLI::Range(0.0, 1.0));
  rep->add_option("--base", f.bases, "Base design ids");
  rep->add_option("--rejection-log", f.rejection_log);

  auto *build = app.add_subcommand("build-dataset", "Emit train/validation/test splits");
  build->add_option("--out", f.out, "Output directory");
  build->add_option("--seed", f.seed);
  build->add_option("--policy", f.policy)
      ->check(CLI::IsMember({"positives-only", "counterpart", "non-matching"}));
  build->add_flag("--no-annotate", f.no_annotate, "Keep template rationales");

  auto *train = app.add_subcommand("emit-train-config", "Print the fine-tuning configuration");
  train->add_option("--set", f.set, "Override a field (key=value)");
  train->add_option("--out", f.out, "Write to a file instead of stdout");

  auto *ev = app.add_subcommand("eval", "Query detector models on the test split");
  ev->add_option("--test", f.test_path);
  ev->add_option("--log", f.log_path);
  ev->add_option("--model", f.models, "Only these eval models");
  ev->add_option("--seed", f.seed);

  auto *rp = app.add_subcommand("report", "Accuracy table from a verdict log");
  rp->add_option("--test", f.test_path);
  rp->add_option("--log", f.log_path);
  rp->add_option("--format", f.format)->check(CLI::IsMember({"text", "json", "csv"}));
  rp->add_option("--out", f.out, "Also write <stem>.txt and <stem>.csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  std::vector<std::string> args(argv, argv + argc);
  auto *chosen = app.get_subcommands().front();
  Run run(f, chosen->get_name(), std::move(args), out, err);
  return run.execute();
}

}  // namespace vulnforge::cli
