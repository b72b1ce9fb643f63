// Copyright vulnforge contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#include <cstdlib>
#include <set>

#include <doctest.h>
#include <json.hpp>

#include "cli_harness.hpp"
#include "echo_server.hpp"
#include "eval_fixture.hpp"
#include "vulnforge/corpus.hpp"
#include "vulnforge/version.hpp"

using namespace vulnforge;
using namespace vulnforge::testing;
using nlohmann::json;

namespace {

std::string benchmarks() { return (fixture_dir() / "rtl/benchmarks.json").string(); }

int config_error_code(const json &cfg, const std::string &needle) {
  TempDir dir;
  auto path = write_config(dir.path(), cfg);
  auto r = run_cli({"-c", path.string(), "--run-log-dir", (dir / "runs").string(), "emit-train-config"});
  CAPTURE(r.err);
  CHECK(r.err.find(needle) != std::string::npos);
  // Failed runs are logged too, in the requested place.
  auto logs = tree_digest(dir / "runs");
  CHECK(logs.size() == 1);
  if (logs.size() == 1) {
    auto j = json::parse(read_file(dir / "runs" / logs.begin()->first));
    CHECK(j["error_kind"] == "config");
    CHECK(j["exit_code"] == r.code);
  }
  return r.code;
}

std::vector<std::string> lines_of(const std::string &text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(line);
  }
  return out;
}

}  // namespace

TEST_CASE("config validation names the offending key") {
  TempDir dir;
  auto base = fixture_config(dir.path());

  auto c = base;
  c["replication"]["temprature"] = 1.0;
  CHECK(config_error_code(c, "replication.temprature: unknown key") == cli::kExitConfig);

  c = base;
  c["backends"]["replicator"]["api_key"] = "sk-inline";
  CHECK(config_error_code(c, "backends.replicator.api_key") == cli::kExitConfig);

  c = base;
  c["replication"]["temperature"] = {1.2, 0.4};
  CHECK(config_error_code(c, "replication.temperature") == cli::kExitConfig);

  c = base;
  c["replication"]["diversity_threshold"] = 0;
  CHECK(config_error_code(c, "replication.diversity_threshold") == cli::kExitConfig);

  c = base;
  c["replication"]["styles"] = {"baroque"};
  CHECK(config_error_code(c, "unknown style 'baroque'") == cli::kExitConfig);

  c = base;
  c["eval"]["models"][0]["backend"] = "nowhere";
  CHECK(config_error_code(c, "eval.models[0].backend") == cli::kExitConfig);

  c = base;
  c["dataset"]["ratios"] = {0.5, 0.5, 0.5};
  CHECK(config_error_code(c, "dataset.ratios") == cli::kExitConfig);

  c = base;
  c["training"]["lora_rank"] = "big";
  CHECK(config_error_code(c, "lora_rank") == cli::kExitConfig);

  c = base;
  c.erase("corpus_path");
  CHECK(config_error_code(c, "corpus_path: required") == cli::kExitConfig);

  c = base;
  c["backends"]["replicator"]["kind"] = "http";
  CHECK(config_error_code(c, "backends.replicator.endpoint") == cli::kExitConfig);
}

TEST_CASE("relative config paths resolve against the config file") {
  auto cfg = cli::parse_pipeline_config(
      R"({"corpus_path": "c", "backends": {"m": {"model": "x", "mock_script": "../s.json"}}})",
      "/work/cfg");
  CHECK(cfg.corpus_path == "/work/cfg/c");
  CHECK(cfg.run_log_dir == "/work/cfg/runs");
  CHECK(cfg.backends.at("m").mock_script == "/work/s.json");
  CHECK(cfg.sha256.size() == 64);
}

TEST_CASE("usage errors and help") {
  CHECK(run_cli({"frobnicate"}).code == cli::kExitConfig);
  CHECK(run_cli({}).code == cli::kExitConfig);
  CHECK(run_cli({"--help"}).code == cli::kExitOk);
  auto v = run_cli({"--version"});
  CHECK(v.code == cli::kExitOk);
  CHECK(v.out.find(kToolVersion) != std::string::npos);
  TempDir dir;
  auto r = run_cli({"--run-log-dir", dir.path().string(), "replicate", "--dry-run"});
  CHECK(r.code == cli::kExitConfig);
}

TEST_CASE("emit-train-config defaults, config overrides and flags") {
  TempDir dir;
  auto runs = (dir / "runs").string();
  auto r = run_cli({"--run-log-dir", runs, "emit-train-config"});
  CHECK(r.code == 0);
  CHECK(r.out == fixture("golden/train_config.txt"));

  auto cfg = fixture_config(dir.path());
  cfg["training"] = {{"epochs", 5}, {"learning_rate", 1e-5}};
  auto path = write_config(dir.path(), cfg);
  r = run_cli({"-c", path.string(), "--log-level", "info", "emit-train-config", "--set", "epochs=2",
               "--out", (dir / "train.txt").string()});
  CHECK(r.code == 0);
  auto parsed = dataset::parse_training_config(read_file(dir / "train.txt"));
  CHECK(parsed.epochs == 2);
  CHECK(parsed.learning_rate == doctest::Approx(1e-5));
  CHECK(parsed.lora_rank == 128);
  CHECK(r.err.find("training override: epochs = 2") != std::string::npos);

  CHECK(run_cli({"--run-log-dir", runs, "emit-train-config", "--set", "nonsense"}).code ==
        cli::kExitConfig);
}

TEST_CASE("ingest, dry run and the run log") {
  TempDir dir;
  auto path = write_config(dir.path(), fixture_config(dir.path()));
  auto r = run_cli({"-c", path.string(), "ingest", benchmarks()});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("added 16") != std::string::npos);
  CHECK_FALSE(std::filesystem::exists(dir / "corpus" / cli::CorpusLock::kLockName));

  auto before = tree_digest(dir / "corpus");
  r = run_cli({"-c", path.string(), "replicate", "--dry-run"});
  REQUIRE(r.code == 0);
  auto out = lines_of(r.out);
  CHECK(out.front() == "dry run: 52 slots planned");
  CHECK(out.size() == 53);
  CHECK(out[1] == "aes_dos slot=0 replica=aes_dos_r00 style=parameterized temperature=0.6 top_p=0.9");
  CHECK(tree_digest(dir / "corpus") == before);
  CHECK_FALSE(std::filesystem::exists(dir / "calls.jsonl"));

  // Flags win over the config.
  r = run_cli({"-c", path.string(), "replicate", "--dry-run", "--replicas", "2", "--base", "jtag_unlock"});
  CHECK(lines_of(r.out).size() == 3);

  // Every run leaves a run log with the config digest and seeds.
  int logs = 0;
  for (const auto &e : std::filesystem::directory_iterator(dir / "runs")) {
    if (e.path().extension() != ".json") continue;
    auto j = json::parse(read_file(e.path()));
    CHECK(j["tool_version"] == kToolVersion);
    CHECK(j["config_sha256"] == sha256_hex(read_file(path)));
    CHECK(j["exit_code"] == 0);
    if (j["subcommand"] == "replicate") CHECK(j["seeds"]["replication"] == 7);
    ++logs;
  }
  CHECK(logs == 3);  // ingest and two dry runs
}

TEST_CASE("writing subcommands respect the corpus lock") {
  TempDir dir;
  auto path = write_config(dir.path(), fixture_config(dir.path()));
  std::filesystem::create_directories(dir / "corpus");
  auto lock = dir / "corpus" / cli::CorpusLock::kLockName;

  write_file_atomic(lock, std::to_string(::getpid()) + "\n");
  auto r = run_cli({"-c", path.string(), "ingest", benchmarks()});
  CHECK(r.code == cli::kExitIo);
  CHECK(r.err.find("locked") != std::string::npos);
  CHECK(std::filesystem::exists(lock));

  // A lock whose holder is gone is taken over.
  write_file_atomic(lock, "999999999\n");
  r = run_cli({"-c", path.string(), "ingest", benchmarks()});
  CHECK(r.code == 0);
  CHECK_FALSE(std::filesystem::exists(lock));
}

TEST_CASE("pipeline end to end with mock backends") {
  TempDir dir;
  auto path = write_config(dir.path(), fixture_config(dir.path()));
  auto c = path.string();
  REQUIRE(run_cli({"-c", c, "ingest", benchmarks()}).code == 0);
  REQUIRE(run_cli({"-c", c, "spec"}).code == 0);
  auto store = CorpusStore::open(dir / "corpus");
  CHECK(store.read_sidecar("aes_hardcoded_key", kSpecSuffix).has_value());

  auto r = run_cli({"-c", c, "replicate"});
  REQUIRE(r.code == 0);
  auto summary = json::parse(r.out);
  CHECK(summary["requested"] == 52);
  CHECK(summary["accepted"].get<int>() + summary["rejected_fidelity"].get<int>() +
            summary["rejected_diversity"].get<int>() + summary["llm_failures"].get<int>() ==
        52);
  CHECK(std::filesystem::exists(dir / "calls.jsonl"));

  SUBCASE("build-dataset matches a counting oracle") {
    r = run_cli({"-c", c, "build-dataset"});
    REQUIRE(r.code == 0);
    // Counterpart policy, counted from the manifest.
    auto records = CorpusStore::open(dir / "corpus").records();
    std::map<std::string, std::set<std::string>> labels;
    std::set<std::string> with_secure;
    for (const auto &d : records) {
      if (d.label) labels[d.lineage_id].insert(d.label->key());
      else with_secure.insert(d.lineage_id);
    }
    std::size_t expected = 0;
    for (const auto &d : records) {
      if (d.label) expected += with_secure.count(d.lineage_id) ? 1 : 2;
      else expected += labels[d.lineage_id].size();
    }
    std::size_t total = 0;
    std::map<std::string, std::string> lineage_split;
    for (const char *split : {"train", "validation", "test"}) {
      auto rows = lines_of(read_file(dir / "dataset" / (std::string(split) + ".jsonl")));
      CHECK_FALSE(rows.empty());
      total += rows.size();
      for (const auto &line : rows) {
        auto row = dataset::pair_from_json_line(line);
        auto [it, fresh] = lineage_split.emplace(row.lineage_id, split);
        CHECK(it->second == split);
      }
    }
    CHECK(total == expected);
    CHECK(std::filesystem::exists(dir / "dataset/stats.json"));

    r = run_cli({"-c", c, "eval"});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("scripted") != std::string::npos);
    // Rerunning resumes from the log and queries nothing new.
    auto size = read_file(dir / "eval/verdicts.jsonl").size();
    r = run_cli({"-c", c, "eval"});
    CHECK(r.code == 0);
    CHECK(read_file(dir / "eval/verdicts.jsonl").size() == size);
  }
  SUBCASE("eval refuses rows outside the test split") {
    REQUIRE(run_cli({"-c", c, "build-dataset"}).code == 0);
    r = run_cli({"-c", c, "eval", "--test", (dir / "dataset/train.jsonl").string()});
    CHECK(r.code == cli::kExitValidation);
    CHECK_FALSE(std::filesystem::exists(dir / "eval/verdicts.jsonl"));
  }
}

TEST_CASE("report on the comparison fixture") {
  TempDir dir;
  write_comparison_fixture(dir.path());
  auto runs = (dir / "runs").string();
  auto r = run_cli({"--run-log-dir", runs, "report", "--test", (dir / "test.jsonl").string(), "--log",
                    (dir / "verdicts.jsonl").string(), "--out", (dir / "report").string()});
  REQUIRE(r.code == 0);
  auto rows = lines_of(r.out);
  REQUIRE(rows.size() == 9);
  CHECK(rows[2].rfind("model-a", 0) == 0);
  CHECK(rows[2].find("91.3") != std::string::npos);
  CHECK(read_file(dir / "report.txt") == r.out);

  r = run_cli({"--run-log-dir", runs, "report", "--format", "json", "--test",
               (dir / "test.jsonl").string(), "--log", (dir / "verdicts.jsonl").string()});
  auto j = json::parse(r.out);
  CHECK(j["models"].size() == 7);
  CHECK(j["models"][6]["percent"] == "42.5");
}

TEST_CASE("credentials never reach logs or artifacts") {
  TempDir dir;
  KeyEchoServer server;
  const std::string secret = "vf-secret-" + std::to_string(::getpid()) + "-Zq9";
  ::setenv("VULNFORGE_SCRUB_KEY", secret.c_str(), 1);

  auto cfg = fixture_config(dir.path());
  cfg["backends"]["hosted"] = {{"kind", "http"},
                               {"model", "hosted-model"},
                               {"endpoint", server.endpoint()},
                               {"api_key_env", "VULNFORGE_SCRUB_KEY"},
                               {"retry_budget", 1},
                               {"base_backoff_ms", 1},
                               {"max_backoff_ms", 2}};
  cfg["replication"]["backend"] = "hosted";
  cfg["replication"]["replicas_per_design"] = 1;
  cfg["replication"]["base_designs"] = {"aes_hardcoded_key", "jtag_unlock", "dma_unchecked"};
  auto path = write_config(dir.path(), cfg);
  auto c = path.string();

  std::string console;
  auto run = [&](std::vector<std::string> args) {
    auto r = run_cli(std::move(args));
    console += r.out + r.err;
    return r;
  };
  REQUIRE(run({"-c", c, "ingest", benchmarks()}).code == 0);
  REQUIRE(run({"-c", c, "replicate", "--dry-run"}).code == 0);
  CHECK(server.hits() == 0);
  auto r = run({"-c", c, "--log-level", "debug", "replicate"});
  CHECK(r.code == 0);

  // The endpoint really saw the key and echoed it back.
  CHECK(server.hits() > 0);
  CHECK(server.last_key() == secret);
  CHECK(console.find("***") != std::string::npos);

  CHECK(console.find(secret) == std::string::npos);
  CHECK(files_containing(dir.path(), secret).empty());
  ::unsetenv("VULNFORGE_SCRUB_KEY");
}
