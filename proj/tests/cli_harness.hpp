// Copyright vulnforge contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

// In-process CLI runs and filesystem scans shared by CLI-level tests.

#pragma once

#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "test_support.hpp"
#include "vulnforge/cli.hpp"
#include "vulnforge/digest.hpp"

namespace vulnforge::testing {

struct CliResult {
  int code = -1;
  std::string out;
  std::string err;
};

inline CliResult run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "vulnforge");
  std::vector<const char *> argv;
  for (const auto &a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  CliResult r;
  r.code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

// Relative path -> sha256 of every regular file under root.
inline std::map<std::string, std::string> tree_digest(const std::filesystem::path &root) {
  std::map<std::string, std::string> out;
  if (!std::filesystem::exists(root)) return out;
  for (const auto &e : std::filesystem::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    out[std::filesystem::relative(e.path(), root).generic_string()] = sha256_hex(read_file(e.path()));
  }
  return out;
}

// Files under root whose bytes contain needle.
inline std::vector<std::string> files_containing(const std::filesystem::path &root,
                                                 const std::string &needle) {
  std::vector<std::string> hits;
  for (const auto &e : std::filesystem::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    if (read_file(e.path()).find(needle) != std::string::npos) hits.push_back(e.path().string());
  }
  return hits;
}

// Pipeline config rooted in dir, using the fixture benchmarks and mock scripts.
inline nlohmann::json fixture_config(const std::filesystem::path &dir) {
  using nlohmann::json;
  return json{
      {"corpus_path", (dir / "corpus").string()},
      {"run_log_dir", (dir / "runs").string()},
      {"backends",
       {{"replicator",
         {{"kind", "mock"},
          {"model", "replicator-mock"},
          {"mock_script", (fixture_dir() / "mock/replicate.json").string()},
          {"call_log", (dir / "calls.jsonl").string()},
          {"retry_budget", 0}}},
        {"detector",
         {{"kind", "mock"},
          {"model", "detector-mock"},
          {"mock_script", (fixture_dir() / "mock/detector.json").string()},
          {"retry_budget", 0}}}}},
      {"replication", {{"backend", "replicator"}, {"seed", 7}}},
      {"dataset", {{"seed", 11}, {"output_dir", (dir / "dataset").string()}}},
      {"eval",
       {{"test_path", (dir / "dataset/test.jsonl").string()},
        {"log_path", (dir / "eval/verdicts.jsonl").string()},
        {"models", json::array({json{{"name", "scripted"}, {"backend", "detector"}}})}}}};
}

inline std::filesystem::path write_config(const std::filesystem::path &dir, const nlohmann::json &j,
                                          const std::string &name = "pipeline.json") {
  auto path = dir / name;
  write_file_atomic(path, "// test pipeline\n" + j.dump(2) + "\n");
  return path;
}

}  // namespace vulnforge::testing
