// Copyright vulnforge contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

// Pipeline configuration and the `vulnforge` command line.

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "vulnforge/dataset.hpp"
#include "vulnforge/llm.hpp"
#include "vulnforge/replicator.hpp"

namespace vulnforge::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitInternal = 1,
  kExitConfig = 2,  // also usage errors
  kExitIo = 3,
  kExitBackend = 4,
  kExitValidation = 5,
};

int exit_code_for(ErrorKind kind);

struct EvalModelConfig {
  std::string name;
  std::string backend;
  std::string model;  // empty: the backend's model
};

struct PipelineConfig {
  std::filesystem::path source;  // empty when built from defaults
  std::string sha256;            // digest of the raw config bytes
  std::filesystem::path corpus_path;
  std::filesystem::path run_log_dir;
  std::map<std::string, llm::BackendConfig> backends;

  struct Spec {
    std::string backend;  // empty: template-only documents
  } spec;

  struct Replication {
    replicate::CampaignConfig campaign;
    std::map<std::string, std::string> custom_styles;  // name -> directive
    std::string backend;
    std::string judge_backend;
    std::filesystem::path rejection_log;
  } replication;

  struct Dataset {
    dataset::PairingPolicy policy = dataset::PairingPolicy::counterpart;
    dataset::SplitRatios ratios;
    std::uint64_t seed = 0;
    std::int64_t token_budget = 512;
    std::filesystem::path output_dir;
    std::string annotate_backend;
  } dataset;

  std::map<std::string, std::string> training;

  struct Eval {
    std::filesystem::path test_path;
    std::filesystem::path log_path;
    std::filesystem::path report_stem;
    std::vector<EvalModelConfig> models;
    int max_parallel = 4;
    std::uint64_t seed = 0;
  } eval;
};

// Relative paths resolve against base_dir. Throws config Error naming the
// offending key.
PipelineConfig parse_pipeline_config(std::string_view text,
                                     const std::filesystem::path &base_dir);
PipelineConfig load_pipeline_config(const std::filesystem::path &path);

// Advisory lock on a corpus directory held by writing subcommands.
class CorpusLock {
 public:
  static constexpr const char *kLockName = ".lock";
  explicit CorpusLock(const std::filesystem::path &corpus_root);
  ~CorpusLock();
  CorpusLock(const CorpusLock &) = delete;
  CorpusLock &operator=(const CorpusLock &) = delete;

 private:
  std::filesystem::path path_;
};

int run_cli(int argc, const char *const *argv, std::ostream &out, std::ostream &err);

}  // namespace vulnforge::cli
