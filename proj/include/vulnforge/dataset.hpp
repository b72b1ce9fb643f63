// Copyright vulnforge contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

// Instruction-tuning rows, lineage-level splits and trainer configuration.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <spdlog/logger.h>

#include "vulnforge/corpus.hpp"
#include "vulnforge/llm.hpp"
#include "vulnforge/taxonomy.hpp"

namespace vulnforge::dataset {

enum class GroundTruth { present, absent };
enum class Split { train, validation, test };
enum class Annotation { template_text, model };
enum class PairingPolicy { positives_only, counterpart, non_matching };

const char *to_string(GroundTruth g);
const char *to_string(Split s);
const char *to_string(Annotation a);
const char *to_string(PairingPolicy p);
GroundTruth ground_truth_from_string(std::string_view s);
Split split_from_string(std::string_view s);
PairingPolicy pairing_policy_from_string(std::string_view s);

inline constexpr std::array<Split, 3> kSplits = {Split::train, Split::validation, Split::test};

// Throws validation Error for a label outside the taxonomy.
std::string make_query(const CweLabel &target, const Taxonomy &taxonomy = shipped_taxonomy());

// "VERDICT: PRESENT" / "VERDICT: ABSENT".
std::string verdict_line(GroundTruth truth);

struct InstructionPair {
  std::string row_id;
  std::string design_id;
  std::string lineage_id;
  CweLabel target_cwe;
  std::string prompt_text;
  std::string response_text;  // verdict line, then "RATIONALE: ..."
  GroundTruth ground_truth = GroundTruth::present;
  std::optional<Split> split;  // set on emission
  std::int64_t token_estimate = 0;
  bool over_budget = false;
  Annotation annotation = Annotation::template_text;

  bool operator==(const InstructionPair &) const = default;
};

std::string pair_to_json_line(const InstructionPair &p);
InstructionPair pair_from_json_line(std::string_view line);

struct PairOptions {
  PairingPolicy policy = PairingPolicy::counterpart;
  std::int64_t token_budget = 512;
};

// Rows per design under each policy:
//   positives_only  vulnerable: own label (present); secure: none
//   counterpart     vulnerable: own label; plus one non-matching query
//                   (absent) when its lineage has no secure counterpart.
//                   secure: one row per distinct label in its lineage (absent)
//   non_matching    vulnerable: own label plus one non-matching query;
//                   secure: none
// A non-matching query uses a taxonomy entry with a different CWE id, picked
// by a hash of the design id. Rows are sorted by row_id.
// Throws validation Error for an empty corpus or a label outside the taxonomy.
std::vector<InstructionPair> build_pairs(const std::vector<DesignRecord> &designs,
                                         const Taxonomy &taxonomy,
                                         const PairOptions &options = {});

struct AnnotateOptions {
  std::string model_name;
  SamplingParams sampling{0.3, 0.9};
  int max_parallel = 4;
  std::int64_t token_budget = 512;
  std::shared_ptr<spdlog::logger> logger;
};

// Replaces template rationales with model-written ones, grounded in the
// design embedded in the prompt. The verdict line is never changed; rows
// already annotated are skipped; failures keep the template. Token estimates
// are refreshed. Returns the number of rows annotated.
std::size_t annotate_explanations(std::vector<InstructionPair> &pairs, llm::LlmClient &client,
                                  const AnnotateOptions &options = {});

struct SplitRatios {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;
};

struct SplitAssignment {
  std::map<std::string, Split> lineage_split;
  SplitRatios ratios;
  std::uint64_t seed = 0;

  Split of(const std::string &lineage_id) const;  // throws validation Error
};

// Largest-remainder apportionment of lineage counts, then lineages are
// shuffled by seed and dealt out in split order. If rounding leaves a split
// empty, one lineage moves to it from the largest split.
// Throws validation Error for invalid ratios or fewer than 3 lineages.
SplitAssignment split_by_lineage(std::vector<std::string> lineage_ids, const SplitRatios &ratios,
                                 std::uint64_t seed);

// Lineage counts per split for n lineages, as used by split_by_lineage.
std::array<std::size_t, 3> apportion(std::size_t n, const SplitRatios &ratios);

struct EmitOptions {
  PairingPolicy policy = PairingPolicy::counterpart;
  std::int64_t token_budget = 512;
};

// Writes <dir>/{train,validation,test}.jsonl and <dir>/stats.json.
void emit_dataset(std::vector<InstructionPair> pairs, const SplitAssignment &assignment,
                  const std::filesystem::path &dir, const EmitOptions &options = {});

struct TrainingConfig {
  int lora_rank = 128;
  int lora_alpha = 256;
  double lora_dropout = 0.1;
  std::string quantization = "nf4-4bit";
  std::string compute_dtype = "float16";
  double learning_rate = 2e-6;
  int batch_size = 4;
  int grad_accum_steps = 1;
  int epochs = 3;
  std::string optimizer = "paged-adamw-32bit";
  double weight_decay = 0.001;
  double max_grad_norm = 0.3;
  std::string lr_schedule = "constant";
  double warmup_ratio = 0.03;
  bool gradient_checkpointing = true;
  int max_seq_len = 512;

  bool operator==(const TrainingConfig &) const = default;
};

// Applies "field" -> "value" overrides, logging each one. Throws config
// Error for unknown fields or values of the wrong type.
TrainingConfig apply_overrides(TrainingConfig config,
                               const std::map<std::string, std::string> &overrides,
                               std::shared_ptr<spdlog::logger> logger = nullptr);

// Flat "key = value" lines in declaration order.
std::string emit_training_config(const TrainingConfig &config);
std::string emit_training_config(const std::map<std::string, std::string> &overrides,
                                 std::shared_ptr<spdlog::logger> logger = nullptr);
// Accepts '#' comments and blank lines. Every field must appear exactly once.
TrainingConfig parse_training_config(std::string_view text);

}  // namespace vulnforge::dataset
