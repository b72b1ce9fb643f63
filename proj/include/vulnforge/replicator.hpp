// Copyright vulnforge contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

// Style-conditioned replication of labeled designs, gated by structural
// fidelity and same-lineage token diversity.

#pragma once

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
#include "vulnforge/rtl.hpp"
#include "vulnforge/sampling.hpp"
#include "vulnforge/spec_gen.hpp"

namespace vulnforge::replicate {

// Style name -> directive text placed at the end of the prompt.
class StyleRegistry {
 public:
  // The four built-in styles.
  static StyleRegistry builtin();

  void add(const CodingStyle &style, std::string directive);
  const std::string *find(const CodingStyle &style) const;
  std::vector<CodingStyle> styles() const;

 private:
  std::map<CodingStyle, std::string> directives_;
};

// Throws validation Error for a style without a registered template.
std::string build_replication_prompt(const SpecDoc &spec, const std::string &source,
                                     const CodingStyle &style,
                                     const StyleRegistry &registry = StyleRegistry::builtin());
std::string build_replication_prompt(std::string_view rendered_spec,
                                     const std::string &source, const CodingStyle &style,
                                     const StyleRegistry &registry = StyleRegistry::builtin());

inline constexpr const char *kReplicatorSystemText =
    "You are an expert RTL designer. You rewrite hardware modules in a requested "
    "coding style while keeping their behaviour, interface and weaknesses intact.";

// Evenly spaced temperatures over [lo, hi], rounded to 1e-9. Throws
// validation Error unless 0 < lo <= hi <= 2, count >= 1 and top_p in (0, 1].
std::vector<SamplingParams> sampling_schedule(int count, double lo, double hi,
                                              double top_p = 0.9);

enum class VulnRetained { unchecked, judged_yes, judged_no };

const char *to_string(VulnRetained v);

struct FidelityReport {
  bool parses = false;
  bool signature_match = false;
  VulnRetained vuln_retained = VulnRetained::unchecked;
  std::vector<std::string> notes;

  bool accepted() const {
    return parses && signature_match && vuln_retained != VulnRetained::judged_no;
  }
};

struct JudgeOptions {
  std::string model_name;
  SamplingParams sampling{0.0, 1.0};
};

// Never throws for candidate problems; they become report fields.
FidelityReport check_fidelity(const DesignRecord &original,
                              const std::string &candidate_source,
                              llm::LlmClient *judge = nullptr,
                              const JudgeOptions &judge_options = {});

// Jaccard similarity of token n-gram sets. A stream shorter than n
// contributes its whole token sequence as a single gram, so two empty
// streams compare equal (1.0).
double ngram_jaccard(const std::vector<std::string> &a, const std::vector<std::string> &b,
                     std::size_t n = 4);

struct Sibling {
  std::string design_id;
  std::vector<std::string> tokens;
};

struct DiversityReport {
  double max_similarity = 0;
  std::string nearest_neighbor;  // empty without siblings
  double threshold = 0.85;

  bool accepted() const { return max_similarity <= threshold; }
};

// Throws validation Error unless threshold is in (0, 1]. The first sibling
// with the maximal score is reported as nearest.
DiversityReport check_diversity(const std::vector<std::string> &candidate,
                                const std::vector<Sibling> &siblings, double threshold);

std::vector<std::string> token_texts(const std::string &source);

struct CampaignConfig {
  std::vector<CodingStyle> styles = StyleRegistry::builtin().styles();
  int replicas_per_design = 4;
  double temperature_lo = 0.6;
  double temperature_hi = 1.5;
  double top_p = 0.9;
  double diversity_threshold = 0.85;
  int retries = 2;  // regenerations after a rejected attempt
  std::uint64_t seed = 0;
  std::string model;
  // Base design ids; empty selects every labeled benchmark design.
  std::vector<std::string> base_designs;
  bool include_secure_bases = false;
  bool use_judge = false;
  std::string judge_model;
  int max_parallel_lineages = 4;
  int max_output_tokens = 4096;
  bool dry_run = false;
};

enum class RejectReason { fidelity, diversity, llm_failure };

const char *to_string(RejectReason r);

struct SlotPlan {
  std::string base_id;
  int slot = 0;
  std::string replica_id;
  CodingStyle style;
  SamplingParams sampling;
};

struct RejectionRecord {
  std::string base_id;
  std::string replica_id;
  int slot = 0;
  int attempt = 0;
  CodingStyle style;
  SamplingParams sampling;
  RejectReason reason = RejectReason::fidelity;
  std::optional<FidelityReport> fidelity;
  std::optional<DiversityReport> diversity;
  std::string detail;
};

struct CampaignSummary {
  int requested = 0;
  int accepted = 0;
  int rejected_fidelity = 0;
  int rejected_diversity = 0;
  int llm_failures = 0;
  int not_attempted = 0;  // slots skipped after a halt
  bool halted = false;
  std::string halt_reason;
  std::vector<std::string> accepted_ids;  // sorted
  std::vector<RejectionRecord> rejections;  // sorted by (base, slot, attempt)
  std::vector<SlotPlan> plan;
};

// Runs every (base design, slot) pair. Lineages run in parallel, slots within
// a lineage run in order, so results are reproducible under the mock backend.
// With dry_run the plan is returned and neither the client nor the store is
// touched. An unreachable backend halts the campaign; accepted replicas stay
// stored and the summary reports halted.
// Throws validation Error when there is nothing to replicate.
CampaignSummary run_campaign(CorpusStore &store, const CampaignConfig &config,
                             llm::LlmClient *client,
                             const StyleRegistry &registry = StyleRegistry::builtin(),
                             std::shared_ptr<spdlog::logger> logger = nullptr);

std::string rejection_to_json_line(const RejectionRecord &r);
std::string summary_to_json(const CampaignSummary &s);

struct Violation {
  std::string design_id;
  std::string reason;
};

// Re-checks that every replica parses and matches its lineage root's port
// signature.
std::vector<Violation> verify_corpus(const CorpusStore &store);

}  // namespace vulnforge::replicate
