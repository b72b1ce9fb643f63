// Copyright vulnforge contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#include "vulnforge/dataset.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include <spdlog/fmt/fmt.h>

#include "json_io.hpp"
#include "vulnforge/code_blocks.hpp"
#include "vulnforge/digest.hpp"
#include "vulnforge/logging.hpp"

namespace vulnforge::dataset {

const char *to_string(GroundTruth g) { return g == GroundTruth::present ? "present" : "absent"; }

const char *to_string(Split s) {
  switch (s) {
    case Split::train:
      return "train";
    case Split::validation:
      return "validation";
    case Split::test:
      return "test";
  }
  return "train";
}

const char *to_string(Annotation a) { return a == Annotation::model ? "model" : "template"; }

const char *to_string(PairingPolicy p) {
  switch (p) {
    case PairingPolicy::positives_only:
      return "positives-only";
    case PairingPolicy::counterpart:
      return "counterpart";
    case PairingPolicy::non_matching:
      return "non-matching";
  }
  return "counterpart";
}

GroundTruth ground_truth_from_string(std::string_view s) {
  if (s == "present") return GroundTruth::present;
  if (s == "absent") return GroundTruth::absent;
  throw validation_error("unknown ground truth '" + std::string(s) + "'");
}

Split split_from_string(std::string_view s) {
  for (auto x : kSplits) {
    if (s == to_string(x)) return x;
  }
  throw validation_error("unknown split '" + std::string(s) + "'");
}

PairingPolicy pairing_policy_from_string(std::string_view s) {
  for (auto p : {PairingPolicy::positives_only, PairingPolicy::counterpart,
                 PairingPolicy::non_matching}) {
    if (s == to_string(p)) return p;
  }
  throw config_error("unknown pairing policy '" + std::string(s) +
                     "' (expected positives-only, counterpart or non-matching)");
}

std::string make_query(const CweLabel &target, const Taxonomy &taxonomy) {
  if (!taxonomy.contains(target)) {
    throw validation_error("weakness " + target.key() + " is not in the taxonomy");
  }
  return "Assess the hardware design above for " + target.display() +
         ".\nWeakness pattern: " + mechanism_for(target) +
         "\nAnswer with 'VERDICT: PRESENT' or 'VERDICT: ABSENT' on the first line, "
         "then 'RATIONALE: ' followed by a short explanation.";
}

std::string verdict_line(GroundTruth truth) {
  return truth == GroundTruth::present ? "VERDICT: PRESENT" : "VERDICT: ABSENT";
}

namespace {

std::string template_rationale(const CweLabel &target, GroundTruth truth) {
  if (truth == GroundTruth::present) {
    return "The design contains " + target.display() + ". " + mechanism_for(target);
  }
  return "The design does not contain " + target.display() +
         ". No logic matching this pattern was found: " + mechanism_for(target);
}

std::string row_id(const std::string &design_id, const CweLabel &target) {
  auto key = target.key();
  std::replace(key.begin(), key.end(), '/', '.');
  return design_id + "__" + key;
}

InstructionPair make_row(const DesignRecord &d, const CweLabel &target, GroundTruth truth,
                         const Taxonomy &taxonomy, std::int64_t budget) {
  InstructionPair p;
  p.row_id = row_id(d.design_id, target);
  p.design_id = d.design_id;
  p.lineage_id = d.lineage_id;
  p.target_cwe = target;
  p.prompt_text = "```systemverilog\n" + d.source_text +
                  (d.source_text.ends_with('\n') ? "" : "\n") + "```\n\n" +
                  make_query(target, taxonomy);
  p.response_text = verdict_line(truth) + "\nRATIONALE: " + template_rationale(target, truth);
  p.ground_truth = truth;
  p.token_estimate = llm::estimate_tokens(p.prompt_text) + llm::estimate_tokens(p.response_text);
  p.over_budget = p.token_estimate > budget;
  return p;
}

const CweLabel &non_matching(const DesignRecord &d, const Taxonomy &taxonomy) {
  std::vector<const CweLabel *> candidates;
  for (const auto &e : taxonomy.entries()) {
    if (e.cwe_id != d.label->cwe_id) candidates.push_back(&e);
  }
  if (candidates.empty()) {
    throw validation_error("taxonomy has no weakness unrelated to " + d.label->key());
  }
  return *candidates[fnv1a64(d.design_id) % candidates.size()];
}

}  // namespace

std::vector<InstructionPair> build_pairs(const std::vector<DesignRecord> &designs,
                                         const Taxonomy &taxonomy, const PairOptions &options) {
  if (designs.empty()) throw validation_error("cannot build pairs from an empty corpus");
  std::map<std::string, std::set<std::string>> lineage_labels;  // key -> sorted keys
  std::set<std::string> lineages_with_counterpart;
  for (const auto &d : designs) {
    if (d.label) {
      if (!taxonomy.contains(*d.label)) {
        throw validation_error("design " + d.design_id + " is labeled " + d.label->key() +
                               ", which is not in the taxonomy");
      }
      lineage_labels[d.lineage_id].insert(d.label->key());
    } else {
      lineages_with_counterpart.insert(d.lineage_id);
    }
  }

  const auto budget = options.token_budget;
  std::vector<InstructionPair> rows;
  for (const auto &d : designs) {
    if (d.label) {
      rows.push_back(make_row(d, *d.label, GroundTruth::present, taxonomy, budget));
      bool negative = options.policy == PairingPolicy::non_matching ||
                      (options.policy == PairingPolicy::counterpart &&
                       !lineages_with_counterpart.count(d.lineage_id));
      if (negative) {
        rows.push_back(make_row(d, non_matching(d, taxonomy), GroundTruth::absent, taxonomy,
                                budget));
      }
    } else if (options.policy == PairingPolicy::counterpart) {
      for (const auto &key : lineage_labels[d.lineage_id]) {
        rows.push_back(make_row(d, *taxonomy.find_key(key), GroundTruth::absent, taxonomy,
                                budget));
      }
    }
  }
  std::sort(rows.begin(), rows.end(),
            [](const auto &a, const auto &b) { return a.row_id < b.row_id; });
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].row_id == rows[i - 1].row_id) {
      throw validation_error("duplicate row id " + rows[i].row_id);
    }
  }
  return rows;
}

std::string pair_to_json_line(const InstructionPair &p) {
  json j = {{"row_id", p.row_id},
            {"design_id", p.design_id},
            {"lineage_id", p.lineage_id},
            {"target_cwe", p.target_cwe},
            {"prompt_text", p.prompt_text},
            {"response_text", p.response_text},
            {"ground_truth", to_string(p.ground_truth)},
            {"token_estimate", p.token_estimate},
            {"over_budget", p.over_budget},
            {"annotation", to_string(p.annotation)}};
  j["split"] = p.split ? json(to_string(*p.split)) : json(nullptr);
  return j.dump();
}

InstructionPair pair_from_json_line(std::string_view line) {
  try {
    json j = json::parse(line);
    InstructionPair p;
    p.row_id = j.at("row_id").get<std::string>();
    p.design_id = j.at("design_id").get<std::string>();
    p.lineage_id = j.at("lineage_id").get<std::string>();
    p.target_cwe = j.at("target_cwe").get<CweLabel>();
    p.prompt_text = j.at("prompt_text").get<std::string>();
    p.response_text = j.at("response_text").get<std::string>();
    p.ground_truth = ground_truth_from_string(j.at("ground_truth").get<std::string>());
    if (!j.at("split").is_null()) p.split = split_from_string(j.at("split").get<std::string>());
    p.token_estimate = j.at("token_estimate").get<std::int64_t>();
    p.over_budget = j.at("over_budget").get<bool>();
    p.annotation = j.at("annotation").get<std::string>() == "model" ? Annotation::model
                                                                    : Annotation::template_text;
    return p;
  } catch (const json::exception &e) {
    throw validation_error(std::string("malformed dataset row: ") + e.what());
  }
}

namespace {

std::string clean_rationale(const std::string &text) {
  std::istringstream in(text);
  std::string line, out;
  while (std::getline(in, line)) {
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    line = line.substr(first);
    if (line.rfind("VERDICT", 0) == 0) continue;
    if (line.rfind("RATIONALE:", 0) == 0) line = line.substr(10);
    while (!line.empty() && (line.back() == ' ' || line.back() == '\r')) line.pop_back();
    first = line.find_first_not_of(' ');
    if (first == std::string::npos) continue;
    if (!out.empty()) out += ' ';
    out += line.substr(first);
  }
  return out;
}

}  // namespace

std::size_t annotate_explanations(std::vector<InstructionPair> &pairs, llm::LlmClient &client,
                                  const AnnotateOptions &options) {
  auto logger = options.logger ? options.logger : default_logger();
  std::atomic<std::size_t> next{0}, annotated{0};
  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < pairs.size();) {
      auto &p = pairs[i];
      if (p.annotation == Annotation::model) continue;
      auto blocks = fenced_blocks(p.prompt_text);
      const std::string design = blocks.empty() ? p.prompt_text : blocks.front();
      const bool present = p.ground_truth == GroundTruth::present;
      llm::CompletionRequest req;
      req.system_text = "You are a hardware security reviewer writing training annotations.";
      req.user_text = "```systemverilog\n" + design + "```\n\nThis design has been assessed for " +
                      p.target_cwe.display() + " and the weakness is " +
                      (present ? "PRESENT" : "ABSENT") + ".\nWeakness pattern: " +
                      mechanism_for(p.target_cwe) +
                      "\nExplain in two to four sentences why, citing the relevant signals. "
                      "Do not restate the verdict.";
      req.sampling = options.sampling;
      req.model_name = options.model_name;
      req.max_output_tokens = 512;
      try {
        auto rationale = clean_rationale(client.complete(req).text);
        if (rationale.empty()) {
          logger->warn("row {}: empty rationale; keeping template", p.row_id);
          continue;
        }
        p.response_text = verdict_line(p.ground_truth) + "\nRATIONALE: " + rationale;
        p.annotation = Annotation::model;
        p.token_estimate =
            llm::estimate_tokens(p.prompt_text) + llm::estimate_tokens(p.response_text);
        p.over_budget = p.token_estimate > options.token_budget;
        ++annotated;
      } catch (const Error &e) {
        logger->warn("row {}: annotation failed ({}); keeping template", p.row_id, e.what());
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    const int n = std::clamp(options.max_parallel, 1, 64);
    for (int w = 0; w < n; ++w) pool.emplace_back(work);
  }
  return annotated.load();
}

Split SplitAssignment::of(const std::string &lineage_id) const {
  auto it = lineage_split.find(lineage_id);
  if (it == lineage_split.end()) {
    throw validation_error("lineage " + lineage_id + " has no split assignment");
  }
  return it->second;
}

namespace {

void check_ratios(const SplitRatios &r) {
  if (!(r.train > 0 && r.validation > 0 && r.test > 0)) {
    throw validation_error("split ratios must all be positive");
  }
  if (std::abs(r.train + r.validation + r.test - 1.0) > 1e-9) {
    throw validation_error("split ratios must sum to 1");
  }
}

// Uniform integer in [0, bound) by rejection; independent of the standard
// library's distribution implementation.
std::uint64_t bounded(std::mt19937_64 &rng, std::uint64_t bound) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % bound;
}

}  // namespace

std::array<std::size_t, 3> apportion(std::size_t n, const SplitRatios &ratios) {
  check_ratios(ratios);
  const std::array<double, 3> r = {ratios.train, ratios.validation, ratios.test};
  std::array<std::size_t, 3> count{};
  std::array<double, 3> rem{};
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    double quota = static_cast<double>(n) * r[i];
    count[i] = static_cast<std::size_t>(std::floor(quota + 1e-9));
    rem[i] = quota - static_cast<double>(count[i]);
    assigned += count[i];
  }
  while (assigned < n) {
    int best = 0;
    for (int i = 1; i < 3; ++i) {
      if (rem[i] > rem[best] + 1e-12) best = i;
    }
    ++count[best];
    rem[best] = -1;
    ++assigned;
  }
  for (int i = 0; i < 3; ++i) {
    if (count[i] == 0) {
      int largest = static_cast<int>(std::max_element(count.begin(), count.end()) - count.begin());
      --count[largest];
      ++count[i];
    }
  }
  return count;
}

SplitAssignment split_by_lineage(std::vector<std::string> lineage_ids, const SplitRatios &ratios,
                                 std::uint64_t seed) {
  check_ratios(ratios);
  std::sort(lineage_ids.begin(), lineage_ids.end());
  lineage_ids.erase(std::unique(lineage_ids.begin(), lineage_ids.end()), lineage_ids.end());
  if (lineage_ids.size() < 3) {
    throw validation_error("need at least 3 lineages to fill train/validation/test, got " +
                           std::to_string(lineage_ids.size()));
  }
  auto counts = apportion(lineage_ids.size(), ratios);
  std::mt19937_64 rng(seed);
  for (std::size_t i = lineage_ids.size() - 1; i > 0; --i) {
    std::swap(lineage_ids[i], lineage_ids[bounded(rng, i + 1)]);
  }
  SplitAssignment a;
  a.ratios = ratios;
  a.seed = seed;
  std::size_t k = 0;
  for (int s = 0; s < 3; ++s) {
    for (std::size_t c = 0; c < counts[s]; ++c) a.lineage_split[lineage_ids[k++]] = kSplits[s];
  }
  return a;
}

void emit_dataset(std::vector<InstructionPair> pairs, const SplitAssignment &assignment,
                  const std::filesystem::path &dir, const EmitOptions &options) {
  std::sort(pairs.begin(), pairs.end(),
            [](const auto &a, const auto &b) { return a.row_id < b.row_id; });
  std::map<Split, std::string> files;
  for (auto s : kSplits) files[s];
  json splits = json::object();
  for (auto s : kSplits) {
    splits[to_string(s)] = {{"rows", 0}, {"present", 0}, {"absent", 0},
                            {"over_budget", 0}, {"lineages", 0}, {"by_cwe", json::object()}};
  }
  for (const auto &[lineage, s] : assignment.lineage_split) {
    splits[to_string(s)]["lineages"] = splits[to_string(s)]["lineages"].get<int>() + 1;
  }
  for (auto &p : pairs) {
    p.split = assignment.of(p.lineage_id);
    files[*p.split] += pair_to_json_line(p) + "\n";
    auto &st = splits[to_string(*p.split)];
    const char *truth = to_string(p.ground_truth);
    st["rows"] = st["rows"].get<int>() + 1;
    st[truth] = st[truth].get<int>() + 1;
    if (p.over_budget) st["over_budget"] = st["over_budget"].get<int>() + 1;
    auto &cwe = st["by_cwe"][p.target_cwe.key()];
    if (cwe.is_null()) cwe = {{"present", 0}, {"absent", 0}};
    cwe[truth] = cwe[truth].get<int>() + 1;
  }
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw io_error("cannot create " + dir.string() + ": " + ec.message());
  for (const auto &[s, text] : files) {
    write_file_atomic(dir / (std::string(to_string(s)) + ".jsonl"), text);
  }
  json stats = {{"policy", to_string(options.policy)},
                {"token_budget", options.token_budget},
                {"total_rows", pairs.size()},
                {"split_seed", assignment.seed},
                {"ratios",
                 {{"train", assignment.ratios.train},
                  {"validation", assignment.ratios.validation},
                  {"test", assignment.ratios.test}}},
                {"splits", splits}};
  write_file_atomic(dir / "stats.json", stats.dump(2) + "\n");
}

namespace {

std::string format_double(double v) {
  std::string s = fmt::format("{}", v);
  // fmt writes 2e-06; trainers accept the shorter 2e-6.
  auto e = s.find('e');
  if (e != std::string::npos) {
    std::string mant = s.substr(0, e), exp = s.substr(e + 1);
    std::string sign;
    if (exp[0] == '-' || exp[0] == '+') {
      if (exp[0] == '-') sign = "-";
      exp = exp.substr(1);
    }
    exp.erase(0, std::min(exp.find_first_not_of('0'), exp.size() - 1));
    s = mant + "e" + sign + exp;
  }
  return s;
}

struct Field {
  const char *name;
  std::function<std::string(const TrainingConfig &)> get;
  std::function<void(TrainingConfig &, std::string_view)> set;
};

int parse_int(std::string_view name, std::string_view v, int min) {
  int x = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size()) {
    throw config_error("training field " + std::string(name) + " expects an integer, got '" +
                       std::string(v) + "'");
  }
  if (x < min) {
    throw config_error("training field " + std::string(name) + " must be at least " +
                       std::to_string(min));
  }
  return x;
}

double parse_real(std::string_view name, std::string_view v, double lo, double hi) {
  double x = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(x)) {
    throw config_error("training field " + std::string(name) + " expects a number, got '" +
                       std::string(v) + "'");
  }
  if (x < lo || x > hi) {
    throw config_error("training field " + std::string(name) + " is out of range");
  }
  return x;
}

std::string parse_text(std::string_view name, std::string_view v) {
  if (v.empty() || v.find_first_of(" \t=#") != std::string_view::npos) {
    throw config_error("training field " + std::string(name) + " expects a single word");
  }
  return std::string(v);
}

#define VF_INT(f, min)                                                              \
  Field{#f, [](const TrainingConfig &c) { return std::to_string(c.f); },           \
        [](TrainingConfig &c, std::string_view v) { c.f = parse_int(#f, v, min); }}
#define VF_REAL(f, lo, hi)                                                          \
  Field{#f, [](const TrainingConfig &c) { return format_double(c.f); },            \
        [](TrainingConfig &c, std::string_view v) { c.f = parse_real(#f, v, lo, hi); }}
#define VF_TEXT(f)                                                                  \
  Field{#f, [](const TrainingConfig &c) { return c.f; },                           \
        [](TrainingConfig &c, std::string_view v) { c.f = parse_text(#f, v); }}

const std::vector<Field> &fields() {
  static const std::vector<Field> f = {
      VF_INT(lora_rank, 1),
      VF_INT(lora_alpha, 1),
      VF_REAL(lora_dropout, 0.0, 1.0),
      VF_TEXT(quantization),
      VF_TEXT(compute_dtype),
      VF_REAL(learning_rate, 1e-12, 1.0),
      VF_INT(batch_size, 1),
      VF_INT(grad_accum_steps, 1),
      VF_INT(epochs, 1),
      VF_TEXT(optimizer),
      VF_REAL(weight_decay, 0.0, 1.0),
      VF_REAL(max_grad_norm, 0.0, 1e6),
      VF_TEXT(lr_schedule),
      VF_REAL(warmup_ratio, 0.0, 1.0),
      Field{"gradient_checkpointing",
            [](const TrainingConfig &c) {
              return std::string(c.gradient_checkpointing ? "true" : "false");
            },
            [](TrainingConfig &c, std::string_view v) {
              if (v != "true" && v != "false") {
                throw config_error("training field gradient_checkpointing expects true or false");
              }
              c.gradient_checkpointing = v == "true";
            }},
      VF_INT(max_seq_len, 1),
  };
  return f;
}

#undef VF_INT
#undef VF_REAL
#undef VF_TEXT

const Field &field(std::string_view name) {
  for (const auto &f : fields()) {
    if (name == f.name) return f;
  }
  throw config_error("unknown training field '" + std::string(name) + "'");
}

std::string_view trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

TrainingConfig apply_overrides(TrainingConfig config,
                               const std::map<std::string, std::string> &overrides,
                               std::shared_ptr<spdlog::logger> logger) {
  if (!logger) logger = default_logger();
  for (const auto &[name, value] : overrides) {
    const auto &f = field(name);
    auto before = f.get(config);
    f.set(config, trim(value));
    logger->info("training override: {} = {} (default {})", name, f.get(config), before);
  }
  return config;
}

std::string emit_training_config(const TrainingConfig &config) {
  std::string out;
  for (const auto &f : fields()) out += std::string(f.name) + " = " + f.get(config) + "\n";
  return out;
}

std::string emit_training_config(const std::map<std::string, std::string> &overrides,
                                 std::shared_ptr<spdlog::logger> logger) {
  return emit_training_config(apply_overrides(TrainingConfig{}, overrides, std::move(logger)));
}

TrainingConfig parse_training_config(std::string_view text) {
  TrainingConfig c;
  std::set<std::string> seen;
  std::size_t pos = 0, line_no = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = trim(text.substr(pos, end - pos));
    ++line_no;
    pos = end + 1;
    if (line.empty() || line.front() == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw config_error("training config line " + std::to_string(line_no) + ": expected key = value");
    }
    auto key = std::string(trim(line.substr(0, eq)));
    const auto &f = field(key);
    if (!seen.insert(key).second) throw config_error("training field " + key + " repeated");
    f.set(c, trim(line.substr(eq + 1)));
  }
  for (const auto &f : fields()) {
    if (!seen.count(f.name)) throw config_error(std::string("training field ") + f.name + " missing");
  }
  return c;
}

}  // namespace vulnforge::dataset
