// Copyright vulnforge contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#include "vulnforge/replicator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <regex>
#include <set>
#include <sstream>
#include <thread>

#include "json_io.hpp"
#include "vulnforge/code_blocks.hpp"
#include "vulnforge/logging.hpp"

namespace vulnforge::replicate {

StyleRegistry StyleRegistry::builtin() {
  StyleRegistry r;
  r.add(CodingStyle::parameterized(),
        "Rewrite the module so that widths, depths and constants are expressed "
        "through parameters or localparams with defaults equal to the original "
        "values. Port names, directions and widths at the default parameter "
        "values must not change.");
  r.add(CodingStyle::single_process_fsm(),
        "Restructure the control logic as a single-process finite state machine: "
        "one clocked always block computes both the next state and the outputs. "
        "Keep every port name, direction and width unchanged.");
  r.add(CodingStyle::dual_process_fsm(),
        "Restructure the control logic as a two-process finite state machine: a "
        "clocked block holds the state register and a separate combinational "
        "block computes the next state and outputs. Keep every port name, "
        "direction and width unchanged.");
  r.add(CodingStyle::signal_renaming(),
        "Rename internal signals, registers and local parameters to a different, "
        "consistent naming convention. Do not rename ports, the module or its "
        "parameters.");
  return r;
}

void StyleRegistry::add(const CodingStyle &style, std::string directive) {
  if (style.name.empty()) throw validation_error("style name must not be empty");
  directives_[style] = std::move(directive);
}

const std::string *StyleRegistry::find(const CodingStyle &style) const {
  auto it = directives_.find(style);
  return it == directives_.end() ? nullptr : &it->second;
}

std::vector<CodingStyle> StyleRegistry::styles() const {
  // Built-ins keep their canonical order; extras follow by name.
  std::vector<CodingStyle> out;
  for (const auto &s : {CodingStyle::parameterized(), CodingStyle::single_process_fsm(),
                        CodingStyle::dual_process_fsm(), CodingStyle::signal_renaming()}) {
    if (directives_.count(s)) out.push_back(s);
  }
  for (const auto &[s, d] : directives_) {
    if (std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
  }
  return out;
}

std::string build_replication_prompt(const SpecDoc &spec, const std::string &source,
                                     const CodingStyle &style,
                                     const StyleRegistry &registry) {
  return build_replication_prompt(render_spec(spec), source, style, registry);
}

std::string build_replication_prompt(std::string_view rendered_spec,
                                     const std::string &source, const CodingStyle &style,
                                     const StyleRegistry &registry) {
  const std::string *directive = registry.find(style);
  if (!directive) {
    throw validation_error("no prompt template registered for style '" + style.name + "'");
  }
  std::ostringstream s;
  s << "Produce a new implementation of the hardware module described below. The "
       "rewrite must keep the module name, every port (name, direction, width) "
       "and the baseline functionality. It must also keep the weakness listed "
       "under Vulnerability Characteristics, if any, so the new design remains a "
       "faithful instance of it.\n\n";
  s << "SPECIFICATION:\n" << rendered_spec;
  if (!rendered_spec.empty() && rendered_spec.back() != '\n') s << "\n";
  s << "\nORIGINAL DESIGN:\n```systemverilog\n" << source;
  if (!source.empty() && source.back() != '\n') s << "\n";
  s << "```\n\nSTYLE (" << style.name << "):\n" << *directive << "\n\n"
    << "Return the complete module in a single ```systemverilog fenced block.\n";
  return s.str();
}

std::vector<SamplingParams> sampling_schedule(int count, double lo, double hi,
                                              double top_p) {
  if (count < 1) throw validation_error("sampling schedule needs count >= 1");
  if (!(lo > 0.0 && lo <= hi && hi <= 2.0)) {
    throw validation_error("temperature range must satisfy 0 < lo <= hi <= 2");
  }
  if (!(top_p > 0.0 && top_p <= 1.0)) throw validation_error("top_p must be in (0, 1]");
  std::vector<SamplingParams> out;
  for (int i = 0; i < count; ++i) {
    double t = count == 1 ? lo : lo + (hi - lo) * i / (count - 1);
    t = std::round(t * 1e9) / 1e9;
    out.push_back({t, top_p});
  }
  return out;
}

const char *to_string(VulnRetained v) {
  switch (v) {
    case VulnRetained::unchecked:
      return "unchecked";
    case VulnRetained::judged_yes:
      return "judged_yes";
    case VulnRetained::judged_no:
      return "judged_no";
  }
  return "unchecked";
}

const char *to_string(RejectReason r) {
  switch (r) {
    case RejectReason::fidelity:
      return "fidelity";
    case RejectReason::diversity:
      return "diversity";
    case RejectReason::llm_failure:
      return "llm_failure";
  }
  return "fidelity";
}

FidelityReport check_fidelity(const DesignRecord &original,
                              const std::string &candidate_source, llm::LlmClient *judge,
                              const JudgeOptions &judge_options) {
  FidelityReport report;
  auto reference = rtl::parse_module(original.source_text);
  rtl::ModuleInfo candidate;
  try {
    candidate = rtl::parse_module(candidate_source);
    report.parses = true;
  } catch (const Error &e) {
    report.notes.push_back(std::string("parse: ") + e.what());
    return report;
  }
  report.signature_match = rtl::port_signature(reference) == rtl::port_signature(candidate);
  if (!report.signature_match) {
    report.notes.push_back("signature: expected '" + rtl::port_signature(reference) +
                           "', got '" + rtl::port_signature(candidate) + "'");
  }
  if (candidate.module_name != reference.module_name) {
    report.notes.push_back("module renamed to " + candidate.module_name);
  }
  if (!judge || !original.label || !report.signature_match) return report;

  llm::CompletionRequest req;
  req.system_text = "You review hardware designs for security weaknesses. Answer YES or NO.";
  req.user_text = "Does this module still contain the weakness " +
                  original.label->display() +
                  "? Answer YES or NO on the first line.\n\n```systemverilog\n" +
                  candidate_source + (candidate_source.ends_with('\n') ? "" : "\n") +
                  "```\n";
  req.sampling = judge_options.sampling;
  req.model_name = judge_options.model_name;
  req.max_output_tokens = 256;
  try {
    auto answer = judge->complete(req).text;
    static const std::regex yes_no(R"(^\W*(yes|no)\b)", std::regex::icase);
    std::smatch m;
    if (std::regex_search(answer, m, yes_no)) {
      auto word = m[1].str();
      report.vuln_retained = (word[0] == 'y' || word[0] == 'Y') ? VulnRetained::judged_yes
                                                                : VulnRetained::judged_no;
    } else {
      report.notes.push_back("judge: unparseable answer");
    }
  } catch (const Error &e) {
    report.notes.push_back(std::string("judge: ") + e.what());
  }
  return report;
}

namespace {

std::set<std::vector<std::string>> gram_set(const std::vector<std::string> &t, std::size_t n) {
  std::set<std::vector<std::string>> grams;
  if (t.size() < n) {
    grams.insert(t);
    return grams;
  }
  for (std::size_t i = 0; i + n <= t.size(); ++i) {
    grams.emplace(t.begin() + static_cast<std::ptrdiff_t>(i),
                  t.begin() + static_cast<std::ptrdiff_t>(i + n));
  }
  return grams;
}

}  // namespace

double ngram_jaccard(const std::vector<std::string> &a, const std::vector<std::string> &b,
                     std::size_t n) {
  if (n == 0) throw validation_error("n-gram size must be positive");
  auto ga = gram_set(a, n);
  auto gb = gram_set(b, n);
  std::size_t common = 0;
  for (const auto &g : ga) common += gb.count(g);
  const std::size_t uni = ga.size() + gb.size() - common;
  return static_cast<double>(common) / static_cast<double>(uni);
}

DiversityReport check_diversity(const std::vector<std::string> &candidate,
                                const std::vector<Sibling> &siblings, double threshold) {
  if (!(threshold > 0.0 && threshold <= 1.0)) {
    throw validation_error("diversity threshold must be in (0, 1]");
  }
  DiversityReport r;
  r.threshold = threshold;
  for (const auto &s : siblings) {
    double sim = ngram_jaccard(candidate, s.tokens);
    if (r.nearest_neighbor.empty() || sim > r.max_similarity) {
      r.max_similarity = sim;
      r.nearest_neighbor = s.design_id;
    }
  }
  return r;
}

std::vector<std::string> token_texts(const std::string &source) {
  return rtl::tokenize(source).texts();
}

namespace {

struct LineageJob {
  std::string lineage_id;
  std::vector<DesignRecord> bases;
};

struct LineageResult {
  int accepted = 0, rejected_fidelity = 0, rejected_diversity = 0, llm_failures = 0,
      not_attempted = 0;
  std::vector<std::string> accepted_ids;
  std::vector<RejectionRecord> rejections;
  std::string halt_reason;
};

int first_free_slot(const CorpusStore &store, const std::string &base_id) {
  int n = 0;
  auto prefix = base_id + "_r";
  while (store.contains(prefix + (n < 10 ? "0" : "") + std::to_string(n))) ++n;
  return n;
}

std::string replica_id(const std::string &base_id, int index) {
  return base_id + "_r" + (index < 10 ? "0" : "") + std::to_string(index);
}

std::string spec_text_for(const CorpusStore &store, const DesignRecord &base) {
  if (auto text = store.read_sidecar(base.design_id, kSpecSuffix)) return *text;
  SpecOptions opts;
  opts.curator_notes = store.read_sidecar(base.design_id, kNotesSuffix);
  return render_spec(generate_spec(base, nullptr, opts));
}

}  // namespace

CampaignSummary run_campaign(CorpusStore &store, const CampaignConfig &config,
                             llm::LlmClient *client, const StyleRegistry &registry,
                             std::shared_ptr<spdlog::logger> logger) {
  if (!logger) logger = default_logger();
  if (config.styles.empty()) throw validation_error("campaign needs at least one style");
  for (const auto &s : config.styles) {
    if (!registry.find(s)) {
      throw validation_error("no prompt template registered for style '" + s.name + "'");
    }
  }
  if (config.replicas_per_design < 1) {
    throw validation_error("replicas_per_design must be at least 1");
  }
  if (config.retries < 0) throw validation_error("retries must not be negative");
  if (!(config.diversity_threshold > 0.0 && config.diversity_threshold <= 1.0)) {
    throw validation_error("diversity threshold must be in (0, 1]");
  }
  const auto schedule = sampling_schedule(config.replicas_per_design, config.temperature_lo,
                                          config.temperature_hi, config.top_p);

  std::vector<DesignRecord> bases;
  if (config.base_designs.empty()) {
    for (auto &r : store.records()) {
      if (r.origin == Origin::replica) continue;
      if (r.vulnerable() ? r.origin == Origin::benchmark : config.include_secure_bases) {
        bases.push_back(std::move(r));
      }
    }
  } else {
    std::set<std::string> seen;
    for (const auto &id : config.base_designs) {
      if (!seen.insert(id).second) continue;
      if (!store.contains(id)) throw validation_error("base design " + id + " is not in the corpus");
      auto r = store.get(id);
      if (!r.vulnerable() && !config.include_secure_bases) {
        throw validation_error("base design " + id +
                               " is unlabeled; set include_secure_bases to replicate it");
      }
      bases.push_back(std::move(r));
    }
    std::sort(bases.begin(), bases.end(),
              [](const auto &a, const auto &b) { return a.design_id < b.design_id; });
  }
  if (bases.empty()) throw validation_error("corpus has no base designs to replicate");
  if (!config.dry_run && !client) throw config_error("campaign needs an LLM client");

  std::map<std::string, LineageJob> by_lineage;
  for (auto &b : bases) {
    auto &job = by_lineage[b.lineage_id];
    job.lineage_id = b.lineage_id;
    job.bases.push_back(std::move(b));
  }
  std::vector<LineageJob> jobs;
  for (auto &[id, job] : by_lineage) jobs.push_back(std::move(job));

  CampaignSummary summary;
  summary.requested = static_cast<int>(bases.size()) * config.replicas_per_design;
  for (const auto &job : jobs) {
    for (const auto &base : job.bases) {
      int start = first_free_slot(store, base.design_id);
      for (int slot = 0; slot < config.replicas_per_design; ++slot) {
        summary.plan.push_back({base.design_id, slot, replica_id(base.design_id, start + slot),
                                config.styles[slot % config.styles.size()], schedule[slot]});
      }
    }
  }
  if (config.dry_run) return summary;

  std::atomic<bool> halted{false};
  std::vector<LineageResult> results(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  JudgeOptions judge_options;
  judge_options.model_name = config.judge_model.empty() ? config.model : config.judge_model;

  auto run_job = [&](std::size_t j) {
    const auto &job = jobs[j];
    auto &res = results[j];
    std::vector<Sibling> siblings;
    for (const auto &id : store.lineage_of(job.bases.front().design_id).members) {
      try {
        siblings.push_back({id, token_texts(store.get(id).source_text)});
      } catch (const rtl::LexError &) {
        logger->warn("lineage {}: member {} does not tokenize; skipped as sibling",
                     job.lineage_id, id);
      }
    }
    for (const auto &base : job.bases) {
      const std::string spec = spec_text_for(store, base);
      const int start = first_free_slot(store, base.design_id);
      for (int slot = 0; slot < config.replicas_per_design; ++slot) {
        if (halted.load()) {
          ++res.not_attempted;
          continue;
        }
        const auto style = config.styles[slot % config.styles.size()];
        const auto id = replica_id(base.design_id, start + slot);
        const std::string prompt =
            build_replication_prompt(spec, base.source_text, style, registry);
        std::optional<RejectionRecord> last;
        bool accepted = false;
        for (int attempt = 0; attempt <= config.retries && !accepted; ++attempt) {
          RejectionRecord rej;
          rej.base_id = base.design_id;
          rej.replica_id = id;
          rej.slot = slot;
          rej.attempt = attempt;
          rej.style = style;
          rej.sampling = schedule[slot];

          llm::CompletionRequest req;
          req.system_text = kReplicatorSystemText;
          req.user_text = prompt;
          if (last) {
            req.user_text += "\nRegeneration attempt " + std::to_string(attempt) +
                             ": the previous candidate was rejected (" +
                             to_string(last->reason) +
                             "). Produce a different rewrite that satisfies every "
                             "requirement above.\n";
          }
          req.sampling = schedule[slot];
          req.model_name = config.model;
          req.max_output_tokens = config.max_output_tokens;

          std::string text;
          try {
            text = client->complete(req).text;
          } catch (const llm::BackendError &e) {
            rej.reason = RejectReason::llm_failure;
            rej.detail = e.what();
            last = rej;
            res.rejections.push_back(rej);
            if (e.unreachable()) {
              halted.store(true);
              res.halt_reason = e.what();
              break;
            }
            continue;
          } catch (const Error &e) {
            rej.reason = RejectReason::llm_failure;
            rej.detail = e.what();
            last = rej;
            res.rejections.push_back(rej);
            continue;
          }

          auto code = extract_code(text);
          if (!code) {
            FidelityReport f;
            f.notes.push_back("no code found in completion");
            rej.reason = RejectReason::fidelity;
            rej.fidelity = f;
            last = rej;
            res.rejections.push_back(rej);
            continue;
          }
          if (!code->ends_with('\n')) code->push_back('\n');
          auto fidelity = check_fidelity(base, *code, config.use_judge ? client : nullptr,
                                         judge_options);
          if (!fidelity.accepted()) {
            rej.reason = RejectReason::fidelity;
            rej.fidelity = fidelity;
            last = rej;
            res.rejections.push_back(rej);
            continue;
          }
          auto tokens = token_texts(*code);
          auto diversity = check_diversity(tokens, siblings, config.diversity_threshold);
          if (!diversity.accepted()) {
            rej.reason = RejectReason::diversity;
            rej.fidelity = fidelity;
            rej.diversity = diversity;
            last = rej;
            res.rejections.push_back(rej);
            continue;
          }
          DesignRecord replica;
          replica.design_id = id;
          replica.lineage_id = base.lineage_id;
          replica.source_text = *code;
          replica.label = base.label;
          replica.origin = Origin::replica;
          replica.style = style;
          replica.sampling = schedule[slot];
          store.add_design(replica);
          siblings.push_back({id, std::move(tokens)});
          res.accepted_ids.push_back(id);
          ++res.accepted;
          accepted = true;
          logger->info("accepted {} ({}, T={}, similarity {:.3f})", id, style.name,
                       schedule[slot].temperature, diversity.max_similarity);
        }
        if (accepted) continue;
        switch (last->reason) {
          case RejectReason::fidelity:
            ++res.rejected_fidelity;
            break;
          case RejectReason::diversity:
            ++res.rejected_diversity;
            break;
          case RejectReason::llm_failure:
            ++res.llm_failures;
            break;
        }
        logger->info("slot {} rejected after {} attempt(s): {}", id, last->attempt + 1,
                     to_string(last->reason));
      }
    }
  };

  const std::size_t workers = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::max(1, config.max_parallel_lineages)), 1, jobs.size());
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t j; (j = next.fetch_add(1)) < jobs.size();) {
          try {
            run_job(j);
          } catch (...) {
            errors[j] = std::current_exception();
            halted.store(true);
          }
        }
      });
    }
  }
  for (auto &e : errors) {
    if (e) std::rethrow_exception(e);
  }

  for (auto &r : results) {
    summary.accepted += r.accepted;
    summary.rejected_fidelity += r.rejected_fidelity;
    summary.rejected_diversity += r.rejected_diversity;
    summary.llm_failures += r.llm_failures;
    summary.not_attempted += r.not_attempted;
    summary.accepted_ids.insert(summary.accepted_ids.end(), r.accepted_ids.begin(),
                                r.accepted_ids.end());
    summary.rejections.insert(summary.rejections.end(), r.rejections.begin(),
                              r.rejections.end());
    if (!r.halt_reason.empty() && summary.halt_reason.empty()) summary.halt_reason = r.halt_reason;
  }
  summary.halted = halted.load();
  std::sort(summary.accepted_ids.begin(), summary.accepted_ids.end());
  std::sort(summary.rejections.begin(), summary.rejections.end(),
            [](const auto &a, const auto &b) {
              return std::tie(a.base_id, a.slot, a.attempt) < std::tie(b.base_id, b.slot, b.attempt);
            });
  if (summary.halted) {
    logger->error("campaign halted: {}", summary.halt_reason);
  }
  return summary;
}

namespace {

json fidelity_json(const FidelityReport &f) {
  return {{"parses", f.parses},
          {"signature_match", f.signature_match},
          {"vuln_retained", to_string(f.vuln_retained)},
          {"notes", f.notes}};
}

json diversity_json(const DiversityReport &d) {
  return {{"max_similarity", d.max_similarity},
          {"nearest_neighbor", d.nearest_neighbor},
          {"threshold", d.threshold}};
}

}  // namespace

std::string rejection_to_json_line(const RejectionRecord &r) {
  json j = {{"base_id", r.base_id},
            {"replica_id", r.replica_id},
            {"slot", r.slot},
            {"attempt", r.attempt},
            {"style", r.style.name},
            {"sampling", r.sampling},
            {"reason", to_string(r.reason)},
            {"detail", r.detail}};
  j["fidelity"] = r.fidelity ? fidelity_json(*r.fidelity) : json(nullptr);
  j["diversity"] = r.diversity ? diversity_json(*r.diversity) : json(nullptr);
  return global_redactor().scrub(j.dump());
}

std::string summary_to_json(const CampaignSummary &s) {
  json plan = json::array();
  for (const auto &p : s.plan) {
    plan.push_back({{"base_id", p.base_id},
                    {"slot", p.slot},
                    {"replica_id", p.replica_id},
                    {"style", p.style.name},
                    {"sampling", p.sampling}});
  }
  json j = {{"requested", s.requested},
            {"accepted", s.accepted},
            {"rejected_fidelity", s.rejected_fidelity},
            {"rejected_diversity", s.rejected_diversity},
            {"llm_failures", s.llm_failures},
            {"not_attempted", s.not_attempted},
            {"halted", s.halted},
            {"halt_reason", s.halt_reason},
            {"accepted_ids", s.accepted_ids},
            {"plan", plan}};
  return global_redactor().scrub(j.dump(2));
}

std::vector<Violation> verify_corpus(const CorpusStore &store) {
  std::vector<Violation> out;
  std::map<std::string, std::optional<std::string>> root_signatures;
  for (const auto &r : store.records()) {
    if (r.origin != Origin::replica) continue;
    auto [it, fresh] = root_signatures.try_emplace(r.lineage_id);
    if (fresh) {
      try {
        it->second = rtl::port_signature(rtl::parse_module(store.get(r.lineage_id).source_text));
      } catch (const Error &) {
      }
    }
    if (!it->second) {
      out.push_back({r.design_id, "lineage root " + r.lineage_id + " is missing or unparseable"});
      continue;
    }
    try {
      auto sig = rtl::port_signature(rtl::parse_module(r.source_text));
      if (sig != *it->second) out.push_back({r.design_id, "port signature differs from root"});
    } catch (const Error &e) {
      out.push_back({r.design_id, std::string("does not parse: ") + e.what()});
    }
  }
  return out;
}

}  // namespace vulnforge::replicate
