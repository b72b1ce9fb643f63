// Copyright vulnforge contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

// Per-design specification documents used as replication context.

#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <spdlog/logger.h>

#include "vulnforge/corpus.hpp"
#include "vulnforge/llm.hpp"
#include "vulnforge/rtl.hpp"
#include "vulnforge/taxonomy.hpp"

namespace vulnforge {

enum class SpecProvenance { template_only, llm_enriched };

const char *to_string(SpecProvenance p);

struct SpecRegister {
  std::string name;
  std::string width;
  std::string role;

  bool operator==(const SpecRegister &) const = default;
};

struct SpecPort {
  rtl::PortDecl decl;
  std::string role;

  bool operator==(const SpecPort &) const = default;
};

struct SpecVulnerability {
  CweLabel label;
  std::string mechanism;
  std::string curator_notes;  // may be empty

  bool operator==(const SpecVulnerability &) const = default;
};

struct SpecDoc {
  std::string design_id;
  std::string module_name;
  std::string baseline_function;
  std::vector<SpecRegister> registers;
  std::vector<SpecPort> ports;
  std::optional<SpecVulnerability> vulnerability;
  SpecProvenance provenance = SpecProvenance::template_only;

  bool operator==(const SpecDoc &) const = default;
};

struct SpecOptions {
  std::string model_name;  // used when a client is given
  SamplingParams sampling{0.2, 0.9};
  std::optional<std::string> curator_notes;
  std::shared_ptr<spdlog::logger> logger;
};

// Builds the template skeleton from the parsed module. With a client the
// baseline and register prose are drafted by the model; any client failure
// or unusable reply falls back to the template with a warning.
// Throws rtl::ParseError / rtl::LexError when the source does not parse.
SpecDoc generate_spec(const DesignRecord &record, llm::LlmClient *client,
                      const SpecOptions &options = {});

// Fixed heading order; equal docs render to identical bytes.
std::string render_spec(const SpecDoc &doc);

// The drafting prompt sent to the model, exposed for inspection.
std::string spec_drafting_prompt(const DesignRecord &record, const rtl::ModuleInfo &info);

inline constexpr const char *kSpecSuffix = ".spec.txt";
inline constexpr const char *kNotesSuffix = ".notes.txt";

}  // namespace vulnforge
