// Copyright vulnforge contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#include "vulnforge/spec_gen.hpp"

#include <map>
#include <regex>
#include <sstream>

#include "vulnforge/logging.hpp"

namespace vulnforge {

namespace {

bool name_has(const std::string &name, std::initializer_list<const char *> parts) {
  for (auto *p : parts) {
    if (name.find(p) != std::string::npos) return true;
  }
  return false;
}

std::string port_role(const rtl::PortDecl &p) {
  const auto &n = p.name;
  if (p.scalar() && p.direction == rtl::PortDirection::input) {
    if (name_has(n, {"clk", "clock"})) return "Clock.";
    if (name_has(n, {"rst", "reset"})) {
      return n.find("_n") != std::string::npos || n.find("ni") != std::string::npos
                 ? "Reset, active low."
                 : "Reset.";
    }
  }
  std::string role = p.direction == rtl::PortDirection::input    ? "Input"
                     : p.direction == rtl::PortDirection::output ? "Output"
                                                                 : "Bidirectional";
  role += p.scalar() ? " signal." : ", " + p.width_text() + ".";
  return role;
}

std::string template_baseline(const rtl::ModuleInfo &info) {
  int in = 0, out = 0, io = 0;
  for (const auto &p : info.ports) {
    (p.direction == rtl::PortDirection::input    ? in
     : p.direction == rtl::PortDirection::output ? out
                                                 : io)++;
  }
  std::ostringstream s;
  s << "Module " << info.module_name << " exposes " << in << " input, " << out
    << " output and " << io << " bidirectional ports";
  if (!info.parameters.empty()) {
    s << " and is configured by";
    for (std::size_t i = 0; i < info.parameters.size(); ++i) {
      const auto &p = info.parameters[i];
      s << (i ? ", " : " ") << p.name;
      if (!p.default_value.empty()) s << " (default " << p.default_value << ")";
    }
  }
  s << ". It holds " << info.registers.size() << " module-level state element"
    << (info.registers.size() == 1 ? "" : "s") << ".";
  return s.str();
}

struct Drafted {
  std::string baseline;
  std::map<std::string, std::string> register_roles;
};

std::optional<Drafted> parse_draft(const std::string &text) {
  static const std::regex baseline_re(R"(^\s*BASELINE:\s*(.*)$)");
  static const std::regex register_re(R"(^\s*REGISTER\s+([A-Za-z_][A-Za-z0-9_$]*)\s*:\s*(.*)$)");
  Drafted d;
  std::istringstream in(text);
  std::string line;
  bool in_baseline = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::smatch m;
    if (std::regex_match(line, m, baseline_re)) {
      d.baseline = m[1];
      in_baseline = true;
    } else if (std::regex_match(line, m, register_re)) {
      d.register_roles[m[1]] = m[2];
      in_baseline = false;
    } else if (in_baseline && !line.empty()) {
      d.baseline += " " + line;
    } else {
      in_baseline = false;
    }
  }
  auto first = d.baseline.find_first_not_of(" \t");
  if (first == std::string::npos) return std::nullopt;
  d.baseline = d.baseline.substr(first);
  return d;
}

}  // namespace

const char *to_string(SpecProvenance p) {
  return p == SpecProvenance::llm_enriched ? "llm_enriched" : "template_only";
}

std::string spec_drafting_prompt(const DesignRecord &record, const rtl::ModuleInfo &info) {
  std::ostringstream s;
  s << "Describe the baseline functionality of the hardware module below for a "
       "design specification.\n"
       "Answer with one line starting with 'BASELINE:' followed by a short "
       "paragraph, then one line per listed register of the form "
       "'REGISTER <name>: <role>'.\n"
       "Do not describe security weaknesses.\n\nRegisters:";
  for (const auto &r : info.registers) s << " " << r.name;
  if (info.registers.empty()) s << " (none)";
  s << "\n\n```systemverilog\n" << record.source_text;
  if (!record.source_text.empty() && record.source_text.back() != '\n') s << "\n";
  s << "```\n";
  return s.str();
}

SpecDoc generate_spec(const DesignRecord &record, llm::LlmClient *client,
                      const SpecOptions &options) {
  auto info = rtl::parse_module(record.source_text);
  auto logger = options.logger ? options.logger : default_logger();

  SpecDoc doc;
  doc.design_id = record.design_id;
  doc.module_name = info.module_name;
  doc.baseline_function = template_baseline(info);
  for (const auto &r : info.registers) {
    std::string role = r.width.empty() || r.width == "scalar"
                           ? "Single-bit state element."
                           : "State element, " + r.width + ".";
    doc.registers.push_back({r.name, r.width, role});
  }
  for (const auto &p : info.ports) doc.ports.push_back({p, port_role(p)});
  if (record.label) {
    SpecVulnerability v;
    v.label = *record.label;
    v.mechanism = mechanism_for(*record.label);
    if (options.curator_notes) v.curator_notes = *options.curator_notes;
    doc.vulnerability = std::move(v);
  }

  if (!client) return doc;

  llm::CompletionRequest req;
  req.system_text = "You are a hardware design engineer writing IP documentation.";
  req.user_text = spec_drafting_prompt(record, info);
  req.sampling = options.sampling;
  req.model_name = options.model_name;
  try {
    auto result = client->complete(req);
    auto draft = parse_draft(result.text);
    if (!draft) {
      logger->warn("spec {}: model reply had no BASELINE line; using template",
                   record.design_id);
      return doc;
    }
    doc.baseline_function = draft->baseline;
    for (auto &r : doc.registers) {
      if (auto it = draft->register_roles.find(r.name); it != draft->register_roles.end()) {
        r.role = it->second;
      }
    }
    doc.provenance = SpecProvenance::llm_enriched;
  } catch (const Error &e) {
    logger->warn("spec {}: drafting failed ({}); using template", record.design_id,
                 e.what());
  }
  return doc;
}

std::string render_spec(const SpecDoc &doc) {
  std::ostringstream s;
  s << "Specification: " << doc.design_id << "\n"
    << "Module: " << doc.module_name << "\n"
    << "Provenance: " << to_string(doc.provenance) << "\n\n";

  s << "== Baseline Functionality ==\n" << doc.baseline_function << "\n\n";

  s << "== Registers ==\n";
  if (doc.registers.empty()) s << "(none)\n";
  for (const auto &r : doc.registers) {
    s << "- " << r.name;
    if (!r.width.empty()) s << " " << r.width;
    s << ": " << r.role << "\n";
  }
  s << "\n== I/O Ports ==\n";
  if (doc.ports.empty()) s << "(none)\n";
  for (const auto &p : doc.ports) {
    s << "- " << rtl::to_string(p.decl.direction) << " " << p.decl.name << " "
      << p.decl.width_text() << ": " << p.role << "\n";
  }
  if (doc.vulnerability) {
    const auto &v = *doc.vulnerability;
    s << "\n== Vulnerability Characteristics ==\n"
      << "Weakness: " << v.label.display() << "\n"
      << "Mechanism: " << v.mechanism << "\n";
    if (!v.curator_notes.empty()) {
      s << "Notes:\n" << v.curator_notes;
      if (v.curator_notes.back() != '\n') s << "\n";
    }
  }
  return s.str();
}

}  // namespace vulnforge
