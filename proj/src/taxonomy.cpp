// Copyright vulnforge contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#include "vulnforge/taxonomy.hpp"

#include <cctype>
#include <map>
#include <set>

#include "vulnforge/error.hpp"

namespace vulnforge {

std::string CweLabel::key() const {
  if (disambiguator) return cwe_id + "/" + *disambiguator;
  return cwe_id;
}

std::string CweLabel::display() const {
  return cwe_id + " (" + short_name + ")";
}

bool is_valid_cwe_id(std::string_view id) {
  if (id.size() < 5 || id.size() > 8 || id.substr(0, 4) != "CWE-") return false;
  for (char c : id.substr(4)) {
    if (!std::isdigit(static_cast<unsigned char>(c))) return false;
  }
  return true;
}

Taxonomy::Taxonomy(std::vector<CweLabel> entries) : entries_(std::move(entries)) {
  std::set<std::string> keys;
  for (const auto &e : entries_) {
    if (!is_valid_cwe_id(e.cwe_id)) {
      throw validation_error("malformed CWE id '" + e.cwe_id + "'");
    }
    if (e.disambiguator && e.disambiguator->empty()) {
      throw validation_error("empty disambiguator on " + e.cwe_id);
    }
    if (!keys.insert(e.key()).second) {
      throw validation_error("duplicate taxonomy entry " + e.key());
    }
  }
}

const CweLabel *Taxonomy::find(
    std::string_view cwe_id,
    const std::optional<std::string> &disambiguator) const {
  for (const auto &e : entries_) {
    if (e.cwe_id == cwe_id && e.disambiguator == disambiguator) return &e;
  }
  return nullptr;
}

const CweLabel *Taxonomy::find_key(std::string_view key) const {
  for (const auto &e : entries_) {
    if (e.key() == key) return &e;
  }
  return nullptr;
}

bool Taxonomy::contains(const CweLabel &label) const {
  const CweLabel *e = find(label.cwe_id, label.disambiguator);
  return e != nullptr && e->short_name == label.short_name;
}

const CweLabel &Taxonomy::resolve(std::string_view ref) const {
  if (const CweLabel *e = find_key(ref)) return *e;
  const CweLabel *only = nullptr;
  int hits = 0;
  for (const auto &e : entries_) {
    if (e.cwe_id == ref) {
      only = &e;
      ++hits;
    }
  }
  if (hits == 1) return *only;
  if (hits > 1) {
    throw validation_error("'" + std::string(ref) +
                           "' is ambiguous; add a variant (e.g. " +
                           std::string(ref) + "/<variant>)");
  }
  throw validation_error("unknown CWE label '" + std::string(ref) + "'");
}

const Taxonomy &shipped_taxonomy() {
  static const Taxonomy taxonomy({
      {"CWE-1198", "Improper handling of privilege issues", std::nullopt},
      {"CWE-269", "Improper privilege level during interrupt handling",
       std::nullopt},
      {"CWE-1245", "Less secured FSM encoding", std::nullopt},
      {"CWE-1260", "Overlapping between memory ranges", std::nullopt},
      {"CWE-506", "Hardware trojan inside the decoder module", std::nullopt},
      {"CWE-310", "Trojan in AES for information leakage",
       std::string("aes-leakage")},
      {"CWE-310", "Trojan in AES for denial of service", std::string("aes-dos")},
      {"CWE-310", "Trojan in CSR module unauthorized access",
       std::string("csr-access")},
      {"CWE-321", "Use of hardcoded cryptographic key", std::nullopt},
      {"CWE-250", "Improper trap privilege assignment", std::nullopt},
      {"CWE-1244", "Unlocking JTAG during reset", std::nullopt},
      {"CWE-284", "Improper direct memory access", std::nullopt},
      {"CWE-1271", "Unauthorized access to important registers", std::nullopt},
  });
  return taxonomy;
}

namespace {

const std::map<std::string, std::string> &mechanisms() {
  static const std::map<std::string, std::string> m = {
      {"CWE-1198", "A privileged operation is reachable without checking the current privilege mode."},
      {"CWE-269", "Interrupt entry or return leaves the core at the wrong privilege level."},
      {"CWE-1245", "FSM state encoding allows unreachable or glitch-induced states to be entered."},
      {"CWE-1260", "Protected address ranges can be configured to overlap, so a weaker rule shadows a stronger one."},
      {"CWE-506", "Hidden trigger logic alters normal behaviour when a rare input pattern is seen."},
      {"CWE-310/aes-leakage", "A hidden trigger routes key material toward an observable output."},
      {"CWE-310/aes-dos", "A hidden trigger stalls or corrupts the cipher so that service is denied."},
      {"CWE-310/csr-access", "A hidden trigger grants access to control/status registers outside the intended privilege."},
      {"CWE-321", "The cipher key is a constant in the design instead of a provisioned secret."},
      {"CWE-250", "Traps are taken at a higher privilege than required."},
      {"CWE-1244", "The debug/JTAG unlock state is not cleared during reset."},
      {"CWE-284", "DMA transfers are not checked against the allowed address ranges."},
      {"CWE-1271", "Security-critical registers can be written or read without the lock being honoured."},
  };
  return m;
}

}  // namespace

std::string mechanism_for(const CweLabel &label) {
  const auto &m = mechanisms();
  if (auto it = m.find(label.key()); it != m.end()) return it->second;
  if (auto it = m.find(label.cwe_id); it != m.end()) return it->second;
  return "The design exhibits the weakness named above.";
}

}  // namespace vulnforge
