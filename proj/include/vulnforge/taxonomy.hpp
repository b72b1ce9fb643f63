// Copyright vulnforge contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace vulnforge {

// One hardware weakness class. Several entries may share a cwe_id (the three
// CWE-310 trojans), in which case the disambiguator tells them apart.
struct CweLabel {
  std::string cwe_id;
  std::string short_name;
  std::optional<std::string> disambiguator;

  // "CWE-321" or "CWE-310/aes-leakage". Identity of the label.
  std::string key() const;
  // "CWE-321 (Use of hardcoded cryptographic key)".
  std::string display() const;

  bool same_weakness(const CweLabel &other) const {
    return cwe_id == other.cwe_id && disambiguator == other.disambiguator;
  }
  bool operator==(const CweLabel &) const = default;
};

bool is_valid_cwe_id(std::string_view id);

class Taxonomy {
 public:
  Taxonomy() = default;
  // Throws validation Error on malformed ids or duplicate keys.
  explicit Taxonomy(std::vector<CweLabel> entries);

  const std::vector<CweLabel> &entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  const CweLabel *find(std::string_view cwe_id,
                       const std::optional<std::string> &disambiguator) const;
  const CweLabel *find_key(std::string_view key) const;
  bool contains(const CweLabel &label) const;

  // Resolves a CLI-style reference: a full key, or a bare CWE id when that id
  // is unambiguous. Throws validation Error otherwise.
  const CweLabel &resolve(std::string_view ref) const;

  bool operator==(const Taxonomy &) const = default;

 private:
  std::vector<CweLabel> entries_;
};

// The thirteen weakness instances the detector is trained and scored on.
const Taxonomy &shipped_taxonomy();

// One-sentence description of how the weakness shows up in RTL. Entries
// outside the shipped set get a generic sentence.
std::string mechanism_for(const CweLabel &label);

}  // namespace vulnforge
