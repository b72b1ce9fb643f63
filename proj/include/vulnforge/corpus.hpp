// Copyright vulnforge contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "vulnforge/sampling.hpp"
#include "vulnforge/taxonomy.hpp"

namespace vulnforge {

enum class Origin { benchmark, replica, secure_counterpart };

const char *to_string(Origin origin);
Origin origin_from_string(std::string_view text);

// One RTL module source with its label and provenance. A missing label means
// the design is considered secure.
struct DesignRecord {
  std::string design_id;
  std::string lineage_id;
  std::string source_text;
  std::optional<CweLabel> label;
  Origin origin = Origin::benchmark;
  std::optional<CodingStyle> style;
  std::optional<SamplingParams> sampling;

  bool vulnerable() const { return label.has_value(); }
  bool operator==(const DesignRecord &) const = default;
};

// Checks the per-record invariants (ids, origin/lineage/style coupling).
// Throws validation Error naming the first violation.
void validate_record(const DesignRecord &record);

// Design ids double as file names: [A-Za-z0-9_.-]+, not starting with '.'.
bool is_valid_design_id(std::string_view id);

struct ManifestEntry {
  std::string design_id;
  std::string lineage_id;
  std::optional<CweLabel> label;
  Origin origin = Origin::benchmark;
  std::string path;  // relative to the corpus root, '/'-separated
  std::string digest;
  std::optional<CodingStyle> style;
  std::optional<SamplingParams> sampling;

  bool operator==(const ManifestEntry &) const = default;
};

struct CorpusManifest {
  std::vector<ManifestEntry> records;  // sorted by design_id
  Taxonomy taxonomy;
  std::string created_at;
  std::string tool_version;
  std::string digest_algorithm;

  bool operator==(const CorpusManifest &) const = default;
};

std::string manifest_to_text(const CorpusManifest &manifest);
CorpusManifest manifest_from_text(std::string_view text);

struct StoreOptions {
  // ISO-8601 UTC. Defaults to SOURCE_DATE_EPOCH when set, else the clock.
  std::optional<std::string> created_at;
};

struct Lineage {
  std::string lineage_id;
  std::vector<std::string> members;  // sorted, includes the root
};

// Directory-backed corpus:
//   <root>/manifest.json
//   <root>/designs/<lineage_id>/<design_id>.sv
// Single writer, many readers. Every mutation rewrites the manifest through a
// temp file + rename.
class CorpusStore {
 public:
  static constexpr const char *kManifestName = "manifest.json";

  static CorpusStore create(const std::filesystem::path &root,
                            const Taxonomy &taxonomy = shipped_taxonomy(),
                            const StoreOptions &options = {});
  // Loads and verifies every digest. Throws validation Error on mismatch.
  static CorpusStore open(const std::filesystem::path &root);
  static CorpusStore open_or_create(const std::filesystem::path &root,
                                    const StoreOptions &options = {});
  static bool exists(const std::filesystem::path &root);

  CorpusStore(CorpusStore &&) noexcept = default;
  CorpusStore &operator=(CorpusStore &&) noexcept = default;

  std::string add_design(const DesignRecord &record);

  std::vector<DesignRecord> list_by_cwe(const CweLabel &label) const;
  Lineage lineage_of(const std::string &design_id) const;

  bool contains(const std::string &design_id) const;
  DesignRecord get(const std::string &design_id) const;
  std::vector<DesignRecord> records() const;  // sorted by design_id
  std::vector<std::string> lineage_ids() const;
  CorpusManifest manifest() const;
  const Taxonomy &taxonomy() const { return taxonomy_; }

  const std::filesystem::path &root() const { return root_; }
  std::filesystem::path design_path(const std::string &design_id) const;

  // Auxiliary files kept next to a design (<design_id><suffix>), e.g. spec
  // documents and curator notes. Not part of the manifest.
  std::filesystem::path sidecar_path(const std::string &design_id,
                                     std::string_view suffix) const;
  void write_sidecar(const std::string &design_id, std::string_view suffix,
                     std::string_view text) const;
  std::optional<std::string> read_sidecar(const std::string &design_id,
                                          std::string_view suffix) const;

 private:
  CorpusStore() = default;
  void persist_manifest_locked() const;

  std::filesystem::path root_;
  Taxonomy taxonomy_;
  std::string created_at_;
  std::string tool_version_;
  std::map<std::string, DesignRecord> records_;
  std::map<std::string, ManifestEntry> entries_;
  std::unique_ptr<std::shared_mutex> mutex_ = std::make_unique<std::shared_mutex>();
};

// Whole-file helpers shared by the store, the CLI and the tests.
std::string read_file(const std::filesystem::path &path);
void write_file_atomic(const std::filesystem::path &path, std::string_view bytes);

std::string utc_timestamp();

}  // namespace vulnforge
