// Copyright vulnforge contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#include "vulnforge/corpus.hpp"

#include <cctype>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>

#include "json_io.hpp"
#include "vulnforge/digest.hpp"
#include "vulnforge/error.hpp"
#include "vulnforge/version.hpp"

namespace fs = std::filesystem;

namespace vulnforge {

const char *to_string(Origin origin) {
  switch (origin) {
    case Origin::benchmark:
      return "benchmark";
    case Origin::replica:
      return "replica";
    case Origin::secure_counterpart:
      return "secure_counterpart";
  }
  return "benchmark";
}

Origin origin_from_string(std::string_view text) {
  if (text == "benchmark") return Origin::benchmark;
  if (text == "replica") return Origin::replica;
  if (text == "secure_counterpart") return Origin::secure_counterpart;
  throw validation_error("unknown origin '" + std::string(text) + "'");
}

bool is_valid_design_id(std::string_view id) {
  if (id.empty() || id.front() == '.' || id.size() > 200) return false;
  for (char c : id) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' ||
          c == '.')) {
      return false;
    }
  }
  return true;
}

void validate_record(const DesignRecord &r) {
  if (!is_valid_design_id(r.design_id)) {
    throw validation_error("invalid design id '" + r.design_id + "'");
  }
  if (!is_valid_design_id(r.lineage_id)) {
    throw validation_error("invalid lineage id '" + r.lineage_id + "' on " +
                           r.design_id);
  }
  if (r.source_text.empty()) {
    throw validation_error("design " + r.design_id + " has an empty source");
  }
  if (r.label && !is_valid_cwe_id(r.label->cwe_id)) {
    throw validation_error("design " + r.design_id + " has malformed label " +
                           r.label->cwe_id);
  }
  switch (r.origin) {
    case Origin::benchmark:
      if (r.lineage_id != r.design_id) {
        throw validation_error("benchmark design " + r.design_id +
                               " must be its own lineage root");
      }
      if (r.style || r.sampling) {
        throw validation_error("benchmark design " + r.design_id +
                               " cannot carry style or sampling metadata");
      }
      break;
    case Origin::replica:
      if (!r.style || !r.sampling) {
        throw validation_error("replica " + r.design_id +
                               " requires style and sampling metadata");
      }
      if (!r.sampling->valid()) {
        throw validation_error("replica " + r.design_id +
                               " has out-of-range sampling parameters");
      }
      if (r.lineage_id == r.design_id) {
        throw validation_error("replica " + r.design_id +
                               " cannot be its own lineage root");
      }
      break;
    case Origin::secure_counterpart:
      if (r.label) {
        throw validation_error("secure counterpart " + r.design_id +
                               " cannot carry a vulnerability label");
      }
      if (r.lineage_id == r.design_id) {
        throw validation_error("secure counterpart " + r.design_id +
                               " must name the benchmark it pairs with");
      }
      if (r.style || r.sampling) {
        throw validation_error("secure counterpart " + r.design_id +
                               " cannot carry style or sampling metadata");
      }
      break;
  }
}

// ---------------------------------------------------------------------------
// Manifest text

static json entry_to_json(const ManifestEntry &e) {
  json j;
  j["design_id"] = e.design_id;
  j["lineage_id"] = e.lineage_id;
  j["label"] = optional_to_json(e.label);
  j["origin"] = to_string(e.origin);
  j["path"] = e.path;
  j["digest"] = e.digest;
  j["style"] = e.style ? json(e.style->name) : json(nullptr);
  j["sampling"] = optional_to_json(e.sampling);
  return j;
}

static ManifestEntry entry_from_json(const json &j) {
  ManifestEntry e;
  e.design_id = j.at("design_id").get<std::string>();
  e.lineage_id = j.at("lineage_id").get<std::string>();
  e.label = optional_from_json<CweLabel>(j, "label");
  e.origin = origin_from_string(j.at("origin").get<std::string>());
  e.path = j.at("path").get<std::string>();
  e.digest = j.at("digest").get<std::string>();
  if (auto s = optional_from_json<std::string>(j, "style")) e.style = CodingStyle{*s};
  e.sampling = optional_from_json<SamplingParams>(j, "sampling");
  return e;
}

std::string manifest_to_text(const CorpusManifest &m) {
  json j;
  j["created_at"] = m.created_at;
  j["tool_version"] = m.tool_version;
  j["digest_algorithm"] = m.digest_algorithm;
  j["taxonomy"] = m.taxonomy.entries();
  json records = json::array();
  for (const auto &e : m.records) records.push_back(entry_to_json(e));
  j["records"] = std::move(records);
  return j.dump(2) + "\n";
}

CorpusManifest manifest_from_text(std::string_view text) {
  try {
    json j = json::parse(text);
    CorpusManifest m;
    m.created_at = j.at("created_at").get<std::string>();
    m.tool_version = j.at("tool_version").get<std::string>();
    m.digest_algorithm = j.at("digest_algorithm").get<std::string>();
    m.taxonomy = Taxonomy(j.at("taxonomy").get<std::vector<CweLabel>>());
    for (const auto &r : j.at("records")) m.records.push_back(entry_from_json(r));
    return m;
  } catch (const json::exception &e) {
    throw validation_error(std::string("malformed corpus manifest: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// File helpers

std::string read_file(const fs::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw io_error("failed reading '" + path.string() + "'");
  return ss.str();
}

void write_file_atomic(const fs::path &path, std::string_view bytes) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot open '" + tmp.string() + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw io_error("failed writing '" + tmp.string() + "'");
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    throw io_error("cannot move '" + tmp.string() + "' into place: " +
                   ec.message());
  }
}

static std::string format_utc(std::time_t t) {
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string utc_timestamp() { return format_utc(std::time(nullptr)); }

static std::string default_created_at() {
  if (const char *epoch = std::getenv("SOURCE_DATE_EPOCH")) {
    char *end = nullptr;
    long long v = std::strtoll(epoch, &end, 10);
    if (end != epoch && *end == '\0' && v >= 0) {
      return format_utc(static_cast<std::time_t>(v));
    }
  }
  return utc_timestamp();
}

// ---------------------------------------------------------------------------
// Store

static std::string relative_design_path(const DesignRecord &r) {
  return "designs/" + r.lineage_id + "/" + r.design_id + ".sv";
}

bool CorpusStore::exists(const fs::path &root) {
  return fs::exists(root / kManifestName);
}

CorpusStore CorpusStore::create(const fs::path &root, const Taxonomy &taxonomy,
                                const StoreOptions &options) {
  if (exists(root)) {
    throw validation_error("corpus already exists at '" + root.string() + "'");
  }
  std::error_code ec;
  fs::create_directories(root / "designs", ec);
  if (ec) {
    throw io_error("cannot create corpus directory '" + root.string() +
                   "': " + ec.message());
  }
  CorpusStore store;
  store.root_ = root;
  store.taxonomy_ = taxonomy;
  store.created_at_ = options.created_at.value_or(default_created_at());
  store.tool_version_ = kToolVersion;
  store.persist_manifest_locked();
  return store;
}

CorpusStore CorpusStore::open(const fs::path &root) {
  if (!exists(root)) {
    throw io_error("no corpus manifest under '" + root.string() + "'");
  }
  CorpusManifest m = manifest_from_text(read_file(root / kManifestName));
  if (m.digest_algorithm != kDigestAlgorithm) {
    throw validation_error("unsupported digest algorithm '" +
                           m.digest_algorithm + "'");
  }
  CorpusStore store;
  store.root_ = root;
  store.taxonomy_ = m.taxonomy;
  store.created_at_ = m.created_at;
  store.tool_version_ = m.tool_version;
  for (auto &e : m.records) {
    fs::path file = root / e.path;
    if (!fs::exists(file)) {
      throw validation_error("manifest references missing file " + e.path);
    }
    std::string text = read_file(file);
    if (sha256_hex(text) != e.digest) {
      throw validation_error("digest mismatch for design " + e.design_id +
                             " (" + e.path + ")");
    }
    if (e.label && !m.taxonomy.contains(*e.label)) {
      throw validation_error("design " + e.design_id + " has label " +
                             e.label->key() + " missing from the taxonomy");
    }
    DesignRecord r{e.design_id, e.lineage_id, std::move(text), e.label,
                   e.origin,    e.style,      e.sampling};
    validate_record(r);
    store.records_.emplace(e.design_id, std::move(r));
    store.entries_.emplace(e.design_id, std::move(e));
  }
  return store;
}

CorpusStore CorpusStore::open_or_create(const fs::path &root,
                                        const StoreOptions &options) {
  if (exists(root)) return open(root);
  return create(root, shipped_taxonomy(), options);
}

std::string CorpusStore::add_design(const DesignRecord &record) {
  validate_record(record);
  std::unique_lock lock(*mutex_);
  if (records_.count(record.design_id)) {
    throw validation_error("duplicate design id '" + record.design_id + "'");
  }
  if (record.label && !taxonomy_.contains(*record.label)) {
    throw validation_error("label " + record.label->key() +
                           " is not in the corpus taxonomy");
  }
  if (record.origin != Origin::benchmark) {
    auto root = records_.find(record.lineage_id);
    if (root == records_.end() || root->second.origin != Origin::benchmark) {
      throw validation_error("design " + record.design_id +
                             " names unknown lineage root '" +
                             record.lineage_id + "'");
    }
  }

  ManifestEntry e;
  e.design_id = record.design_id;
  e.lineage_id = record.lineage_id;
  e.label = record.label;
  e.origin = record.origin;
  e.path = relative_design_path(record);
  e.digest = sha256_hex(record.source_text);
  e.style = record.style;
  e.sampling = record.sampling;

  write_file_atomic(root_ / e.path, record.source_text);
  records_.emplace(record.design_id, record);
  entries_.emplace(record.design_id, e);
  try {
    persist_manifest_locked();
  } catch (...) {
    records_.erase(record.design_id);
    entries_.erase(record.design_id);
    throw;
  }
  return record.design_id;
}

void CorpusStore::persist_manifest_locked() const {
  write_file_atomic(root_ / kManifestName, manifest_to_text([&] {
                      CorpusManifest m;
                      m.taxonomy = taxonomy_;
                      m.created_at = created_at_;
                      m.tool_version = tool_version_;
                      m.digest_algorithm = std::string(kDigestAlgorithm);
                      for (const auto &[id, e] : entries_) m.records.push_back(e);
                      return m;
                    }()));
}

std::vector<DesignRecord> CorpusStore::list_by_cwe(const CweLabel &label) const {
  std::shared_lock lock(*mutex_);
  if (!taxonomy_.find(label.cwe_id, label.disambiguator)) {
    throw validation_error("unknown label " + label.key());
  }
  std::vector<DesignRecord> out;
  for (const auto &[id, r] : records_) {
    if (r.label && r.label->same_weakness(label)) out.push_back(r);
  }
  return out;
}

Lineage CorpusStore::lineage_of(const std::string &design_id) const {
  std::shared_lock lock(*mutex_);
  auto it = records_.find(design_id);
  if (it == records_.end()) {
    throw validation_error("unknown design id '" + design_id + "'");
  }
  Lineage l;
  l.lineage_id = it->second.lineage_id;
  for (const auto &[id, r] : records_) {
    if (r.lineage_id == l.lineage_id) l.members.push_back(id);
  }
  return l;
}

bool CorpusStore::contains(const std::string &design_id) const {
  std::shared_lock lock(*mutex_);
  return records_.count(design_id) != 0;
}

DesignRecord CorpusStore::get(const std::string &design_id) const {
  std::shared_lock lock(*mutex_);
  auto it = records_.find(design_id);
  if (it == records_.end()) {
    throw validation_error("unknown design id '" + design_id + "'");
  }
  return it->second;
}

std::vector<DesignRecord> CorpusStore::records() const {
  std::shared_lock lock(*mutex_);
  std::vector<DesignRecord> out;
  out.reserve(records_.size());
  for (const auto &[id, r] : records_) out.push_back(r);
  return out;
}

std::vector<std::string> CorpusStore::lineage_ids() const {
  std::shared_lock lock(*mutex_);
  std::set<std::string> ids;
  for (const auto &[id, r] : records_) ids.insert(r.lineage_id);
  return {ids.begin(), ids.end()};
}

CorpusManifest CorpusStore::manifest() const {
  std::shared_lock lock(*mutex_);
  CorpusManifest m;
  m.taxonomy = taxonomy_;
  m.created_at = created_at_;
  m.tool_version = tool_version_;
  m.digest_algorithm = std::string(kDigestAlgorithm);
  for (const auto &[id, e] : entries_) m.records.push_back(e);
  return m;
}

fs::path CorpusStore::design_path(const std::string &design_id) const {
  std::shared_lock lock(*mutex_);
  auto it = entries_.find(design_id);
  if (it == entries_.end()) {
    throw validation_error("unknown design id '" + design_id + "'");
  }
  return root_ / it->second.path;
}

fs::path CorpusStore::sidecar_path(const std::string &design_id,
                                   std::string_view suffix) const {
  fs::path p = design_path(design_id);
  p.replace_extension();
  p += std::string(suffix);
  return p;
}

void CorpusStore::write_sidecar(const std::string &design_id,
                                std::string_view suffix,
                                std::string_view text) const {
  write_file_atomic(sidecar_path(design_id, suffix), text);
}

std::optional<std::string> CorpusStore::read_sidecar(
    const std::string &design_id, std::string_view suffix) const {
  fs::path p = sidecar_path(design_id, suffix);
  if (!fs::exists(p)) return std::nullopt;
  return read_file(p);
}

}  // namespace vulnforge
