// Copyright vulnforge contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#include "vulnforge/ingest.hpp"

#include <json.hpp>

#include "vulnforge/rtl.hpp"
#include "vulnforge/spec_gen.hpp"

namespace vulnforge {

using nlohmann::json;

std::vector<BenchmarkEntry> load_benchmark_list(const std::filesystem::path &list_path) {
  const auto base = list_path.parent_path();
  std::vector<BenchmarkEntry> out;
  try {
    json j = json::parse(read_file(list_path), nullptr, true, true);
    for (const auto &e : j) {
      BenchmarkEntry b;
      b.id = e.at("id").get<std::string>();
      b.vulnerable = base / e.at("vulnerable").get<std::string>();
      b.cwe = e.at("cwe").get<std::string>();
      if (e.contains("golden")) b.golden = base / e.at("golden").get<std::string>();
      if (e.contains("notes")) b.notes = base / e.at("notes").get<std::string>();
      out.push_back(std::move(b));
    }
  } catch (const json::exception &e) {
    throw config_error("benchmark list " + list_path.string() + ": " + e.what());
  }
  return out;
}

IngestResult ingest_benchmarks(CorpusStore &store, const std::filesystem::path &list_path,
                               std::size_t limit) {
  auto entries = load_benchmark_list(list_path);
  if (limit && entries.size() > limit) entries.resize(limit);

  struct Pending {
    DesignRecord record;
    std::optional<std::string> notes;
  };
  std::vector<Pending> pending;
  for (const auto &e : entries) {
    DesignRecord vuln;
    vuln.design_id = e.id;
    vuln.lineage_id = e.id;
    vuln.source_text = read_file(e.vulnerable);
    vuln.label = store.taxonomy().resolve(e.cwe);
    vuln.origin = Origin::benchmark;
    try {
      rtl::parse_module(vuln.source_text);
    } catch (const Error &err) {
      throw validation_error(e.vulnerable.string() + ": " + err.what());
    }
    Pending p{vuln, std::nullopt};
    if (e.notes) p.notes = read_file(*e.notes);
    pending.push_back(std::move(p));
    if (e.golden) {
      DesignRecord golden;
      golden.design_id = e.id + kGoldenSuffix;
      golden.lineage_id = e.id;
      golden.source_text = read_file(*e.golden);
      golden.origin = Origin::secure_counterpart;
      try {
        rtl::parse_module(golden.source_text);
      } catch (const Error &err) {
        throw validation_error(e.golden->string() + ": " + err.what());
      }
      pending.push_back({golden, std::nullopt});
    }
  }

  IngestResult result;
  for (const auto &p : pending) {
    if (store.contains(p.record.design_id)) {
      if (store.get(p.record.design_id).source_text != p.record.source_text) {
        throw validation_error("design " + p.record.design_id +
                               " already exists with different source");
      }
      result.unchanged.push_back(p.record.design_id);
    } else {
      store.add_design(p.record);
      result.added.push_back(p.record.design_id);
    }
    if (p.notes) store.write_sidecar(p.record.design_id, kNotesSuffix, *p.notes);
  }
  return result;
}

}  // namespace vulnforge
