// Copyright vulnforge contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

// Benchmark import lists: a JSON array of
//   {"id": "...", "vulnerable": "file.sv", "golden": "file.sv" (optional),
//    "cwe": "CWE-321" or "CWE-310/aes-dos", "notes": "file.txt" (optional)}
// with file paths relative to the list.

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vulnforge/corpus.hpp"

namespace vulnforge {

struct BenchmarkEntry {
  std::string id;
  std::filesystem::path vulnerable;
  std::optional<std::filesystem::path> golden;
  std::string cwe;
  std::optional<std::filesystem::path> notes;
};

std::vector<BenchmarkEntry> load_benchmark_list(const std::filesystem::path &list_path);

struct IngestResult {
  std::vector<std::string> added;
  std::vector<std::string> unchanged;  // already present with identical source
};

inline constexpr const char *kGoldenSuffix = "_golden";

// Every source must parse before anything is stored. A secure counterpart is
// stored as <id>_golden in the benchmark's lineage. Re-importing identical
// sources is a no-op; differing sources under an existing id are an error.
// `limit` keeps only the first N entries (0 = all).
IngestResult ingest_benchmarks(CorpusStore &store, const std::filesystem::path &list_path,
                               std::size_t limit = 0);

}  // namespace vulnforge
