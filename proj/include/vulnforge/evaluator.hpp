// Copyright vulnforge contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

// Held-out evaluation: query detectors, parse verdicts, score and report.

#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <spdlog/logger.h>

#include "vulnforge/dataset.hpp"
#include "vulnforge/llm.hpp"

namespace vulnforge::eval {

enum class ParsedVerdict { present, absent, unparseable };

const char *to_string(ParsedVerdict v);
ParsedVerdict parsed_verdict_from_string(std::string_view s);

// First line carrying a "VERDICT:" keyword with PRESENT/ABSENT decides.
// Otherwise negation phrases are searched before affirmation phrases,
// case-insensitively. Anything else is unparseable.
ParsedVerdict parse_verdict(std::string_view raw_text);

struct VerdictRecord {
  std::string row_id;
  std::string model;
  std::string raw_text;
  std::string raw_sha256;
  ParsedVerdict parsed = ParsedVerdict::unparseable;
  std::int64_t latency_ms = 0;
  bool failed = false;  // backend gave up; counted as unparseable
  std::string error;
  std::string timestamp;
};

std::string record_to_json_line(const VerdictRecord &r);
VerdictRecord record_from_json_line(std::string_view line);

// Reads a log file; a missing file is an empty log. A torn final line (from
// an interrupted run) is ignored.
std::vector<VerdictRecord> read_verdict_log(const std::filesystem::path &path);

struct EvalModel {
  std::string name;        // column in the report
  std::string model_name;  // sent to the backend
  llm::LlmClient *client = nullptr;
};

struct EvalOptions {
  SamplingParams sampling{0.0, 1.0};
  int max_output_tokens = 512;
  int max_parallel = 4;
  std::shared_ptr<spdlog::logger> logger;
};

inline constexpr const char *kDetectorSystemText =
    "You are a hardware security verification assistant.";

// Appends one record per missing (row, model) cell to log_path and returns
// the full log. Cells already in the log are not re-run. Throws LeakageError
// before any query if a row is not from the test split. Permanent backend
// failures are committed as failed cells; an unreachable backend stops the
// run without committing the affected cells and throws BackendError.
std::vector<VerdictRecord> run_eval(const std::vector<dataset::InstructionPair> &rows,
                                    const std::vector<EvalModel> &models,
                                    const std::filesystem::path &log_path,
                                    const EvalOptions &options = {});

struct Tally {
  std::int64_t correct = 0;
  std::int64_t total = 0;

  double accuracy() const { return total ? static_cast<double>(correct) / total : 0.0; }
  // Percent to one decimal, rounded half up from the exact ratio.
  std::string percent() const;
  bool operator==(const Tally &) const = default;
};

struct ModelAccuracy {
  std::string model;
  Tally overall;
  std::int64_t unparseable = 0;
  std::int64_t true_present = 0;   // truth present, answered present
  std::int64_t false_absent = 0;   // truth present, answered otherwise
  std::int64_t true_absent = 0;    // truth absent, answered absent
  std::int64_t false_present = 0;  // truth absent, answered otherwise
  std::map<std::string, Tally> per_cwe;  // keyed by CweLabel::key()

  bool operator==(const ModelAccuracy &) const = default;
};

struct AccuracyReport {
  std::vector<ModelAccuracy> models;  // accuracy descending, ties by name
  bool operator==(const AccuracyReport &) const = default;
};

// Throws validation Error for an empty log, a row missing from the ground
// truth, or a duplicated (row, model) cell.
AccuracyReport compute_accuracy(const std::vector<VerdictRecord> &log,
                                const std::vector<dataset::InstructionPair> &ground_truth);

enum class ReportFormat { text, json, csv };

ReportFormat report_format_from_string(std::string_view s);

// text: fixed-width table; json: the full report; csv: plot data with one
// line per (model, group), the overall group first.
std::string render_report(const AccuracyReport &report, ReportFormat format = ReportFormat::text);

// Writes <stem>.txt and <stem>.csv next to each other.
void write_report(const AccuracyReport &report, const std::filesystem::path &stem);

}  // namespace vulnforge::eval
