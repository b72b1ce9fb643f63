// Copyright vulnforge contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#include "vulnforge/evaluator.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <mutex>
#include <regex>
#include <set>
#include <sstream>
#include <thread>

#include <spdlog/fmt/fmt.h>

#include "json_io.hpp"
#include "vulnforge/digest.hpp"
#include "vulnforge/logging.hpp"

namespace vulnforge::eval {

const char *to_string(ParsedVerdict v) {
  switch (v) {
    case ParsedVerdict::present:
      return "present";
    case ParsedVerdict::absent:
      return "absent";
    case ParsedVerdict::unparseable:
      return "unparseable";
  }
  return "unparseable";
}

ParsedVerdict parsed_verdict_from_string(std::string_view s) {
  if (s == "present") return ParsedVerdict::present;
  if (s == "absent") return ParsedVerdict::absent;
  if (s == "unparseable") return ParsedVerdict::unparseable;
  throw validation_error("unknown verdict '" + std::string(s) + "'");
}

ParsedVerdict parse_verdict(std::string_view raw_text) {
  static const std::regex keyword(R"(verdict\s*\**\s*[:=-])", std::regex::icase);
  static const std::regex tagged(
      R"(verdict\s*\**\s*[:=-]\s*[*_`"'\[]*\s*(not\s+present|present|absent|yes|no)\b)",
      std::regex::icase);
  const std::string text(raw_text);
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!std::regex_search(line, keyword)) continue;
    std::smatch m;
    if (std::regex_search(line, m, tagged)) {
      std::string w = m[1];
      std::transform(w.begin(), w.end(), w.begin(), [](unsigned char c) { return std::tolower(c); });
      return (w == "present" || w == "yes") ? ParsedVerdict::present : ParsedVerdict::absent;
    }
    break;  // the first VERDICT line decides or hands over to the fallback
  }

  static const std::vector<std::regex> negations = [] {
    std::vector<std::regex> v;
    for (const char *p : {
             R"(\bnot\s+(?:\w+\s+){0,2}present\b)",
             R"(\bis\s+absent\b)",
             R"(\bisn'?t\s+present\b)",
             R"(\bno\b(?!\s+doubt)[^.\n]{0,60}\b(?:vulnerabilit|weakness|flaw|trojan|issue))",
             R"(\b(?:does|do)\s*(?:not|n't)\s+(?:\w+\s+)?(?:contain|exhibit|include|suffer))",
             R"(\bnot\s+vulnerable\b)",
             R"(\bfree\s+(?:of|from)\b)",
             R"(\babsent\b)",
             R"(^\W*no\b)",
         }) {
      v.emplace_back(p, std::regex::icase);
    }
    return v;
  }();
  static const std::vector<std::regex> affirmations = [] {
    std::vector<std::regex> v;
    for (const char *p : {
             R"(\bis\s+present\b)",
             R"(\bpresent\b)",
             R"(\b(?:contains|exhibits|includes|suffers\s+from)\b)",
             R"(\bis\s+vulnerable\b)",
             R"(\bvulnerable\b)",
             R"(^\W*yes\b)",
         }) {
      v.emplace_back(p, std::regex::icase);
    }
    return v;
  }();
  for (const auto &re : negations) {
    if (std::regex_search(text, re)) return ParsedVerdict::absent;
  }
  for (const auto &re : affirmations) {
    if (std::regex_search(text, re)) return ParsedVerdict::present;
  }
  return ParsedVerdict::unparseable;
}

std::string record_to_json_line(const VerdictRecord &r) {
  json j = {{"row_id", r.row_id},
            {"model", r.model},
            {"raw_text", r.raw_text},
            {"raw_sha256", r.raw_sha256},
            {"parsed", to_string(r.parsed)},
            {"latency_ms", r.latency_ms},
            {"failed", r.failed},
            {"error", r.error},
            {"timestamp", r.timestamp}};
  return global_redactor().scrub(j.dump());
}

VerdictRecord record_from_json_line(std::string_view line) {
  try {
    json j = json::parse(line);
    VerdictRecord r;
    r.row_id = j.at("row_id").get<std::string>();
    r.model = j.at("model").get<std::string>();
    r.raw_text = j.value("raw_text", "");
    r.raw_sha256 = j.value("raw_sha256", "");
    r.parsed = parsed_verdict_from_string(j.at("parsed").get<std::string>());
    r.latency_ms = j.value("latency_ms", 0);
    r.failed = j.value("failed", false);
    r.error = j.value("error", "");
    r.timestamp = j.value("timestamp", "");
    return r;
  } catch (const json::exception &e) {
    throw validation_error(std::string("malformed verdict record: ") + e.what());
  }
}

std::vector<VerdictRecord> read_verdict_log(const std::filesystem::path &path) {
  std::vector<VerdictRecord> out;
  if (!std::filesystem::exists(path)) return out;
  const auto text = read_file(path);
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string::npos) break;  // torn tail
    auto line = std::string_view(text).substr(pos, end - pos);
    pos = end + 1;
    if (line.empty()) continue;
    out.push_back(record_from_json_line(line));
  }
  return out;
}

std::vector<VerdictRecord> run_eval(const std::vector<dataset::InstructionPair> &rows,
                                    const std::vector<EvalModel> &models,
                                    const std::filesystem::path &log_path,
                                    const EvalOptions &options) {
  for (const auto &r : rows) {
    if (r.split != dataset::Split::test) {
      throw LeakageError("row " + r.row_id + " is from the " +
                         (r.split ? std::string(to_string(*r.split)) : std::string("unassigned")) +
                         " split; only test rows may be evaluated");
    }
  }
  if (models.empty()) throw config_error("no evaluation models configured");
  std::set<std::string> names;
  for (const auto &m : models) {
    if (!m.client) throw config_error("model " + m.name + " has no client");
    if (!names.insert(m.name).second) throw config_error("model " + m.name + " listed twice");
  }
  auto logger = options.logger ? options.logger : default_logger();

  auto log = read_verdict_log(log_path);
  // Drop a torn tail so appends start on a fresh line.
  if (std::filesystem::exists(log_path)) {
    auto text = read_file(log_path);
    if (!text.empty() && text.back() != '\n') {
      write_file_atomic(log_path, text.substr(0, text.rfind('\n') + 1));
    }
  }
  std::set<std::pair<std::string, std::string>> done;
  for (const auto &r : log) done.emplace(r.row_id, r.model);

  std::vector<std::pair<const dataset::InstructionPair *, const EvalModel *>> todo;
  for (const auto &r : rows) {
    for (const auto &m : models) {
      if (!done.count({r.row_id, m.name})) todo.emplace_back(&r, &m);
    }
  }
  logger->info("evaluation: {} cells logged, {} to run", done.size(), todo.size());
  if (todo.empty()) return log;

  if (log_path.has_parent_path()) std::filesystem::create_directories(log_path.parent_path());
  std::ofstream out(log_path, std::ios::app | std::ios::binary);
  if (!out) throw io_error("cannot append to " + log_path.string());
  std::mutex out_mutex;
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::exception_ptr fatal;

  auto work = [&] {
    for (std::size_t i; !stop.load() && (i = next.fetch_add(1)) < todo.size();) {
      const auto &[row, model] = todo[i];
      llm::CompletionRequest req;
      req.system_text = kDetectorSystemText;
      req.user_text = row->prompt_text;
      req.sampling = options.sampling;
      req.max_output_tokens = options.max_output_tokens;
      req.model_name = model->model_name;
      VerdictRecord rec;
      rec.row_id = row->row_id;
      rec.model = model->name;
      try {
        auto result = model->client->complete(req);
        rec.raw_text = result.text;
        rec.parsed = parse_verdict(result.text);
        rec.latency_ms = result.latency.count();
      } catch (const llm::BackendError &e) {
        if (e.unreachable()) {
          std::lock_guard lock(out_mutex);
          if (!fatal) fatal = std::current_exception();
          stop.store(true);
          return;
        }
        rec.failed = true;
        rec.error = e.what();
        rec.parsed = ParsedVerdict::unparseable;
      } catch (const Error &e) {
        rec.failed = true;
        rec.error = e.what();
        rec.parsed = ParsedVerdict::unparseable;
      }
      rec.raw_sha256 = sha256_hex(rec.raw_text);
      rec.timestamp = utc_timestamp();
      std::lock_guard lock(out_mutex);
      out << record_to_json_line(rec) << '\n';
      out.flush();
      log.push_back(std::move(rec));
    }
  };
  {
    std::vector<std::jthread> pool;
    const int n = std::clamp(options.max_parallel, 1, 64);
    for (int w = 0; w < n; ++w) pool.emplace_back(work);
  }
  out.close();
  if (fatal) std::rethrow_exception(fatal);
  return log;
}

std::string Tally::percent() const {
  if (total == 0) return "n/a";
  // Tenths of a percent, half up: floor((2000 * correct + total) / (2 * total)).
  const std::int64_t tenths = (2000 * correct + total) / (2 * total);
  return std::to_string(tenths / 10) + "." + std::to_string(tenths % 10);
}

AccuracyReport compute_accuracy(const std::vector<VerdictRecord> &log,
                                const std::vector<dataset::InstructionPair> &ground_truth) {
  if (log.empty()) throw validation_error("cannot score an empty verdict log");
  std::map<std::string, const dataset::InstructionPair *> truth;
  for (const auto &p : ground_truth) truth[p.row_id] = &p;
  std::map<std::string, ModelAccuracy> by_model;
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto &r : log) {
    auto it = truth.find(r.row_id);
    if (it == truth.end()) {
      throw validation_error("verdict for unknown row " + r.row_id);
    }
    if (!seen.emplace(r.row_id, r.model).second) {
      throw validation_error("duplicate verdict for row " + r.row_id + ", model " + r.model);
    }
    auto &m = by_model[r.model];
    m.model = r.model;
    const bool present = it->second->ground_truth == dataset::GroundTruth::present;
    const bool correct = present ? r.parsed == ParsedVerdict::present
                                 : r.parsed == ParsedVerdict::absent;
    auto &cwe = m.per_cwe[it->second->target_cwe.key()];
    ++m.overall.total;
    ++cwe.total;
    if (correct) {
      ++m.overall.correct;
      ++cwe.correct;
    }
    if (r.parsed == ParsedVerdict::unparseable) ++m.unparseable;
    if (present) {
      ++(correct ? m.true_present : m.false_absent);
    } else {
      ++(correct ? m.true_absent : m.false_present);
    }
  }
  AccuracyReport report;
  for (auto &[name, m] : by_model) report.models.push_back(std::move(m));
  std::sort(report.models.begin(), report.models.end(), [](const auto &a, const auto &b) {
    // Exact comparison of correct/total.
    auto lhs = static_cast<__int128>(a.overall.correct) * b.overall.total;
    auto rhs = static_cast<__int128>(b.overall.correct) * a.overall.total;
    if (lhs != rhs) return lhs > rhs;
    return a.model < b.model;
  });
  return report;
}

ReportFormat report_format_from_string(std::string_view s) {
  if (s == "text") return ReportFormat::text;
  if (s == "json") return ReportFormat::json;
  if (s == "csv") return ReportFormat::csv;
  throw config_error("unknown report format '" + std::string(s) + "'");
}

namespace {

std::string csv_field(const std::string &s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string render_report(const AccuracyReport &report, ReportFormat format) {
  if (report.models.empty()) throw validation_error("cannot render an empty report");
  std::set<std::string> cwes;
  for (const auto &m : report.models) {
    for (const auto &[k, t] : m.per_cwe) cwes.insert(k);
  }

  if (format == ReportFormat::json) {
    json models = json::array();
    for (const auto &m : report.models) {
      json per = json::object();
      for (const auto &[k, t] : m.per_cwe) {
        per[k] = {{"correct", t.correct}, {"total", t.total}, {"percent", t.percent()}};
      }
      models.push_back({{"model", m.model},
                        {"correct", m.overall.correct},
                        {"total", m.overall.total},
                        {"accuracy", m.overall.accuracy()},
                        {"percent", m.overall.percent()},
                        {"unparseable", m.unparseable},
                        {"confusion",
                         {{"true_present", m.true_present},
                          {"false_absent", m.false_absent},
                          {"true_absent", m.true_absent},
                          {"false_present", m.false_present}}},
                        {"per_cwe", per}});
    }
    return json{{"models", models}}.dump(2) + "\n";
  }

  if (format == ReportFormat::csv) {
    std::string out = "model,group,percent,correct,total\n";
    for (const auto &m : report.models) {
      out += csv_field(m.model) + ",overall," + m.overall.percent() + "," +
             std::to_string(m.overall.correct) + "," + std::to_string(m.overall.total) + "\n";
      for (const auto &[k, t] : m.per_cwe) {
        out += csv_field(m.model) + "," + csv_field(k) + "," + t.percent() + "," +
               std::to_string(t.correct) + "," + std::to_string(t.total) + "\n";
      }
    }
    return out;
  }

  std::vector<std::string> header = {"model", "overall %"};
  for (const auto &c : cwes) header.push_back(c);
  header.push_back("unparseable");
  std::vector<std::vector<std::string>> rows;
  for (const auto &m : report.models) {
    std::vector<std::string> r = {m.model, m.overall.percent()};
    for (const auto &c : cwes) {
      auto it = m.per_cwe.find(c);
      r.push_back(it == m.per_cwe.end() ? "-" : it->second.percent());
    }
    r.push_back(std::to_string(m.unparseable));
    rows.push_back(std::move(r));
  }
  std::vector<std::size_t> width(header.size());
  for (std::size_t i = 0; i < header.size(); ++i) {
    width[i] = header[i].size();
    for (const auto &r : rows) width[i] = std::max(width[i], r[i].size());
  }
  auto line = [&](const std::vector<std::string> &cells) {
    std::string s;
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) s += "  ";
      s += i == 0 ? fmt::format("{:<{}}", cells[i], width[i])
                  : fmt::format("{:>{}}", cells[i], width[i]);
    }
    while (!s.empty() && s.back() == ' ') s.pop_back();
    return s + "\n";
  };
  std::string out = line(header);
  std::vector<std::string> rule;
  for (auto w : width) rule.emplace_back(w, '-');
  out += line(rule);
  for (const auto &r : rows) out += line(r);
  return out;
}

void write_report(const AccuracyReport &report, const std::filesystem::path &stem) {
  auto base = stem.string();
  if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path());
  write_file_atomic(base + ".txt", render_report(report, ReportFormat::text));
  write_file_atomic(base + ".csv", render_report(report, ReportFormat::csv));
}

}  // namespace vulnforge::eval
