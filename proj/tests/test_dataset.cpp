// Copyright vulnforge contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#include <random>
#include <set>
#include <sstream>

#include <doctest.h>
#include <json.hpp>
#include <spdlog/sinks/ostream_sink.h>

#include "test_support.hpp"
#include "vulnforge/dataset.hpp"
#include "vulnforge/ingest.hpp"
#include "vulnforge/logging.hpp"
#include "vulnforge/mock_backend.hpp"

using namespace vulnforge;
using namespace vulnforge::dataset;
using namespace vulnforge::testing;
using nlohmann::json;

namespace {

DesignRecord design(const std::string &id, const std::string &lineage,
                    std::optional<std::string> cwe, Origin origin = Origin::benchmark) {
  DesignRecord r;
  r.design_id = id;
  r.lineage_id = lineage;
  r.source_text = "module " + id + "(input a, output b);\n  assign b = a;\nendmodule\n";
  if (cwe) r.label = shipped_taxonomy().resolve(*cwe);
  r.origin = origin;
  return r;
}

std::vector<DesignRecord> five_lineages() {
  TempDir dir;
  auto store = CorpusStore::create(dir / "c");
  ingest_benchmarks(store, fixture_dir() / "rtl/benchmarks.json", 5);
  return store.records();
}

std::unique_ptr<llm::RetryingClient> mock_client(const std::string &script) {
  auto t = std::make_unique<llm::MockTransport>(llm::parse_mock_script(script), 0);
  auto c = std::make_unique<llm::RetryingClient>(std::move(t), llm::ClientOptions{});
  c->set_sleeper([](auto) {});
  return c;
}

// Independent apportionment with ratios as exact thousandths.
std::array<std::size_t, 3> oracle_apportion(std::size_t n, std::array<long, 3> permille) {
  std::array<std::size_t, 3> c{};
  std::array<long, 3> rem{};
  std::size_t used = 0;
  for (int i = 0; i < 3; ++i) {
    long q = static_cast<long>(n) * permille[i];
    c[i] = static_cast<std::size_t>(q / 1000);
    rem[i] = q % 1000;
    used += c[i];
  }
  while (used < n) {
    int best = -1;
    for (int i = 0; i < 3; ++i) {
      if (rem[i] >= 0 && (best < 0 || rem[i] > rem[best])) best = i;
    }
    ++c[best];
    rem[best] = -1;
    ++used;
  }
  for (int i = 0; i < 3; ++i) {
    if (c[i] == 0) {
      int big = 0;
      for (int j = 1; j < 3; ++j) {
        if (c[j] > c[big]) big = j;
      }
      --c[big];
      ++c[i];
    }
  }
  return c;
}

}  // namespace

TEST_CASE("queries") {
  std::set<std::string> distinct;
  for (const auto &e : shipped_taxonomy().entries()) {
    auto q = make_query(e);
    CHECK(q.find(e.cwe_id) != std::string::npos);
    CHECK(q.find("VERDICT: PRESENT") != std::string::npos);
    CHECK(q == make_query(e));
    distinct.insert(q);
  }
  CHECK(distinct.size() == 13);
  auto jtag = make_query(shipped_taxonomy().resolve("CWE-1244"));
  CHECK(jtag.find("CWE-1244") != std::string::npos);
  CHECK(jtag.find("JTAG") != std::string::npos);
  CHECK_THROWS_AS(make_query(CweLabel{"CWE-9999", "Made up", std::nullopt}), Error);
}

TEST_CASE("pairing policies") {
  SUBCASE("single vulnerable design, positives only") {
    PairOptions o;
    o.policy = PairingPolicy::positives_only;
    auto rows = build_pairs({design("d", "d", "CWE-321")}, shipped_taxonomy(), o);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].ground_truth == GroundTruth::present);
    CHECK(rows[0].row_id == "d__CWE-321");
  }
  SUBCASE("vulnerable and its counterpart share the query") {
    auto rows = build_pairs({design("d", "d", "CWE-321"),
                             design("d_golden", "d", std::nullopt, Origin::secure_counterpart)},
                            shipped_taxonomy());
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].ground_truth == GroundTruth::present);
    CHECK(rows[1].ground_truth == GroundTruth::absent);
    CHECK(rows[0].target_cwe == rows[1].target_cwe);
    auto query = make_query(rows[0].target_cwe);
    CHECK(rows[0].prompt_text.ends_with(query));
    CHECK(rows[1].prompt_text.ends_with(query));
  }
  SUBCASE("non-matching negatives use another CWE id") {
    PairOptions o;
    o.policy = PairingPolicy::non_matching;
    auto rows = build_pairs({design("d", "d", "CWE-310/aes-dos")}, shipped_taxonomy(), o);
    REQUIRE(rows.size() == 2);
    for (const auto &r : rows) {
      if (r.ground_truth == GroundTruth::absent) CHECK(r.target_cwe.cwe_id != "CWE-310");
    }
  }
  SUBCASE("fixture corpus of five lineages") {
    auto designs = five_lineages();
    REQUIRE(designs.size() == 8);  // 5 vulnerable, 3 golden
    // positives-only: 5. counterpart: 5 + 2 lineages without golden + 3 golden.
    // non-matching: 5 x 2.
    std::map<PairingPolicy, std::size_t> expected = {{PairingPolicy::positives_only, 5},
                                                     {PairingPolicy::counterpart, 10},
                                                     {PairingPolicy::non_matching, 10}};
    for (auto [policy, n] : expected) {
      PairOptions o;
      o.policy = policy;
      auto rows = build_pairs(designs, shipped_taxonomy(), o);
      CHECK(rows.size() == n);
      for (const auto &r : rows) {
        bool labeled_match = false;
        for (const auto &d : designs) {
          if (d.design_id == r.design_id) labeled_match = d.label && *d.label == r.target_cwe;
        }
        CHECK((r.ground_truth == GroundTruth::present) == labeled_match);
        CHECK(r.response_text.rfind(verdict_line(r.ground_truth) + "\n", 0) == 0);
        CHECK(r.over_budget == (r.token_estimate > 512));
      }
    }
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(build_pairs({}, shipped_taxonomy()), Error);
    auto d = design("d", "d", std::nullopt);
    d.label = CweLabel{"CWE-9999", "Made up", std::nullopt};
    CHECK_THROWS_AS(build_pairs({d}, shipped_taxonomy()), Error);
  }
}

TEST_CASE("over-budget rows are flagged, not dropped") {
  auto d = design("big", "big", "CWE-321");
  std::string body;
  for (int i = 0; i < 2200; ++i) body += "  assign w" + std::to_string(i) + " = a;\n";
  d.source_text = "module big(input a, output b);\n" + body + "endmodule\n";
  auto rows = build_pairs({d}, shipped_taxonomy());
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].token_estimate > 9000);
  CHECK(rows[0].over_budget);

  TempDir dir;
  auto a = split_by_lineage({"big", "x", "y"}, {}, 1);
  emit_dataset(rows, a, dir.path());
  auto line = read_file(dir / (std::string(to_string(a.of("big"))) + ".jsonl"));
  auto back = pair_from_json_line(line.substr(0, line.find('\n')));
  CHECK(back.over_budget);
}

TEST_CASE("annotation") {
  auto rows = build_pairs({design("d", "d", "CWE-321"),
                           design("d_golden", "d", std::nullopt, Origin::secure_counterpart)},
                          shipped_taxonomy());
  const auto original = rows;
  SUBCASE("rationale is spliced after the verdict") {
    auto client = mock_client(R"({"rules": [{"action": "respond",
        "text": "VERDICT: ABSENT\nRATIONALE: because the key is a literal"}]})");
    CHECK(annotate_explanations(rows, *client) == 2);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      CHECK(rows[i].response_text.ends_with("because the key is a literal"));
      CHECK(rows[i].response_text.rfind(verdict_line(original[i].ground_truth) + "\n", 0) == 0);
      CHECK(rows[i].annotation == Annotation::model);
    }
    auto again = rows;
    CHECK(annotate_explanations(again, *client) == 0);
    CHECK(again == rows);
  }
  SUBCASE("failures keep the template") {
    auto client = mock_client(R"({"rules": [{"action": "fail_permanent"}]})");
    CHECK(annotate_explanations(rows, *client) == 0);
    CHECK(rows == original);
    CHECK(rows[0].annotation == Annotation::template_text);
  }
}

TEST_CASE("apportionment") {
  SplitRatios r;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    std::vector<std::string> ids;
    for (int i = 0; i < 10; ++i) ids.push_back("L" + std::to_string(i));
    auto a = split_by_lineage(ids, r, seed);
    std::map<Split, int> n;
    for (auto &[l, s] : a.lineage_split) ++n[s];
    CHECK(n[Split::train] == 8);
    CHECK(n[Split::validation] == 1);
    CHECK(n[Split::test] == 1);
  }
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 500; ++trial) {
    long t = 1 + static_cast<long>(rng() % 997);
    long v = 1 + static_cast<long>(rng() % (999 - t));
    long te = 1000 - t - v;
    std::size_t n = 3 + rng() % 60;
    SplitRatios ratios{t / 1000.0, v / 1000.0, te / 1000.0};
    auto got = apportion(n, ratios);
    CAPTURE(n);
    CAPTURE(t);
    CAPTURE(v);
    CHECK(got == oracle_apportion(n, {t, v, te}));
    CHECK(got[0] + got[1] + got[2] == n);
  }
  CHECK_THROWS_AS(split_by_lineage({"a", "b"}, r, 0), Error);
  CHECK_THROWS_AS(split_by_lineage({"a", "b", "c"}, {0.5, 0.5, 0.0}, 0), Error);
  CHECK_THROWS_AS(split_by_lineage({"a", "b", "c"}, {0.5, 0.3, 0.3}, 0), Error);
}

TEST_CASE("splits are deterministic per seed") {
  std::vector<std::string> ids;
  for (int i = 0; i < 30; ++i) ids.push_back("L" + std::to_string(i));
  auto a = split_by_lineage(ids, {}, 5);
  CHECK(a.lineage_split == split_by_lineage(ids, {}, 5).lineage_split);
  std::reverse(ids.begin(), ids.end());
  CHECK(a.lineage_split == split_by_lineage(ids, {}, 5).lineage_split);
  bool differs = false;
  for (std::uint64_t s = 6; s < 12; ++s) differs |= a.lineage_split != split_by_lineage(ids, {}, s).lineage_split;
  CHECK(differs);
}

TEST_CASE("emission") {
  TempDir dir;
  SUBCASE("empty pair list") {
    auto a = split_by_lineage({"a", "b", "c"}, {}, 0);
    emit_dataset({}, a, dir.path());
    for (auto s : kSplits) CHECK(read_file(dir / (std::string(to_string(s)) + ".jsonl")).empty());
    auto stats = json::parse(read_file(dir / "stats.json"));
    CHECK(stats["total_rows"] == 0);
    for (auto s : kSplits) {
      CHECK(stats["splits"][to_string(s)]["rows"] == 0);
      CHECK(stats["splits"][to_string(s)]["over_budget"] == 0);
    }
  }
  SUBCASE("fixture corpus") {
    auto designs = five_lineages();
    auto rows = build_pairs(designs, shipped_taxonomy());
    std::vector<std::string> lineages;
    for (const auto &d : designs) lineages.push_back(d.lineage_id);
    auto a = split_by_lineage(lineages, {0.6, 0.2, 0.2}, 3);
    // Counting oracle: rows per lineage under the counterpart policy.
    std::map<std::string, int> per_lineage = {{"csr_regfile_trojan", 2}, {"aes_key_leak", 2},
                                              {"aes_dos", 2}, {"aes_hardcoded_key", 2},
                                              {"jtag_unlock", 2}};
    std::map<Split, int> expected;
    for (auto &[l, n] : per_lineage) expected[a.of(l)] += n;
    emit_dataset(rows, a, dir / "out");
    auto stats = json::parse(read_file(dir / "out/stats.json"));
    std::map<std::string, Split> seen;
    for (auto s : kSplits) {
      auto text = read_file(dir / "out" / (std::string(to_string(s)) + ".jsonl"));
      std::istringstream in(text);
      std::string line;
      int n = 0;
      while (std::getline(in, line)) {
        auto p = pair_from_json_line(line);
        CHECK(p.split == s);
        auto [it, fresh] = seen.emplace(p.lineage_id, s);
        CHECK(it->second == s);
        ++n;
      }
      CHECK(n == expected[s]);
      CHECK(stats["splits"][to_string(s)]["rows"] == expected[s]);
    }
    CHECK(stats["policy"] == "counterpart");
    auto first = read_file(dir / "out/train.jsonl");
    emit_dataset(rows, a, dir / "out");
    CHECK(read_file(dir / "out/train.jsonl") == first);

    SplitAssignment partial = a;
    partial.lineage_split.erase("aes_dos");
    CHECK_THROWS_AS(emit_dataset(rows, partial, dir / "bad"), Error);
  }
}

TEST_CASE("training configuration") {
  auto text = emit_training_config(TrainingConfig{});
  CHECK(text == fixture("golden/train_config.txt"));
  CHECK(parse_training_config(text) == TrainingConfig{});
  CHECK(emit_training_config(parse_training_config(text)) == text);

  std::ostringstream log;
  auto logger = make_logger("train-test", {std::make_shared<spdlog::sinks::ostream_sink_mt>(log)});
  auto one = emit_training_config({{"epochs", "1"}}, logger);
  CHECK(one.find("epochs = 1\n") != std::string::npos);
  CHECK(parse_training_config(one).epochs == 1);
  logger->flush();
  CHECK(log.str().find("epochs = 1 (default 3)") != std::string::npos);

  CHECK_THROWS_AS(emit_training_config({{"epoch", "1"}}), Error);
  CHECK_THROWS_AS(emit_training_config({{"epochs", "one"}}), Error);
  CHECK_THROWS_AS(emit_training_config({{"gradient_checkpointing", "yes"}}), Error);
  CHECK_THROWS_AS(parse_training_config("lora_rank = 128\n"), Error);
  CHECK_THROWS_AS(parse_training_config(text + "epochs = 2\n"), Error);
  auto lr = parse_training_config("# comment\n\n" + text);
  CHECK(lr.learning_rate == 2e-6);
}
