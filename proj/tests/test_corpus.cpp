// Copyright vulnforge contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "doctest.h"
#include "test_support.hpp"
#include "vulnforge/corpus.hpp"
#include "vulnforge/error.hpp"

using namespace vulnforge;
using vulnforge::testing::fixture;
using vulnforge::testing::TempDir;

namespace {

const CweLabel &label(std::string_view key) {
  return shipped_taxonomy().resolve(key);
}

DesignRecord benchmark(const std::string &id, std::optional<CweLabel> l,
                       std::string src = "module m(input a); endmodule\n") {
  return {id, id, std::move(src), std::move(l), Origin::benchmark, {}, {}};
}

DesignRecord replica(const std::string &id, const std::string &root,
                     std::optional<CweLabel> l, double temperature = 0.9) {
  return {id,
          root,
          "module m(input a); /* " + id + " */ endmodule\n",
          std::move(l),
          Origin::replica,
          CodingStyle::dual_process_fsm(),
          SamplingParams{temperature, 0.9}};
}

StoreOptions fixed_time() { return {std::string("2025-01-01T00:00:00Z")}; }

// Minimal union-find used as an independent lineage oracle.
struct UnionFind {
  std::map<std::string, std::string> parent;
  std::string find(const std::string &x) {
    if (!parent.count(x)) parent[x] = x;
    if (parent[x] == x) return x;
    return parent[x] = find(parent[x]);
  }
  void unite(const std::string &a, const std::string &b) {
    parent[find(a)] = find(b);
  }
};

}  // namespace

TEST_CASE("shipped taxonomy has the thirteen distinct entries") {
  const Taxonomy &tax = shipped_taxonomy();
  CHECK(tax.size() == 13);
  std::set<std::string> keys;
  for (const auto &e : tax.entries()) {
    CHECK(is_valid_cwe_id(e.cwe_id));
    keys.insert(e.key());
  }
  CHECK(keys.size() == 13);
  CHECK(tax.resolve("CWE-310/csr-access").short_name ==
        "Trojan in CSR module unauthorized access");
  CHECK(tax.resolve("CWE-1244").short_name == "Unlocking JTAG during reset");
  CHECK_THROWS_AS(tax.resolve("CWE-310"), Error);
  CHECK_THROWS_AS(tax.resolve("CWE-9999"), Error);
  CHECK_THROWS_AS(Taxonomy(std::vector<CweLabel>{{"CWE-1", "a", {}}, {"CWE-1", "b", {}}}), Error);
  CHECK_THROWS_AS(Taxonomy(std::vector<CweLabel>{{"CWE-12345", "a", {}}}), Error);
  CHECK_THROWS_AS(Taxonomy(std::vector<CweLabel>{{"cwe-12", "a", {}}}), Error);
}

TEST_CASE("add_design stores benchmarks, counterparts and replicas") {
  TempDir dir;
  auto store = CorpusStore::create(dir / "c", shipped_taxonomy(), fixed_time());

  auto csr = benchmark("csr_trojan", label("CWE-310/csr-access"),
                       fixture("rtl/csr_regfile_trojan.sv"));
  CHECK(store.add_design(csr) == "csr_trojan");
  CHECK(store.get("csr_trojan").lineage_id == "csr_trojan");

  DesignRecord golden{"csr_golden", "csr_trojan",
                      fixture("rtl/csr_regfile_golden.sv"), std::nullopt,
                      Origin::secure_counterpart, {}, {}};
  store.add_design(golden);
  CHECK_FALSE(store.get("csr_golden").label.has_value());
  CHECK(store.get("csr_golden").origin == Origin::secure_counterpart);

  auto rep = replica("csr_trojan_r00", "csr_trojan", label("CWE-310/csr-access"));
  store.add_design(rep);

  // Read back through a fresh handle.
  auto reopened = CorpusStore::open(dir / "c");
  CHECK(reopened.get("csr_trojan") == csr);
  CHECK(reopened.get("csr_golden") == golden);
  CHECK(reopened.get("csr_trojan_r00") == rep);
  CHECK(reopened.get("csr_trojan_r00").lineage_id == "csr_trojan");
  CHECK(reopened.manifest() == store.manifest());
  CHECK(reopened.manifest().created_at == "2025-01-01T00:00:00Z");
  // Files are stored byte for byte.
  CHECK(read_file(reopened.design_path("csr_trojan")) ==
        fixture("rtl/csr_regfile_trojan.sv"));
}

TEST_CASE("add_design error paths") {
  TempDir dir;
  auto store = CorpusStore::create(dir / "c", shipped_taxonomy(), fixed_time());
  store.add_design(benchmark("a", label("CWE-321")));
  CHECK_THROWS_AS(store.add_design(benchmark("a", label("CWE-321"))), Error);
  CHECK_THROWS_AS(
      store.add_design(benchmark("b", CweLabel{"CWE-79", "XSS", {}})), Error);
  CHECK_THROWS_AS(store.add_design(benchmark("c", label("CWE-321"), "")), Error);
  CHECK_THROWS_AS(store.add_design(replica("r", "missing", label("CWE-321"))),
                  Error);
  CHECK_THROWS_AS(store.add_design(benchmark("../x", std::nullopt)), Error);

  DesignRecord bad = replica("r1", "a", label("CWE-321"));
  bad.style.reset();
  CHECK_THROWS_AS(store.add_design(bad), Error);
  bad = replica("r1", "a", label("CWE-321"), 2.5);
  CHECK_THROWS_AS(store.add_design(bad), Error);
  DesignRecord labeled_secure{"s", "a", "module s; endmodule", label("CWE-321"),
                              Origin::secure_counterpart, {}, {}};
  CHECK_THROWS_AS(store.add_design(labeled_secure), Error);
  DesignRecord wrong_root = benchmark("z", std::nullopt);
  wrong_root.lineage_id = "a";
  CHECK_THROWS_AS(store.add_design(wrong_root), Error);
  // Failed adds leave nothing behind.
  CHECK(store.records().size() == 1);
  CHECK(CorpusStore::open(dir / "c").records().size() == 1);
}

TEST_CASE("list_by_cwe") {
  TempDir dir;
  auto store = CorpusStore::create(dir / "c", shipped_taxonomy(), fixed_time());
  CHECK(store.list_by_cwe(label("CWE-321")).empty());

  store.add_design(benchmark("key", label("CWE-321")));
  for (int i = 0; i < 3; ++i) {
    store.add_design(replica("key_r" + std::to_string(i), "key", label("CWE-321")));
  }
  store.add_design(benchmark("leak", label("CWE-310/aes-leakage")));
  store.add_design(replica("leak_r0", "leak", label("CWE-310/aes-leakage")));
  store.add_design(benchmark("dos", label("CWE-310/aes-dos")));
  store.add_design(benchmark("csr", label("CWE-310/csr-access")));

  auto keys = store.list_by_cwe(label("CWE-321"));
  CHECK(keys.size() == 4);
  CHECK(keys.front().design_id == "key");
  CHECK(std::is_sorted(keys.begin(), keys.end(),
                       [](auto &a, auto &b) { return a.design_id < b.design_id; }));

  auto leak = store.list_by_cwe(label("CWE-310/aes-leakage"));
  REQUIRE(leak.size() == 2);
  CHECK(leak[0].design_id == "leak");
  CHECK(leak[1].design_id == "leak_r0");

  CHECK_THROWS_AS(store.list_by_cwe(CweLabel{"CWE-310", "x", std::nullopt}),
                  Error);
}

TEST_CASE("lineage_of against a union-find oracle") {
  TempDir dir;
  auto store = CorpusStore::create(dir / "c", shipped_taxonomy(), fixed_time());
  UnionFind uf;
  std::mt19937 rng(99);
  std::vector<std::string> all;
  for (int b = 0; b < 6; ++b) {
    std::string root = "base" + std::to_string(b);
    store.add_design(benchmark(root, label("CWE-1260")));
    uf.find(root);
    all.push_back(root);
    int n = static_cast<int>(rng() % 6);
    for (int r = 0; r < n; ++r) {
      std::string id = root + "_r" + std::to_string(r);
      store.add_design(replica(id, root, label("CWE-1260")));
      uf.unite(id, root);
      all.push_back(id);
    }
  }
  store.add_design(benchmark("solo", std::nullopt));
  uf.find("solo");
  all.push_back("solo");

  for (const auto &id : all) {
    Lineage got = store.lineage_of(id);
    std::vector<std::string> expected;
    for (const auto &other : all) {
      if (uf.find(other) == uf.find(id)) expected.push_back(other);
    }
    std::sort(expected.begin(), expected.end());
    CHECK(got.members == expected);
    // Idempotent and symmetric across members.
    for (const auto &m : got.members) {
      CHECK(store.lineage_of(m).members == got.members);
    }
  }
  CHECK(store.lineage_of("solo").members == std::vector<std::string>{"solo"});
  // Partition: every design appears in exactly one lineage.
  std::map<std::string, int> seen;
  for (const auto &lid : store.lineage_ids()) {
    for (const auto &m : store.lineage_of(lid).members) ++seen[m];
  }
  CHECK(seen.size() == all.size());
  for (const auto &[id, n] : seen) CHECK(n == 1);
  CHECK_THROWS_AS(store.lineage_of("nope"), Error);
}

TEST_CASE("manifest text round-trips for generated corpora") {
  std::mt19937 rng(7);
  const auto &tax = shipped_taxonomy().entries();
  for (int trial = 0; trial < 100; ++trial) {
    CorpusManifest m;
    m.taxonomy = shipped_taxonomy();
    m.created_at = "2024-0" + std::to_string(1 + rng() % 9) + "-01T00:00:00Z";
    m.tool_version = "t" + std::to_string(rng() % 100);
    m.digest_algorithm = "sha256";
    int n = static_cast<int>(rng() % 12);
    for (int i = 0; i < n; ++i) {
      ManifestEntry e;
      e.design_id = "d" + std::to_string(i);
      e.lineage_id = "d0";
      e.origin = static_cast<Origin>(rng() % 3);
      if (rng() % 2) e.label = tax[rng() % tax.size()];
      e.path = "designs/d0/" + e.design_id + ".sv";
      e.digest = std::to_string(rng());
      if (e.origin == Origin::replica) {
        e.style = CodingStyle{"style" + std::to_string(rng() % 4)};
        e.sampling = SamplingParams{(rng() % 2001) / 1000.0,
                                    (1 + rng() % 1000) / 1000.0};
      }
      m.records.push_back(e);
    }
    CHECK(manifest_from_text(manifest_to_text(m)) == m);
  }
}

TEST_CASE("tampered design files are detected on load") {
  TempDir dir;
  {
    auto store = CorpusStore::create(dir / "c", shipped_taxonomy(), fixed_time());
    store.add_design(benchmark("a", label("CWE-321"), fixture("rtl/aes_hardcoded_key.sv")));
    store.add_design(benchmark("b", label("CWE-1244"), fixture("rtl/jtag_unlock.sv")));
  }
  CHECK_NOTHROW(CorpusStore::open(dir / "c"));
  auto path = dir / "c" / "designs" / "b" / "b.sv";
  {
    std::ofstream out(path, std::ios::app);
    out << " ";
  }
  CHECK_THROWS_AS(CorpusStore::open(dir / "c"), Error);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(CorpusStore::open(dir / "c"), Error);
}

TEST_CASE("create refuses an existing corpus; open requires one") {
  TempDir dir;
  CorpusStore::create(dir / "c", shipped_taxonomy(), fixed_time());
  CHECK_THROWS_AS(CorpusStore::create(dir / "c"), Error);
  CHECK_THROWS_AS(CorpusStore::open(dir / "missing"), Error);
  CHECK_NOTHROW(CorpusStore::open_or_create(dir / "c"));
}

TEST_CASE("sidecars live next to the design") {
  TempDir dir;
  auto store = CorpusStore::create(dir / "c", shipped_taxonomy(), fixed_time());
  store.add_design(benchmark("a", label("CWE-321")));
  CHECK_FALSE(store.read_sidecar("a", ".spec.txt").has_value());
  store.write_sidecar("a", ".spec.txt", "hello");
  CHECK(store.read_sidecar("a", ".spec.txt") == std::optional<std::string>("hello"));
  CHECK(store.sidecar_path("a", ".spec.txt") == dir / "c" / "designs" / "a" / "a.spec.txt");
  // Sidecars are not design files; the manifest still verifies.
  CHECK_NOTHROW(CorpusStore::open(dir / "c"));
}
