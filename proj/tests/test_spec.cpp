// Copyright vulnforge contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "test_support.hpp"
#include "vulnforge/ingest.hpp"
#include "vulnforge/mock_backend.hpp"
#include "vulnforge/spec_gen.hpp"

using namespace vulnforge;
using namespace vulnforge::testing;

namespace {

DesignRecord fixture_record(const std::string &id, const std::string &file,
                            std::optional<std::string> cwe) {
  DesignRecord r;
  r.design_id = id;
  r.lineage_id = id;
  r.source_text = fixture("rtl/" + file);
  if (cwe) r.label = shipped_taxonomy().resolve(*cwe);
  return r;
}

std::unique_ptr<llm::RetryingClient> client_from(const std::string &script) {
  auto t = std::make_unique<llm::MockTransport>(llm::parse_mock_script(script), 0);
  auto c = std::make_unique<llm::RetryingClient>(std::move(t), llm::ClientOptions{});
  c->set_sleeper([](auto) {});
  return c;
}

}  // namespace

TEST_CASE("secure counterpart has no vulnerability section") {
  auto rec = fixture_record("aes_provisioned_key", "aes_provisioned_key.sv", std::nullopt);
  auto doc = generate_spec(rec, nullptr);
  CHECK_FALSE(doc.vulnerability);
  auto text = render_spec(doc);
  CHECK(text.find("Vulnerability Characteristics") == std::string::npos);
  CHECK(text.find("== I/O Ports ==") != std::string::npos);
}

TEST_CASE("hardcoded key design without a client") {
  auto rec = fixture_record("aes_hardcoded_key", "aes_hardcoded_key.sv", "CWE-321");
  SpecOptions opts;
  opts.curator_notes = fixture("rtl/aes_hardcoded_key.notes.txt");
  auto doc = generate_spec(rec, nullptr, opts);
  CHECK(doc.provenance == SpecProvenance::template_only);
  REQUIRE(doc.vulnerability);
  auto text = render_spec(doc);
  CHECK(text.find("Use of hardcoded cryptographic key") != std::string::npos);
  CHECK(text.find("FIXED_KEY") != std::string::npos);

  // Fixed heading order.
  auto b = text.find("== Baseline Functionality ==");
  auto r = text.find("== Registers ==");
  auto p = text.find("== I/O Ports ==");
  auto v = text.find("== Vulnerability Characteristics ==");
  CHECK(b < r);
  CHECK(r < p);
  CHECK(p < v);
  CHECK(v != std::string::npos);

  CHECK(render_spec(generate_spec(rec, nullptr, opts)) == text);
  CHECK(text == fixture("golden/aes_hardcoded_key.spec.txt"));
}

TEST_CASE("mock-drafted spec keeps the parsed interface") {
  auto rec = fixture_record("aes_hardcoded_key", "aes_hardcoded_key.sv", "CWE-321");
  auto client = client_from(fixture("mock/spec_draft.json"));
  auto doc = generate_spec(rec, client.get());
  CHECK(doc.provenance == SpecProvenance::llm_enriched);
  CHECK(doc.baseline_function ==
        "Latches a 128-bit round key when load_i is asserted and flags it valid until reset.");
  auto info = rtl::parse_module(rec.source_text);
  REQUIRE(doc.ports.size() == info.ports.size());
  for (std::size_t i = 0; i < info.ports.size(); ++i) CHECK(doc.ports[i].decl == info.ports[i]);
  REQUIRE(doc.registers.size() == info.registers.size());
  CHECK(doc.registers[0].name == "key_reg_q");
  CHECK(doc.registers[0].role == "Holds the latched round key.");
  CHECK(doc.registers[1].role == "Single-bit state element.");
}

TEST_CASE("drafting failures fall back to the template") {
  auto rec = fixture_record("aes_hardcoded_key", "aes_hardcoded_key.sv", "CWE-321");
  auto templ = generate_spec(rec, nullptr);
  SUBCASE("reply without BASELINE") {
    auto client = client_from(R"({"rules": [{"action": "respond", "text": "Sorry."}]})");
    CHECK(generate_spec(rec, client.get()) == templ);
  }
  SUBCASE("backend failure") {
    auto client = client_from(R"({"rules": [{"action": "fail_permanent"}]})");
    CHECK(generate_spec(rec, client.get()) == templ);
  }
}

TEST_CASE("spec ports equal parse_module ports across the fixture corpus") {
  TempDir dir;
  auto store = CorpusStore::create(dir / "corpus");
  ingest_benchmarks(store, fixture_dir() / "rtl/benchmarks.json");
  auto client = client_from(fixture("mock/spec_draft.json"));
  int n = 0;
  for (const auto &rec : store.records()) {
    for (auto *c : {static_cast<llm::LlmClient *>(nullptr),
                    static_cast<llm::LlmClient *>(client.get())}) {
      auto doc = generate_spec(rec, c);
      auto info = rtl::parse_module(rec.source_text);
      REQUIRE(doc.ports.size() == info.ports.size());
      for (std::size_t i = 0; i < info.ports.size(); ++i) {
        CHECK(doc.ports[i].decl == info.ports[i]);
      }
      CHECK(doc.vulnerability.has_value() == rec.vulnerable());
      ++n;
    }
  }
  CHECK(n == 32);
}

TEST_CASE("unparseable source is an error") {
  DesignRecord rec;
  rec.design_id = "x";
  rec.lineage_id = "x";
  rec.source_text = "assign a = b;";
  CHECK_THROWS_AS(generate_spec(rec, nullptr), rtl::ParseError);
}
