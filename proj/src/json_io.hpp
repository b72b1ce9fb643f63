// Copyright vulnforge contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

// nlohmann/json adapters for the shared value types.

#pragma once

#include <json.hpp>

#include "vulnforge/sampling.hpp"
#include "vulnforge/taxonomy.hpp"

namespace vulnforge {

using nlohmann::json;

inline void to_json(json &j, const CweLabel &l) {
  j = json{{"cwe_id", l.cwe_id}, {"short_name", l.short_name}};
  j["disambiguator"] = l.disambiguator ? json(*l.disambiguator) : json(nullptr);
}

inline void from_json(const json &j, CweLabel &l) {
  l.cwe_id = j.at("cwe_id").get<std::string>();
  l.short_name = j.at("short_name").get<std::string>();
  l.disambiguator.reset();
  if (j.contains("disambiguator") && !j.at("disambiguator").is_null()) {
    l.disambiguator = j.at("disambiguator").get<std::string>();
  }
}

inline void to_json(json &j, const SamplingParams &s) {
  j = json{{"temperature", s.temperature}, {"top_p", s.top_p}};
}

inline void from_json(const json &j, SamplingParams &s) {
  s.temperature = j.at("temperature").get<double>();
  s.top_p = j.at("top_p").get<double>();
}

template <typename T>
json optional_to_json(const std::optional<T> &v) {
  return v ? json(*v) : json(nullptr);
}

template <typename T>
std::optional<T> optional_from_json(const json &j, const char *key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

}  // namespace vulnforge
