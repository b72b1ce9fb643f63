// Copyright vulnforge contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#include "vulnforge/code_blocks.hpp"

#include <regex>

namespace vulnforge {

std::vector<std::string> fenced_blocks(std::string_view text) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    std::size_t open = text.find("```", pos);
    if (open == std::string_view::npos) break;
    std::size_t body = text.find('\n', open);
    if (body == std::string_view::npos) break;
    ++body;
    std::size_t close = text.find("```", body);
    if (close == std::string_view::npos) {
      out.emplace_back(text.substr(body));
      break;
    }
    out.emplace_back(text.substr(body, close - body));
    pos = close + 3;
  }
  return out;
}

std::optional<std::string> extract_code(std::string_view completion) {
  std::optional<std::string> best;
  for (auto &block : fenced_blocks(completion)) {
    if (block.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    if (!best || block.size() > best->size()) best = std::move(block);
  }
  if (best) return best;

  static const std::regex module_span(
      R"(\b(module|macromodule)\b[\s\S]*?\bendmodule\b)");
  std::string text(completion);
  for (auto it = std::sregex_iterator(text.begin(), text.end(), module_span);
       it != std::sregex_iterator(); ++it) {
    std::string span = it->str() + "\n";
    if (!best || span.size() > best->size()) best = std::move(span);
  }
  return best;
}

}  // namespace vulnforge
