// Copyright vulnforge contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include <json.hpp>

#include "vulnforge/rtl.hpp"

namespace vulnforge::rtl {

namespace {

using Tokens = std::vector<Token>;

bool is_direction(const Token &t) {
  return t.kind == TokenKind::keyword &&
         (t.is("input") || t.is("output") || t.is("inout") || t.is("ref"));
}

// Net and variable keywords that say nothing about width.
bool is_plain_net_type(const Token &t) {
  static const std::set<std::string_view> kinds = {
      "wire",  "reg",  "logic", "bit",     "var",     "tri",  "tri0",
      "tri1",  "wand", "wor",   "supply0", "supply1", "uwire"};
  return t.kind == TokenKind::keyword && kinds.count(t.text) != 0;
}

// Directives whose arguments are not part of the design text proper.
std::size_t directive_arity(std::string_view name) {
  if (name == "`ifdef" || name == "`ifndef" || name == "`elsif" ||
      name == "`undef" || name == "`default_nettype" || name == "`include") {
    return 1;
  }
  if (name == "`else" || name == "`endif" || name == "`celldefine" ||
      name == "`endcelldefine" || name == "`resetall") {
    return 0;
  }
  return static_cast<std::size_t>(-1);  // not a control directive
}

// Removes compiler-directive lines so the parser only sees design text.
// Macro uses (`WIDTH) are kept; they read like identifiers.
Tokens strip_directives(const Tokens &in) {
  Tokens out;
  out.reserve(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    const Token &t = in[i];
    if (t.kind != TokenKind::directive) {
      out.push_back(t);
      continue;
    }
    if (t.is("`define") || t.is("`timescale") || t.is("`pragma") ||
        t.is("`line")) {
      std::size_t line = t.line;
      while (i + 1 < in.size() &&
             (in[i + 1].line == line ||
              (in[i].is("\\") && in[i + 1].line == in[i].line + 1))) {
        ++i;
        line = in[i].line;
      }
      continue;
    }
    std::size_t arity = directive_arity(t.text);
    if (arity == static_cast<std::size_t>(-1)) {
      out.push_back(t);
      continue;
    }
    i += std::min(arity, in.size() - 1 - i);
  }
  return out;
}

std::size_t matching_close(const Tokens &t, std::size_t open) {
  const std::string &o = t[open].text;
  std::string_view close = o == "(" ? ")" : o == "[" ? "]" : "}";
  int depth = 0;
  for (std::size_t i = open; i < t.size(); ++i) {
    if (t[i].text == o || (o == "{" && t[i].is("'{"))) {
      ++depth;
    } else if (t[i].text == close) {
      if (--depth == 0) return i;
    }
  }
  throw ParseError("unbalanced '" + o + "' at line " +
                   std::to_string(t[open].line));
}

// Splits [begin, end) at top-level commas.
std::vector<Tokens> split_commas(const Tokens &t, std::size_t begin,
                                 std::size_t end) {
  std::vector<Tokens> items;
  Tokens cur;
  int depth = 0;
  for (std::size_t i = begin; i < end; ++i) {
    const Token &tok = t[i];
    if (tok.is("(") || tok.is("[") || tok.is("{") || tok.is("'{")) ++depth;
    if (tok.is(")") || tok.is("]") || tok.is("}")) --depth;
    if (depth == 0 && tok.is(",")) {
      items.push_back(std::move(cur));
      cur.clear();
      continue;
    }
    cur.push_back(tok);
  }
  if (!cur.empty() || !items.empty()) items.push_back(std::move(cur));
  return items;
}

// Drops "(* ... *)" attribute instances.
Tokens strip_attributes(const Tokens &in) {
  Tokens out;
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (in[i].is("(") && i + 2 < in.size() && in[i + 1].is("*") &&
        !in[i + 2].is(")")) {
      std::size_t j = i + 2;
      while (j + 1 < in.size() && !(in[j].is("*") && in[j + 1].is(")"))) ++j;
      i = j + 1;
      continue;
    }
    out.push_back(in[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Constant folding for widths

using Env = std::map<std::string, std::string>;

class ConstEval {
 public:
  ConstEval(const Tokens &t, const Env &env, int depth)
      : t_(t), env_(env), depth_(depth) {}

  std::optional<std::int64_t> run() {
    if (t_.empty() || depth_ > 16) return std::nullopt;
    auto v = ternary();
    if (!v || pos_ != t_.size()) return std::nullopt;
    return v;
  }

 private:
  bool accept(std::string_view s) {
    if (pos_ < t_.size() && t_[pos_].is(s)) {
      ++pos_;
      return true;
    }
    return false;
  }

  std::optional<std::int64_t> ternary() {
    auto c = binary(0);
    if (!c) return std::nullopt;
    if (accept("?")) {
      auto a = ternary();
      if (!a || !accept(":")) return std::nullopt;
      auto b = ternary();
      if (!b) return std::nullopt;
      return *c ? a : b;
    }
    return c;
  }

  static int precedence(std::string_view op) {
    if (op == "||") return 1;
    if (op == "&&") return 2;
    if (op == "|") return 3;
    if (op == "^") return 4;
    if (op == "&") return 5;
    if (op == "==" || op == "!=") return 6;
    if (op == "<" || op == "<=" || op == ">" || op == ">=") return 7;
    if (op == "<<" || op == ">>" || op == "<<<" || op == ">>>") return 8;
    if (op == "+" || op == "-") return 9;
    if (op == "*" || op == "/" || op == "%") return 10;
    if (op == "**") return 11;
    return -1;
  }

  std::optional<std::int64_t> binary(int min_prec) {
    auto lhs = unary();
    if (!lhs) return std::nullopt;
    while (pos_ < t_.size()) {
      const std::string &op = t_[pos_].text;
      int p = precedence(op);
      if (p < 0 || p < min_prec) break;
      ++pos_;
      auto rhs = binary(p + 1);
      if (!rhs) return std::nullopt;
      std::int64_t a = *lhs, b = *rhs;
      if (op == "+") lhs = a + b;
      else if (op == "-") lhs = a - b;
      else if (op == "*") lhs = a * b;
      else if (op == "/") { if (!b) return std::nullopt; lhs = a / b; }
      else if (op == "%") { if (!b) return std::nullopt; lhs = a % b; }
      else if (op == "<<" || op == "<<<") { if (b < 0 || b > 62) return std::nullopt; lhs = a << b; }
      else if (op == ">>" || op == ">>>") { if (b < 0 || b > 62) return std::nullopt; lhs = a >> b; }
      else if (op == "**") {
        if (b < 0 || b > 62) return std::nullopt;
        std::int64_t r = 1;
        for (std::int64_t i = 0; i < b; ++i) r *= a;
        lhs = r;
      }
      else if (op == "&") lhs = a & b;
      else if (op == "|") lhs = a | b;
      else if (op == "^") lhs = a ^ b;
      else if (op == "&&") lhs = (a && b) ? 1 : 0;
      else if (op == "||") lhs = (a || b) ? 1 : 0;
      else if (op == "==") lhs = a == b;
      else if (op == "!=") lhs = a != b;
      else if (op == "<") lhs = a < b;
      else if (op == "<=") lhs = a <= b;
      else if (op == ">") lhs = a > b;
      else if (op == ">=") lhs = a >= b;
    }
    return lhs;
  }

  std::optional<std::int64_t> unary() {
    if (accept("-")) {
      auto v = unary();
      return v ? std::optional<std::int64_t>(-*v) : std::nullopt;
    }
    if (accept("+")) return unary();
    if (accept("!")) {
      auto v = unary();
      return v ? std::optional<std::int64_t>(!*v) : std::nullopt;
    }
    return primary();
  }

  std::optional<std::int64_t> primary() {
    if (pos_ >= t_.size()) return std::nullopt;
    const Token &tok = t_[pos_];
    if (accept("(")) {
      auto v = ternary();
      if (!v || !accept(")")) return std::nullopt;
      return v;
    }
    if (tok.kind == TokenKind::number) {
      ++pos_;
      return parse_number(tok.text);
    }
    if (tok.kind == TokenKind::system_name && tok.is("$clog2")) {
      ++pos_;
      if (!accept("(")) return std::nullopt;
      auto v = ternary();
      if (!v || !accept(")") || *v < 0) return std::nullopt;
      std::int64_t r = 0;
      while ((std::int64_t{1} << r) < *v) ++r;
      return r;
    }
    if (tok.kind == TokenKind::identifier || tok.kind == TokenKind::directive) {
      ++pos_;
      std::string name = tok.text;
      if (!name.empty() && name.front() == '`') name.erase(0, 1);
      // pkg::NAME resolves by its last component.
      while (pos_ + 1 < t_.size() && t_[pos_].is("::")) {
        name = t_[pos_ + 1].text;
        pos_ += 2;
      }
      auto it = env_.find(name);
      if (it == env_.end()) return std::nullopt;
      Tokens sub = tokenize(it->second).tokens;
      return ConstEval(sub, env_, depth_ + 1).run();
    }
    return std::nullopt;
  }

  static std::optional<std::int64_t> parse_number(std::string text) {
    text.erase(std::remove(text.begin(), text.end(), '_'), text.end());
    text.erase(std::remove(text.begin(), text.end(), ' '), text.end());
    auto q = text.find('\'');
    int base = 10;
    std::string digits = text;
    if (q != std::string::npos) {
      std::size_t b = q + 1;
      if (b < text.size() && (text[b] == 's' || text[b] == 'S')) ++b;
      if (b >= text.size()) return std::nullopt;
      switch (text[b]) {
        case 'b': case 'B': base = 2; break;
        case 'o': case 'O': base = 8; break;
        case 'd': case 'D': base = 10; break;
        case 'h': case 'H': base = 16; break;
        default:
          // '0 / '1 fill literals have no fixed value here.
          return std::nullopt;
      }
      digits = text.substr(b + 1);
    }
    if (digits.empty() || digits.size() > 18) return std::nullopt;
    std::int64_t v = 0;
    for (char c : digits) {
      int d;
      if (c >= '0' && c <= '9') d = c - '0';
      else if (c >= 'a' && c <= 'f') d = c - 'a' + 10;
      else if (c >= 'A' && c <= 'F') d = c - 'A' + 10;
      else return std::nullopt;
      if (d >= base) return std::nullopt;
      v = v * base + d;
    }
    return v;
  }

  const Tokens &t_;
  const Env &env_;
  int depth_;
  std::size_t pos_ = 0;
};

std::string fold(const Tokens &expr, const Env &env) {
  if (auto v = ConstEval(expr, env, 0).run()) return std::to_string(*v);
  return normalize_expression(expr);
}

// Parses "[a:b]" or "[n]" starting at open; returns index past ']'.
std::size_t parse_range(const Tokens &t, std::size_t open, const Env &env,
                        Range &out) {
  std::size_t close = matching_close(t, open);
  std::size_t colon = close;
  int depth = 0;
  for (std::size_t i = open + 1; i < close; ++i) {
    if (t[i].is("(") || t[i].is("[") || t[i].is("{")) ++depth;
    if (t[i].is(")") || t[i].is("]") || t[i].is("}")) --depth;
    if (depth == 0 && (t[i].is(":") || t[i].is("+:") || t[i].is("-:"))) {
      colon = i;
      break;
    }
  }
  if (colon == close) {
    out.msb = fold(Tokens(t.begin() + open + 1, t.begin() + close), env);
    out.lsb.clear();
    return close + 1;
  }
  Tokens hi(t.begin() + open + 1, t.begin() + colon);
  Tokens lo(t.begin() + colon + 1, t.begin() + close);
  if (!t[colon].is(":")) {
    // Indexed part-select in a declaration is unusual; keep it verbatim.
    out.msb = normalize_expression(hi) + t[colon].text + normalize_expression(lo);
    out.lsb.clear();
    return close + 1;
  }
  out.msb = fold(hi, env);
  out.lsb = fold(lo, env);
  auto as_int = [](const std::string &s) -> std::optional<std::int64_t> {
    if (s.empty()) return std::nullopt;
    std::size_t i = s[0] == '-' ? 1 : 0;
    if (i == s.size()) return std::nullopt;
    for (; i < s.size(); ++i) {
      if (s[i] < '0' || s[i] > '9') return std::nullopt;
    }
    return std::stoll(s);
  };
  auto m = as_int(out.msb), l = as_int(out.lsb);
  if (m && l && *m < *l) std::swap(out.msb, out.lsb);
  return close + 1;
}

struct DeclShape {
  std::string data_type;
  bool is_signed = false;
  std::vector<Range> packed;
  bool has_type = false;  // any type, sign or range token was present
};

struct DeclItem {
  std::string name;
  DeclShape shape;
  std::vector<Range> unpacked;
};

// Parses one declarator such as "logic signed [7:0] data_q [4]" (direction
// already removed). Returns nullopt if no name can be found.
std::optional<DeclItem> parse_declarator(const Tokens &item, const Env &env) {
  std::size_t end = item.size();
  for (std::size_t i = 0; i < item.size(); ++i) {
    if (item[i].is("=")) {
      end = i;
      break;
    }
  }
  if (end == 0) return std::nullopt;
  // Trailing unpacked dimensions.
  std::vector<std::pair<std::size_t, std::size_t>> unpacked_spans;
  std::size_t name_pos = end;
  while (name_pos > 0 && item[name_pos - 1].is("]")) {
    int depth = 0;
    std::size_t j = name_pos - 1;
    for (;; --j) {
      if (item[j].is("]")) ++depth;
      if (item[j].is("[")) --depth;
      if (depth == 0 || j == 0) break;
    }
    if (depth != 0) return std::nullopt;
    unpacked_spans.emplace_back(j, name_pos);
    name_pos = j;
  }
  if (name_pos == 0) return std::nullopt;
  const Token &name_tok = item[name_pos - 1];
  if (name_tok.kind != TokenKind::identifier) return std::nullopt;

  DeclItem out;
  out.name = name_tok.text;
  std::reverse(unpacked_spans.begin(), unpacked_spans.end());
  for (auto [b, e] : unpacked_spans) {
    Range r;
    parse_range(item, b, env, r);
    out.unpacked.push_back(r);
  }

  std::string type_text;
  for (std::size_t i = 0; i + 1 < name_pos;) {
    const Token &tok = item[i];
    if (tok.is("[")) {
      Range r;
      i = parse_range(item, i, env, r);
      out.shape.packed.push_back(r);
      out.shape.has_type = true;
      continue;
    }
    if (tok.is("signed")) {
      out.shape.is_signed = true;
      out.shape.has_type = true;
    } else if (tok.is("unsigned")) {
      out.shape.has_type = true;
    } else if (is_plain_net_type(tok)) {
      out.shape.has_type = true;
    } else if (tok.is("::") || tok.is(".")) {
      type_text += tok.text;
    } else if (tok.is("#") && i + 1 < name_pos - 1 && item[i + 1].is("(")) {
      std::size_t close = matching_close(item, i + 1);
      Tokens args(item.begin() + i, item.begin() + close + 1);
      type_text += normalize_expression(args);
      i = close + 1;
      continue;
    } else {
      if (!type_text.empty() && type_text.back() != ':' &&
          type_text.back() != '.') {
        type_text += ' ';
      }
      type_text += tok.text;
      out.shape.has_type = true;
    }
    ++i;
  }
  out.shape.data_type = type_text;
  return out;
}

PortDirection direction_of(const Token &t, std::vector<std::string> &notes) {
  if (t.is("input")) return PortDirection::input;
  if (t.is("output")) return PortDirection::output;
  if (t.is("ref")) notes.push_back("ref port treated as inout");
  return PortDirection::inout;
}

class ModuleParser {
 public:
  explicit ModuleParser(Tokens tokens) : t_(std::move(tokens)) {}

  ModuleInfo run() {
    std::size_t i = 0;
    for (; i < t_.size(); ++i) {
      if (t_[i].is("endmodule")) {
        throw ParseError("'endmodule' at line " + std::to_string(t_[i].line) +
                         " has no matching module");
      }
      if (is_module_kw(t_[i])) break;
    }
    if (i == t_.size()) throw ParseError("no module declaration found");

    std::size_t header_end = parse_header(i);
    classify_ports();
    std::size_t end_kw = find_endmodule(i, header_end);
    info_.body_span = {t_[header_end].offset + 1, t_[end_kw].offset};
    body_begin_ = header_end + 1;
    body_end_ = end_kw;

    collect_body_parameters();
    if (info_.ansi_ports) {
      finish_ansi_ports();
    } else {
      collect_non_ansi_ports();
    }
    collect_registers();
    check_unique_ports();
    scan_other_modules(end_kw + 1);
    return std::move(info_);
  }

 private:
  static bool is_module_kw(const Token &t) {
    return t.kind == TokenKind::keyword &&
           (t.is("module") || t.is("macromodule"));
  }

  const Token &at(std::size_t i) const {
    if (i >= t_.size()) {
      throw ParseError("unexpected end of input in header of module '" +
                       info_.module_name + "'");
    }
    return t_[i];
  }

  // Returns the index of the ';' that closes the module header.
  std::size_t parse_header(std::size_t kw) {
    std::size_t i = kw + 1;
    if (at(i).is("static") || at(i).is("automatic")) ++i;
    const Token &name = at(i);
    if (!is_legal_identifier(name.text)) {
      throw ParseError("illegal module name '" + name.text + "' at line " +
                       std::to_string(name.line));
    }
    info_.module_name = name.text;
    ++i;
    while (true) {
      const Token &tok = at(i);
      if (tok.is("import")) {
        while (!at(i).is(";")) ++i;
        ++i;
      } else if (tok.is("#") && at(i + 1).is("(")) {
        std::size_t close = matching_close(t_, i + 1);
        parse_parameter_list(i + 2, close);
        i = close + 1;
      } else if (tok.is("(")) {
        std::size_t close = matching_close(t_, i);
        port_list_ = {i + 1, close};
        i = close + 1;
      } else if (tok.is(";")) {
        return i;
      } else {
        throw ParseError("unexpected '" + tok.text + "' in header of module '" +
                         info_.module_name + "' at line " +
                         std::to_string(tok.line));
      }
    }
  }

  std::size_t find_endmodule(std::size_t kw, std::size_t from) {
    int depth = 1;
    for (std::size_t i = from + 1; i < t_.size(); ++i) {
      if (is_module_kw(t_[i])) ++depth;
      if (t_[i].is("endmodule") && --depth == 0) return i;
    }
    throw ParseError("module '" + info_.module_name + "' starting at line " +
                     std::to_string(t_[kw].line) + " has no endmodule");
  }

  void scan_other_modules(std::size_t from) {
    int depth = 0;
    for (std::size_t i = from; i < t_.size(); ++i) {
      if (is_module_kw(t_[i])) {
        if (depth == 0) {
          std::size_t n = i + 1;
          if (n < t_.size() && (t_[n].is("static") || t_[n].is("automatic"))) ++n;
          if (n < t_.size()) info_.other_modules.push_back(t_[n].text);
        }
        ++depth;
      } else if (t_[i].is("endmodule")) {
        if (depth == 0) {
          throw ParseError("'endmodule' at line " + std::to_string(t_[i].line) +
                           " has no matching module");
        }
        --depth;
      }
    }
    if (depth != 0) {
      throw ParseError("module '" + info_.other_modules.back() +
                       "' has no endmodule");
    }
    if (!info_.other_modules.empty()) {
      info_.notes.push_back("file declares " +
                            std::to_string(info_.other_modules.size() + 1) +
                            " modules; the first one is primary");
    }
  }

  // Handles one parameter item list; keyword tracks parameter vs localparam.
  void parse_param_items(const std::vector<Tokens> &items, bool local_default) {
    bool local = local_default;
    for (Tokens item : items) {
      item = strip_attributes(item);
      if (item.empty()) continue;
      std::size_t b = 0;
      if (item[0].is("parameter")) {
        local = false;
        b = 1;
      } else if (item[0].is("localparam")) {
        local = true;
        b = 1;
      }
      std::size_t eq = item.size();
      for (std::size_t k = b; k < item.size(); ++k) {
        if (item[k].is("=")) {
          eq = k;
          break;
        }
      }
      std::string name;
      for (std::size_t k = eq; k > b; --k) {
        if (item[k - 1].kind == TokenKind::identifier) {
          name = item[k - 1].text;
          break;
        }
      }
      if (name.empty()) continue;
      std::string value;
      if (eq < item.size()) {
        value = normalize_expression(Tokens(item.begin() + eq + 1, item.end()));
      }
      env_[name] = value;
      if (!local) info_.parameters.push_back({name, value});
    }
  }

  void parse_parameter_list(std::size_t begin, std::size_t end) {
    parse_param_items(split_commas(t_, begin, end), false);
  }

  // Visits module-level statements in the body, skipping function and task
  // bodies. fn(first, end) gets each statement [first, end) where end is the
  // terminating ';'.
  template <typename Fn>
  void for_each_body_statement(Fn fn) {
    std::size_t i = body_begin_;
    bool at_start = true;
    while (i < body_end_) {
      const Token &tok = t_[i];
      if (tok.is("function") || tok.is("task")) {
        std::string_view close = tok.is("function") ? "endfunction" : "endtask";
        while (i < body_end_ && !t_[i].is(close)) ++i;
        ++i;
        at_start = true;
        continue;
      }
      if (at_start) {
        std::size_t semi = i;
        int depth = 0;
        while (semi < body_end_) {
          const Token &s = t_[semi];
          if (s.is("(") || s.is("[") || s.is("{") || s.is("'{")) ++depth;
          if (s.is(")") || s.is("]") || s.is("}")) --depth;
          if (depth == 0 && s.is(";")) break;
          ++semi;
        }
        if (fn(i, semi)) {
          i = semi + 1;
          continue;
        }
      }
      at_start = tok.is(";") || tok.is("begin") || tok.is("end") ||
                 tok.is("endcase") || tok.is("endgenerate") ||
                 tok.is("generate") || tok.is("else") ||
                 (tok.is(":") && i > 0 && t_[i - 1].is("end"));
      ++i;
    }
  }

  void collect_body_parameters() {
    for_each_body_statement([&](std::size_t first, std::size_t semi) {
      const Token &tok = t_[first];
      if (!tok.is("parameter") && !tok.is("localparam")) return false;
      parse_param_items(split_commas(t_, first, semi), tok.is("localparam"));
      return true;
    });
  }

  void finish_ansi_ports() {
    if (!port_list_) return;
    auto [begin, end] = *port_list_;
    auto items = split_commas(t_, begin, end);
    std::optional<PortDirection> dir;
    DeclShape shape;
    for (Tokens item : items) {
      item = strip_attributes(item);
      if (item.empty()) continue;
      std::size_t b = 0;
      bool new_dir = false;
      if (is_direction(item[0])) {
        dir = direction_of(item[0], info_.notes);
        new_dir = true;
        b = 1;
      }
      Tokens rest(item.begin() + b, item.end());
      bool interface_port =
          !new_dir && std::any_of(rest.begin(), rest.end(),
                                  [](const Token &t) { return t.is("."); });
      if (!dir || interface_port) {
        info_.notes.push_back("interface port '" +
                              normalize_expression(rest) + "' not modeled");
        continue;
      }
      auto decl = parse_declarator(rest, env_);
      if (!decl) {
        info_.notes.push_back("unrecognized port item '" +
                              normalize_expression(item) + "'");
        continue;
      }
      if (decl->shape.has_type || new_dir) shape = decl->shape;
      PortDecl p;
      p.name = decl->name;
      p.direction = *dir;
      p.data_type = shape.data_type;
      p.is_signed = shape.is_signed;
      p.packed = shape.packed;
      p.unpacked = decl->unpacked;
      info_.ports.push_back(std::move(p));
    }
  }

  void collect_non_ansi_ports() {
    std::map<std::string, PortDecl> declared;
    for_each_body_statement([&](std::size_t first, std::size_t semi) {
      if (!is_direction(t_[first])) return false;
      PortDirection dir = direction_of(t_[first], info_.notes);
      auto items = split_commas(t_, first + 1, semi);
      DeclShape shape;
      bool first_item = true;
      for (const Tokens &item : items) {
        auto decl = parse_declarator(strip_attributes(item), env_);
        if (!decl) continue;
        if (first_item || decl->shape.has_type) shape = decl->shape;
        first_item = false;
        PortDecl p;
        p.name = decl->name;
        p.direction = dir;
        p.data_type = shape.data_type;
        p.is_signed = shape.is_signed;
        p.packed = shape.packed;
        p.unpacked = decl->unpacked;
        if (declared.count(p.name)) {
          throw ParseError("port '" + p.name + "' of module '" +
                           info_.module_name + "' declared twice");
        }
        declared.emplace(p.name, std::move(p));
      }
      return true;
    });
    for (const std::string &name : header_names_) {
      auto it = declared.find(name);
      if (it == declared.end()) {
        info_.notes.push_back("port '" + name + "' has no direction declaration");
        continue;
      }
      info_.ports.push_back(it->second);
      declared.erase(it);
    }
    for (const auto &[name, p] : declared) {
      info_.notes.push_back("'" + name +
                            "' declared with a direction but missing from the "
                            "port list");
    }
  }

  void collect_registers() {
    std::set<std::string> typedefs;
    std::set<std::string> port_names;
    for (const auto &p : info_.ports) port_names.insert(p.name);
    for_each_body_statement([&](std::size_t first, std::size_t semi) {
      const Token &tok = t_[first];
      if (tok.is("typedef")) {
        if (semi > first + 1 && t_[semi - 1].kind == TokenKind::identifier) {
          typedefs.insert(t_[semi - 1].text);
        }
        return true;
      }
      bool var_kw = tok.is("reg") || tok.is("logic") || tok.is("bit");
      bool user_typed = tok.kind == TokenKind::identifier &&
                        typedefs.count(tok.text) && first + 1 < semi &&
                        (t_[first + 1].kind == TokenKind::identifier ||
                         t_[first + 1].is("["));
      if (!var_kw && !user_typed) return false;
      auto items = split_commas(t_, first, semi);
      DeclShape shape;
      bool first_item = true;
      for (const Tokens &item : items) {
        auto decl = parse_declarator(item, env_);
        if (!decl) continue;
        if (first_item) shape = decl->shape;
        first_item = false;
        if (port_names.count(decl->name)) continue;
        PortDecl tmp;
        tmp.data_type = shape.data_type;
        tmp.is_signed = shape.is_signed;
        tmp.packed = shape.packed;
        tmp.unpacked = decl->unpacked;
        info_.registers.push_back({decl->name, tmp.width_text()});
      }
      return true;
    });
  }

  void check_unique_ports() {
    std::set<std::string> seen;
    for (const auto &p : info_.ports) {
      if (!seen.insert(p.name).second) {
        throw ParseError("port '" + p.name + "' of module '" +
                         info_.module_name + "' declared twice");
      }
    }
  }

  Tokens t_;
  ModuleInfo info_;
  Env env_;
  std::optional<std::pair<std::size_t, std::size_t>> port_list_;
  std::vector<std::string> header_names_;
  std::size_t body_begin_ = 0;
  std::size_t body_end_ = 0;

  // Decides ANSI vs list-of-names style before the body is examined.
  void classify_ports() {
    if (!port_list_) return;
    auto [begin, end] = *port_list_;
    auto items = split_commas(t_, begin, end);
    bool any_direction = false;
    bool all_names = true;
    for (const Tokens &raw : items) {
      Tokens item = strip_attributes(raw);
      if (item.empty()) continue;
      if (is_direction(item[0])) any_direction = true;
      if (item.size() != 1 || item[0].kind != TokenKind::identifier) {
        all_names = false;
      }
    }
    if (!any_direction && all_names) {
      info_.ansi_ports = false;
      for (const Tokens &raw : items) {
        Tokens item = strip_attributes(raw);
        if (!item.empty()) header_names_.push_back(item[0].text);
      }
    }
  }
};

}  // namespace

ModuleInfo parse_module(std::string_view source) {
  return ModuleParser(strip_directives(tokenize(source).tokens)).run();
}

}  // namespace vulnforge::rtl
