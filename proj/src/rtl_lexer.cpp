// Copyright vulnforge contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <array>
#include <cctype>
#include <unordered_set>

#include "vulnforge/rtl.hpp"

namespace vulnforge::rtl {

namespace {

const std::unordered_set<std::string_view> &keywords() {
  static const std::unordered_set<std::string_view> kw = {
      "always",       "always_comb", "always_ff",   "always_latch", "and",
      "assert",       "assign",      "assume",      "automatic",    "begin",
      "bit",          "break",       "buf",         "byte",         "case",
      "casex",        "casez",       "class",       "const",        "continue",
      "cover",        "default",     "defparam",    "disable",      "do",
      "edge",         "else",        "end",         "endcase",      "endclass",
      "endfunction",  "endgenerate", "endinterface", "endmodule",   "endpackage",
      "endtask",      "enum",        "event",       "export",       "extern",
      "for",          "force",       "foreach",     "forever",      "fork",
      "function",     "generate",    "genvar",      "if",           "iff",
      "import",       "initial",     "inout",       "input",        "int",
      "integer",      "interface",   "join",        "localparam",   "logic",
      "longint",      "macromodule", "modport",     "module",       "nand",
      "negedge",      "nor",         "not",         "or",           "output",
      "package",      "packed",      "parameter",   "posedge",      "priority",
      "real",         "reg",         "release",     "repeat",       "return",
      "shortint",     "signed",      "static",      "string",       "struct",
      "supply0",      "supply1",     "task",        "time",         "tri",
      "tri0",         "tri1",        "type",        "typedef",      "union",
      "unique",       "unique0",     "unsigned",    "uwire",        "var",
      "void",         "wait",        "wand",        "while",        "wire",
      "wor",          "xnor",        "xor",         "ref",
  };
  return kw;
}

// Longest first within each leading character is handled by trying longer
// spellings before shorter ones.
constexpr std::array<std::string_view, 44> kOperators = {
    "<<<=", ">>>=", "===", "!==", "<<<", ">>>", "<<=", ">>=", "==?", "!=?",
    "->>",  "<->",  "==",  "!=",  "<=",  ">=",  "&&",  "||",  "**",  "<<",
    ">>",   "~&",   "~|",  "~^",  "^~",  "->",  "+:",  "-:",  "::",  "++",
    "--",   "+=",   "-=",  "*=",  "/=",  "&=",  "|=",  "^=",  "%=",  "'{",
    "##",   ".*",   "=>",  "|->",
};

bool ident_start(char c) {
  return std::isalpha(static_cast<unsigned char>(c)) || c == '_';
}
bool ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '$';
}
bool base_char(char c) {
  switch (c) {
    case 'b': case 'B': case 'o': case 'O':
    case 'd': case 'D': case 'h': case 'H':
      return true;
    default:
      return false;
  }
}
bool based_digit(char c) {
  return std::isxdigit(static_cast<unsigned char>(c)) || c == 'x' || c == 'X' ||
         c == 'z' || c == 'Z' || c == '?' || c == '_';
}

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  TokenStream run() {
    TokenStream out;
    while (true) {
      skip_space_and_comments();
      if (pos_ >= src_.size()) break;
      out.tokens.push_back(next());
    }
    return out;
  }

 private:
  char peek(std::size_t ahead = 0) const {
    return pos_ + ahead < src_.size() ? src_[pos_ + ahead] : '\0';
  }

  void advance(std::size_t n = 1) {
    for (std::size_t i = 0; i < n && pos_ < src_.size(); ++i) {
      if (src_[pos_] == '\n') {
        ++line_;
        col_ = 1;
      } else {
        ++col_;
      }
      ++pos_;
    }
  }

  void skip_space_and_comments() {
    while (pos_ < src_.size()) {
      char c = peek();
      if (std::isspace(static_cast<unsigned char>(c))) {
        advance();
      } else if (c == '/' && peek(1) == '/') {
        while (pos_ < src_.size() && peek() != '\n') advance();
      } else if (c == '/' && peek(1) == '*') {
        std::size_t line = line_, col = col_;
        advance(2);
        while (pos_ < src_.size() && !(peek() == '*' && peek(1) == '/')) {
          advance();
        }
        if (pos_ >= src_.size()) {
          throw LexError("unterminated block comment starting at " +
                             std::to_string(line) + ":" + std::to_string(col),
                         line, col);
        }
        advance(2);
      } else {
        break;
      }
    }
  }

  Token make(TokenKind kind, std::size_t start, std::size_t line,
             std::size_t col) const {
    return Token{kind, std::string(src_.substr(start, pos_ - start)), start,
                 line, col};
  }

  Token next() {
    const std::size_t start = pos_, line = line_, col = col_;
    const char c = peek();

    if (c == '"') {
      advance();
      while (true) {
        if (pos_ >= src_.size() || peek() == '\n') {
          throw LexError("unterminated string literal starting at " +
                             std::to_string(line) + ":" + std::to_string(col),
                         line, col);
        }
        if (peek() == '\\') {
          advance(2);
          continue;
        }
        if (peek() == '"') {
          advance();
          break;
        }
        advance();
      }
      return make(TokenKind::string, start, line, col);
    }

    if (ident_start(c)) {
      while (ident_char(peek())) advance();
      Token t = make(TokenKind::identifier, start, line, col);
      if (is_keyword(t.text)) t.kind = TokenKind::keyword;
      return t;
    }

    if (c == '\\' && peek(1) != '\0' &&
        !std::isspace(static_cast<unsigned char>(peek(1)))) {
      while (pos_ < src_.size() &&
             !std::isspace(static_cast<unsigned char>(peek()))) {
        advance();
      }
      return make(TokenKind::identifier, start, line, col);
    }

    if (c == '$' && ident_char(peek(1))) {
      advance();
      while (ident_char(peek())) advance();
      return make(TokenKind::system_name, start, line, col);
    }

    if (c == '`' && ident_start(peek(1))) {
      advance();
      while (ident_char(peek())) advance();
      return make(TokenKind::directive, start, line, col);
    }

    if (std::isdigit(static_cast<unsigned char>(c))) {
      while (std::isdigit(static_cast<unsigned char>(peek())) || peek() == '_') {
        advance();
      }
      if (peek() == '\'' &&
          (base_char(peek(1)) ||
           ((peek(1) == 's' || peek(1) == 'S') && base_char(peek(2))))) {
        lex_based_tail();
      } else {
        if (peek() == '.' && std::isdigit(static_cast<unsigned char>(peek(1)))) {
          advance();
          while (std::isdigit(static_cast<unsigned char>(peek())) ||
                 peek() == '_') {
            advance();
          }
        }
        if ((peek() == 'e' || peek() == 'E') &&
            (std::isdigit(static_cast<unsigned char>(peek(1))) ||
             ((peek(1) == '-' || peek(1) == '+') &&
              std::isdigit(static_cast<unsigned char>(peek(2)))))) {
          advance(2);
          while (std::isdigit(static_cast<unsigned char>(peek()))) advance();
        }
      }
      return make(TokenKind::number, start, line, col);
    }

    if (c == '\'') {
      if (base_char(peek(1)) ||
          ((peek(1) == 's' || peek(1) == 'S') && base_char(peek(2)))) {
        lex_based_tail();
        return make(TokenKind::number, start, line, col);
      }
      char d = peek(1);
      if ((d == '0' || d == '1' || d == 'x' || d == 'X' || d == 'z' ||
           d == 'Z') &&
          !ident_char(peek(2))) {
        advance(2);
        return make(TokenKind::number, start, line, col);
      }
    }

    for (std::string_view op : kOperators) {
      if (src_.substr(pos_, op.size()) == op) {
        advance(op.size());
        return make(TokenKind::op, start, line, col);
      }
    }
    advance();
    return make(TokenKind::op, start, line, col);
  }

  // At a quote that starts the base part of a based literal.
  void lex_based_tail() {
    advance();  // '
    if (peek() == 's' || peek() == 'S') advance();
    advance();  // base letter
    while (peek() == ' ' || peek() == '\t') {
      if (!based_digit(peek(1)) && peek(1) != ' ' && peek(1) != '\t') break;
      advance();
    }
    while (based_digit(peek())) advance();
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
  std::size_t col_ = 1;
};

}  // namespace

bool is_keyword(std::string_view word) { return keywords().count(word) != 0; }

bool is_legal_identifier(std::string_view word) {
  if (word.empty()) return false;
  if (word.front() == '\\') {
    return word.size() > 1 &&
           std::none_of(word.begin(), word.end(), [](char c) {
             return std::isspace(static_cast<unsigned char>(c));
           });
  }
  if (!ident_start(word.front())) return false;
  if (!std::all_of(word.begin(), word.end(), ident_char)) return false;
  return !is_keyword(word);
}

std::vector<std::string> TokenStream::texts() const {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (const auto &t : tokens) out.push_back(t.text);
  return out;
}

TokenStream tokenize(std::string_view source) { return Lexer(source).run(); }

}  // namespace vulnforge::rtl
