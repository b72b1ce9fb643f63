// Copyright vulnforge contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

// Structural Verilog/SystemVerilog front end: a lexer plus a module-header
// parser. It recognizes module boundaries, parameters, ports and register
// declarations and skips everything else; no elaboration happens here.

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vulnforge/error.hpp"

namespace vulnforge::rtl {

enum class TokenKind {
  identifier,
  keyword,
  number,
  string,
  op,
  system_name,  // $display, $clog2
  directive,    // `define, `MACRO
};

struct Token {
  TokenKind kind = TokenKind::identifier;
  std::string text;
  std::size_t offset = 0;
  std::size_t line = 1;
  std::size_t column = 1;

  bool is(std::string_view t) const { return text == t; }
  bool word() const {
    return kind == TokenKind::identifier || kind == TokenKind::keyword ||
           kind == TokenKind::number || kind == TokenKind::system_name ||
           kind == TokenKind::directive;
  }
};

struct TokenStream {
  std::vector<Token> tokens;

  std::size_t size() const { return tokens.size(); }
  bool empty() const { return tokens.empty(); }
  std::vector<std::string> texts() const;
  bool operator==(const TokenStream &o) const { return texts() == o.texts(); }
};

class LexError : public Error {
 public:
  LexError(const std::string &what, std::size_t line, std::size_t column)
      : Error(ErrorKind::validation, what), line_(line), column_(column) {}
  std::size_t line() const { return line_; }
  std::size_t column() const { return column_; }

 private:
  std::size_t line_;
  std::size_t column_;
};

// Drops comments and whitespace. String literals stay single tokens.
// Throws LexError on an unterminated string or block comment.
TokenStream tokenize(std::string_view source);

bool is_keyword(std::string_view word);
bool is_legal_identifier(std::string_view word);

enum class PortDirection { input, output, inout };

const char *to_string(PortDirection d);

// One packed or unpacked dimension. Bounds are integer text when they fold to
// a constant, otherwise normalized expression text. Integer ranges are stored
// with msb >= lsb.
struct Range {
  std::string msb;
  std::string lsb;

  bool operator==(const Range &) const = default;
};

struct PortDecl {
  std::string name;
  PortDirection direction = PortDirection::input;
  std::string data_type;  // user or integer type; empty for wire/reg/logic
  bool is_signed = false;
  std::vector<Range> packed;
  std::vector<Range> unpacked;

  bool scalar() const {
    return data_type.empty() && packed.empty() && unpacked.empty();
  }
  // "scalar", "[7:0]", "signed [15:0]", "pkg::req_t", "[7:0] unpacked[0:3]".
  std::string width_text() const;

  bool operator==(const PortDecl &) const = default;
};

struct ParameterDecl {
  std::string name;
  std::string default_value;  // normalized expression text, may be empty

  bool operator==(const ParameterDecl &) const = default;
};

struct SignalDecl {
  std::string name;
  std::string width;

  bool operator==(const SignalDecl &) const = default;
};

struct ByteSpan {
  std::size_t begin = 0;
  std::size_t end = 0;

  bool operator==(const ByteSpan &) const = default;
};

struct ModuleInfo {
  std::string module_name;
  std::vector<PortDecl> ports;  // declaration order
  std::vector<ParameterDecl> parameters;
  ByteSpan body_span;
  std::vector<SignalDecl> registers;  // module-level reg/logic/bit variables
  std::vector<std::string> other_modules;
  bool ansi_ports = true;
  std::vector<std::string> notes;  // constructs seen but not modeled

  const PortDecl *find_port(std::string_view name) const;
};

class ParseError : public Error {
 public:
  explicit ParseError(const std::string &what)
      : Error(ErrorKind::validation, what) {}
};

// Parses the first module in the source. Later modules are recorded by name.
// Throws ParseError when no module exists, module/endmodule do not balance,
// or the header is malformed beyond recovery.
ModuleInfo parse_module(std::string_view source);

// Order- and whitespace-insensitive interface fingerprint. One
// "name:direction:width" entry per port, sorted by name, joined by ';'.
std::string port_signature(const ModuleInfo &info);

// Re-serializes the recognized interface as a bodiless ANSI module.
std::string render_header(const ModuleInfo &info);

std::string module_info_to_text(const ModuleInfo &info);
std::string module_info_to_json(const ModuleInfo &info);

// Joins expression tokens, inserting a space only between adjacent words.
std::string normalize_expression(const std::vector<Token> &tokens);

}  // namespace vulnforge::rtl
