// Copyright vulnforge contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <sstream>

#include <json.hpp>

#include "vulnforge/rtl.hpp"

namespace vulnforge::rtl {

const char *to_string(PortDirection d) {
  switch (d) {
    case PortDirection::input:
      return "input";
    case PortDirection::output:
      return "output";
    case PortDirection::inout:
      return "inout";
  }
  return "inout";
}

static std::string dims_text(const std::vector<Range> &dims) {
  std::string out;
  for (const auto &r : dims) {
    out += "[" + r.msb;
    if (!r.lsb.empty()) out += ":" + r.lsb;
    out += "]";
  }
  return out;
}

std::string PortDecl::width_text() const {
  std::vector<std::string> parts;
  if (!data_type.empty()) parts.push_back(data_type);
  if (is_signed) parts.push_back("signed");
  if (!packed.empty()) parts.push_back(dims_text(packed));
  if (!unpacked.empty()) parts.push_back("unpacked" + dims_text(unpacked));
  if (parts.empty()) return "scalar";
  std::string out = parts[0];
  for (std::size_t i = 1; i < parts.size(); ++i) out += " " + parts[i];
  return out;
}

const PortDecl *ModuleInfo::find_port(std::string_view name) const {
  for (const auto &p : ports) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

std::string normalize_expression(const std::vector<Token> &tokens) {
  std::string out;
  const Token *prev = nullptr;
  for (const auto &t : tokens) {
    if (prev && prev->word() && t.word()) out += ' ';
    out += t.text;
    prev = &t;
  }
  return out;
}

std::string port_signature(const ModuleInfo &info) {
  std::vector<std::string> entries;
  entries.reserve(info.ports.size());
  for (const auto &p : info.ports) {
    entries.push_back(p.name + ":" + to_string(p.direction) + ":" +
                      p.width_text());
  }
  std::sort(entries.begin(), entries.end());
  std::string out;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (i) out += ';';
    out += entries[i];
  }
  return out;
}

std::string render_header(const ModuleInfo &info) {
  std::ostringstream os;
  os << "module " << info.module_name;
  if (!info.parameters.empty()) {
    os << " #(\n";
    for (std::size_t i = 0; i < info.parameters.size(); ++i) {
      const auto &p = info.parameters[i];
      os << "  parameter " << p.name;
      if (!p.default_value.empty()) os << " = " << p.default_value;
      os << (i + 1 < info.parameters.size() ? ",\n" : "\n");
    }
    os << ")";
  }
  os << " (\n";
  for (std::size_t i = 0; i < info.ports.size(); ++i) {
    const auto &p = info.ports[i];
    os << "  " << to_string(p.direction);
    if (!p.data_type.empty()) os << " " << p.data_type;
    if (p.is_signed) os << " signed";
    if (!p.packed.empty()) os << " " << dims_text(p.packed);
    os << " " << p.name;
    if (!p.unpacked.empty()) os << " " << dims_text(p.unpacked);
    os << (i + 1 < info.ports.size() ? ",\n" : "\n");
  }
  os << ");\nendmodule\n";
  return os.str();
}

std::string module_info_to_text(const ModuleInfo &info) {
  std::ostringstream os;
  os << "module: " << info.module_name << "\n";
  os << "port style: " << (info.ansi_ports ? "ansi" : "non-ansi") << "\n";
  os << "body bytes: " << info.body_span.begin << ".." << info.body_span.end
     << "\n";
  os << "parameters:\n";
  for (const auto &p : info.parameters) {
    os << "  " << p.name << " = "
       << (p.default_value.empty() ? "<none>" : p.default_value) << "\n";
  }
  os << "ports:\n";
  for (const auto &p : info.ports) {
    os << "  " << to_string(p.direction) << " " << p.name << " "
       << p.width_text() << "\n";
  }
  os << "registers:\n";
  for (const auto &r : info.registers) {
    os << "  " << r.name << " " << r.width << "\n";
  }
  if (!info.other_modules.empty()) {
    os << "other modules:";
    for (const auto &m : info.other_modules) os << " " << m;
    os << "\n";
  }
  for (const auto &n : info.notes) os << "note: " << n << "\n";
  os << "signature: " << port_signature(info) << "\n";
  return os.str();
}

std::string module_info_to_json(const ModuleInfo &info) {
  using nlohmann::json;
  json j;
  j["module_name"] = info.module_name;
  j["ansi_ports"] = info.ansi_ports;
  j["body_span"] = {info.body_span.begin, info.body_span.end};
  json params = json::array();
  for (const auto &p : info.parameters) {
    params.push_back({{"name", p.name}, {"default", p.default_value}});
  }
  j["parameters"] = params;
  json ports = json::array();
  for (const auto &p : info.ports) {
    json range = nullptr;
    if (p.packed.size() == 1 && !p.packed[0].lsb.empty()) {
      range = {p.packed[0].msb, p.packed[0].lsb};
    }
    ports.push_back({{"name", p.name},
                     {"direction", to_string(p.direction)},
                     {"width", p.width_text()},
                     {"range", range}});
  }
  j["ports"] = ports;
  json regs = json::array();
  for (const auto &r : info.registers) {
    regs.push_back({{"name", r.name}, {"width", r.width}});
  }
  j["registers"] = regs;
  j["other_modules"] = info.other_modules;
  j["notes"] = info.notes;
  j["signature"] = port_signature(info);
  return j.dump(2) + "\n";
}

}  // namespace vulnforge::rtl
