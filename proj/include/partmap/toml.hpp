#pragma once

// Minimal TOML reader/writer for run configs and dataset metadata. Supports
// the subset the tools emit: top-level and [section] tables, string / integer
// / float / boolean scalars, and flat arrays of numbers or strings. Keys are
// stored as "section.key".

#include "partmap/io.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

namespace partmap::toml {

struct Value {
  std::variant<std::string, std::int64_t, double, bool, std::vector<double>, std::vector<std::string>> v;

  bool is_string() const { return std::holds_alternative<std::string>(v); }
  bool is_int() const { return std::holds_alternative<std::int64_t>(v); }
  bool is_float() const { return std::holds_alternative<double>(v); }
  bool is_bool() const { return std::holds_alternative<bool>(v); }

  double as_double() const {
    if (is_int()) return double(std::get<std::int64_t>(v));
    if (is_float()) return std::get<double>(v);
    throw IoError("config value is not a number");
  }
  std::int64_t as_int() const {
    if (is_int()) return std::get<std::int64_t>(v);
    throw IoError("config value is not an integer");
  }
  const std::string& as_string() const {
    if (!is_string()) throw IoError("config value is not a string");
    return std::get<std::string>(v);
  }
  bool as_bool() const {
    if (!is_bool()) throw IoError("config value is not a boolean");
    return std::get<bool>(v);
  }
  const std::vector<double>& as_array() const {
    if (!std::holds_alternative<std::vector<double>>(v)) throw IoError("config value is not a number array");
    return std::get<std::vector<double>>(v);
  }
};

class Table {
public:
  using Map = std::map<std::string, Value>;

  bool has(const std::string& key) const { return entries_.count(key) != 0; }

  const Value& at(const std::string& key) const {
    auto it = entries_.find(key);
    if (it == entries_.end()) throw IoError("missing config key: " + key);
    return it->second;
  }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    return has(key) ? at(key).as_string() : fallback;
  }
  double get_double(const std::string& key, double fallback) const {
    return has(key) ? at(key).as_double() : fallback;
  }
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const {
    return has(key) ? at(key).as_int() : fallback;
  }
  bool get_bool(const std::string& key, bool fallback) const { return has(key) ? at(key).as_bool() : fallback; }

  void set(const std::string& key, Value v) { entries_[key] = std::move(v); }
  void set_string(const std::string& key, std::string s) { entries_[key] = Value{std::move(s)}; }
  void set_int(const std::string& key, std::int64_t i) { entries_[key] = Value{i}; }
  void set_double(const std::string& key, double d) { entries_[key] = Value{d}; }
  void set_bool(const std::string& key, bool b) { entries_[key] = Value{b}; }

  const Map& entries() const { return entries_; }

  // Rejects keys outside the given schema. Every run config is validated so a
  // typo fails loudly instead of silently using a default.
  void require_known_keys(const std::set<std::string>& known) const {
    for (const auto& [key, value] : entries_)
      if (!known.count(key)) throw IoError("unknown config key: " + key);
  }

private:
  Map entries_;
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline std::string strip_comment(const std::string& line) {
  bool in_str = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') in_str = !in_str;
    if (line[i] == '#' && !in_str) return line.substr(0, i);
  }
  return line;
}

inline Value parse_scalar(const std::string& raw, int lineno) {
  std::string s = trim(raw);
  if (s.empty()) throw IoError("empty value in config line " + std::to_string(lineno));
  if (s.front() == '"') {
    if (s.size() < 2 || s.back() != '"') throw IoError("unterminated string in config line " + std::to_string(lineno));
    return Value{s.substr(1, s.size() - 2)};
  }
  if (s == "true") return Value{true};
  if (s == "false") return Value{false};
  bool floaty = s.find_first_of(".eE") != std::string::npos || s == "inf" || s == "-inf" || s == "nan";
  try {
    std::size_t used = 0;
    if (!floaty) {
      std::int64_t i = std::stoll(s, &used);
      if (used == s.size()) return Value{i};
    }
    double d = std::stod(s, &used);
    if (used == s.size()) return Value{d};
  } catch (const std::exception&) {
  }
  throw IoError("cannot parse config value '" + s + "' at line " + std::to_string(lineno));
}

inline Value parse_value(const std::string& raw, int lineno) {
  std::string s = trim(raw);
  if (!s.empty() && s.front() == '[') {
    if (s.back() != ']') throw IoError("unterminated array in config line " + std::to_string(lineno));
    std::string body = s.substr(1, s.size() - 2);
    std::vector<std::string> items;
    std::string cur;
    bool in_str = false;
    for (char c : body) {
      if (c == '"') in_str = !in_str;
      if (c == ',' && !in_str) {
        items.push_back(cur);
        cur.clear();
      } else {
        cur += c;
      }
    }
    if (!trim(cur).empty()) items.push_back(cur);
    std::vector<double> nums;
    std::vector<std::string> strs;
    bool stringy = false;
    for (const auto& item : items) {
      Value v = parse_scalar(item, lineno);
      if (v.is_string()) {
        stringy = true;
        strs.push_back(v.as_string());
      } else {
        nums.push_back(v.as_double());
      }
    }
    if (stringy) {
      if (!nums.empty()) throw IoError("mixed array types in config line " + std::to_string(lineno));
      return Value{strs};
    }
    return Value{nums};
  }
  return parse_scalar(s, lineno);
}

} // namespace detail

inline Table parse(std::istream& in) {
  Table table;
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string s = detail::trim(detail::strip_comment(line));
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw IoError("malformed section header at line " + std::to_string(lineno));
      section = detail::trim(s.substr(1, s.size() - 2));
      if (section.empty()) throw IoError("empty section name at line " + std::to_string(lineno));
      continue;
    }
    std::size_t eq = s.find('=');
    if (eq == std::string::npos) throw IoError("expected key = value at line " + std::to_string(lineno));
    std::string key = detail::trim(s.substr(0, eq));
    if (key.empty()) throw IoError("empty key at line " + std::to_string(lineno));
    std::string full = section.empty() ? key : section + "." + key;
    if (table.has(full)) throw IoError("duplicate config key: " + full);
    table.set(full, detail::parse_value(s.substr(eq + 1), lineno));
  }
  return table;
}

inline Table parse_string(const std::string& text) {
  std::istringstream in(text);
  return parse(in);
}

inline Table parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  return parse(in);
}

inline std::string format_value(const Value& value) {
  std::ostringstream out;
  if (value.is_string()) {
    out << '"' << value.as_string() << '"';
  } else if (value.is_bool()) {
    out << (value.as_bool() ? "true" : "false");
  } else if (value.is_int()) {
    out << value.as_int();
  } else if (value.is_float()) {
    double d = std::get<double>(value.v);
    std::string s = io::fmt(d);
    // TOML floats need a decimal point or exponent.
    if (s.find_first_of(".eE") == std::string::npos && s != "inf" && s != "-inf" && s != "nan") s += ".0";
    out << s;
  } else if (std::holds_alternative<std::vector<double>>(value.v)) {
    out << '[';
    const auto& arr = std::get<std::vector<double>>(value.v);
    for (std::size_t i = 0; i < arr.size(); ++i) {
      if (i) out << ", ";
      std::string s = io::fmt(arr[i]);
      if (s.find_first_of(".eE") == std::string::npos) s += ".0";
      out << s;
    }
    out << ']';
  } else {
    out << '[';
    const auto& arr = std::get<std::vector<std::string>>(value.v);
    for (std::size_t i = 0; i < arr.size(); ++i) {
      if (i) out << ", ";
      out << '"' << arr[i] << '"';
    }
    out << ']';
  }
  return out.str();
}

// Emits entries grouped into sections. Top-level keys must precede the first
// section header or they would be re-parsed as members of that section.
inline void write(std::ostream& out, const Table& table) {
  for (const auto& [key, value] : table.entries())
    if (key.find('.') == std::string::npos) out << key << " = " << format_value(value) << '\n';
  std::string current_section;
  for (const auto& [key, value] : table.entries()) {
    std::size_t dot = key.find('.');
    if (dot == std::string::npos) continue;
    std::string section = key.substr(0, dot);
    if (section != current_section) {
      out << '\n' << '[' << section << "]\n";
      current_section = section;
    }
    out << key.substr(dot + 1) << " = " << format_value(value) << '\n';
  }
}

inline std::string to_string(const Table& table) {
  std::ostringstream out;
  write(out, table);
  return out.str();
}

} // namespace partmap::toml
