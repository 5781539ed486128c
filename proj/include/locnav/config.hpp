#pragma once

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "locnav/common.hpp"

namespace locnav {

// Minimal TOML-shaped config reader covering what the scenario and run-config
// schemas actually use: [section], [[block]] arrays, key = value with
// numbers, bools, quoted strings and (nested, possibly multi-line) arrays,
// and # comments. Unknown keys are preserved so callers can warn on them.

struct ConfigValue {
  enum class Kind { kNumber, kBool, kString, kArray };

  Kind kind = Kind::kNumber;
  double num = 0.0;
  bool boolean = false;
  std::string str;
  std::vector<ConfigValue> arr;
  int line = 0;

  static ConfigValue number(double v) {
    ConfigValue c;
    c.kind = Kind::kNumber;
    c.num = v;
    return c;
  }
  static ConfigValue boolean_value(bool v) {
    ConfigValue c;
    c.kind = Kind::kBool;
    c.boolean = v;
    return c;
  }
  static ConfigValue string_value(std::string v) {
    ConfigValue c;
    c.kind = Kind::kString;
    c.str = std::move(v);
    return c;
  }

  double as_double(const std::string& where) const {
    if (kind != Kind::kNumber)
      throw ValidationError(where + ": expected a number (line " + std::to_string(line) + ")");
    return num;
  }
  long long as_int(const std::string& where) const {
    double v = as_double(where);
    long long i = static_cast<long long>(std::llround(v));
    if (static_cast<double>(i) != v)
      throw ValidationError(where + ": expected an integer, got " + std::to_string(v));
    return i;
  }
  bool as_bool(const std::string& where) const {
    if (kind != Kind::kBool)
      throw ValidationError(where + ": expected true/false (line " + std::to_string(line) + ")");
    return boolean;
  }
  const std::string& as_string(const std::string& where) const {
    if (kind != Kind::kString)
      throw ValidationError(where + ": expected a quoted string (line " + std::to_string(line) +
                            ")");
    return str;
  }
  const std::vector<ConfigValue>& as_array(const std::string& where) const {
    if (kind != Kind::kArray)
      throw ValidationError(where + ": expected an array (line " + std::to_string(line) + ")");
    return arr;
  }
};

struct ConfigTable {
  std::string source;  // filename, for messages
  std::string name;    // dotted path, for messages
  int line = 0;
  std::map<std::string, ConfigValue> values;

  std::string where(const std::string& key) const {
    std::string loc = source.empty() ? name : source + ": " + name;
    if (loc.empty()) loc = "config";
    return loc + "." + key;
  }

  bool has(const std::string& key) const { return values.count(key) > 0; }

  const ConfigValue* find(const std::string& key) const {
    auto it = values.find(key);
    return it == values.end() ? nullptr : &it->second;
  }

  const ConfigValue& require(const std::string& key) const {
    const ConfigValue* v = find(key);
    if (v == nullptr) throw ValidationError("missing required field '" + where(key) + "'");
    return *v;
  }

  double get_double(const std::string& key, double def) const {
    const ConfigValue* v = find(key);
    return v == nullptr ? def : v->as_double(where(key));
  }
  double require_double(const std::string& key) const { return require(key).as_double(where(key)); }
  long long get_int(const std::string& key, long long def) const {
    const ConfigValue* v = find(key);
    return v == nullptr ? def : v->as_int(where(key));
  }
  long long require_int(const std::string& key) const { return require(key).as_int(where(key)); }
  bool get_bool(const std::string& key, bool def) const {
    const ConfigValue* v = find(key);
    return v == nullptr ? def : v->as_bool(where(key));
  }
  std::string get_string(const std::string& key, const std::string& def) const {
    const ConfigValue* v = find(key);
    return v == nullptr ? def : v->as_string(where(key));
  }
  std::string require_string(const std::string& key) const {
    return require(key).as_string(where(key));
  }

  std::vector<double> require_double_array(const std::string& key) const {
    const auto& items = require(key).as_array(where(key));
    std::vector<double> out;
    out.reserve(items.size());
    for (size_t i = 0; i < items.size(); ++i)
      out.push_back(items[i].as_double(where(key) + "[" + std::to_string(i) + "]"));
    return out;
  }

  void set(const std::string& key, ConfigValue v) { values[key] = std::move(v); }
};

struct Config {
  std::string source;
  ConfigTable root;
  std::map<std::string, ConfigTable> sections;
  // [[name]] blocks in file order.
  std::vector<std::pair<std::string, ConfigTable>> blocks;

  const ConfigTable* find_section(const std::string& name) const {
    auto it = sections.find(name);
    return it == sections.end() ? nullptr : &it->second;
  }

  // Missing sections read as empty; every getter then falls back to defaults.
  ConfigTable section_or_empty(const std::string& name) const {
    const ConfigTable* t = find_section(name);
    if (t != nullptr) return *t;
    ConfigTable empty;
    empty.source = source;
    empty.name = name;
    return empty;
  }

  ConfigTable& section_mut(const std::string& name) {
    auto it = sections.find(name);
    if (it != sections.end()) return it->second;
    ConfigTable t;
    t.source = source;
    t.name = name;
    return sections.emplace(name, std::move(t)).first->second;
  }

  std::vector<const ConfigTable*> blocks_named(const std::string& name) const {
    std::vector<const ConfigTable*> out;
    for (const auto& [n, t] : blocks)
      if (n == name) out.push_back(&t);
    return out;
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

// Strips a # comment, honoring quoted strings.
inline std::string strip_comment(std::string_view s) {
  bool in_str = false;
  for (size_t i = 0; i < s.size(); ++i) {
    char c = s[i];
    if (in_str) {
      if (c == '\\') {
        ++i;
      } else if (c == '"') {
        in_str = false;
      }
    } else if (c == '"') {
      in_str = true;
    } else if (c == '#') {
      return std::string(s.substr(0, i));
    }
  }
  return std::string(s);
}

// Net [ ] depth outside strings; used to join multi-line arrays.
inline int bracket_balance(std::string_view s) {
  bool in_str = false;
  int depth = 0;
  for (size_t i = 0; i < s.size(); ++i) {
    char c = s[i];
    if (in_str) {
      if (c == '\\') {
        ++i;
      } else if (c == '"') {
        in_str = false;
      }
    } else if (c == '"') {
      in_str = true;
    } else if (c == '[') {
      ++depth;
    } else if (c == ']') {
      --depth;
    }
  }
  return depth;
}

struct ValueCursor {
  const std::string& text;
  size_t pos = 0;
  const std::string& source;
  int line;

  [[noreturn]] void fail(const std::string& msg) const {
    throw ParseError(source + ":" + std::to_string(line) + ": " + msg);
  }
  void skip_ws() {
    while (pos < text.size() && (text[pos] == ' ' || text[pos] == '\t' || text[pos] == '\n' ||
                                 text[pos] == '\r'))
      ++pos;
  }
  bool at_end() {
    skip_ws();
    return pos >= text.size();
  }
  char peek() const { return pos < text.size() ? text[pos] : '\0'; }
};

inline ConfigValue parse_value(ValueCursor& c);

inline ConfigValue parse_string(ValueCursor& c) {
  ConfigValue v;
  v.kind = ConfigValue::Kind::kString;
  v.line = c.line;
  ++c.pos;  // opening quote
  std::string out;
  while (c.pos < c.text.size() && c.text[c.pos] != '"') {
    char ch = c.text[c.pos];
    if (ch == '\\') {
      ++c.pos;
      if (c.pos >= c.text.size()) c.fail("unterminated escape in string");
      char esc = c.text[c.pos];
      switch (esc) {
        case 'n': out.push_back('\n'); break;
        case 't': out.push_back('\t'); break;
        case '"': out.push_back('"'); break;
        case '\\': out.push_back('\\'); break;
        default: c.fail(std::string("unsupported escape '\\") + esc + "'");
      }
    } else {
      out.push_back(ch);
    }
    ++c.pos;
  }
  if (c.pos >= c.text.size()) c.fail("unterminated string");
  ++c.pos;  // closing quote
  v.str = std::move(out);
  return v;
}

inline ConfigValue parse_array(ValueCursor& c) {
  ConfigValue v;
  v.kind = ConfigValue::Kind::kArray;
  v.line = c.line;
  ++c.pos;  // '['
  c.skip_ws();
  while (true) {
    if (c.pos >= c.text.size()) c.fail("unterminated array");
    if (c.peek() == ']') {
      ++c.pos;
      return v;
    }
    v.arr.push_back(parse_value(c));
    c.skip_ws();
    if (c.peek() == ',') {
      ++c.pos;
      c.skip_ws();
    } else if (c.peek() != ']') {
      c.fail("expected ',' or ']' in array");
    }
  }
}

inline ConfigValue parse_value(ValueCursor& c) {
  c.skip_ws();
  if (c.pos >= c.text.size()) c.fail("missing value");
  char ch = c.peek();
  if (ch == '"') return parse_string(c);
  if (ch == '[') return parse_array(c);
  // Bare token: bool or number.
  size_t start = c.pos;
  while (c.pos < c.text.size() && c.text[c.pos] != ',' && c.text[c.pos] != ']' &&
         c.text[c.pos] != ' ' && c.text[c.pos] != '\t' && c.text[c.pos] != '\n' &&
         c.text[c.pos] != '\r')
    ++c.pos;
  std::string tok = c.text.substr(start, c.pos - start);
  ConfigValue v;
  v.line = c.line;
  if (tok == "true" || tok == "false") {
    v.kind = ConfigValue::Kind::kBool;
    v.boolean = (tok == "true");
    return v;
  }
  const char* begin = tok.c_str();
  char* end = nullptr;
  double num = std::strtod(begin, &end);
  if (end == begin || *end != '\0') c.fail("cannot parse value '" + tok + "'");
  v.kind = ConfigValue::Kind::kNumber;
  v.num = num;
  return v;
}

}  // namespace detail

inline ConfigValue parse_config_value(const std::string& text, const std::string& source = "",
                                      int line = 0) {
  detail::ValueCursor c{text, 0, source, line};
  ConfigValue v = detail::parse_value(c);
  if (!c.at_end()) c.fail("trailing characters after value");
  return v;
}

inline Config parse_config_text(const std::string& text, const std::string& source) {
  Config cfg;
  cfg.source = source;
  cfg.root.source = source;
  ConfigTable* current = &cfg.root;

  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    int start_line = line_no;
    std::string line = detail::strip_comment(raw);
    // Join continuation lines while an array is still open.
    int balance = detail::bracket_balance(line);
    // A section header [x] or [[x]] balances itself; only key = [ ... spills.
    while (balance > 0) {
      std::string next;
      if (!std::getline(in, next))
        throw ParseError(source + ":" + std::to_string(start_line) + ": unterminated array");
      ++line_no;
      std::string stripped = detail::strip_comment(next);
      line += "\n" + stripped;
      balance += detail::bracket_balance(stripped);
    }
    if (balance < 0)
      throw ParseError(source + ":" + std::to_string(start_line) + ": unbalanced ']'");

    std::string t = detail::trim(line);
    if (t.empty()) continue;

    if (t.size() >= 4 && t[0] == '[' && t[1] == '[') {
      if (t.substr(t.size() - 2) != "]]")
        throw ParseError(source + ":" + std::to_string(start_line) + ": malformed block header");
      std::string name = detail::trim(t.substr(2, t.size() - 4));
      if (name.empty())
        throw ParseError(source + ":" + std::to_string(start_line) + ": empty block name");
      ConfigTable tbl;
      tbl.source = source;
      tbl.line = start_line;
      cfg.blocks.emplace_back(name, std::move(tbl));
      current = &cfg.blocks.back().second;
      current->name = name + "[" +
                      std::to_string(cfg.blocks_named(name).size() - 1) + "]";
      continue;
    }
    if (t[0] == '[') {
      if (t.back() != ']')
        throw ParseError(source + ":" + std::to_string(start_line) + ": malformed section header");
      std::string name = detail::trim(t.substr(1, t.size() - 2));
      if (name.empty())
        throw ParseError(source + ":" + std::to_string(start_line) + ": empty section name");
      if (cfg.sections.count(name))
        throw ParseError(source + ":" + std::to_string(start_line) + ": duplicate section [" +
                         name + "]");
      ConfigTable tbl;
      tbl.source = source;
      tbl.name = name;
      tbl.line = start_line;
      current = &cfg.sections.emplace(name, std::move(tbl)).first->second;
      continue;
    }

    size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ParseError(source + ":" + std::to_string(start_line) +
                       ": expected 'key = value', got '" + t + "'");
    std::string key = detail::trim(t.substr(0, eq));
    if (key.empty())
      throw ParseError(source + ":" + std::to_string(start_line) + ": empty key");
    if (current->values.count(key))
      throw ParseError(source + ":" + std::to_string(start_line) + ": duplicate key '" + key +
                       "' in " + (current->name.empty() ? "top level" : current->name));
    ConfigValue v = parse_config_value(t.substr(eq + 1), source, start_line);
    v.line = start_line;
    current->values.emplace(key, std::move(v));
  }
  return cfg;
}

inline Config load_config_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str(), path);
}

// Applies a "section.key=value" (or "key=value") command-line override.
inline void apply_override(Config& cfg, const std::string& spec) {
  size_t eq = spec.find('=');
  if (eq == std::string::npos)
    throw ValidationError("override '" + spec + "' is not of the form key=value");
  std::string path = detail::trim(spec.substr(0, eq));
  std::string raw = detail::trim(spec.substr(eq + 1));
  if (path.empty() || raw.empty())
    throw ValidationError("override '" + spec + "' is not of the form key=value");
  ConfigValue v;
  // Accept bare strings on the command line: fall back to a string value when
  // the token parses as neither number, bool nor array.
  try {
    v = parse_config_value(raw, "<override>");
  } catch (const ParseError&) {
    v = ConfigValue::string_value(raw);
  }
  size_t dot = path.rfind('.');
  if (dot == std::string::npos) {
    cfg.root.set(path, std::move(v));
  } else {
    cfg.section_mut(path.substr(0, dot)).set(path.substr(dot + 1), std::move(v));
  }
}

namespace detail {

inline void serialize_value(std::ostream& os, const ConfigValue& v) {
  switch (v.kind) {
    case ConfigValue::Kind::kNumber: {
      double d = v.num;
      long long i = static_cast<long long>(d);
      if (static_cast<double>(i) == d && std::abs(d) < 1e15) {
        os << i;
      } else {
        char buf[40];
        std::snprintf(buf, sizeof(buf), "%.17g", d);
        os << buf;
      }
      break;
    }
    case ConfigValue::Kind::kBool:
      os << (v.boolean ? "true" : "false");
      break;
    case ConfigValue::Kind::kString: {
      os << '"';
      for (char c : v.str) {
        if (c == '"' || c == '\\') os << '\\';
        os << c;
      }
      os << '"';
      break;
    }
    case ConfigValue::Kind::kArray: {
      os << '[';
      for (size_t i = 0; i < v.arr.size(); ++i) {
        if (i) os << ", ";
        serialize_value(os, v.arr[i]);
      }
      os << ']';
      break;
    }
  }
}

inline void serialize_table(std::ostream& os, const ConfigTable& t) {
  for (const auto& [k, v] : t.values) {
    os << k << " = ";
    serialize_value(os, v);
    os << "\n";
  }
}

}  // namespace detail

// Canonical text form of a resolved config (sorted keys/sections, blocks in
// original order). Used to snapshot the exact settings of a run.
inline std::string serialize_config(const Config& cfg) {
  std::ostringstream os;
  detail::serialize_table(os, cfg.root);
  for (const auto& [name, t] : cfg.sections) {
    os << "\n[" << name << "]\n";
    detail::serialize_table(os, t);
  }
  for (const auto& [name, t] : cfg.blocks) {
    os << "\n[[" << name << "]]\n";
    detail::serialize_table(os, t);
  }
  return os.str();
}

}  // namespace locnav
