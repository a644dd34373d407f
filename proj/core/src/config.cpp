#include "dataclone/config.hpp"

#include <cctype>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <limits>

#include "dataclone/errors.hpp"
#include "dataclone/jsonl.hpp"
#include "dataclone/rng.hpp"

namespace dataclone::config {

namespace {

[[noreturn]] void bad_line(size_t line, const std::string& what) {
  fail(ErrorCode::ConfigError, "line " + std::to_string(line) + ": " + what);
}

struct Cursor {
  const std::string& s;
  size_t pos = 0;
  size_t line;

  bool done() const { return pos >= s.size(); }
  char peek() const { return s[pos]; }

  void skip_ws() {
    while (!done() && (s[pos] == ' ' || s[pos] == '\t')) ++pos;
  }
};

bool is_bare_key_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_' || c == '-';
}

std::string parse_basic_string(Cursor& c) {
  ++c.pos;  // opening quote
  std::string out;
  while (true) {
    if (c.done()) bad_line(c.line, "unterminated string");
    const char ch = c.s[c.pos++];
    if (ch == '"') return out;
    if (ch != '\\') {
      out.push_back(ch);
      continue;
    }
    if (c.done()) bad_line(c.line, "dangling escape");
    const char esc = c.s[c.pos++];
    switch (esc) {
      case '"': out.push_back('"'); break;
      case '\\': out.push_back('\\'); break;
      case 'n': out.push_back('\n'); break;
      case 't': out.push_back('\t'); break;
      case 'r': out.push_back('\r'); break;
      default: bad_line(c.line, std::string("unsupported escape \\") + esc);
    }
  }
}

Value parse_value(Cursor& c);

Value parse_array(Cursor& c) {
  Value v;
  v.kind = Value::Kind::Array;
  v.line = c.line;
  ++c.pos;  // '['
  c.skip_ws();
  while (true) {
    if (c.done()) bad_line(c.line, "unterminated array");
    if (c.peek() == ']') {
      ++c.pos;
      return v;
    }
    v.items.push_back(parse_value(c));
    c.skip_ws();
    if (c.done()) bad_line(c.line, "unterminated array");
    if (c.peek() == ',') {
      ++c.pos;
      c.skip_ws();
      continue;
    }
    if (c.peek() == ']') {
      ++c.pos;
      return v;
    }
    bad_line(c.line, "expected ',' or ']' in array");
  }
}

Value parse_scalar(Cursor& c) {
  Value v;
  v.line = c.line;
  if (c.peek() == '"') {
    v.kind = Value::Kind::String;
    v.raw = parse_basic_string(c);
    return v;
  }

  size_t start = c.pos;
  while (!c.done()) {
    const char ch = c.peek();
    if (ch == ',' || ch == ']' || ch == '#' || ch == ' ' || ch == '\t') break;
    ++c.pos;
  }
  v.raw = c.s.substr(start, c.pos - start);
  if (v.raw.empty()) bad_line(c.line, "missing value");

  if (v.raw == "true" || v.raw == "false") {
    v.kind = Value::Kind::Boolean;
    return v;
  }
  if (v.raw == "inf" || v.raw == "+inf" || v.raw == "-inf" || v.raw == "nan") {
    v.kind = Value::Kind::Float;
    return v;
  }

  // Numeric: an integer unless it has a fraction or exponent.
  bool is_float = false;
  size_t i = 0;
  if (i < v.raw.size() && (v.raw[i] == '+' || v.raw[i] == '-')) ++i;
  size_t digits = 0;
  for (; i < v.raw.size(); ++i) {
    const char ch = v.raw[i];
    if (std::isdigit(static_cast<unsigned char>(ch)) != 0) {
      ++digits;
      continue;
    }
    if (ch == '.' || ch == 'e' || ch == 'E' || ch == '+' || ch == '-') {
      is_float = true;
      continue;
    }
    bad_line(c.line, "unrecognized value '" + v.raw + "'");
  }
  if (digits == 0) bad_line(c.line, "unrecognized value '" + v.raw + "'");
  v.kind = is_float ? Value::Kind::Float : Value::Kind::Integer;
  return v;
}

Value parse_value(Cursor& c) {
  c.skip_ws();
  if (c.done()) bad_line(c.line, "missing value");
  if (c.peek() == '[') return parse_array(c);
  return parse_scalar(c);
}

const char* kind_name(Value::Kind kind) {
  switch (kind) {
    case Value::Kind::String: return "string";
    case Value::Kind::Integer: return "integer";
    case Value::Kind::Float: return "float";
    case Value::Kind::Boolean: return "boolean";
    case Value::Kind::Array: return "array";
  }
  return "value";
}

[[noreturn]] void bad_type(const std::string& key, const Value& v, const char* wanted) {
  fail(ErrorCode::ConfigError, "line " + std::to_string(v.line) + ": key '" + key + "' is a " +
                                   kind_name(v.kind) + ", expected " + wanted);
}

double parse_float_raw(const std::string& key, const Value& v) {
  if (v.raw == "inf" || v.raw == "+inf") return std::numeric_limits<double>::infinity();
  if (v.raw == "-inf") return -std::numeric_limits<double>::infinity();
  if (v.raw == "nan") return std::numeric_limits<double>::quiet_NaN();
  char* end = nullptr;
  const double x = std::strtod(v.raw.c_str(), &end);
  if (end == nullptr || *end != '\0') bad_type(key, v, "float");
  return x;
}

}  // namespace

Config Config::parse(const std::string& text) {
  Config cfg;
  cfg.text_ = text;

  std::string section;
  size_t line_no = 0;
  size_t pos = 0;
  while (pos <= text.size()) {
    const size_t eol = text.find('\n', pos);
    const std::string line =
        text.substr(pos, eol == std::string::npos ? std::string::npos : eol - pos);
    pos = eol == std::string::npos ? text.size() + 1 : eol + 1;
    ++line_no;

    Cursor c{line, 0, line_no};
    c.skip_ws();
    if (c.done() || c.peek() == '#') continue;

    if (c.peek() == '[') {
      ++c.pos;
      size_t start = c.pos;
      while (!c.done() && c.peek() != ']') ++c.pos;
      if (c.done()) bad_line(line_no, "unterminated section header");
      section = line.substr(start, c.pos - start);
      ++c.pos;
      if (section.empty()) bad_line(line_no, "empty section name");
      for (char ch : section)
        if (!is_bare_key_char(ch) && ch != '.') bad_line(line_no, "bad section name");
      c.skip_ws();
      if (!c.done() && c.peek() != '#') bad_line(line_no, "trailing text after section header");
      continue;
    }

    size_t start = c.pos;
    while (!c.done() && is_bare_key_char(c.peek())) ++c.pos;
    const std::string key = line.substr(start, c.pos - start);
    if (key.empty()) bad_line(line_no, "expected a key");
    c.skip_ws();
    if (c.done() || c.peek() != '=') bad_line(line_no, "expected '=' after key '" + key + "'");
    ++c.pos;

    Value v = parse_value(c);
    c.skip_ws();
    if (!c.done() && c.peek() != '#') bad_line(line_no, "trailing text after value");

    const std::string full = section.empty() ? key : section + "." + key;
    if (!cfg.entries_.emplace(full, std::move(v)).second)
      bad_line(line_no, "duplicate key '" + full + "'");
  }
  return cfg;
}

Config Config::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path))
    fail(ErrorCode::ConfigError, "config file not found: " + path.string());
  return parse(read_file(path));
}

bool Config::has(const std::string& key) const { return entries_.count(key) > 0; }

namespace {

const Value& require(const std::map<std::string, Value>& entries, const std::string& key) {
  const auto it = entries.find(key);
  if (it == entries.end()) fail(ErrorCode::ConfigError, "missing key '" + key + "'");
  return it->second;
}

}  // namespace

std::string Config::get_string(const std::string& key) const {
  const Value& v = require(entries_, key);
  if (v.kind != Value::Kind::String) bad_type(key, v, "string");
  return v.raw;
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  return has(key) ? get_string(key) : fallback;
}

int64_t Config::get_int(const std::string& key) const {
  const Value& v = require(entries_, key);
  if (v.kind != Value::Kind::Integer) bad_type(key, v, "integer");
  int64_t out = 0;
  const auto res = std::from_chars(v.raw.data(), v.raw.data() + v.raw.size(), out);
  if (res.ec != std::errc{} || res.ptr != v.raw.data() + v.raw.size())
    bad_type(key, v, "integer");
  return out;
}

int64_t Config::get_int(const std::string& key, int64_t fallback) const {
  return has(key) ? get_int(key) : fallback;
}

uint64_t Config::get_u64(const std::string& key) const {
  const Value& v = require(entries_, key);
  if (v.kind != Value::Kind::Integer) bad_type(key, v, "integer");
  uint64_t out = 0;
  const auto res = std::from_chars(v.raw.data(), v.raw.data() + v.raw.size(), out);
  if (res.ec != std::errc{} || res.ptr != v.raw.data() + v.raw.size())
    bad_type(key, v, "non-negative integer");
  return out;
}

uint64_t Config::get_u64(const std::string& key, uint64_t fallback) const {
  return has(key) ? get_u64(key) : fallback;
}

double Config::get_double(const std::string& key) const {
  const Value& v = require(entries_, key);
  if (v.kind != Value::Kind::Float && v.kind != Value::Kind::Integer) bad_type(key, v, "number");
  return parse_float_raw(key, v);
}

double Config::get_double(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

bool Config::get_bool(const std::string& key) const {
  const Value& v = require(entries_, key);
  if (v.kind != Value::Kind::Boolean) bad_type(key, v, "boolean");
  return v.raw == "true";
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  return has(key) ? get_bool(key) : fallback;
}

std::vector<double> Config::get_double_array(const std::string& key) const {
  const Value& v = require(entries_, key);
  if (v.kind != Value::Kind::Array) bad_type(key, v, "array");
  std::vector<double> out;
  out.reserve(v.items.size());
  for (const Value& item : v.items) {
    if (item.kind != Value::Kind::Float && item.kind != Value::Kind::Integer)
      bad_type(key, item, "number array");
    out.push_back(parse_float_raw(key, item));
  }
  return out;
}

std::vector<std::string> Config::get_string_array(const std::string& key) const {
  const Value& v = require(entries_, key);
  if (v.kind != Value::Kind::Array) bad_type(key, v, "array");
  std::vector<std::string> out;
  out.reserve(v.items.size());
  for (const Value& item : v.items) {
    if (item.kind != Value::Kind::String) bad_type(key, item, "string array");
    out.push_back(item.raw);
  }
  return out;
}

std::string Config::fingerprint() const {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64_str(text_)));
  return buf;
}

}  // namespace dataclone::config
