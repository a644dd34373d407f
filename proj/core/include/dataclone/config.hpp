#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace dataclone::config {

// Parsed value from the key/value config grammar (a TOML-compatible subset:
// [sections], key = value, # comments, basic strings, integers, floats with
// inf, booleans, single-line arrays). Scalars keep their source token so the
// typed getters can parse without loss.
struct Value {
  enum class Kind { String, Integer, Float, Boolean, Array };

  Kind kind = Kind::String;
  std::string raw;            // scalar token, or unescaped text for strings
  std::vector<Value> items;   // array elements
  size_t line = 0;            // 1-based source line, for error messages
};

class Config {
 public:
  Config() = default;

  // Parse failures carry the offending line number in the message.
  static Config parse(const std::string& text);
  static Config load(const std::filesystem::path& path);

  bool has(const std::string& key) const;

  // Keys are dotted "section.name" paths. Getters without a fallback fail on
  // missing keys; all getters fail on a type mismatch.
  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  int64_t get_int(const std::string& key) const;
  int64_t get_int(const std::string& key, int64_t fallback) const;
  uint64_t get_u64(const std::string& key) const;
  uint64_t get_u64(const std::string& key, uint64_t fallback) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_double_array(const std::string& key) const;
  std::vector<std::string> get_string_array(const std::string& key) const;

  // Raw config text and its hash; the manifest records the fingerprint so
  // reruns can detect config drift.
  const std::string& text() const { return text_; }
  std::string fingerprint() const;

  const std::map<std::string, Value>& entries() const { return entries_; }

 private:
  std::string text_;
  std::map<std::string, Value> entries_;
};

}  // namespace dataclone::config
