#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace dataclone {

using Json = nlohmann::json;

// Reads a JSON-lines file; blank lines are rejected. Throws
// Error(ParseError) carrying the 1-based line number on malformed input.
std::vector<Json> read_jsonl(const std::filesystem::path& path);

// Writes one compact JSON object per line, LF endings, atomically
// (temp file in the same directory, then rename).
void write_jsonl(const std::filesystem::path& path, const std::vector<Json>& rows);

// Atomic whole-file writes for non-JSONL artifacts.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

std::string read_file(const std::filesystem::path& path);

// FNV-1a hash of a file's bytes as a fixed-width hex string.
std::string file_fingerprint(const std::filesystem::path& path);

}  // namespace dataclone
