#pragma once

#include <unistd.h>

#include <cstdint>
#include <filesystem>
#include <string>

#include "dataclone/errors.hpp"

namespace testutil {

// Self-cleaning unique temp directory for artifact round-trip tests.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static uint64_t counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("dataclone-test-" + tag + "-" + std::to_string(::getpid()) + "-" +
             std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

}  // namespace testutil

// Asserts that `expr` throws dataclone::Error with the given code.
#define CHECK_FAILS_WITH(expr, expected_code)                   \
  do {                                                          \
    bool caught_ = false;                                       \
    try {                                                       \
      (void)(expr);                                             \
    } catch (const dataclone::Error& e_) {                      \
      caught_ = true;                                           \
      CHECK(e_.code() == (expected_code));                      \
    }                                                           \
    CHECK_MESSAGE(caught_, #expr " did not throw");             \
  } while (0)
