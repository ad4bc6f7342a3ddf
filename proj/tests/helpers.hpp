#pragma once

#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <string>
#include <unistd.h>

#include "loopforge/corpus.hpp"
#include "loopforge/error.hpp"
#include "loopforge/rng.hpp"

namespace lftest {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("loopforge_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline fs::path source_dir() { return fs::path(LOOPFORGE_SOURCE_DIR); }

inline loopforge::PairRecord record(std::string instruction, std::optional<std::string> output,
                                    std::optional<int> quality = std::nullopt,
                                    std::optional<int> following = std::nullopt) {
  loopforge::PairRecord r;
  r.instruction = std::move(instruction);
  r.output = std::move(output);
  r.quality_score = quality;
  r.following_score = following;
  r.id = loopforge::make_record_id(1, r.instruction, r.input);
  return r;
}

inline void write_text(const fs::path& p, const std::string& s) {
  fs::create_directories(p.parent_path());
  loopforge::write_file_atomic(p, s);
}

/// Random token string over a small vocabulary so overlaps are common.
inline std::string random_tokens(loopforge::Rng& rng, std::size_t max_len, std::size_t vocab) {
  const std::size_t n = rng.below(max_len + 1);
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) out += ' ';
    out += "w" + std::to_string(rng.below(vocab));
  }
  return out;
}

}  // namespace lftest

#define CHECK_THROWS_CODE(expr, expected_code)                    \
  do {                                                            \
    bool lf_threw = false;                                        \
    try {                                                         \
      (void)(expr);                                               \
    } catch (const loopforge::Error& lf_e) {                      \
      lf_threw = true;                                            \
      CHECK_MESSAGE(lf_e.code() == (expected_code), lf_e.what()); \
    }                                                             \
    CHECK_MESSAGE(lf_threw, "expected loopforge::Error");         \
  } while (0)
