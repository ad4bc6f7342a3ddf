#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace loopforge {

/// ROUGE-L F-measure over whitespace tokens: with L the longest common
/// subsequence length, P = L/|b|, R = L/|a| and F = 2PR/(P+R) = 2L/(|a|+|b|).
/// Zero when either side is empty or L = 0. Symmetric.
double rouge_l(std::string_view a, std::string_view b);

std::size_t lcs_length(std::span<const std::uint32_t> a, std::span<const std::uint32_t> b);

/// Instructions tokenized once into interned ids so many-against-many ROUGE-L
/// checks avoid re-splitting strings.
class SimilarityIndex {
 public:
  void add(std::string_view text);
  std::size_t size() const { return entries_.size(); }

  /// Highest ROUGE-L of `text` against any indexed entry. Stops early once a
  /// value >= stop_at is found, so the result is exact only below stop_at.
  double max_similarity(std::string_view text, double stop_at = 2.0) const;

 private:
  std::vector<std::uint32_t> lookup(std::string_view text) const;

  std::unordered_map<std::string, std::uint32_t> vocab_;
  std::vector<std::vector<std::uint32_t>> entries_;
};

}  // namespace loopforge
