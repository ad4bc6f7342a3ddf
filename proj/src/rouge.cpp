#include "loopforge/rouge.hpp"

#include <algorithm>

#include "loopforge/text.hpp"

namespace loopforge {

namespace {

template <typename T>
std::size_t lcs(std::span<const T> a, std::span<const T> b) {
  if (a.empty() || b.empty()) return 0;
  if (a.size() < b.size()) std::swap(a, b);
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double f_measure(std::size_t l, std::size_t m, std::size_t n) {
  if (l == 0) return 0.0;
  return 2.0 * static_cast<double>(l) / static_cast<double>(m + n);
}

}  // namespace

double rouge_l(std::string_view a, std::string_view b) {
  const auto ta = text::split_whitespace(a);
  const auto tb = text::split_whitespace(b);
  const std::size_t l = lcs<std::string_view>(ta, tb);
  return f_measure(l, ta.size(), tb.size());
}

std::size_t lcs_length(std::span<const std::uint32_t> a, std::span<const std::uint32_t> b) {
  return lcs<std::uint32_t>(a, b);
}

void SimilarityIndex::add(std::string_view s) {
  std::vector<std::uint32_t> ids;
  for (auto tok : text::split_whitespace(s)) {
    auto [it, inserted] = vocab_.try_emplace(std::string(tok), static_cast<std::uint32_t>(vocab_.size()));
    ids.push_back(it->second);
  }
  entries_.push_back(std::move(ids));
}

std::vector<std::uint32_t> SimilarityIndex::lookup(std::string_view s) const {
  std::vector<std::uint32_t> ids;
  // Unknown tokens get fresh ids past the vocabulary so they match nothing.
  auto unknown = static_cast<std::uint32_t>(vocab_.size());
  for (auto tok : text::split_whitespace(s)) {
    auto it = vocab_.find(std::string(tok));
    ids.push_back(it != vocab_.end() ? it->second : unknown++);
  }
  return ids;
}

double SimilarityIndex::max_similarity(std::string_view s, double stop_at) const {
  const auto q = lookup(s);
  if (q.empty()) return 0.0;
  double best = 0.0;
  for (const auto& e : entries_) {
    if (e.empty()) continue;
    const double bound = f_measure(std::min(q.size(), e.size()), q.size(), e.size());
    if (bound <= best) continue;
    const double f = f_measure(lcs_length(q, e), q.size(), e.size());
    if (f > best) {
      best = f;
      if (best >= stop_at) break;
    }
  }
  return best;
}

}  // namespace loopforge
