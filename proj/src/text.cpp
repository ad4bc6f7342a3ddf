#include "loopforge/text.hpp"

#include <algorithm>
#include <cctype>

namespace loopforge::text {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_alnum(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }
char lower(char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }

}  // namespace

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), lower);
  return out;
}

std::vector<std::string_view> split_whitespace(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && is_space(s[i])) ++i;
    const std::size_t start = i;
    while (i < s.size() && !is_space(s[i])) ++i;
    if (i > start) out.push_back(s.substr(start, i - start));
  }
  return out;
}

std::size_t word_count(std::string_view s) { return split_whitespace(s).size(); }

bool starts_with_icase(std::string_view s, std::string_view prefix) {
  if (s.size() < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (lower(s[i]) != lower(prefix[i])) return false;
  }
  return true;
}

bool contains_word_icase(std::string_view haystack, std::string_view needle) {
  needle = trim(needle);
  if (needle.empty() || haystack.size() < needle.size()) return false;
  const std::string h = to_lower(haystack);
  const std::string n = to_lower(needle);
  std::size_t pos = h.find(n);
  while (pos != std::string::npos) {
    const bool left_ok = pos == 0 || !is_alnum(h[pos - 1]);
    const std::size_t end = pos + n.size();
    const bool right_ok = end == h.size() || !is_alnum(h[end]);
    if (left_ok && right_ok) return true;
    pos = h.find(n, pos + 1);
  }
  return false;
}

bool truncate_at_stop(std::string& s, const std::vector<std::string>& stops) {
  std::size_t cut = std::string::npos;
  for (const auto& stop : stops) {
    if (stop.empty()) continue;
    cut = std::min(cut, s.find(stop));
  }
  if (cut == std::string::npos) return false;
  s.resize(cut);
  return true;
}

std::string fill_slots(std::string_view tmpl,
                       const std::vector<std::pair<std::string_view, std::string_view>>& values) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      const std::size_t close = tmpl.find('}', i + 1);
      if (close != std::string_view::npos) {
        const std::string_view name = tmpl.substr(i + 1, close - i - 1);
        bool replaced = false;
        for (const auto& [key, value] : values) {
          if (key == name) {
            out += value;
            replaced = true;
            break;
          }
        }
        if (replaced) {
          i = close + 1;
          continue;
        }
      }
    }
    out += tmpl[i++];
  }
  return out;
}

std::size_t count_occurrences(std::string_view haystack, std::string_view needle) {
  if (needle.empty()) return 0;
  std::size_t n = 0;
  for (std::size_t pos = haystack.find(needle); pos != std::string_view::npos;
       pos = haystack.find(needle, pos + needle.size())) {
    ++n;
  }
  return n;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

}  // namespace loopforge::text
