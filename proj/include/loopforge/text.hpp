#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace loopforge::text {

std::string_view trim(std::string_view s);
std::string to_lower(std::string_view s);
std::vector<std::string_view> split_whitespace(std::string_view s);
std::size_t word_count(std::string_view s);
bool starts_with_icase(std::string_view s, std::string_view prefix);

/// Case-insensitive search for `needle` bounded by non-alphanumeric characters
/// on both sides. Multi-word needles ("go to") match across single spaces.
bool contains_word_icase(std::string_view haystack, std::string_view needle);

/// Cuts `s` at the earliest occurrence of any stop sequence. Returns true if a
/// cut happened.
bool truncate_at_stop(std::string& s, const std::vector<std::string>& stops);

/// Single-pass substitution of `{name}` slots. Values are inserted verbatim
/// and never rescanned; unknown slots are left as they are.
std::string fill_slots(std::string_view tmpl,
                       const std::vector<std::pair<std::string_view, std::string_view>>& values);

std::size_t count_occurrences(std::string_view haystack, std::string_view needle);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

}  // namespace loopforge::text
