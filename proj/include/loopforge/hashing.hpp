#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <string_view>

namespace loopforge {

/// Lowercase hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

/// SHA-256 over the concatenation of the parts, each prefixed by its length so
/// ("ab","c") and ("a","bc") hash differently.
std::string sha256_parts(std::initializer_list<std::string_view> parts);

/// First 8 bytes of SHA-256 as an integer; used to seed deterministic streams.
std::uint64_t hash64(std::string_view data);

std::string sha256_file(const std::string& path);

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives an independent seed for a named sub-stream of `seed`.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream);

}  // namespace loopforge
