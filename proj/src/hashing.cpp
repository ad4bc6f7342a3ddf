#include "loopforge/hashing.hpp"

#include <openssl/evp.h>

#include <array>
#include <fstream>
#include <memory>

#include "loopforge/error.hpp"

namespace loopforge {

namespace {

using Digest = std::array<unsigned char, 32>;

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new(), &EVP_MD_CTX_free) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1) {
      fail(ErrorCode::io, "sha256: digest init failed");
    }
  }

  void update(std::string_view data) {
    EVP_DigestUpdate(ctx_.get(), data.data(), data.size());
  }

  Digest finish() {
    Digest out{};
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx_.get(), out.data(), &len);
    return out;
  }

 private:
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx_;
};

std::string to_hex(const Digest& d) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(d.size() * 2);
  for (unsigned char c : d) {
    out.push_back(kHex[c >> 4]);
    out.push_back(kHex[c & 0xF]);
  }
  return out;
}

}  // namespace

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::parse: return "parse";
    case ErrorCode::not_found: return "not_found";
    case ErrorCode::already_exists: return "already_exists";
    case ErrorCode::capability: return "capability";
    case ErrorCode::transport: return "transport";
    case ErrorCode::protocol: return "protocol";
    case ErrorCode::digest_mismatch: return "digest_mismatch";
    case ErrorCode::training: return "training";
    case ErrorCode::io: return "io";
  }
  return "unknown";
}

std::string sha256_hex(std::string_view data) {
  Sha256 h;
  h.update(data);
  return to_hex(h.finish());
}

std::string sha256_parts(std::initializer_list<std::string_view> parts) {
  Sha256 h;
  for (auto p : parts) {
    const std::string len = std::to_string(p.size()) + ":";
    h.update(len);
    h.update(p);
  }
  return to_hex(h.finish());
}

std::uint64_t hash64(std::string_view data) {
  Sha256 h;
  h.update(data);
  const Digest d = h.finish();
  std::uint64_t x = 0;
  for (int i = 0; i < 8; ++i) x = (x << 8) | d[i];
  return x;
}

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::not_found, "cannot open " + path);
  Sha256 h;
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    h.update(std::string_view(buf.data(), static_cast<std::size_t>(in.gcount())));
  }
  return to_hex(h.finish());
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream) {
  return splitmix64(seed ^ hash64(stream));
}

}  // namespace loopforge
