#include "helpers.hpp"

#include "loopforge/hashing.hpp"
#include "loopforge/text.hpp"

using namespace loopforge;

TEST_CASE("sha256 matches published vectors") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("sha256_parts separates part boundaries") {
  CHECK(sha256_parts({"ab", "c"}) != sha256_parts({"a", "bc"}));
  CHECK(sha256_parts({"ab", "c"}) == sha256_parts({"ab", "c"}));
}

TEST_CASE("sha256_file hashes contents") {
  lftest::TempDir dir;
  lftest::write_text(dir / "f.txt", "abc");
  CHECK(sha256_file((dir / "f.txt").string()) == sha256_hex("abc"));
  CHECK_THROWS_CODE(sha256_file((dir / "missing").string()), ErrorCode::not_found);
}

TEST_CASE("derive_seed gives distinct streams") {
  CHECK(derive_seed(1, "a") != derive_seed(1, "b"));
  CHECK(derive_seed(1, "a") != derive_seed(2, "a"));
  CHECK(derive_seed(1, "a") == derive_seed(1, "a"));
}

TEST_CASE("trim, split and word count") {
  CHECK(text::trim("  a b \n") == "a b");
  CHECK(text::trim("   ").empty());
  const auto toks = text::split_whitespace(" one\ttwo \n three ");
  REQUIRE(toks.size() == 3);
  CHECK(toks[2] == "three");
  CHECK(text::word_count("") == 0);
}

TEST_CASE("contains_word_icase respects word boundaries") {
  CHECK(text::contains_word_icase("Draw a picture of a cat", "picture"));
  CHECK(text::contains_word_icase("Draw a PICTURE.", "picture"));
  CHECK_FALSE(text::contains_word_icase("Describe the pictures", "picture"));
  CHECK(text::contains_word_icase("Please go to the store", "go to"));
  CHECK_FALSE(text::contains_word_icase("ergo tomorrow", "go to"));
}

TEST_CASE("fill_slots is single pass") {
  CHECK(text::fill_slots("{a} and {b}", {{"a", "{b}"}, {"b", "x"}}) == "{b} and x");
  CHECK(text::fill_slots("{unknown}", {{"a", "1"}}) == "{unknown}");
}

TEST_CASE("truncate_at_stop cuts at the earliest stop") {
  std::string s = "hello END world STOP";
  CHECK(text::truncate_at_stop(s, {"STOP", "END"}));
  CHECK(s == "hello ");
  std::string t = "nothing";
  CHECK_FALSE(text::truncate_at_stop(t, {"x"}));
}

TEST_CASE("Rng draws are reproducible and in range") {
  Rng a(5), b(5);
  for (int i = 0; i < 1000; ++i) {
    const auto x = a.below(7);
    CHECK(x == b.below(7));
    CHECK(x < 7);
    const double u = a.unit();
    CHECK(u == b.unit());
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  auto idx = a.sample_indices(10, 4);
  CHECK(idx.size() == 4);
  std::sort(idx.begin(), idx.end());
  CHECK(std::adjacent_find(idx.begin(), idx.end()) == idx.end());
  CHECK(a.sample_indices(3, 10).size() == 3);
}
