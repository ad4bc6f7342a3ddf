#include "helpers.hpp"

#include <cmath>
#include <vector>

#include "loopforge/kernels.hpp"

using namespace loopforge;
namespace k = loopforge::kernels;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n, double scale = 10.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = (rng.unit() - 0.5) * scale;
  return v;
}

std::vector<k::Isa> simd_isas() {
  std::vector<k::Isa> out;
  for (auto isa : {k::Isa::avx2, k::Isa::neon}) {
    if (k::isa_available(isa)) out.push_back(isa);
  }
  return out;
}

// Tolerance for reassociated sums: a few ulps of the sum of magnitudes.
double sum_tolerance(const std::vector<double>& a, const std::vector<double>& b) {
  double mag = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) mag += std::abs(a[i] * b[i]) + a[i] * a[i] + b[i] * b[i];
  return 1e-14 * (mag + 1.0);
}

}  // namespace

TEST_CASE("scalar kernels agree with direct formulas") {
  const auto& s = k::table_for(k::Isa::scalar);
  const std::vector<double> a{1, 2, 3}, b{4, -5, 6};
  CHECK(s.dot(a.data(), b.data(), 3) == doctest::Approx(12.0));
  CHECK(s.squared_distance(a.data(), b.data(), 3) == doctest::Approx(9 + 49 + 9));
  std::vector<double> y{1, 1, 1};
  s.axpy(2.0, a.data(), y.data(), 3);
  CHECK(y == std::vector<double>{3, 5, 7});
}

TEST_CASE("SIMD kernels match the scalar reference") {
  const auto isas = simd_isas();
  if (isas.empty()) {
    MESSAGE("no SIMD variant available on this machine; nothing to compare");
    return;
  }
  const auto& ref = k::table_for(k::Isa::scalar);
  Rng rng(3);
  for (auto isa : isas) {
    CAPTURE(k::to_string(isa));
    const auto& simd = k::table_for(isa);
    CHECK(simd.isa == isa);
    for (std::size_t n : {0u, 1u, 2u, 3u, 4u, 5u, 7u, 8u, 9u, 15u, 16u, 17u, 31u, 64u, 127u, 1536u}) {
      CAPTURE(n);
      for (int trial = 0; trial < 20; ++trial) {
        const auto a = random_vec(rng, n), b = random_vec(rng, n);
        const double tol = sum_tolerance(a, b);
        CHECK(std::abs(simd.dot(a.data(), b.data(), n) - ref.dot(a.data(), b.data(), n)) <= tol);
        CHECK(std::abs(simd.squared_distance(a.data(), b.data(), n) -
                       ref.squared_distance(a.data(), b.data(), n)) <= tol);
        auto y1 = random_vec(rng, n), y2 = y1;
        const double alpha = rng.unit() * 4 - 2;
        ref.axpy(alpha, a.data(), y1.data(), n);
        simd.axpy(alpha, a.data(), y2.data(), n);
        for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(y1[i] - y2[i]) <= 1e-13 * (std::abs(y1[i]) + 1));
      }
    }
  }
}

TEST_CASE("nearest_row agrees across ISAs, including ties") {
  const auto& ref = k::table_for(k::Isa::scalar);
  Rng rng(9);
  for (std::size_t dim : {1u, 2u, 3u, 4u, 5u, 8u, 13u}) {
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t kk = 1 + rng.below(8);
      std::vector<double> cents;
      for (std::size_t c = 0; c < kk; ++c) {
        // Integer coordinates make exact ties likely.
        for (std::size_t j = 0; j < dim; ++j) cents.push_back(static_cast<double>(rng.below(3)));
      }
      std::vector<double> p(dim);
      for (auto& x : p) x = static_cast<double>(rng.below(3));
      double d_ref = 0;
      const auto i_ref = ref.nearest_row(p.data(), cents.data(), kk, dim, &d_ref);
      // Oracle: first index with the minimum distance.
      std::size_t best = 0;
      double best_d = INFINITY;
      for (std::size_t c = 0; c < kk; ++c) {
        double d = 0;
        for (std::size_t j = 0; j < dim; ++j) d += (p[j] - cents[c * dim + j]) * (p[j] - cents[c * dim + j]);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      CHECK(i_ref == best);
      CHECK(d_ref == best_d);
      for (auto isa : simd_isas()) {
        double d = 0;
        CHECK(k::table_for(isa).nearest_row(p.data(), cents.data(), kk, dim, &d) == best);
        CHECK(d == best_d);
      }
    }
  }
}

TEST_CASE("active table can be pinned") {
  const k::Isa before = k::active().isa;
  k::set_active(k::Isa::scalar);
  CHECK(k::active().isa == k::Isa::scalar);
  k::set_active(before);
  CHECK(k::active().isa == before);
  if (!k::isa_available(k::Isa::neon)) CHECK_THROWS(k::table_for(k::Isa::neon));
}
