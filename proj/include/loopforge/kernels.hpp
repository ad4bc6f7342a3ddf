#pragma once

// Dense vector kernels behind the embedding math (k-means assignment, PCA
// power iteration). Each kernel has a scalar reference implementation and
// optional SIMD variants; the active table is chosen once at startup from the
// CPU's capabilities and can be pinned with LOOPFORGE_ISA=scalar|avx2|neon.

#include <cstddef>
#include <span>
#include <string_view>

namespace loopforge::kernels {

enum class Isa { scalar, avx2, neon };

std::string_view to_string(Isa isa);

struct KernelTable {
  Isa isa;
  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*squared_distance)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // Index of the row of `centroids` (k rows of length n, row-major) nearest to
  // `point`; ties go to the lowest index. Writes the squared distance.
  std::size_t (*nearest_row)(const double* point, const double* centroids, std::size_t k,
                             std::size_t n, double* best_distance);
};

namespace scalar {
const KernelTable& table();
}
#if defined(LOOPFORGE_HAVE_AVX2)
namespace avx2 {
const KernelTable& table();
}
#endif
#if defined(LOOPFORGE_HAVE_NEON)
namespace neon {
const KernelTable& table();
}
#endif

bool isa_available(Isa isa);

/// Table for a specific ISA; throws if it is not compiled in or unsupported.
const KernelTable& table_for(Isa isa);

/// The process-wide table in use.
const KernelTable& active();

/// Overrides the active table (tests and benchmarking).
void set_active(Isa isa);

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  return active().squared_distance(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x.data(), y.data(), x.size());
}

}  // namespace loopforge::kernels
