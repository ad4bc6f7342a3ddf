#include "loopforge/kernels.hpp"

namespace loopforge::kernels::scalar {

namespace {

double dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double squared_distance(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

std::size_t nearest_row(const double* point, const double* centroids, std::size_t k,
                        std::size_t n, double* best_distance) {
  std::size_t best = 0;
  double best_d = squared_distance(point, centroids, n);
  for (std::size_t c = 1; c < k; ++c) {
    const double d = squared_distance(point, centroids + c * n, n);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  if (best_distance) *best_distance = best_d;
  return best;
}

}  // namespace

const KernelTable& table() {
  static const KernelTable t{Isa::scalar, &dot, &squared_distance, &axpy, &nearest_row};
  return t;
}

}  // namespace loopforge::kernels::scalar
