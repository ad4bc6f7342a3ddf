#include "loopforge/kmeans.hpp"

#include <algorithm>
#include <thread>

#include "loopforge/error.hpp"
#include "loopforge/kernels.hpp"
#include "loopforge/rng.hpp"

namespace loopforge {

namespace {

struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  const double* row(std::size_t i) const { return data.data() + i * cols; }
  double* row(std::size_t i) { return data.data() + i * cols; }
};

Matrix flatten(const std::vector<std::vector<double>>& vectors) {
  Matrix m;
  m.rows = vectors.size();
  m.cols = vectors.front().size();
  m.data.reserve(m.rows * m.cols);
  for (const auto& v : vectors) {
    if (v.size() != m.cols) fail(ErrorCode::invalid_argument, "kmeans: vectors differ in dimension");
    m.data.insert(m.data.end(), v.begin(), v.end());
  }
  return m;
}

Matrix seed_plus_plus(const Matrix& points, std::size_t k, Rng& rng) {
  const auto& kt = kernels::active();
  Matrix centroids{k, points.cols, std::vector<double>(k * points.cols)};
  std::vector<bool> chosen(points.rows, false);
  std::vector<double> d2(points.rows);

  auto take = [&](std::size_t c, std::size_t idx) {
    chosen[idx] = true;
    std::copy_n(points.row(idx), points.cols, centroids.row(c));
  };

  take(0, rng.below(points.rows));
  for (std::size_t i = 0; i < points.rows; ++i) {
    d2[i] = kt.squared_distance(points.row(i), centroids.row(0), points.cols);
  }
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < points.rows; ++i) total += chosen[i] ? 0.0 : d2[i];
    std::size_t pick = points.rows;
    if (total > 0.0) {
      double u = rng.unit() * total;
      for (std::size_t i = 0; i < points.rows; ++i) {
        if (chosen[i] || d2[i] <= 0.0) continue;
        pick = i;
        u -= d2[i];
        if (u < 0.0) break;
      }
    }
    if (pick == points.rows) {
      // All remaining points coincide with a centroid.
      pick = static_cast<std::size_t>(std::find(chosen.begin(), chosen.end(), false) - chosen.begin());
    }
    take(c, pick);
    for (std::size_t i = 0; i < points.rows; ++i) {
      d2[i] = std::min(d2[i], kt.squared_distance(points.row(i), centroids.row(c), points.cols));
    }
  }
  return centroids;
}

double assign(const Matrix& points, const Matrix& centroids, std::vector<std::size_t>& out,
              std::size_t threads) {
  const auto& kt = kernels::active();
  std::vector<double> dist(points.rows);
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      out[i] = kt.nearest_row(points.row(i), centroids.data.data(), centroids.rows, points.cols, &dist[i]);
    }
  };
  threads = std::max<std::size_t>(1, std::min(threads, points.rows));
  if (threads == 1) {
    work(0, points.rows);
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (points.rows + threads - 1) / threads;
    for (std::size_t t = 0; t < threads; ++t) {
      const std::size_t b = t * chunk, e = std::min(points.rows, b + chunk);
      if (b < e) pool.emplace_back(work, b, e);
    }
    for (auto& th : pool) th.join();
  }
  // Summed in index order so the objective does not depend on thread count.
  double objective = 0.0;
  for (double d : dist) objective += d;
  return objective;
}

void update(const Matrix& points, const std::vector<std::size_t>& assignment, Matrix& centroids) {
  const auto& kt = kernels::active();
  Matrix sums{centroids.rows, centroids.cols, std::vector<double>(centroids.data.size(), 0.0)};
  std::vector<std::size_t> counts(centroids.rows, 0);
  for (std::size_t i = 0; i < points.rows; ++i) {
    kt.axpy(1.0, points.row(i), sums.row(assignment[i]), points.cols);
    ++counts[assignment[i]];
  }
  for (std::size_t c = 0; c < centroids.rows; ++c) {
    if (counts[c] == 0) continue;
    const double inv = 1.0 / static_cast<double>(counts[c]);
    double* dst = centroids.row(c);
    const double* src = sums.row(c);
    for (std::size_t j = 0; j < centroids.cols; ++j) dst[j] = src[j] * inv;
  }
}

}  // namespace

KMeansResult kmeans(const std::vector<std::vector<double>>& vectors, std::size_t k,
                    const KMeansOptions& options) {
  require(k >= 1, "kmeans: K must be >= 1");
  if (vectors.size() < k) {
    fail(ErrorCode::invalid_argument, "kmeans: " + std::to_string(vectors.size()) + " points cannot form K=" +
                                          std::to_string(k) + " clusters; choose a smaller K");
  }
  require(options.max_iters >= 1, "kmeans: max_iters must be >= 1");
  const Matrix points = flatten(vectors);
  require(points.cols > 0, "kmeans: zero-dimensional vectors");

  Rng rng(options.seed);
  Matrix centroids = seed_plus_plus(points, k, rng);

  KMeansResult result;
  result.assignments.assign(points.rows, 0);
  result.objective_history.push_back(assign(points, centroids, result.assignments, options.threads));
  std::vector<std::size_t> next(points.rows);
  for (int it = 1; it <= options.max_iters; ++it) {
    update(points, result.assignments, centroids);
    const double objective = assign(points, centroids, next, options.threads);
    result.objective_history.push_back(objective);
    result.iterations = it;
    const bool unchanged = next == result.assignments;
    result.assignments.swap(next);
    if (unchanged) {
      result.converged = true;
      break;
    }
  }

  result.centroids.resize(k);
  for (std::size_t c = 0; c < k; ++c) {
    result.centroids[c].assign(centroids.row(c), centroids.row(c) + centroids.cols);
  }
  return result;
}

}  // namespace loopforge
