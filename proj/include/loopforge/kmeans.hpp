#pragma once

#include <cstdint>
#include <vector>

namespace loopforge {

struct KMeansOptions {
  int max_iters = 100;
  std::uint64_t seed = 0;
  std::size_t threads = 1;  // parallel assignment step when > 1
};

struct KMeansResult {
  std::vector<std::size_t> assignments;
  std::vector<std::vector<double>> centroids;
  // Sum of squared distances to the assigned centroid after each assignment
  // step; non-increasing.
  std::vector<double> objective_history;
  int iterations = 0;
  bool converged = false;
};

/// Lloyd's algorithm with k-means++ seeding. Each point ends assigned to its
/// nearest returned centroid, ties to the lowest centroid index. A cluster that
/// empties keeps its previous centroid.
KMeansResult kmeans(const std::vector<std::vector<double>>& vectors, std::size_t k,
                    const KMeansOptions& options = {});

}  // namespace loopforge
