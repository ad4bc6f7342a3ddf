#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "loopforge/corpus.hpp"
#include "loopforge/gateway.hpp"

namespace loopforge {

enum class AxisMode { quality, following, both };

std::string_view to_string(AxisMode m);
AxisMode axis_mode_from_string(std::string_view s);

struct ProportionRow {
  int t = 0;
  std::size_t generated = 0;
  std::size_t high_quality = 0;
  double proportion = 0.0;
  AxisMode axis_mode = AxisMode::both;
};

struct ProportionSeries {
  std::vector<ProportionRow> rows;
};

/// Share of each iteration's scored records whose required score(s) exceed C.
/// Iterations are discovered from manifests or iter_<t> directories.
ProportionSeries high_quality_proportion(const fs::path& run_dir, int threshold, AxisMode mode);

/// Same count over one iteration's records.
ProportionRow proportion_row(int t, const std::vector<PairRecord>& records, int threshold, AxisMode mode);

using Point2 = std::array<double, 2>;

struct PcaProjection {
  std::array<std::vector<double>, 2> components;
  std::array<double, 2> eigenvalues{};
  std::vector<double> mean;
  std::vector<Point2> target;
  std::vector<Point2> reference;
};

/// Top-2 principal axes of the reference set (population covariance), with
/// both sets projected onto them after centering at the reference mean.
PcaProjection pca_project(const std::vector<std::vector<double>>& target,
                          const std::vector<std::vector<double>>& reference);

struct DiversityReport {
  std::size_t sample_size = 0;
  std::size_t pairs = 0;
  double mean_pairwise = 0.0;
  double max_pairwise = 0.0;
  std::vector<double> nearest;         // per sampled instruction
  std::vector<std::size_t> histogram;  // nearest-neighbour ROUGE-L, equal-width bins over [0,1]
};

DiversityReport diversity_report(const std::vector<std::string>& instructions, std::size_t sample_n,
                                 std::uint64_t rng_seed, std::size_t bins = 10);
DiversityReport diversity_report(const fs::path& dataset, std::size_t sample_n, std::uint64_t rng_seed,
                                 std::size_t bins = 10);

/// Embeds embedding_text() of each record.
std::vector<std::vector<double>> embed_records(const std::vector<PairRecord>& records, const ModelRef& model,
                                               Gateway& gateway, std::size_t max_inflight);

void write_proportion_csv(const ProportionSeries& s, const fs::path& path);
nlohmann::json to_json(const ProportionSeries& s);
void write_pca_csv(const PcaProjection& p, const fs::path& path);
nlohmann::json to_json(const PcaProjection& p);
void write_diversity_csv(const DiversityReport& r, const fs::path& path);
nlohmann::json to_json(const DiversityReport& r);

}  // namespace loopforge
