#include "loopforge/analysis.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "loopforge/filtering.hpp"
#include "loopforge/hashing.hpp"
#include "loopforge/kernels.hpp"
#include "loopforge/rng.hpp"
#include "loopforge/rouge.hpp"

namespace loopforge {

using nlohmann::json;

std::string_view to_string(AxisMode m) {
  switch (m) {
    case AxisMode::quality: return "quality";
    case AxisMode::following: return "following";
    case AxisMode::both: return "both";
  }
  return "both";
}

AxisMode axis_mode_from_string(std::string_view s) {
  if (s == "quality") return AxisMode::quality;
  if (s == "following") return AxisMode::following;
  if (s == "both") return AxisMode::both;
  fail(ErrorCode::invalid_argument, "unknown axis mode '" + std::string(s) + "'");
}

ProportionRow proportion_row(int t, const std::vector<PairRecord>& records, int threshold, AxisMode mode) {
  ProportionRow row;
  row.t = t;
  row.axis_mode = mode;
  row.generated = records.size();
  auto above = [&](const std::optional<double>& s) { return s && *s > threshold; };
  for (const auto& r : records) {
    bool ok = false;
    switch (mode) {
      case AxisMode::quality: ok = above(r.quality_score); break;
      case AxisMode::following: ok = above(r.following_score); break;
      case AxisMode::both: ok = above(r.quality_score) && above(r.following_score); break;
    }
    if (ok) ++row.high_quality;
  }
  row.proportion = row.generated ? static_cast<double>(row.high_quality) / static_cast<double>(row.generated) : 0.0;
  return row;
}

ProportionSeries high_quality_proportion(const fs::path& run_dir, int threshold, AxisMode mode) {
  ProportionSeries series;
  for (int t = 1;; ++t) {
    const fs::path manifest = manifest_path(run_dir, t);
    const fs::path iter_dir = run_dir / ("iter_" + std::to_string(t));
    std::error_code ec;
    const bool has_manifest = fs::exists(manifest, ec);
    if (!has_manifest && !fs::is_directory(iter_dir, ec)) break;
    fs::path scored = iter_dir / "scored.jsonl";
    if (has_manifest) scored = run_dir / read_manifest(run_dir, t).scored_path;
    if (!fs::is_regular_file(scored, ec)) {
      fail(ErrorCode::not_found, "iteration " + std::to_string(t) + ": scored dataset " + scored.string() + " is missing");
    }
    series.rows.push_back(proportion_row(t, load_dataset(scored, t), threshold, mode));
  }
  if (series.rows.empty()) fail(ErrorCode::not_found, "no iterations found in " + run_dir.string());
  return series;
}

namespace {

// y = C v with C the population covariance of the centered rows, computed
// without materializing C.
void covariance_times(const std::vector<std::vector<double>>& centered, const std::vector<double>& v,
                      std::vector<double>& y) {
  const auto& kt = kernels::active();
  std::fill(y.begin(), y.end(), 0.0);
  const std::size_t d = v.size();
  for (const auto& x : centered) kt.axpy(kt.dot(x.data(), v.data(), d), x.data(), y.data(), d);
  const double inv_n = 1.0 / static_cast<double>(centered.size());
  for (auto& e : y) e *= inv_n;
}

double norm(const std::vector<double>& v) {
  return std::sqrt(kernels::active().dot(v.data(), v.data(), v.size()));
}

void orthogonalize(std::vector<double>& v, const std::vector<std::vector<double>>& basis) {
  const auto& kt = kernels::active();
  for (const auto& b : basis) kt.axpy(-kt.dot(b.data(), v.data(), v.size()), b.data(), v.data(), v.size());
}

// Entries below the convergence noise floor count as zero.
void fix_sign(std::vector<double>& v) {
  for (double x : v) {
    if (std::abs(x) > 1e-6) {
      if (x < 0) {
        for (auto& e : v) e = -e;
      }
      return;
    }
  }
}

std::vector<double> start_vector(std::size_t d, std::uint64_t stream) {
  std::vector<double> v(d);
  Rng rng(derive_seed(0x5eed, "pca." + std::to_string(stream)));
  for (auto& e : v) e = rng.unit() - 0.5;
  return v;
}

// Unit vector in the orthogonal complement of `basis`, used when the
// remaining covariance is zero.
std::vector<double> complement_vector(std::size_t d, const std::vector<std::vector<double>>& basis) {
  for (std::size_t i = 0; i < d; ++i) {
    std::vector<double> v(d, 0.0);
    v[i] = 1.0;
    orthogonalize(v, basis);
    const double n = norm(v);
    if (n > 1e-6) {
      for (auto& e : v) e /= n;
      return v;
    }
  }
  return std::vector<double>(d, 0.0);
}

constexpr double kTolerance = 1e-9;
constexpr int kMaxIterations = 1000;

}  // namespace

PcaProjection pca_project(const std::vector<std::vector<double>>& target,
                          const std::vector<std::vector<double>>& reference) {
  require(reference.size() >= 2, "pca_project: reference needs at least 2 vectors");
  const std::size_t d = reference.front().size();
  require(d >= 2, "pca_project: vectors need at least 2 dimensions");
  for (const auto& r : reference) require(r.size() == d, "pca_project: reference vectors differ in dimension");
  for (const auto& x : target) require(x.size() == d, "pca_project: target dimension differs from reference");

  PcaProjection p;
  p.mean.assign(d, 0.0);
  for (const auto& r : reference) {
    for (std::size_t j = 0; j < d; ++j) p.mean[j] += r[j];
  }
  for (auto& m : p.mean) m /= static_cast<double>(reference.size());

  std::vector<std::vector<double>> centered = reference;
  double total_variance = 0.0;
  for (auto& x : centered) {
    for (std::size_t j = 0; j < d; ++j) x[j] -= p.mean[j];
    total_variance += kernels::active().dot(x.data(), x.data(), d);
  }
  total_variance /= static_cast<double>(reference.size());
  if (!(total_variance > 1e-300)) fail(ErrorCode::invalid_argument, "pca_project: reference has zero variance");

  std::vector<std::vector<double>> basis;
  std::vector<double> y(d);
  for (std::size_t c = 0; c < 2; ++c) {
    std::vector<double> v = start_vector(d, c);
    orthogonalize(v, basis);
    double n = norm(v);
    if (n == 0.0) v = complement_vector(d, basis);
    else for (auto& e : v) e /= n;
    double lambda = 0.0;
    for (int it = 0; it < kMaxIterations; ++it) {
      covariance_times(centered, v, y);
      orthogonalize(y, basis);
      n = norm(y);
      if (n <= total_variance * 1e-15) {
        lambda = 0.0;
        v = complement_vector(d, basis);
        break;
      }
      for (auto& e : y) e /= n;
      double delta = 0.0;
      for (std::size_t j = 0; j < d; ++j) delta = std::max(delta, std::abs(y[j] - v[j]));
      v.swap(y);
      lambda = n;
      if (delta < kTolerance) break;
    }
    fix_sign(v);
    covariance_times(centered, v, y);
    lambda = kernels::active().dot(v.data(), y.data(), d);
    p.eigenvalues[c] = std::max(lambda, 0.0);
    basis.push_back(v);
    p.components[c] = std::move(v);
  }

  auto project = [&](const std::vector<double>& x) {
    std::vector<double> z(d);
    for (std::size_t j = 0; j < d; ++j) z[j] = x[j] - p.mean[j];
    return Point2{kernels::active().dot(z.data(), p.components[0].data(), d),
                  kernels::active().dot(z.data(), p.components[1].data(), d)};
  };
  for (const auto& x : target) p.target.push_back(project(x));
  for (const auto& x : reference) p.reference.push_back(project(x));
  return p;
}

DiversityReport diversity_report(const std::vector<std::string>& instructions, std::size_t sample_n,
                                 std::uint64_t rng_seed, std::size_t bins) {
  require(bins >= 1, "diversity_report: bins must be >= 1");
  std::vector<std::size_t> picked;
  if (sample_n >= instructions.size()) {
    for (std::size_t i = 0; i < instructions.size(); ++i) picked.push_back(i);
  } else {
    Rng rng(derive_seed(rng_seed, "diversity"));
    picked = rng.sample_indices(instructions.size(), sample_n);
    std::sort(picked.begin(), picked.end());
  }

  DiversityReport r;
  r.sample_size = picked.size();
  r.histogram.assign(bins, 0);
  r.nearest.assign(picked.size(), 0.0);
  double sum = 0.0;
  for (std::size_t a = 0; a < picked.size(); ++a) {
    for (std::size_t b = a + 1; b < picked.size(); ++b) {
      const double s = rouge_l(instructions[picked[a]], instructions[picked[b]]);
      sum += s;
      ++r.pairs;
      r.max_pairwise = std::max(r.max_pairwise, s);
      r.nearest[a] = std::max(r.nearest[a], s);
      r.nearest[b] = std::max(r.nearest[b], s);
    }
  }
  if (r.pairs > 0) r.mean_pairwise = sum / static_cast<double>(r.pairs);
  if (picked.size() >= 2) {
    for (double s : r.nearest) {
      const auto bin = std::min(bins - 1, static_cast<std::size_t>(s * static_cast<double>(bins)));
      ++r.histogram[bin];
    }
  }
  return r;
}

DiversityReport diversity_report(const fs::path& dataset, std::size_t sample_n, std::uint64_t rng_seed,
                                 std::size_t bins) {
  std::vector<std::string> instructions;
  for (const auto& rec : load_dataset(dataset)) instructions.push_back(rec.instruction);
  return diversity_report(instructions, sample_n, rng_seed, bins);
}

std::vector<std::vector<double>> embed_records(const std::vector<PairRecord>& records, const ModelRef& model,
                                               Gateway& gateway, std::size_t max_inflight) {
  std::vector<std::vector<double>> out(records.size());
  std::vector<std::string> errors(records.size());
  run_bounded(records.size(), max_inflight, [&](std::size_t i) {
    try {
      out[i] = gateway.embed(model, embedding_text(records[i]));
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!errors[i].empty()) fail(ErrorCode::transport, "embedding record " + records[i].id + ": " + errors[i]);
  }
  return out;
}

namespace {

// Shortest form that round-trips.
std::string fmt(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

void write_proportion_csv(const ProportionSeries& s, const fs::path& path) {
  std::string out = "t,generated,high_quality,proportion,axis_mode\n";
  for (const auto& r : s.rows) {
    out += std::to_string(r.t) + "," + std::to_string(r.generated) + "," + std::to_string(r.high_quality) + "," +
           fmt(r.proportion) + "," + std::string(to_string(r.axis_mode)) + "\n";
  }
  write_file_atomic(path, out);
}

json to_json(const ProportionSeries& s) {
  json rows = json::array();
  for (const auto& r : s.rows) {
    rows.push_back({{"t", r.t},
                    {"generated", r.generated},
                    {"high_quality", r.high_quality},
                    {"proportion", r.proportion},
                    {"axis_mode", to_string(r.axis_mode)}});
  }
  return {{"rows", rows}};
}

void write_pca_csv(const PcaProjection& p, const fs::path& path) {
  std::string out = "set,index,pc1,pc2\n";
  auto emit = [&](std::string_view set, const std::vector<Point2>& pts) {
    for (std::size_t i = 0; i < pts.size(); ++i) {
      out += std::string(set) + "," + std::to_string(i) + "," + fmt(pts[i][0]) + "," + fmt(pts[i][1]) + "\n";
    }
  };
  emit("target", p.target);
  emit("reference", p.reference);
  write_file_atomic(path, out);
}

json to_json(const PcaProjection& p) {
  return {{"eigenvalues", p.eigenvalues},
          {"components", p.components},
          {"target_count", p.target.size()},
          {"reference_count", p.reference.size()}};
}

void write_diversity_csv(const DiversityReport& r, const fs::path& path) {
  std::string out = "bin_low,bin_high,count\n";
  const double width = 1.0 / static_cast<double>(r.histogram.size());
  for (std::size_t i = 0; i < r.histogram.size(); ++i) {
    out += fmt(width * static_cast<double>(i)) + "," + fmt(width * static_cast<double>(i + 1)) + "," +
           std::to_string(r.histogram[i]) + "\n";
  }
  write_file_atomic(path, out);
}

json to_json(const DiversityReport& r) {
  return {{"sample_size", r.sample_size},
          {"pairs", r.pairs},
          {"mean_pairwise_rouge_l", r.mean_pairwise},
          {"max_pairwise_rouge_l", r.max_pairwise},
          {"nearest_neighbor_histogram", r.histogram}};
}

}  // namespace loopforge
