#include "loopforge/filtering.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <mutex>

#include "loopforge/hashing.hpp"
#include "loopforge/kernels.hpp"
#include "loopforge/kmeans.hpp"
#include "loopforge/rng.hpp"

namespace loopforge {

std::string_view to_string(FilterMethod m) {
  switch (m) {
    case FilterMethod::score: return "score";
    case FilterMethod::ppl: return "ppl";
    case FilterMethod::density: return "density";
    case FilterMethod::density_ppl: return "density_ppl";
  }
  return "score";
}

FilterMethod filter_method_from_string(std::string_view s) {
  if (s == "score") return FilterMethod::score;
  if (s == "ppl") return FilterMethod::ppl;
  if (s == "density") return FilterMethod::density;
  if (s == "density_ppl") return FilterMethod::density_ppl;
  fail(ErrorCode::invalid_argument, "unknown filter method '" + std::string(s) + "'");
}

DensityPick density_pick_from_string(std::string_view s) {
  if (s == "random") return DensityPick::random;
  if (s == "medoid") return DensityPick::medoid;
  fail(ErrorCode::invalid_argument, "unknown density pick '" + std::string(s) + "'");
}

PplMode ppl_mode_from_string(std::string_view s) {
  if (s == "conditional") return PplMode::conditional;
  if (s == "joint") return PplMode::joint;
  fail(ErrorCode::invalid_argument, "unknown ppl mode '" + std::string(s) + "'");
}

void FilterConfig::validate() const {
  require(threshold >= -1 && threshold <= 10, "filter: threshold C must lie in [-1,10]");
  require(ppl_max > 0.0, "filter: ppl_max must be > 0");
  require(cluster_count >= 1, "filter: cluster_count K must be >= 1");
  require(per_cluster >= 1, "filter: per_cluster must be >= 1");
  require(kmeans_max_iters >= 1, "filter: kmeans_max_iters must be >= 1");
}

namespace {

template <typename T>
std::vector<T> pick(const std::vector<T>& items, const std::vector<std::size_t>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(items[i]);
  return out;
}

// Runs fn for every index on the gateway's parallelism; rethrows the first
// failure by index once all calls have finished.
void for_each_call(std::size_t n, Gateway& gateway, const std::function<void(std::size_t)>& fn) {
  std::vector<std::exception_ptr> errors(n);
  run_bounded(n, gateway.default_inflight(), [&](std::size_t i) {
    try {
      fn(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  });
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

void ensure_ppl(std::vector<PairRecord>& records, const ModelRef& model, Gateway& gateway, PplMode mode) {
  for_each_call(records.size(), gateway, [&](std::size_t i) {
    if (!records[i].ppl) compute_ppl(records[i], model, gateway, mode);
  });
}

std::vector<std::vector<double>> ensure_embeddings(std::vector<PairRecord>& records, const ModelRef& model,
                                                   Gateway& gateway) {
  for_each_call(records.size(), gateway, [&](std::size_t i) {
    if (!records[i].embedding) records[i].embedding = gateway.embed(model, embedding_text(records[i]));
  });
  std::vector<std::vector<double>> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(*r.embedding);
  return out;
}

std::vector<std::vector<std::size_t>> members_by_cluster(const std::vector<std::size_t>& assignments,
                                                         std::size_t k) {
  std::vector<std::vector<std::size_t>> members(k);
  for (std::size_t i = 0; i < assignments.size(); ++i) members.at(assignments[i]).push_back(i);
  return members;
}

}  // namespace

std::vector<std::size_t> score_filter_indices(const std::vector<PairRecord>& records, int threshold,
                                              AssessmentLevel level) {
  std::vector<std::size_t> kept;
  kept.reserve(records.size());
  if (threshold <= 0) {
    for (std::size_t i = 0; i < records.size(); ++i) kept.push_back(i);
    return kept;
  }
  require(level != AssessmentLevel::none,
          "score_filter: threshold " + std::to_string(threshold) + " needs an assessment level");
  const auto axes = axes_for(level);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    bool pass = true;
    for (Axis axis : axes) {
      const auto& score = axis == Axis::quality ? r.quality_score : r.following_score;
      if (!score) {
        fail(ErrorCode::invalid_argument,
             "score_filter: record " + r.id + " has no " + std::string(to_string(axis)) + "_score");
      }
      pass = pass && *score > threshold;
    }
    if (pass) kept.push_back(i);
  }
  return kept;
}

std::vector<PairRecord> score_filter(const std::vector<PairRecord>& records, int threshold,
                                     AssessmentLevel level) {
  return pick(records, score_filter_indices(records, threshold, level));
}

double perplexity(std::span<const TokenLogprob> tokens) {
  require(!tokens.empty(), "perplexity: no tokens");
  double sum = 0.0;
  for (const auto& t : tokens) sum += t.logprob;
  return std::exp(-sum / static_cast<double>(tokens.size()));
}

double compute_ppl(PairRecord& record, const ModelRef& model, Gateway& gateway, PplMode mode) {
  if (!record.output) fail(ErrorCode::invalid_argument, "compute_ppl: record " + record.id + " has no output");
  const std::string prompt = render_instruction(record);
  std::vector<TokenLogprob> tokens;
  if (mode == PplMode::conditional) {
    tokens = gateway.token_logprobs(model, prompt, *record.output);
  } else {
    tokens = gateway.token_logprobs(model, "", prompt + "\n" + *record.output);
  }
  record.ppl = perplexity(tokens);
  return *record.ppl;
}

std::vector<PairRecord> ppl_filter(const std::vector<PairRecord>& records, double ppl_max) {
  std::vector<PairRecord> kept;
  for (const auto& r : records) {
    if (!r.ppl) fail(ErrorCode::invalid_argument, "ppl_filter: record " + r.id + " has no ppl");
    if (*r.ppl <= ppl_max) kept.push_back(r);
  }
  return kept;
}

std::string embedding_text(const PairRecord& record) {
  std::string s = record.instruction;
  if (record.input) s += "\n" + *record.input;
  if (record.output) s += "\n" + *record.output;
  return s;
}

std::vector<std::size_t> density_select(const std::vector<PairRecord>& records,
                                        const std::vector<std::size_t>& assignments, std::size_t k,
                                        const std::vector<std::vector<double>>& centroids, DensityPick how,
                                        std::size_t per_cluster, std::uint64_t rng_seed) {
  Rng rng(rng_seed);
  std::vector<std::size_t> kept;
  const auto members = members_by_cluster(assignments, k);
  for (std::size_t c = 0; c < k; ++c) {
    const auto& m = members[c];
    if (m.empty()) continue;
    const std::size_t take = std::min(per_cluster, m.size());
    if (how == DensityPick::random) {
      for (std::size_t j : rng.sample_indices(m.size(), take)) kept.push_back(m[j]);
    } else {
      std::vector<std::pair<double, std::size_t>> by_distance;
      for (std::size_t i : m) {
        by_distance.emplace_back(kernels::squared_distance(*records[i].embedding, centroids[c]), i);
      }
      std::sort(by_distance.begin(), by_distance.end());
      for (std::size_t j = 0; j < take; ++j) kept.push_back(by_distance[j].second);
    }
  }
  std::sort(kept.begin(), kept.end());
  return kept;
}

std::vector<std::size_t> density_ppl_select(const std::vector<PairRecord>& records,
                                            const std::vector<std::size_t>& assignments, std::size_t k,
                                            std::size_t per_cluster) {
  std::vector<std::size_t> kept;
  auto members = members_by_cluster(assignments, k);
  for (auto& m : members) {
    if (m.empty()) continue;
    std::sort(m.begin(), m.end(), [&](std::size_t a, std::size_t b) {
      const double pa = records[a].ppl.value(), pb = records[b].ppl.value();
      if (pa != pb) return pa < pb;
      return records[a].id < records[b].id;
    });
    const std::size_t take = std::min(per_cluster, m.size());
    kept.insert(kept.end(), m.begin(), m.begin() + static_cast<std::ptrdiff_t>(take));
  }
  std::sort(kept.begin(), kept.end());
  return kept;
}

namespace {

struct Clustering {
  std::vector<std::size_t> assignments;
  std::vector<std::vector<double>> centroids;
};

Clustering cluster_records(std::vector<PairRecord>& records, std::size_t k, const ModelRef& model,
                           Gateway& gateway, std::uint64_t rng_seed, int max_iters) {
  if (records.size() < k) {
    fail(ErrorCode::invalid_argument, "density filter: " + std::to_string(records.size()) +
                                          " records cannot form K=" + std::to_string(k) +
                                          " clusters; choose a smaller K");
  }
  const auto vectors = ensure_embeddings(records, model, gateway);
  auto result = kmeans(vectors, k, {max_iters, derive_seed(rng_seed, "density.kmeans"), 1});
  return {std::move(result.assignments), std::move(result.centroids)};
}

std::vector<std::size_t> density_indices(std::vector<PairRecord>& records, std::size_t k, DensityPick how,
                                         const ModelRef& model, Gateway& gateway, std::uint64_t rng_seed,
                                         std::size_t per_cluster, int max_iters) {
  const auto c = cluster_records(records, k, model, gateway, rng_seed, max_iters);
  return density_select(records, c.assignments, k, c.centroids, how, per_cluster,
                        derive_seed(rng_seed, "density.pick"));
}

std::vector<std::size_t> density_ppl_indices(std::vector<PairRecord>& records, std::size_t k,
                                             const ModelRef& model, Gateway& gateway, std::uint64_t rng_seed,
                                             std::size_t per_cluster, PplMode mode, int max_iters) {
  const auto c = cluster_records(records, k, model, gateway, rng_seed, max_iters);
  ensure_ppl(records, model, gateway, mode);
  return density_ppl_select(records, c.assignments, k, per_cluster);
}

}  // namespace

std::vector<PairRecord> density_filter(std::vector<PairRecord>& records, std::size_t k, DensityPick how,
                                       const ModelRef& model, Gateway& gateway, std::uint64_t rng_seed,
                                       std::size_t per_cluster, int max_iters) {
  return pick(records, density_indices(records, k, how, model, gateway, rng_seed, per_cluster, max_iters));
}

std::vector<PairRecord> density_ppl_filter(std::vector<PairRecord>& records, std::size_t k,
                                           const ModelRef& model, Gateway& gateway, std::uint64_t rng_seed,
                                           std::size_t per_cluster, PplMode mode, int max_iters) {
  return pick(records,
              density_ppl_indices(records, k, model, gateway, rng_seed, per_cluster, mode, max_iters));
}

FilterOutcome run_filter_stage(std::vector<PairRecord> records, const FilterConfig& config,
                               AssessmentLevel level, const ModelRef& model, Gateway& gateway) {
  config.validate();
  FilterOutcome out;
  std::vector<PairRecord> live;
  for (auto& r : records) {
    (r.kept() ? live : out.rejected).push_back(std::move(r));
  }

  std::vector<std::size_t> keep;
  RejectStage stage = RejectStage::score;
  if (config.threshold < 0) {
    for (std::size_t i = 0; i < live.size(); ++i) keep.push_back(i);
  } else {
    switch (config.method) {
      case FilterMethod::score:
        keep = score_filter_indices(live, config.threshold, level);
        break;
      case FilterMethod::ppl:
        stage = RejectStage::ppl;
        ensure_ppl(live, model, gateway, config.ppl_mode);
        for (std::size_t i = 0; i < live.size(); ++i) {
          if (*live[i].ppl <= config.ppl_max) keep.push_back(i);
        }
        break;
      case FilterMethod::density:
        stage = RejectStage::density;
        keep = density_indices(live, config.cluster_count, config.density_pick, model, gateway, config.rng_seed,
                               config.per_cluster, config.kmeans_max_iters);
        break;
      case FilterMethod::density_ppl:
        stage = RejectStage::density;
        keep = density_ppl_indices(live, config.cluster_count, model, gateway, config.rng_seed,
                                   config.per_cluster, config.ppl_mode, config.kmeans_max_iters);
        break;
    }
  }

  std::vector<bool> is_kept(live.size(), false);
  for (std::size_t i : keep) is_kept[i] = true;
  for (std::size_t i = 0; i < live.size(); ++i) {
    if (is_kept[i]) {
      out.kept.push_back(std::move(live[i]));
    } else {
      live[i].reject(stage);
      out.rejected.push_back(std::move(live[i]));
    }
  }
  return out;
}

}  // namespace loopforge
