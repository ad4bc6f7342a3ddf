#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "loopforge/assessment.hpp"
#include "loopforge/corpus.hpp"
#include "loopforge/gateway.hpp"

namespace loopforge {

enum class FilterMethod { score, ppl, density, density_ppl };
enum class DensityPick { random, medoid };
// conditional: PPL of the output given the instruction prompt.
// joint: PPL of instruction prompt followed by output, without context.
enum class PplMode { conditional, joint };

std::string_view to_string(FilterMethod m);
FilterMethod filter_method_from_string(std::string_view s);
DensityPick density_pick_from_string(std::string_view s);
PplMode ppl_mode_from_string(std::string_view s);

struct FilterConfig {
  FilterMethod method = FilterMethod::score;
  int threshold = 8;  // -1: no filtering at all; 0: no score filtering
  double ppl_max = 50.0;
  std::size_t cluster_count = 3000;
  DensityPick density_pick = DensityPick::random;
  std::size_t per_cluster = 1;
  PplMode ppl_mode = PplMode::conditional;
  int kmeans_max_iters = 100;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

/// Keeps records whose required score(s) are strictly greater than C.
/// C <= 0 keeps everything.
std::vector<PairRecord> score_filter(const std::vector<PairRecord>& records, int threshold,
                                     AssessmentLevel level);

/// exp(-mean logprob). Requires at least one token.
double perplexity(std::span<const TokenLogprob> tokens);

/// Computes, stores and returns the record's PPL.
double compute_ppl(PairRecord& record, const ModelRef& model, Gateway& gateway,
                   PplMode mode = PplMode::conditional);

/// Keeps records with ppl <= ppl_max.
std::vector<PairRecord> ppl_filter(const std::vector<PairRecord>& records, double ppl_max);

/// instruction, input and output joined by newlines.
std::string embedding_text(const PairRecord& record);

/// Clusters record embeddings into K groups and keeps `per_cluster` records
/// from each non-empty cluster. Missing embeddings are fetched and stored.
std::vector<PairRecord> density_filter(std::vector<PairRecord>& records, std::size_t k, DensityPick pick,
                                       const ModelRef& model, Gateway& gateway, std::uint64_t rng_seed,
                                       std::size_t per_cluster = 1, int max_iters = 100);

/// Per cluster, keeps the lowest-PPL record (ties to the lowest record id).
std::vector<PairRecord> density_ppl_filter(std::vector<PairRecord>& records, std::size_t k,
                                           const ModelRef& model, Gateway& gateway, std::uint64_t rng_seed,
                                           std::size_t per_cluster = 1, PplMode mode = PplMode::conditional,
                                           int max_iters = 100);

struct FilterOutcome {
  std::vector<PairRecord> kept;      // input order
  std::vector<PairRecord> rejected;  // rejected_by set
};

/// Dispatches on config.method. Records that arrive already rejected pass
/// through to `rejected` untouched.
FilterOutcome run_filter_stage(std::vector<PairRecord> records, const FilterConfig& config,
                               AssessmentLevel level, const ModelRef& model, Gateway& gateway);

// Index-returning forms used by the stage runner and by tests.
std::vector<std::size_t> score_filter_indices(const std::vector<PairRecord>& records, int threshold,
                                              AssessmentLevel level);
std::vector<std::size_t> density_select(const std::vector<PairRecord>& records,
                                        const std::vector<std::size_t>& assignments, std::size_t k,
                                        const std::vector<std::vector<double>>& centroids, DensityPick pick,
                                        std::size_t per_cluster, std::uint64_t rng_seed);
std::vector<std::size_t> density_ppl_select(const std::vector<PairRecord>& records,
                                            const std::vector<std::size_t>& assignments, std::size_t k,
                                            std::size_t per_cluster);

}  // namespace loopforge
