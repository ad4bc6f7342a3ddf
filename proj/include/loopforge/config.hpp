#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include "loopforge/assessment.hpp"
#include "loopforge/corpus.hpp"
#include "loopforge/filtering.hpp"
#include "loopforge/http_gateway.hpp"
#include "loopforge/mock_gateway.hpp"
#include "loopforge/synthesis.hpp"

namespace loopforge {

struct TrainerHyper {
  double learning_rate = 5e-5;
  double epochs = 2.0;
  int cutoff_len = 1024;
  int lora_rank = 8;
  int lora_alpha = 16;
  double lora_dropout = 0.05;
  int warmup_steps = 20;
  int max_samples = 3000;
  double val_size = 0.1;
};

struct TrainerSpec {
  enum class Kind { mock, external_command } kind = Kind::mock;
  std::optional<std::string> command;
  TrainerHyper hyper;

  void validate() const;
};

struct GatewayConfig {
  enum class Backend { mock, http } backend = Backend::mock;
  MockConfig mock;
  HttpGatewayConfig http;
};

std::unique_ptr<Gateway> make_gateway(const GatewayConfig& config);

enum class ClockMode { wall, fixed };

/// Everything one run needs. `raw` is the canonical JSON the typed fields were
/// parsed from (paths resolved, run_dir removed); its digest identifies the
/// run for resume checks.
struct RunConfig {
  int iterations = 1;
  std::size_t target_pairs = 10000;
  Strategy strategy = Strategy::one_base;
  std::uint64_t rng_seed = 0;
  fs::path seed_pool;
  ModelRef base_model = ModelRef::base("base");
  std::size_t call_budget = 0;  // generation calls per iteration; 0 derives one from target_pairs
  SynthesisOptions synthesis;
  AssessmentConfig assessment;
  FilterConfig filter;
  TrainerSpec trainer;
  GatewayConfig gateway;
  ClockMode clock = ClockMode::wall;
  fs::path run_dir;

  nlohmann::json raw;

  /// Relative paths inside `j` resolve against `base_dir`.
  static RunConfig from_json(nlohmann::json j, const fs::path& base_dir);
  static RunConfig load(const fs::path& path);

  std::size_t effective_call_budget() const;
  std::string digest() const;
  void validate() const;
};

}  // namespace loopforge
