#pragma once

#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "loopforge/config.hpp"
#include "loopforge/corpus.hpp"
#include "loopforge/gateway.hpp"

namespace loopforge {

struct IterationInputs {
  ModelRef generator;
  ModelRef train_base;
  std::vector<std::string> train_datasets;  // relative to the run directory
};

/// Dataset path of iteration t inside a run directory.
std::string filtered_dataset_path(int t);

/// `history` must hold the complete manifests of iterations 1..t-1 in order.
IterationInputs select_iteration_inputs(Strategy strategy, int t,
                                        const std::vector<IterationManifest>& history,
                                        const ModelRef& base);

/// Trainer contract arguments, without the command itself.
std::vector<std::string> trainer_arguments(const TrainerHyper& hyper, const ModelRef& base,
                                           const std::vector<fs::path>& datasets, const fs::path& out_dir);

/// Full shell command line, each argument quoted.
std::string trainer_command_line(const TrainerSpec& spec, const ModelRef& base,
                                 const std::vector<fs::path>& datasets, const fs::path& out_dir);

/// Runs the trainer and returns the model it produced. The external command
/// logs to out_dir/train.log and must leave out_dir/model_ref.json behind.
ModelRef train(const TrainerSpec& spec, const ModelRef& base, const std::vector<fs::path>& datasets,
               const fs::path& out_dir);

struct RunResult {
  ModelRef final_model;
  fs::path final_dataset;
  std::vector<IterationManifest> manifests;
  std::vector<int> executed;  // iterations run by this call
};

class Engine {
 public:
  using StageHook = std::function<void(int t, std::string_view stage)>;
  using Logger = std::function<void(std::string_view)>;

  Engine(RunConfig config, Gateway& gateway);

  /// Runs t = 1..T, skipping iterations whose manifest is already complete.
  /// A run directory created under a different config is refused.
  RunResult run();

  IterationManifest run_iteration(int t, const std::vector<IterationManifest>& history);

  /// Called as each stage starts; a throwing hook fails that stage.
  void set_stage_hook(StageHook hook) { hook_ = std::move(hook); }
  void set_logger(Logger log) { log_ = std::move(log); }

  const RunConfig& config() const { return config_; }

 private:
  void prepare_run_dir();
  std::string now() const;
  void log(std::string_view msg) const;

  RunConfig config_;
  Gateway& gateway_;
  StageHook hook_;
  Logger log_;
};

/// Loads run_dir/config.json and continues the run it describes.
RunConfig load_run_config(const fs::path& run_dir);
RunResult resume(const fs::path& run_dir, Gateway& gateway, Engine::Logger log = {});

}  // namespace loopforge
