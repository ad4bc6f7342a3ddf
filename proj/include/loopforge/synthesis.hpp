#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "loopforge/corpus.hpp"
#include "loopforge/gateway.hpp"
#include "loopforge/rng.hpp"

namespace loopforge {

/// An instruction with its optional input: what the model is asked to invent.
struct TaskDraft {
  std::string instruction;
  std::optional<std::string> input;

  bool operator==(const TaskDraft&) const = default;
};

/// Meta-prompt with a `{demos}` slot (exactly one) and any number of
/// `{num_tasks}` slots.
struct MetaPrompt {
  std::string template_text;
  int tasks_per_call = 20;

  static MetaPrompt standard();
  static MetaPrompt load(const fs::path& path, int tasks_per_call = 20);
  void validate() const;
};

std::vector<std::string> default_blacklist();

struct HeuristicRules {
  bool enabled = true;
  std::size_t min_instruction_words = 3;
  std::size_t max_instruction_words = 150;
  std::vector<std::string> blacklist = default_blacklist();
  double rouge_threshold = 0.7;

  void validate() const;
};

enum class RejectReason { too_short, too_long, blacklisted, too_similar };

std::string_view to_string(RejectReason r);

struct HeuristicOutcome {
  std::vector<TaskDraft> kept;
  std::vector<std::pair<TaskDraft, RejectReason>> rejected;
};

std::vector<TaskDraft> sample_icl_demos(const std::vector<SeedTask>& seed_pool,
                                        const std::vector<TaskDraft>& generated_pool,
                                        std::size_t n_seed, std::size_t n_gen, Rng& rng);

std::string build_generation_prompt(const std::vector<TaskDraft>& demos, const MetaPrompt& meta);

struct ParsedTasks {
  std::vector<TaskDraft> tasks;
  std::size_t dropped_blocks = 0;
};

/// Never throws: blocks that do not look like a task are dropped and counted.
ParsedTasks parse_generated_tasks(std::string_view completion);

class SimilarityIndex;

/// Checks one candidate against the rules and, for similarity, against
/// `index`. Does not modify the index.
std::optional<RejectReason> check_heuristics(const TaskDraft& candidate, const HeuristicRules& rules,
                                             const SimilarityIndex& index);

/// Keeps candidates in order; each kept instruction joins the comparison set
/// for later candidates.
HeuristicOutcome heuristic_filter(const std::vector<TaskDraft>& candidates,
                                  const std::vector<std::string>& existing_pool,
                                  const HeuristicRules& rules);

/// Zero-shot answers. Gateway failures leave output absent, empty answers leave
/// it empty; both are rejected at the heuristic stage.
std::vector<PairRecord> generate_responses(const std::vector<TaskDraft>& tasks, int iteration,
                                           const ModelRef& model, Gateway& gateway,
                                           const GenerationParams& params, std::size_t max_inflight);

struct SynthesisOptions {
  MetaPrompt meta = MetaPrompt::standard();
  HeuristicRules rules;
  std::size_t n_seed = 6;
  std::size_t n_gen = 2;
  GenerationParams instruction_params{1.0, 1.0, 1024, {}, std::nullopt};
  GenerationParams response_params{0.7, 1.0, 1024, {}, std::nullopt};
  std::size_t max_inflight = 4;
  int iteration = 1;
};

struct SynthesisStats {
  std::size_t generation_calls = 0;
  std::size_t failed_calls = 0;
  std::size_t parsed_candidates = 0;
  std::size_t dropped_blocks = 0;
  std::size_t rejected_length = 0;
  std::size_t rejected_blacklist = 0;
  std::size_t rejected_similarity = 0;
  bool budget_exhausted = false;
};

struct SynthesisResult {
  std::vector<PairRecord> records;
  SynthesisStats stats;
  std::vector<std::string> warnings;
};

/// Generates tasks until `target_count` survive the heuristics or
/// `call_budget` generation calls have been spent, then answers them.
/// Returns min(target_count, produced) records.
SynthesisResult synthesize_batch(const ModelRef& model, const std::vector<SeedTask>& seed_pool,
                                 std::size_t target_count, std::size_t call_budget,
                                 const SynthesisOptions& options, Gateway& gateway, Rng& rng);

}  // namespace loopforge
