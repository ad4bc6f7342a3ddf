#include "loopforge/synthesis.hpp"

#include <regex>
#include <unordered_map>

#include "loopforge/assets.inc"
#include "loopforge/rouge.hpp"
#include "loopforge/text.hpp"

namespace loopforge {

namespace {

constexpr std::string_view kNoInput = "<noinput>";

}  // namespace

MetaPrompt MetaPrompt::standard() { return MetaPrompt{std::string(assets::meta_prompt), 20}; }

MetaPrompt MetaPrompt::load(const fs::path& path, int tasks_per_call) {
  std::string body = read_file(path);
  while (!body.empty() && (body.back() == '\n' || body.back() == '\r')) body.pop_back();
  MetaPrompt m{std::move(body), tasks_per_call};
  m.validate();
  return m;
}

void MetaPrompt::validate() const {
  require(tasks_per_call > 0, "meta prompt: tasks_per_call must be > 0");
  require(text::count_occurrences(template_text, "{demos}") == 1,
          "meta prompt: template must contain exactly one {demos} slot");
}

std::vector<std::string> default_blacklist() {
  return {"image", "images", "graph", "graphs", "picture", "pictures", "file", "files", "map",
          "maps", "draw", "plot", "go to", "video", "audio", "music", "flowchart", "diagram"};
}

void HeuristicRules::validate() const {
  require(min_instruction_words < max_instruction_words,
          "heuristic rules: min_instruction_words must be < max_instruction_words");
  require(rouge_threshold > 0.0 && rouge_threshold <= 1.0, "heuristic rules: rouge_threshold must lie in (0,1]");
}

std::string_view to_string(RejectReason r) {
  switch (r) {
    case RejectReason::too_short: return "too_short";
    case RejectReason::too_long: return "too_long";
    case RejectReason::blacklisted: return "blacklisted";
    case RejectReason::too_similar: return "too_similar";
  }
  return "unknown";
}

std::vector<TaskDraft> sample_icl_demos(const std::vector<SeedTask>& seed_pool,
                                        const std::vector<TaskDraft>& generated_pool,
                                        std::size_t n_seed, std::size_t n_gen, Rng& rng) {
  require(!seed_pool.empty(), "sample_icl_demos: seed pool is empty");
  require(n_seed <= seed_pool.size(), "sample_icl_demos: n_seed (" + std::to_string(n_seed) +
                                          ") exceeds seed pool size (" + std::to_string(seed_pool.size()) + ")");
  std::vector<TaskDraft> demos;
  demos.reserve(n_seed + n_gen);
  for (std::size_t i : rng.sample_indices(seed_pool.size(), n_seed)) {
    demos.push_back({seed_pool[i].instruction, seed_pool[i].input});
  }
  const std::size_t gen = std::min(n_gen, generated_pool.size());
  for (std::size_t i : rng.sample_indices(generated_pool.size(), gen)) demos.push_back(generated_pool[i]);
  return demos;
}

std::string build_generation_prompt(const std::vector<TaskDraft>& demos, const MetaPrompt& meta) {
  require(!demos.empty(), "build_generation_prompt: need at least one demo");
  meta.validate();
  std::string block;
  for (std::size_t i = 0; i < demos.size(); ++i) {
    const std::string n = std::to_string(i + 1);
    block += "###\n";
    block += n + ". Instruction: " + demos[i].instruction + "\n";
    block += n + ". Input:\n" + (demos[i].input ? *demos[i].input : std::string(kNoInput)) + "\n";
  }
  block += "###\n" + std::to_string(demos.size() + 1) + ". Instruction:";
  const std::string count = std::to_string(meta.tasks_per_call);
  return text::fill_slots(meta.template_text, {{"demos", block}, {"num_tasks", count}});
}

ParsedTasks parse_generated_tasks(std::string_view completion) {
  static const std::regex kInstructionHeader(R"(^\s*\d+\s*\.\s*Instruction\s*:)");
  static const std::regex kInputMarker(R"(\d+\s*\.\s*Input\s*:)");
  static const std::regex kOutputMarker(R"(\d+\s*\.\s*Output\s*:)");

  ParsedTasks out;
  std::size_t pos = 0;
  while (pos <= completion.size()) {
    std::size_t sep = completion.find("###", pos);
    if (sep == std::string_view::npos) sep = completion.size();
    const std::string block(text::trim(completion.substr(pos, sep - pos)));
    pos = sep + 3;
    if (block.empty()) continue;

    std::smatch input_match;
    if (!std::regex_search(block, input_match, kInputMarker)) {
      ++out.dropped_blocks;
      continue;
    }
    std::string head = block.substr(0, static_cast<std::size_t>(input_match.position(0)));
    std::string tail = input_match.suffix().str();
    head = std::regex_replace(head, kInstructionHeader, "", std::regex_constants::format_first_only);
    std::smatch output_match;
    if (std::regex_search(tail, output_match, kOutputMarker)) {
      tail = tail.substr(0, static_cast<std::size_t>(output_match.position(0)));
    }

    TaskDraft task;
    task.instruction = std::string(text::trim(head));
    const std::string_view input = text::trim(tail);
    if (!input.empty() && input != kNoInput) task.input = std::string(input);
    // A header with nothing after it is the unfilled slot, not a task.
    if (task.instruction.empty() || task.instruction.find("Instruction:") != std::string::npos) {
      ++out.dropped_blocks;
      continue;
    }
    out.tasks.push_back(std::move(task));
  }
  return out;
}

std::optional<RejectReason> check_heuristics(const TaskDraft& candidate, const HeuristicRules& rules,
                                             const SimilarityIndex& index) {
  if (!rules.enabled) return std::nullopt;
  const std::size_t words = text::word_count(candidate.instruction);
  if (words < rules.min_instruction_words) return RejectReason::too_short;
  if (words > rules.max_instruction_words) return RejectReason::too_long;
  for (const auto& word : rules.blacklist) {
    if (text::contains_word_icase(candidate.instruction, word)) return RejectReason::blacklisted;
  }
  if (index.max_similarity(candidate.instruction, rules.rouge_threshold) >= rules.rouge_threshold) {
    return RejectReason::too_similar;
  }
  return std::nullopt;
}

HeuristicOutcome heuristic_filter(const std::vector<TaskDraft>& candidates,
                                  const std::vector<std::string>& existing_pool,
                                  const HeuristicRules& rules) {
  if (rules.enabled) rules.validate();
  SimilarityIndex index;
  for (const auto& s : existing_pool) index.add(s);
  HeuristicOutcome out;
  for (const auto& c : candidates) {
    if (auto reason = check_heuristics(c, rules, index)) {
      out.rejected.emplace_back(c, *reason);
    } else {
      out.kept.push_back(c);
      index.add(c.instruction);
    }
  }
  return out;
}

std::vector<PairRecord> generate_responses(const std::vector<TaskDraft>& tasks, int iteration,
                                           const ModelRef& model, Gateway& gateway,
                                           const GenerationParams& params, std::size_t max_inflight) {
  std::vector<std::string> prompts;
  prompts.reserve(tasks.size());
  for (const auto& t : tasks) {
    require(!text::trim(t.instruction).empty(), "generate_responses: task without instruction");
    prompts.push_back(render_instruction(t.instruction, t.input));
  }
  const auto results = gateway.complete_batch(model, prompts, params, max_inflight);

  std::vector<PairRecord> records;
  records.reserve(tasks.size());
  std::unordered_map<std::string, int> seen_ids;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    PairRecord r;
    r.iteration = iteration;
    r.instruction = tasks[i].instruction;
    r.input = tasks[i].input;
    r.id = make_record_id(iteration, r.instruction, r.input);
    if (const int dup = seen_ids[r.id]++; dup > 0) r.id += "-" + std::to_string(dup);
    if (results[i].ok()) {
      r.output = results[i].completion->text;
      if (text::trim(*r.output).empty()) r.reject(RejectStage::heuristic);
    } else {
      r.reject(RejectStage::heuristic);
    }
    records.push_back(std::move(r));
  }
  return records;
}

SynthesisResult synthesize_batch(const ModelRef& model, const std::vector<SeedTask>& seed_pool,
                                 std::size_t target_count, std::size_t call_budget,
                                 const SynthesisOptions& options, Gateway& gateway, Rng& rng) {
  require(target_count >= 1, "synthesize_batch: target_count must be >= 1");
  require(options.max_inflight >= 1, "synthesize_batch: max_inflight must be >= 1");
  options.meta.validate();
  if (options.rules.enabled) options.rules.validate();

  SynthesisResult result;
  SynthesisStats& stats = result.stats;
  SimilarityIndex index;
  if (options.rules.enabled) {
    for (const auto& s : seed_pool) index.add(s.instruction);
  }
  std::vector<TaskDraft> kept;

  while (kept.size() < target_count && stats.generation_calls < call_budget) {
    const std::size_t round = std::min(options.max_inflight, call_budget - stats.generation_calls);
    std::vector<std::string> prompts;
    prompts.reserve(round);
    for (std::size_t r = 0; r < round; ++r) {
      const auto demos = sample_icl_demos(seed_pool, kept, options.n_seed, options.n_gen, rng);
      prompts.push_back(build_generation_prompt(demos, options.meta));
    }
    const auto replies = gateway.complete_batch(model, prompts, options.instruction_params, options.max_inflight);
    stats.generation_calls += round;

    // Commit in prompt order so the outcome does not depend on reply timing.
    for (const auto& reply : replies) {
      if (!reply.ok()) {
        ++stats.failed_calls;
        result.warnings.push_back("generation call failed: " + reply.error);
        continue;
      }
      ParsedTasks parsed = parse_generated_tasks(reply.completion->text);
      if (reply.completion->truncated && !parsed.tasks.empty()) {
        parsed.tasks.pop_back();
        ++parsed.dropped_blocks;
      }
      stats.dropped_blocks += parsed.dropped_blocks;
      stats.parsed_candidates += parsed.tasks.size();
      for (auto& task : parsed.tasks) {
        if (kept.size() >= target_count) break;
        if (auto reason = check_heuristics(task, options.rules, index)) {
          switch (*reason) {
            case RejectReason::too_short:
            case RejectReason::too_long: ++stats.rejected_length; break;
            case RejectReason::blacklisted: ++stats.rejected_blacklist; break;
            case RejectReason::too_similar: ++stats.rejected_similarity; break;
          }
          continue;
        }
        if (options.rules.enabled) index.add(task.instruction);
        kept.push_back(std::move(task));
      }
    }
  }

  if (kept.size() < target_count) {
    stats.budget_exhausted = true;
    result.warnings.push_back("call budget of " + std::to_string(call_budget) + " exhausted after " +
                              std::to_string(kept.size()) + " of " + std::to_string(target_count) +
                              " tasks");
  }
  result.records = generate_responses(kept, options.iteration, model, gateway, options.response_params,
                                      options.max_inflight);
  return result;
}

}  // namespace loopforge
