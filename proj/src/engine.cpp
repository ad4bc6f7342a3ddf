#include "loopforge/engine.hpp"

#include <sys/wait.h>

#include <charconv>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <unordered_map>

#include "loopforge/assessment.hpp"
#include "loopforge/filtering.hpp"
#include "loopforge/hashing.hpp"
#include "loopforge/rng.hpp"
#include "loopforge/synthesis.hpp"
#include "loopforge/text.hpp"

namespace loopforge {

using nlohmann::json;

namespace {

std::string iter_dir_name(int t) { return "iter_" + std::to_string(t); }

// Shortest round-trip form, with a bare exponent ("5e-5") and a decimal point
// on integral values ("2.0").
std::string format_real(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  std::string s(buf, res.ptr);
  const auto e = s.find('e');
  if (e != std::string::npos) {
    std::string mant = s.substr(0, e);
    std::string exp = s.substr(e + 1);
    std::string sign;
    if (!exp.empty() && (exp[0] == '-' || exp[0] == '+')) {
      if (exp[0] == '-') sign = "-";
      exp.erase(0, 1);
    }
    while (exp.size() > 1 && exp[0] == '0') exp.erase(0, 1);
    return mant + "e" + sign + exp;
  }
  if (s.find('.') == std::string::npos) s += ".0";
  return s;
}

std::string shell_quote(std::string_view s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') out += "'\\''";
    else out += c;
  }
  out += '\'';
  return out;
}

std::string log_tail(const fs::path& log, std::size_t max_bytes = 4000) {
  std::error_code ec;
  if (!fs::exists(log, ec)) return {};
  std::string text = read_file(log);
  if (text.size() > max_bytes) text = text.substr(text.size() - max_bytes);
  return text;
}

ModelRef mock_train(const ModelRef& base, const std::vector<fs::path>& datasets, const fs::path& out_dir) {
  std::string acc = sha256_parts({"mock-trainer", base.locator});
  for (const auto& d : datasets) acc = sha256_parts({acc, sha256_file(d.string())});
  ModelRef out = ModelRef::finetuned("mock-ft-" + acc.substr(0, 16), base, out_dir.string());
  write_model_ref(out, out_dir / "model_ref.json");
  return out;
}

ModelRef external_train(const TrainerSpec& spec, const ModelRef& base, const std::vector<fs::path>& datasets,
                        const fs::path& out_dir) {
  const fs::path log = out_dir / "train.log";
  const std::string cmd = trainer_command_line(spec, base, datasets, out_dir) + " > " +
                          shell_quote(log.string()) + " 2>&1";
  const int status = std::system(cmd.c_str());
  if (status == -1) fail(ErrorCode::training, "trainer: could not start '" + *spec.command + "'");
  const int code = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
  if (code != 0) {
    fail(ErrorCode::training, "trainer exited with status " + std::to_string(code) + " (log: " + log.string() +
                                  ")\n" + log_tail(log));
  }
  const fs::path ref = out_dir / "model_ref.json";
  std::error_code ec;
  if (!fs::exists(ref, ec)) {
    fail(ErrorCode::training, "trainer succeeded but wrote no " + ref.string() + " (log: " + log.string() + ")");
  }
  const ModelRef out = read_model_ref(ref);
  return ModelRef::finetuned(out.locator, base, out.adapter_path ? out.adapter_path : out_dir.string());
}

std::string relative_to(const fs::path& p, const fs::path& root) {
  if (p.empty()) return {};
  const fs::path rel = fs::path(p).lexically_relative(root);
  if (rel.empty() || *rel.begin() == "..") return p.string();
  return rel.string();
}

}  // namespace

std::string filtered_dataset_path(int t) { return iter_dir_name(t) + "/filtered.jsonl"; }

IterationInputs select_iteration_inputs(Strategy strategy, int t, const std::vector<IterationManifest>& history,
                                        const ModelRef& base) {
  require(t >= 1, "select_iteration_inputs: t must be >= 1");
  if (strategy == Strategy::direct) require(t == 1, "select_iteration_inputs: direct runs a single iteration");
  if (history.size() < static_cast<std::size_t>(t - 1)) {
    fail(ErrorCode::invalid_argument, "select_iteration_inputs: history for iterations 1.." + std::to_string(t - 1) +
                                          " is missing (have " + std::to_string(history.size()) + ")");
  }
  for (int i = 1; i < t; ++i) {
    const auto& m = history[static_cast<std::size_t>(i - 1)];
    if (m.t != i || !m.complete() || !m.model_out) {
      fail(ErrorCode::invalid_argument,
           "select_iteration_inputs: history entry " + std::to_string(i) + " is not a complete manifest for t=" +
               std::to_string(i));
    }
  }

  IterationInputs in;
  in.generator = t == 1 ? base : *history[static_cast<std::size_t>(t - 2)].model_out;
  switch (strategy) {
    case Strategy::one_base:
    case Strategy::direct:
      in.train_base = base;
      in.train_datasets = {filtered_dataset_path(t)};
      break;
    case Strategy::one_last:
      in.train_base = in.generator;
      in.train_datasets = {filtered_dataset_path(t)};
      break;
    case Strategy::total_base:
      in.train_base = base;
      for (int i = 1; i <= t; ++i) in.train_datasets.push_back(filtered_dataset_path(i));
      break;
  }
  return in;
}

std::vector<std::string> trainer_arguments(const TrainerHyper& h, const ModelRef& base,
                                           const std::vector<fs::path>& datasets, const fs::path& out_dir) {
  std::vector<std::string> paths;
  for (const auto& d : datasets) paths.push_back(d.string());
  return {"--base",          base.locator,
          "--datasets",      text::join(paths, ","),
          "--output",        out_dir.string(),
          "--learning-rate", format_real(h.learning_rate),
          "--epochs",        format_real(h.epochs),
          "--cutoff-len",    std::to_string(h.cutoff_len),
          "--lora-rank",     std::to_string(h.lora_rank),
          "--lora-alpha",    std::to_string(h.lora_alpha),
          "--lora-dropout",  format_real(h.lora_dropout),
          "--warmup-steps",  std::to_string(h.warmup_steps),
          "--max-samples",   std::to_string(h.max_samples),
          "--val-size",      format_real(h.val_size)};
}

std::string trainer_command_line(const TrainerSpec& spec, const ModelRef& base,
                                 const std::vector<fs::path>& datasets, const fs::path& out_dir) {
  std::string line = spec.command ? *spec.command : std::string("<mock-trainer>");
  for (const auto& a : trainer_arguments(spec.hyper, base, datasets, out_dir)) line += " " + shell_quote(a);
  return line;
}

ModelRef train(const TrainerSpec& spec, const ModelRef& base, const std::vector<fs::path>& datasets,
               const fs::path& out_dir) {
  spec.validate();
  require(!datasets.empty(), "train: at least one dataset is required");
  for (const auto& d : datasets) {
    std::error_code ec;
    if (!fs::is_regular_file(d, ec)) fail(ErrorCode::not_found, "train: dataset " + d.string() + " does not exist");
  }
  fs::create_directories(out_dir);
  if (spec.kind == TrainerSpec::Kind::mock) return mock_train(base, datasets, out_dir);
  return external_train(spec, base, datasets, out_dir);
}

Engine::Engine(RunConfig config, Gateway& gateway) : config_(std::move(config)), gateway_(gateway) {
  config_.validate();
  require(!config_.run_dir.empty(), "engine: run_dir is not set");
}

std::string Engine::now() const {
  if (config_.clock == ClockMode::fixed) return "1970-01-01T00:00:00Z";
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void Engine::log(std::string_view msg) const {
  if (log_) log_(msg);
}

void Engine::prepare_run_dir() {
  fs::create_directories(config_.run_dir);
  const fs::path cfg = config_.run_dir / "config.json";
  std::error_code ec;
  if (fs::exists(cfg, ec)) {
    json stored;
    try {
      stored = json::parse(read_file(cfg));
    } catch (const json::exception& e) {
      fail(ErrorCode::parse, cfg.string() + ": " + e.what());
    }
    if (sha256_hex(stored.dump()) != config_.digest()) {
      fail(ErrorCode::digest_mismatch,
           "run directory " + config_.run_dir.string() + " was created with a different config");
    }
    return;
  }
  write_file_atomic(cfg, config_.raw.dump(2) + "\n");
}

IterationManifest Engine::run_iteration(int t, const std::vector<IterationManifest>& history) {
  const RunConfig& c = config_;
  const std::uint64_t seed_t = c.rng_seed ^ static_cast<std::uint64_t>(t);
  const IterationInputs inputs = select_iteration_inputs(c.strategy, t, history, c.base_model);
  const fs::path dir = c.run_dir / iter_dir_name(t);
  fs::create_directories(dir);

  IterationManifest m;
  m.t = t;
  m.strategy = c.strategy;
  m.model_in = inputs.generator;
  m.train_base = inputs.train_base;
  m.train_datasets = inputs.train_datasets;
  m.raw_path = iter_dir_name(t) + "/raw.jsonl";
  m.scored_path = iter_dir_name(t) + "/scored.jsonl";
  m.filtered_path = filtered_dataset_path(t);
  m.rejected_path = iter_dir_name(t) + "/rejected.jsonl";
  m.rng_seed = seed_t;
  m.config_digest = c.digest();
  m.started = now();

  std::string stage = "setup";
  auto enter = [&](std::string_view s) {
    stage = std::string(s);
    log("iteration " + std::to_string(t) + ": " + stage);
    if (hook_) hook_(t, s);
  };

  try {
    enter("synthesis");
    const auto seeds = load_seed_pool(c.seed_pool);
    SynthesisOptions opts = c.synthesis;
    opts.iteration = t;
    opts.instruction_params.rng_seed = derive_seed(seed_t, "generation");
    opts.response_params.rng_seed = derive_seed(seed_t, "response");
    Rng rng(derive_seed(seed_t, "synthesis"));
    SynthesisResult syn =
        synthesize_batch(inputs.generator, seeds, c.target_pairs, c.effective_call_budget(), opts, gateway_, rng);
    for (const auto& w : syn.warnings) log("iteration " + std::to_string(t) + ": warning: " + w);
    std::vector<PairRecord> records = std::move(syn.records);
    m.counts.generated = records.size();
    save_dataset(records, c.run_dir / m.raw_path, DatasetMode::scored);

    std::unordered_map<std::string, std::size_t> order;
    for (std::size_t i = 0; i < records.size(); ++i) order.emplace(records[i].id, i);

    std::vector<PairRecord> candidates;
    std::vector<PairRecord> early_rejects;
    for (auto& r : records) (r.kept() ? candidates : early_rejects).push_back(std::move(r));
    m.counts.heuristic_kept = candidates.size();

    enter("assessment");
    AssessmentConfig ac = c.assessment;
    ac.params.rng_seed = derive_seed(seed_t, "assessment");
    if (ac.level != AssessmentLevel::none) {
      assess(candidates, inputs.generator, gateway_, ac);
      m.counts.scored = candidates.size();
    }

    enter("filter");
    FilterConfig fc = c.filter;
    fc.rng_seed = derive_seed(seed_t, "filter");
    FilterOutcome out = run_filter_stage(std::move(candidates), fc, ac.level, inputs.generator, gateway_);
    m.counts.filtered_kept = out.kept.size();

    std::vector<PairRecord> rejected = std::move(early_rejects);
    for (auto& r : out.rejected) rejected.push_back(std::move(r));
    auto by_order = [&](const PairRecord& a, const PairRecord& b) { return order.at(a.id) < order.at(b.id); };
    std::sort(rejected.begin(), rejected.end(), by_order);
    std::vector<PairRecord> all = out.kept;
    all.insert(all.end(), rejected.begin(), rejected.end());
    std::sort(all.begin(), all.end(), by_order);

    save_dataset(all, c.run_dir / m.scored_path, DatasetMode::scored);
    save_dataset(out.kept, c.run_dir / m.filtered_path, DatasetMode::alpaca);
    save_dataset(rejected, c.run_dir / m.rejected_path, DatasetMode::scored);

    enter("train");
    std::vector<fs::path> datasets;
    for (const auto& d : inputs.train_datasets) datasets.push_back(c.run_dir / d);
    ModelRef trained = train(c.trainer, inputs.train_base, datasets, dir / "model");
    if (trained.adapter_path) trained.adapter_path = relative_to(*trained.adapter_path, c.run_dir);
    m.model_out = std::move(trained);
  } catch (const std::exception& e) {
    m.status = ManifestStatus::failed;
    m.model_out.reset();
    m.error = stage + ": " + e.what();
    m.finished = now();
    write_manifest(m, c.run_dir, /*force=*/true);
    log("iteration " + std::to_string(t) + " failed in " + stage + ": " + e.what());
    if (const auto* err = dynamic_cast<const Error*>(&e)) {
      fail(err->code(), "iteration " + std::to_string(t) + " failed in " + stage + ": " + err->what());
    }
    fail(ErrorCode::io, "iteration " + std::to_string(t) + " failed in " + stage + ": " + e.what());
  }

  m.finished = now();
  write_manifest(m, c.run_dir, /*force=*/true);
  log("iteration " + std::to_string(t) + ": kept " + std::to_string(m.counts.filtered_kept) + " of " +
      std::to_string(m.counts.generated) + ", model " + m.model_out->locator);
  return m;
}

RunResult Engine::run() {
  prepare_run_dir();
  RunResult result;
  for (int t = 1; t <= config_.iterations; ++t) {
    std::optional<IterationManifest> existing;
    if (fs::exists(manifest_path(config_.run_dir, t))) existing = read_manifest(config_.run_dir, t);
    if (existing && existing->complete()) {
      if (existing->config_digest != config_.digest()) {
        fail(ErrorCode::digest_mismatch, "manifest " + std::to_string(t) + " was written under a different config");
      }
      log("iteration " + std::to_string(t) + ": already complete");
      result.manifests.push_back(std::move(*existing));
      continue;
    }
    result.manifests.push_back(run_iteration(t, result.manifests));
    result.executed.push_back(t);
  }
  const auto& last = result.manifests.back();
  result.final_model = *last.model_out;
  result.final_dataset = config_.run_dir / last.filtered_path;
  return result;
}

RunConfig load_run_config(const fs::path& run_dir) {
  const fs::path cfg = run_dir / "config.json";
  std::error_code ec;
  if (!fs::exists(cfg, ec)) fail(ErrorCode::not_found, "no config.json in run directory " + run_dir.string());
  RunConfig c = RunConfig::load(cfg);
  c.run_dir = fs::absolute(run_dir).lexically_normal();
  return c;
}

RunResult resume(const fs::path& run_dir, Gateway& gateway, Engine::Logger log) {
  RunConfig c = load_run_config(run_dir);
  if (!fs::exists(manifest_path(c.run_dir, 1))) {
    fail(ErrorCode::not_found, "run directory " + c.run_dir.string() + " has no manifest to resume from");
  }
  Engine engine(std::move(c), gateway);
  engine.set_logger(std::move(log));
  return engine.run();
}

}  // namespace loopforge
