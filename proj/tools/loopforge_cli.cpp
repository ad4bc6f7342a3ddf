#include <CLI11.hpp>

#include <iostream>
#include <optional>

#include "loopforge/analysis.hpp"
#include "loopforge/assessment.hpp"
#include "loopforge/config.hpp"
#include "loopforge/engine.hpp"
#include "loopforge/filtering.hpp"

using namespace loopforge;
using nlohmann::json;

namespace {

void log_line(std::string_view msg) { std::cerr << msg << '\n'; }

RunConfig load_config(const std::string& path, const std::optional<std::uint64_t>& seed,
                      const std::string& run_dir_override) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    fail(ErrorCode::parse, path + ": " + e.what());
  }
  if (seed) j["rng_seed"] = *seed;
  if (!run_dir_override.empty()) j["run_dir"] = fs::absolute(run_dir_override).string();
  return RunConfig::from_json(std::move(j), fs::absolute(path).parent_path());
}

void print_result(const RunResult& r) {
  json out = {{"final_model", to_json(r.final_model)},
              {"final_dataset", r.final_dataset.string()},
              {"executed", r.executed}};
  std::cout << out.dump(2) << '\n';
}

void print_plan(const RunConfig& c) {
  std::cout << "run_dir: " << c.run_dir.string() << '\n'
            << "strategy: " << to_string(c.strategy) << ", T=" << c.iterations << ", I=" << c.target_pairs
            << ", call budget " << c.effective_call_budget() << '\n'
            << "filter: " << to_string(c.filter.method) << ", C=" << c.filter.threshold
            << ", assessment " << to_string(c.assessment.variant) << "/" << to_string(c.assessment.level) << '\n';
  std::vector<IterationManifest> history;
  for (int t = 1; t <= c.iterations; ++t) {
    const IterationInputs in = select_iteration_inputs(c.strategy, t, history, c.base_model);
    std::vector<fs::path> datasets;
    for (const auto& d : in.train_datasets) datasets.push_back(c.run_dir / d);
    const fs::path out_dir = c.run_dir / ("iter_" + std::to_string(t)) / "model";
    std::cout << "iteration " << t << ": generate with " << in.generator.locator << ", train "
              << in.train_base.locator << " on " << in.train_datasets.size() << " dataset(s)\n"
              << "  trainer: " << trainer_command_line(c.trainer, in.train_base, datasets, out_dir) << '\n';
    IterationManifest m;
    m.t = t;
    m.model_out = ModelRef::finetuned("M" + std::to_string(t + 1), in.train_base);
    history.push_back(std::move(m));
  }
}

void emit(const json& summary, const std::string& out_prefix, const std::function<void(const fs::path&)>& write_csv) {
  if (out_prefix.empty()) {
    std::cout << summary.dump(2) << '\n';
    return;
  }
  fs::path prefix(out_prefix);
  if (prefix.extension() == ".csv" || prefix.extension() == ".json") prefix.replace_extension();
  const std::string base = prefix.string();
  write_csv(base + ".csv");
  write_file_atomic(base + ".json", summary.dump(2) + "\n");
  std::cout << "wrote " << base << ".csv and " << base << ".json\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Iterative self-instruction pipeline: synthesize, assess, filter, fine-tune."};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string run_dir;
  bool dry_run = false;

  auto* run = app.add_subcommand("run", "Run (or continue) all iterations of a config");
  run->add_option("--config", config_path, "Run config JSON")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "Override rng_seed");
  run->add_option("--run-dir", run_dir, "Override run_dir");
  run->add_flag("--dry-run", dry_run, "Print the plan and trainer command lines without running");

  auto* res = app.add_subcommand("resume", "Continue a run from its directory");
  res->add_option("run_dir", run_dir, "Run directory")->required();
  res->add_option("--config", config_path, "Config expected to match the run");

  std::string input, output, rejected_out, model;
  auto* as = app.add_subcommand("assess", "Score a dataset with the configured assessment");
  auto* fl = app.add_subcommand("filter", "Filter a scored dataset with the configured filter");
  std::string method;
  std::optional<int> threshold;
  for (auto* sub : {as, fl}) {
    sub->add_option("--config", config_path, "Run config JSON (gateway and settings)")->required()->check(CLI::ExistingFile);
    sub->add_option("--input", input, "Input JSONL")->required()->check(CLI::ExistingFile);
    sub->add_option("--output", output, "Output JSONL")->required();
    sub->add_option("--model", model, "Model locator (defaults to base_model)");
    sub->add_option("--seed", seed, "Override rng_seed");
  }
  fl->add_option("--rejected", rejected_out, "Write dropped records here");
  fl->add_option("--method", method, "score|ppl|density|density_ppl");
  fl->add_option("--threshold", threshold, "Score threshold C");

  auto* rep = app.add_subcommand("report", "Analysis reports");
  rep->require_subcommand(1);
  std::string out_prefix, axis = "both", target, reference, dataset;
  int report_threshold = 8;
  std::size_t sample_n = 500;
  std::uint64_t report_seed = 0;

  auto* prop = rep->add_subcommand("proportion", "High-quality proportion per iteration");
  prop->add_option("run_dir", run_dir, "Run directory")->required();
  prop->add_option("--threshold", report_threshold, "Scores must exceed this");
  prop->add_option("--axis", axis, "quality|following|both");
  prop->add_option("--out", out_prefix, "Write <prefix>.csv and <prefix>.json (a .csv or .json suffix is dropped)");

  auto* pca = rep->add_subcommand("pca", "Project a dataset onto a reference corpus' top-2 principal axes");
  pca->add_option("--config", config_path, "Run config JSON (embedding gateway)")->required()->check(CLI::ExistingFile);
  pca->add_option("--target", target, "Dataset JSONL")->required()->check(CLI::ExistingFile);
  pca->add_option("--reference", reference, "Reference corpus JSONL")->required()->check(CLI::ExistingFile);
  pca->add_option("--model", model, "Embedding model locator (defaults to base_model)");
  pca->add_option("--out", out_prefix, "Write <prefix>.csv and <prefix>.json (a .csv or .json suffix is dropped)");

  auto* div = rep->add_subcommand("diversity", "Pairwise ROUGE-L statistics of a dataset");
  div->add_option("dataset", dataset, "Dataset JSONL")->required()->check(CLI::ExistingFile);
  div->add_option("--sample", sample_n, "Instructions to sample");
  div->add_option("--seed", report_seed, "Sampling seed");
  div->add_option("--out", out_prefix, "Write <prefix>.csv and <prefix>.json (a .csv or .json suffix is dropped)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      RunConfig c = load_config(config_path, seed, run_dir);
      if (dry_run) {
        print_plan(c);
        return 0;
      }
      auto gateway = make_gateway(c.gateway);
      Engine engine(std::move(c), *gateway);
      engine.set_logger(log_line);
      print_result(engine.run());
    } else if (res->parsed()) {
      if (!config_path.empty()) {
        const RunConfig expected = load_config(config_path, std::nullopt, run_dir);
        if (expected.digest() != load_run_config(run_dir).digest()) {
          fail(ErrorCode::digest_mismatch, "config " + config_path + " does not match the run in " + run_dir);
        }
      }
      const RunConfig c = load_run_config(run_dir);
      auto gateway = make_gateway(c.gateway);
      print_result(resume(run_dir, *gateway, log_line));
    } else if (as->parsed() || fl->parsed()) {
      RunConfig c = load_config(config_path, seed, "");
      auto gateway = make_gateway(c.gateway);
      const ModelRef m = model.empty() ? c.base_model : ModelRef::base(model);
      std::vector<PairRecord> records = load_dataset(input);
      if (as->parsed()) {
        const AssessmentReport rep_ = assess(records, m, *gateway, c.assessment);
        save_dataset(records, output, DatasetMode::scored);
        std::cerr << "assessed " << records.size() << " records with " << rep_.calls << " calls, "
                  << rep_.unparseable << " unparseable, " << rep_.failed_calls << " failed\n";
      } else {
        FilterConfig fc = c.filter;
        if (!method.empty()) fc.method = filter_method_from_string(method);
        if (threshold) fc.threshold = *threshold;
        fc.rng_seed = c.rng_seed;
        const FilterOutcome out = run_filter_stage(std::move(records), fc, c.assessment.level, m, *gateway);
        save_dataset(out.kept, output, DatasetMode::scored);
        if (!rejected_out.empty()) save_dataset(out.rejected, rejected_out, DatasetMode::scored);
        std::cerr << "kept " << out.kept.size() << ", dropped " << out.rejected.size() << '\n';
      }
    } else if (prop->parsed()) {
      const auto series = high_quality_proportion(run_dir, report_threshold, axis_mode_from_string(axis));
      emit(to_json(series), out_prefix, [&](const fs::path& p) { write_proportion_csv(series, p); });
    } else if (pca->parsed()) {
      RunConfig c = load_config(config_path, std::nullopt, "");
      auto gateway = make_gateway(c.gateway);
      const ModelRef m = model.empty() ? c.base_model : ModelRef::base(model);
      const std::size_t inflight = gateway->default_inflight();
      const auto t_vecs = embed_records(load_dataset(target), m, *gateway, inflight);
      const auto r_vecs = embed_records(load_dataset(reference), m, *gateway, inflight);
      const auto proj = pca_project(t_vecs, r_vecs);
      emit(to_json(proj), out_prefix, [&](const fs::path& p) { write_pca_csv(proj, p); });
    } else if (div->parsed()) {
      const auto r = diversity_report(fs::path(dataset), sample_n, report_seed);
      emit(to_json(r), out_prefix, [&](const fs::path& p) { write_diversity_csv(r, p); });
    }
  } catch (const Error& e) {
    std::cerr << "error[" << to_string(e.code()) << "]: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
