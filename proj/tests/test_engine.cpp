#include "helpers.hpp"

#include <fstream>
#include <map>

#include "loopforge/engine.hpp"
#include "loopforge/hashing.hpp"
#include "loopforge/mock_gateway.hpp"

using namespace loopforge;
namespace fs = std::filesystem;

namespace {

nlohmann::json base_config(const fs::path& run_dir, const std::string& strategy, int iterations) {
  return {
      {"iterations", iterations},
      {"target_pairs", 20},
      {"strategy", strategy},
      {"rng_seed", 42},
      {"seed_pool", (lftest::source_dir() / "assets/seed_tasks.jsonl").string()},
      {"base_model", "base-7b"},
      {"run_dir", run_dir.string()},
      {"clock", "fixed"},
      {"synthesis", {{"n_seed", 6}, {"n_gen", 2}, {"tasks_per_call", 20}}},
      {"assessment", {{"variant", "simple_standard"}, {"level", "both"}}},
      {"filter", {{"method", "score"}, {"threshold", 8}}},
      {"trainer", {{"kind", "mock"}}},
      {"gateway", {{"backend", "mock"}, {"mock", {{"seed", 7}}}}},
  };
}

RunConfig make_config(const nlohmann::json& j) { return RunConfig::from_json(j, fs::current_path()); }

IterationManifest complete_manifest(int t, const ModelRef& out) {
  IterationManifest m;
  m.t = t;
  m.model_in = out;
  m.model_out = out;
  m.train_base = out;
  return m;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), dir).string();
    if (rel.find("model_ref.json") != std::string::npos) continue;
    files[rel] = read_file(e.path());
  }
  return files;
}

void write_script(const fs::path& p, const std::string& body) {
  lftest::write_text(p, "#!/bin/sh\n" + body);
  fs::permissions(p, fs::perms::owner_all);
}

}  // namespace

TEST_CASE("iteration inputs per strategy") {
  const ModelRef base = ModelRef::base("b");
  const ModelRef m1 = ModelRef::finetuned("m1", base);
  const ModelRef m2 = ModelRef::finetuned("m2", m1);
  const std::vector<IterationManifest> hist = {complete_manifest(1, m1), complete_manifest(2, m2)};

  auto in = select_iteration_inputs(Strategy::one_base, 1, {}, base);
  CHECK(in.generator == base);
  CHECK(in.train_base == base);
  CHECK(in.train_datasets == std::vector<std::string>{"iter_1/filtered.jsonl"});

  in = select_iteration_inputs(Strategy::one_base, 3, hist, base);
  CHECK(in.generator == m2);
  CHECK(in.train_base == base);
  CHECK(in.train_datasets == std::vector<std::string>{"iter_3/filtered.jsonl"});

  in = select_iteration_inputs(Strategy::one_last, 3, hist, base);
  CHECK(in.generator == m2);
  CHECK(in.train_base == m2);
  CHECK(in.train_datasets == std::vector<std::string>{"iter_3/filtered.jsonl"});

  in = select_iteration_inputs(Strategy::total_base, 3, hist, base);
  CHECK(in.generator == m2);
  CHECK(in.train_base == base);
  CHECK(in.train_datasets ==
        std::vector<std::string>{"iter_1/filtered.jsonl", "iter_2/filtered.jsonl", "iter_3/filtered.jsonl"});

  in = select_iteration_inputs(Strategy::direct, 1, {}, base);
  CHECK(in.generator == base);
  CHECK(in.train_base == base);

  CHECK_THROWS_CODE(select_iteration_inputs(Strategy::direct, 2, {hist[0]}, base), ErrorCode::invalid_argument);
  CHECK_THROWS_CODE(select_iteration_inputs(Strategy::one_base, 3, {hist[0]}, base), ErrorCode::invalid_argument);
  auto broken = hist;
  broken[1].status = ManifestStatus::failed;
  broken[1].model_out.reset();
  CHECK_THROWS_CODE(select_iteration_inputs(Strategy::one_base, 3, broken, base), ErrorCode::invalid_argument);
}

TEST_CASE("trainer contract arguments") {
  const auto args = trainer_arguments(TrainerHyper{}, ModelRef::base("base-7b"), {"/d/a.jsonl", "/d/b.jsonl"},
                                      "/out");
  const std::vector<std::string> expected = {
      "--base",         "base-7b", "--datasets",      "/d/a.jsonl,/d/b.jsonl", "--output",     "/out",
      "--learning-rate", "5e-5",   "--epochs",        "2.0",                   "--cutoff-len", "1024",
      "--lora-rank",    "8",       "--lora-alpha",    "16",                    "--lora-dropout", "0.05",
      "--warmup-steps", "20",      "--max-samples",   "3000",                  "--val-size",   "0.1"};
  CHECK(args == expected);

  TrainerSpec spec;
  spec.kind = TrainerSpec::Kind::external_command;
  spec.command = "python train.py";
  const auto line = trainer_command_line(spec, ModelRef::base("it's"), {"/d/a.jsonl"}, "/out");
  CHECK(line.rfind("python train.py '--base' 'it'\\''s'", 0) == 0);
  CHECK(trainer_command_line(TrainerSpec{}, ModelRef::base("b"), {"/x"}, "/o").rfind("<mock-trainer>", 0) == 0);
}

TEST_CASE("mock trainer is deterministic and writes model_ref.json") {
  lftest::TempDir dir;
  lftest::write_text(dir / "a.jsonl", "{\"instruction\":\"x\",\"input\":\"\",\"output\":\"y\"}\n");
  lftest::write_text(dir / "b.jsonl", "{\"instruction\":\"z\",\"input\":\"\",\"output\":\"w\"}\n");
  const ModelRef base = ModelRef::base("base-7b");
  const auto m1 = train(TrainerSpec{}, base, {dir / "a.jsonl"}, dir / "m1");
  const auto m2 = train(TrainerSpec{}, base, {dir / "a.jsonl"}, dir / "m2");
  const auto m3 = train(TrainerSpec{}, base, {dir / "a.jsonl", dir / "b.jsonl"}, dir / "m3");
  CHECK(m1.locator == m2.locator);
  CHECK(m1.locator != m3.locator);
  CHECK(m1.kind == ModelKind::finetuned);
  REQUIRE(m1.parent);
  CHECK(*m1.parent == base);
  CHECK(read_model_ref(dir / "m1/model_ref.json") == m1);
  CHECK_THROWS_CODE(train(TrainerSpec{}, base, {dir / "missing.jsonl"}, dir / "m4"), ErrorCode::not_found);
}

TEST_CASE("external trainer failure surfaces status and log") {
  lftest::TempDir dir;
  lftest::write_text(dir / "a.jsonl", "{}\n");
  write_script(dir / "fail.sh", "echo boom-from-trainer\nexit 3\n");
  TrainerSpec spec;
  spec.kind = TrainerSpec::Kind::external_command;
  spec.command = (dir / "fail.sh").string();
  try {
    train(spec, ModelRef::base("b"), {dir / "a.jsonl"}, dir / "out");
    FAIL("expected a training error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::training);
    const std::string what = e.what();
    CHECK(what.find("status 3") != std::string::npos);
    CHECK(what.find((dir / "out/train.log").string()) != std::string::npos);
    CHECK(what.find("boom-from-trainer") != std::string::npos);
  }

  write_script(dir / "silent.sh", "exit 0\n");
  spec.command = (dir / "silent.sh").string();
  CHECK_THROWS_CODE(train(spec, ModelRef::base("b"), {dir / "a.jsonl"}, dir / "out2"), ErrorCode::training);
}

TEST_CASE("external trainer receives the contract and its model_ref is read back") {
  lftest::TempDir dir;
  lftest::write_text(dir / "a.jsonl", "{}\n");
  lftest::write_text(dir / "b.jsonl", "{}\n");
  write_script(dir / "ok.sh",
               "out=''\nwhile [ $# -gt 0 ]; do\n"
               "  case \"$1\" in\n"
               "    --output) out=\"$2\" ;;\n"
               "    --datasets) echo \"$2\" > \"$0.datasets\" ;;\n"
               "  esac\n"
               "  shift 2\n"
               "done\n"
               "printf '{\"kind\":\"finetuned\",\"locator\":\"ext-1\",\"parent\":{\"kind\":\"base\",\"locator\":"
               "\"b\",\"parent\":null,\"adapter_path\":null},\"adapter_path\":\"%s/adapter\"}' \"$out\" > "
               "\"$out/model_ref.json\"\n");
  TrainerSpec spec;
  spec.kind = TrainerSpec::Kind::external_command;
  spec.command = (dir / "ok.sh").string();
  const ModelRef base = ModelRef::base("b");
  const auto m = train(spec, base, {dir / "a.jsonl", dir / "b.jsonl"}, dir / "out");
  CHECK(m.locator == "ext-1");
  CHECK(m.kind == ModelKind::finetuned);
  CHECK(*m.parent == base);
  CHECK(m.adapter_path == (dir / "out/adapter").string());
  CHECK(read_file(dir / "ok.sh.datasets") ==
        (dir / "a.jsonl").string() + "," + (dir / "b.jsonl").string() + "\n");
}

TEST_CASE("three iterations honour each strategy's chaining") {
  for (const std::string strategy : {"one_base", "one_last", "total_base"}) {
    CAPTURE(strategy);
    lftest::TempDir dir;
    MockGateway gw;
    Engine engine(make_config(base_config(dir / "run", strategy, 3)), gw);
    const auto res = engine.run();
    REQUIRE(res.manifests.size() == 3);
    CHECK(res.executed == std::vector<int>{1, 2, 3});
    const ModelRef base = ModelRef::base("base-7b");
    for (int t = 1; t <= 3; ++t) {
      const auto& m = res.manifests[static_cast<std::size_t>(t - 1)];
      CHECK(m.t == t);
      CHECK(m.complete());
      CHECK(m.counts.monotone());
      CHECK(m.counts.generated > 0);
      CHECK(m.rng_seed == (42ULL ^ static_cast<std::uint64_t>(t)));
      CHECK(m == read_manifest(dir / "run", t));
      CHECK(m.model_in == (t == 1 ? base : *res.manifests[static_cast<std::size_t>(t - 2)].model_out));
      if (strategy == "one_last") {
        CHECK(m.train_base == m.model_in);
      } else {
        CHECK(m.train_base == base);
      }
      CHECK(m.train_datasets.size() == (strategy == "total_base" ? static_cast<std::size_t>(t) : 1u));
      CHECK(load_dataset(dir / "run" / m.filtered_path).size() == m.counts.filtered_kept);
      CHECK(load_dataset(dir / "run" / m.scored_path).size() == m.counts.generated);
      CHECK(*m.model_out->parent == m.train_base);
      CHECK(fs::exists(dir / "run" / ("iter_" + std::to_string(t)) / "model/model_ref.json"));
    }
    CHECK(res.final_model == *res.manifests[2].model_out);
  }
}

TEST_CASE("threshold zero keeps every heuristic survivor") {
  lftest::TempDir dir;
  auto j = base_config(dir / "run", "one_base", 1);
  j["filter"]["threshold"] = 0;
  MockGateway gw;
  Engine engine(make_config(j), gw);
  const auto m = engine.run().manifests.at(0);
  CHECK(m.counts.filtered_kept == m.counts.heuristic_kept);
  CHECK(m.counts.scored == m.counts.heuristic_kept);
}

TEST_CASE("direct strategy runs exactly one iteration") {
  lftest::TempDir dir;
  MockGateway gw;
  Engine engine(make_config(base_config(dir / "run", "direct", 1)), gw);
  CHECK(engine.run().manifests.size() == 1);
  CHECK_THROWS_CODE(make_config(base_config(dir / "run2", "direct", 3)).validate(), ErrorCode::invalid_argument);
}

TEST_CASE("a failing stage writes a failed manifest and resume finishes the run") {
  lftest::TempDir dir;
  const auto cfg = make_config(base_config(dir / "run", "one_last", 3));
  {
    MockGateway gw;
    Engine engine(cfg, gw);
    engine.set_stage_hook([](int t, std::string_view stage) {
      if (t == 3 && stage == "assessment") fail(ErrorCode::transport, "injected outage");
    });
    CHECK_THROWS_CODE(engine.run(), ErrorCode::transport);
  }
  const auto failed = read_manifest(dir / "run", 3);
  CHECK(failed.status == ManifestStatus::failed);
  CHECK(!failed.model_out);
  CHECK(failed.error.rfind("assessment: ", 0) == 0);
  CHECK(failed.error.find("injected outage") != std::string::npos);
  const auto m1 = read_file(manifest_path(dir / "run", 1));
  const auto m2 = read_file(manifest_path(dir / "run", 2));

  MockGateway gw;
  const auto res = resume(dir / "run", gw);
  CHECK(res.executed == std::vector<int>{3});
  CHECK(read_manifest(dir / "run", 3).complete());
  CHECK(read_file(manifest_path(dir / "run", 1)) == m1);
  CHECK(read_file(manifest_path(dir / "run", 2)) == m2);

  lftest::TempDir fresh;
  auto j = base_config(fresh / "run", "one_last", 3);
  MockGateway gw2;
  Engine straight(make_config(j), gw2);
  straight.run();
  CHECK(read_file(dir / "run/iter_3/filtered.jsonl") == read_file(fresh / "run/iter_3/filtered.jsonl"));

  MockGateway gw3;
  CHECK(resume(dir / "run", gw3).executed.empty());
  CHECK(gw3.stats().completions == 0);
}

TEST_CASE("a run directory refuses a different config") {
  lftest::TempDir dir;
  auto j = base_config(dir / "run", "one_base", 1);
  MockGateway gw;
  Engine(make_config(j), gw).run();
  j["filter"]["threshold"] = 7;
  Engine edited(make_config(j), gw);
  CHECK_THROWS_CODE(edited.run(), ErrorCode::digest_mismatch);
}

TEST_CASE("corrupt manifests and missing runs are reported") {
  lftest::TempDir dir;
  auto j = base_config(dir / "run", "one_base", 2);
  MockGateway gw;
  Engine(make_config(j), gw).run();
  lftest::write_text(manifest_path(dir / "run", 2), "{not json");
  try {
    resume(dir / "run", gw);
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::parse);
    CHECK(std::string(e.what()).find("t=2") != std::string::npos);
  }
  CHECK_THROWS_CODE(resume(dir / "nowhere", gw), ErrorCode::not_found);
}

TEST_CASE("reruns with the same config are byte-identical") {
  lftest::TempDir a, b;
  MockGateway g1, g2;
  Engine(make_config(base_config(a / "run", "total_base", 3)), g1).run();
  Engine(make_config(base_config(b / "run", "total_base", 3)), g2).run();
  const auto sa = snapshot(a / "run");
  const auto sb = snapshot(b / "run");
  REQUIRE(sa.size() == sb.size());
  for (const auto& [name, content] : sa) {
    CAPTURE(name);
    REQUIRE(sb.count(name) == 1);
    CHECK(content == sb.at(name));
  }
}
