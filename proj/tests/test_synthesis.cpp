#include "helpers.hpp"

#include "loopforge/hashing.hpp"
#include "loopforge/mock_gateway.hpp"
#include "loopforge/rouge.hpp"
#include "loopforge/synthesis.hpp"
#include "loopforge/text.hpp"

using namespace loopforge;

namespace {

const ModelRef kModel = ModelRef::base("mock-7b");

std::vector<SeedTask> seed_pool(std::size_t n) {
  std::vector<SeedTask> pool;
  for (std::size_t i = 0; i < n; ++i) {
    SeedTask s;
    s.instruction = "Seed task number " + std::to_string(i) + " about topic " + std::to_string(i * 7 % 13);
    if (i % 2) s.input = "input " + std::to_string(i);
    pool.push_back(s);
  }
  return pool;
}

std::vector<SeedTask> demo_seeds() { return load_seed_pool(lftest::source_dir() / "assets/seed_tasks.jsonl"); }

}  // namespace

TEST_CASE("demo sampling") {
  const auto pool = seed_pool(175);
  Rng a(1), b(1);
  const auto d1 = sample_icl_demos(pool, {}, 6, 2, a);
  CHECK(d1.size() == 6);
  CHECK(d1 == sample_icl_demos(pool, {}, 6, 2, b));
  CHECK_THROWS_CODE(sample_icl_demos(pool, {}, 200, 2, a), ErrorCode::invalid_argument);
  CHECK_THROWS_CODE(sample_icl_demos({}, {}, 0, 2, a), ErrorCode::invalid_argument);

  const std::vector<TaskDraft> generated{{"gen one two", std::nullopt}, {"gen three four", std::nullopt},
                                         {"gen five six", std::string("x")}};
  const auto d2 = sample_icl_demos(pool, generated, 6, 2, a);
  REQUIRE(d2.size() == 8);
  for (std::size_t i = 0; i < 6; ++i) CHECK(d2[i].instruction.rfind("Seed", 0) == 0);
  for (std::size_t i = 6; i < 8; ++i) CHECK(d2[i].instruction.rfind("gen", 0) == 0);
  CHECK(d2[6].instruction != d2[7].instruction);
  const auto d3 = sample_icl_demos(pool, {generated[0]}, 6, 2, a);
  CHECK(d3.size() == 7);
}

TEST_CASE("generation prompt layout") {
  const std::vector<TaskDraft> demos{{"Name a fruit.", std::nullopt}, {"Translate.", std::string("Bonjour")}};
  const std::string p = build_generation_prompt(demos, MetaPrompt::standard());
  const std::string block =
      "###\n1. Instruction: Name a fruit.\n1. Input:\n<noinput>\n"
      "###\n2. Instruction: Translate.\n2. Input:\nBonjour\n"
      "###\n3. Instruction:";
  CHECK(p.find(block) != std::string::npos);
  CHECK(p.size() >= block.size());
  CHECK(p.substr(p.size() - block.size()) == block);
  CHECK(p.find("{demos}") == std::string::npos);
  CHECK(p.find("{num_tasks}") == std::string::npos);
  CHECK(p.find("20") != std::string::npos);
  CHECK_THROWS_CODE(build_generation_prompt({}, MetaPrompt::standard()), ErrorCode::invalid_argument);
}

TEST_CASE("meta prompt needs exactly one demos slot") {
  CHECK_NOTHROW(MetaPrompt::standard().validate());
  CHECK_THROWS_CODE((MetaPrompt{"no slot", 20}.validate()), ErrorCode::invalid_argument);
  CHECK_THROWS_CODE((MetaPrompt{"{demos}{demos}", 20}.validate()), ErrorCode::invalid_argument);
  CHECK_THROWS_CODE((MetaPrompt{"{demos}", 0}.validate()), ErrorCode::invalid_argument);
  lftest::TempDir dir;
  lftest::write_text(dir / "meta.txt", "Write {num_tasks} tasks.\n{demos}\n");
  const auto m = MetaPrompt::load(dir / "meta.txt", 5);
  CHECK(build_generation_prompt({{"a b c", std::nullopt}}, m).rfind("Write 5 tasks.\n###\n1.", 0) == 0);
}

TEST_CASE("parsing generated tasks") {
  const auto three = parse_generated_tasks(
      " Give a tip.\n3. Input:\n<noinput>\n###\n4. Instruction: Sum the numbers.\n4. Input:\n1, 2, 3\n"
      "###\n5. Instruction: Name a river.\n5. Input:\n<noinput>\n5. Output:\nThe Nile.");
  REQUIRE(three.tasks.size() == 3);
  CHECK(three.tasks[0].instruction == "Give a tip.");
  CHECK_FALSE(three.tasks[0].input.has_value());
  CHECK(three.tasks[1].input == "1, 2, 3");
  CHECK(three.tasks[2].instruction == "Name a river.");
  CHECK_FALSE(three.tasks[2].input.has_value());
  CHECK(three.dropped_blocks == 0);

  const auto garbage = parse_generated_tasks("lorem ipsum");
  CHECK(garbage.tasks.empty());
  CHECK(garbage.dropped_blocks == 1);
  CHECK(parse_generated_tasks("").tasks.empty());
}

TEST_CASE("property: parsing a built prompt recovers its demos") {
  Rng rng(5);
  for (int round = 0; round < 100; ++round) {
    std::vector<TaskDraft> demos;
    const std::size_t n = 1 + rng.below(9);
    for (std::size_t i = 0; i < n; ++i) {
      TaskDraft d;
      d.instruction = "Do " + lftest::random_tokens(rng, 10, 50);
      d.instruction = std::string(text::trim(d.instruction));
      if (rng.below(2)) d.input = "in " + lftest::random_tokens(rng, 6, 50) + "\nsecond line";
      demos.push_back(d);
    }
    const auto parsed = parse_generated_tasks(build_generation_prompt(demos, MetaPrompt::standard()));
    CHECK(parsed.tasks == demos);
  }
}

TEST_CASE("heuristic rules") {
  const HeuristicRules rules;
  const std::vector<std::string> pool{"Give three tips for staying healthy."};
  const auto out = heuristic_filter({{"Give three tips for staying healthy.", std::nullopt},
                                     {"Draw the image of a cat", std::nullopt},
                                     {"Summarize it", std::nullopt},
                                     {"Please go to the market and report prices", std::nullopt},
                                     {"Explain why leaves change color in autumn.", std::nullopt},
                                     {"Explain why leaves change color in the autumn.", std::nullopt}},
                                    pool, rules);
  REQUIRE(out.kept.size() == 1);
  CHECK(out.kept[0].instruction == "Explain why leaves change color in autumn.");
  REQUIRE(out.rejected.size() == 5);
  CHECK(out.rejected[0].second == RejectReason::too_similar);
  CHECK(out.rejected[1].second == RejectReason::blacklisted);
  CHECK(out.rejected[2].second == RejectReason::too_short);
  CHECK(out.rejected[3].second == RejectReason::blacklisted);
  CHECK(out.rejected[4].second == RejectReason::too_similar);

  HeuristicRules tight = rules;
  tight.max_instruction_words = 4;
  CHECK(heuristic_filter({{"one two three four five", std::nullopt}}, {}, tight).rejected[0].second ==
        RejectReason::too_long);
  CHECK(default_blacklist().size() == 18);

  HeuristicRules bad = rules;
  bad.min_instruction_words = 200;
  CHECK_THROWS_CODE(heuristic_filter({}, {}, bad), ErrorCode::invalid_argument);
}

TEST_CASE("property: no kept candidate is too similar to the pool or earlier keeps") {
  Rng rng(6);
  HeuristicRules rules;
  rules.min_instruction_words = 1;
  for (int round = 0; round < 30; ++round) {
    std::vector<std::string> pool;
    for (int i = 0; i < 5; ++i) pool.push_back(lftest::random_tokens(rng, 8, 6));
    std::vector<TaskDraft> cands;
    for (int i = 0; i < 25; ++i) cands.push_back({"t " + lftest::random_tokens(rng, 8, 6), std::nullopt});
    const auto out = heuristic_filter(cands, pool, rules);
    CHECK(out.kept.size() + out.rejected.size() == cands.size());
    std::vector<std::string> seen = pool;
    for (const auto& k : out.kept) {
      for (const auto& s : seen) CHECK(rouge_l(k.instruction, s) < rules.rouge_threshold);
      seen.push_back(k.instruction);
    }
  }
}

TEST_CASE("responses are generated zero-shot with failures flagged") {
  MockConfig c;
  c.rules.push_back({"task two", std::nullopt, true, std::nullopt, std::nullopt});
  c.rules.push_back({"task three", std::string("   "), false, std::nullopt, std::nullopt});
  MockGateway g(c);
  const std::vector<TaskDraft> tasks{{"task one", std::nullopt},
                                     {"task two", std::nullopt},
                                     {"task three", std::nullopt},
                                     {"task four", std::string("with input")},
                                     {"task one", std::nullopt}};
  const GenerationParams p{0.7, 1.0, 128, {}, std::nullopt};
  const auto recs = generate_responses(tasks, 2, kModel, g, p, 2);
  REQUIRE(recs.size() == 5);
  CHECK(recs[0].kept());
  CHECK(recs[0].output.has_value());
  CHECK_FALSE(recs[1].output.has_value());
  CHECK(recs[1].rejected_by == RejectStage::heuristic);
  CHECK(recs[2].rejected_by == RejectStage::heuristic);
  CHECK(recs[3].kept());
  CHECK(recs[3].output == g.complete(kModel, "task four\nwith input", p).text);
  CHECK(recs[0].iteration == 2);
  CHECK(recs[4].id != recs[0].id);
  CHECK(recs == generate_responses(tasks, 2, kModel, g, p, 3));
}

TEST_CASE("synthesize_batch reaches the target with a generous budget") {
  MockGateway g;
  Rng rng(3);
  SynthesisOptions opts;
  const auto res = synthesize_batch(kModel, demo_seeds(), 50, 100, opts, g, rng);
  CHECK(res.records.size() == 50);
  CHECK_FALSE(res.stats.budget_exhausted);
  CHECK(res.warnings.empty());
  CHECK(res.stats.generation_calls <= 100);

  Rng rng2(3);
  MockGateway g2;
  const auto again = synthesize_batch(kModel, demo_seeds(), 50, 100, opts, g2, rng2);
  CHECK(again.records == res.records);

  // The seeds and kept tasks stay mutually dissimilar.
  std::vector<std::string> seen;
  for (const auto& s : demo_seeds()) seen.push_back(s.instruction);
  for (const auto& r : res.records) {
    for (const auto& s : seen) CHECK(rouge_l(r.instruction, s) < 0.7);
    seen.push_back(r.instruction);
  }
}

TEST_CASE("an exhausted budget yields a partial result and a warning") {
  MockConfig c;
  c.tasks_per_completion = 3;
  c.blacklist_rate = 0.0;
  c.duplicate_rate = 0.0;
  MockGateway g(c);
  Rng rng(4);
  SynthesisOptions opts;
  const auto res = synthesize_batch(kModel, demo_seeds(), 50, 1, opts, g, rng);
  CHECK(res.records.size() == 3);
  CHECK(res.stats.budget_exhausted);
  CHECK(res.stats.generation_calls == 1);
  REQUIRE_FALSE(res.warnings.empty());
  CHECK(res.warnings.back().find("budget") != std::string::npos);
}

TEST_CASE("a seed duplicated by the model is rejected") {
  const auto seeds = demo_seeds();
  MockConfig c;
  c.duplicate_rate = 1.0;
  MockGateway g(c);
  Rng rng(8);
  SynthesisOptions opts;
  const auto res = synthesize_batch(kModel, seeds, 5, 4, opts, g, rng);
  CHECK(res.records.empty());
  CHECK(res.stats.rejected_similarity == res.stats.parsed_candidates);
  CHECK(res.stats.parsed_candidates > 0);
}

TEST_CASE("output size never exceeds the target") {
  Rng rng(9);
  for (int round = 0; round < 8; ++round) {
    MockConfig c;
    c.seed = rng.next_u64();
    c.tasks_per_completion = 1 + static_cast<int>(rng.below(8));
    MockGateway g(c);
    const std::size_t target = 1 + rng.below(30);
    const std::size_t budget = 1 + rng.below(10);
    Rng r2(rng.next_u64());
    const auto res = synthesize_batch(kModel, demo_seeds(), target, budget, SynthesisOptions{}, g, r2);
    CHECK(res.records.size() <= target);
    CHECK(res.stats.budget_exhausted == (res.records.size() < target));
  }
}
