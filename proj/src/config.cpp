#include "loopforge/config.hpp"

#include "loopforge/hashing.hpp"

namespace loopforge {

using nlohmann::json;

void TrainerSpec::validate() const {
  if (kind == Kind::external_command) {
    require(command && !command->empty(), "trainer: external_command needs a command");
  }
  require(hyper.learning_rate > 0, "trainer: learning_rate must be > 0");
  require(hyper.epochs > 0, "trainer: epochs must be > 0");
  require(hyper.cutoff_len > 0 && hyper.lora_rank > 0 && hyper.lora_alpha > 0,
          "trainer: cutoff_len, lora_rank and lora_alpha must be > 0");
  require(hyper.lora_dropout >= 0 && hyper.lora_dropout < 1, "trainer: lora_dropout must lie in [0,1)");
  require(hyper.warmup_steps >= 0 && hyper.max_samples > 0, "trainer: warmup_steps >= 0, max_samples > 0");
  require(hyper.val_size >= 0 && hyper.val_size < 1, "trainer: val_size must lie in [0,1)");
}

std::unique_ptr<Gateway> make_gateway(const GatewayConfig& config) {
  if (config.backend == GatewayConfig::Backend::http) return std::make_unique<HttpGateway>(config.http);
  return std::make_unique<MockGateway>(config.mock);
}

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : fs::absolute(base / path).lexically_normal();
}

HeuristicRules heuristics_from_json(const json& j) {
  HeuristicRules r;
  r.enabled = j.value("enabled", r.enabled);
  r.min_instruction_words = j.value("min_instruction_words", r.min_instruction_words);
  r.max_instruction_words = j.value("max_instruction_words", r.max_instruction_words);
  if (j.contains("blacklist")) r.blacklist = j["blacklist"].get<std::vector<std::string>>();
  r.rouge_threshold = j.value("rouge_threshold", r.rouge_threshold);
  return r;
}

TrainerSpec trainer_from_json(const json& j) {
  TrainerSpec t;
  const std::string kind = j.value("kind", std::string("mock"));
  if (kind == "mock") t.kind = TrainerSpec::Kind::mock;
  else if (kind == "external_command") t.kind = TrainerSpec::Kind::external_command;
  else fail(ErrorCode::invalid_argument, "trainer: unknown kind '" + kind + "'");
  if (j.contains("command") && !j["command"].is_null()) t.command = j["command"].get<std::string>();
  if (j.contains("hyper")) {
    const auto& h = j["hyper"];
    t.hyper.learning_rate = h.value("learning_rate", t.hyper.learning_rate);
    t.hyper.epochs = h.value("epochs", t.hyper.epochs);
    t.hyper.cutoff_len = h.value("cutoff_len", t.hyper.cutoff_len);
    t.hyper.lora_rank = h.value("lora_rank", t.hyper.lora_rank);
    t.hyper.lora_alpha = h.value("lora_alpha", t.hyper.lora_alpha);
    t.hyper.lora_dropout = h.value("lora_dropout", t.hyper.lora_dropout);
    t.hyper.warmup_steps = h.value("warmup_steps", t.hyper.warmup_steps);
    t.hyper.max_samples = h.value("max_samples", t.hyper.max_samples);
    t.hyper.val_size = h.value("val_size", t.hyper.val_size);
  }
  return t;
}

}  // namespace

RunConfig RunConfig::from_json(json j, const fs::path& base_dir) {
  if (!j.is_object()) fail(ErrorCode::parse, "run config: expected a JSON object");
  RunConfig c;
  try {
    if (j.contains("run_dir")) {
      c.run_dir = resolve(base_dir, j["run_dir"].get<std::string>());
      j.erase("run_dir");
    }
    if (!j.contains("seed_pool")) fail(ErrorCode::invalid_argument, "run config: seed_pool is required");
    c.seed_pool = resolve(base_dir, j["seed_pool"].get<std::string>());
    j["seed_pool"] = c.seed_pool.string();

    c.iterations = j.value("iterations", c.iterations);
    c.target_pairs = j.value("target_pairs", c.target_pairs);
    c.strategy = strategy_from_string(j.value("strategy", std::string("one_base")));
    c.rng_seed = j.value("rng_seed", c.rng_seed);
    c.call_budget = j.value("call_budget", c.call_budget);
    if (j.contains("base_model")) {
      const auto& b = j["base_model"];
      c.base_model = b.is_string() ? ModelRef::base(b.get<std::string>())
                                   : ModelRef::base(b.at("locator").get<std::string>());
    }

    const json syn = j.value("synthesis", json::object());
    c.synthesis.n_seed = syn.value("n_seed", c.synthesis.n_seed);
    c.synthesis.n_gen = syn.value("n_gen", c.synthesis.n_gen);
    c.synthesis.max_inflight = syn.value("max_inflight", c.synthesis.max_inflight);
    const int tasks_per_call = syn.value("tasks_per_call", 20);
    if (syn.contains("meta_prompt_path") && !syn["meta_prompt_path"].is_null()) {
      const fs::path mp = resolve(base_dir, syn["meta_prompt_path"].get<std::string>());
      j["synthesis"]["meta_prompt_path"] = mp.string();
      c.synthesis.meta = MetaPrompt::load(mp, tasks_per_call);
    } else {
      c.synthesis.meta.tasks_per_call = tasks_per_call;
    }
    if (syn.contains("heuristics")) c.synthesis.rules = heuristics_from_json(syn["heuristics"]);
    if (syn.contains("instruction_params")) {
      c.synthesis.instruction_params = generation_params_from_json(syn["instruction_params"], c.synthesis.instruction_params);
    }
    if (syn.contains("response_params")) {
      c.synthesis.response_params = generation_params_from_json(syn["response_params"], c.synthesis.response_params);
    }

    const json as = j.value("assessment", json::object());
    c.assessment.variant = assessment_variant_from_string(as.value("variant", std::string("simple_standard")));
    c.assessment.level = assessment_level_from_string(as.value("level", std::string("both")));
    c.assessment.max_inflight = as.value("max_inflight", c.synthesis.max_inflight);
    if (as.contains("params")) c.assessment.params = generation_params_from_json(as["params"], c.assessment.params);

    const json fj = j.value("filter", json::object());
    c.filter.method = filter_method_from_string(fj.value("method", std::string("score")));
    c.filter.threshold = fj.value("threshold", c.filter.threshold);
    c.filter.ppl_max = fj.value("ppl_max", c.filter.ppl_max);
    c.filter.cluster_count = fj.value("cluster_count", c.filter.cluster_count);
    c.filter.density_pick = density_pick_from_string(fj.value("density_pick", std::string("random")));
    c.filter.per_cluster = fj.value("per_cluster", c.filter.per_cluster);
    c.filter.ppl_mode = ppl_mode_from_string(fj.value("ppl_mode", std::string("conditional")));
    c.filter.kmeans_max_iters = fj.value("kmeans_max_iters", c.filter.kmeans_max_iters);

    if (j.contains("trainer")) c.trainer = trainer_from_json(j["trainer"]);

    const json gw = j.value("gateway", json::object());
    const std::string backend = gw.value("backend", std::string("mock"));
    if (backend == "mock") {
      c.gateway.backend = GatewayConfig::Backend::mock;
      if (gw.contains("fixture")) {
        const fs::path fx = resolve(base_dir, gw["fixture"].get<std::string>());
        j["gateway"]["fixture"] = fx.string();
        c.gateway.mock = MockConfig::load(fx);
      } else if (gw.contains("mock")) {
        c.gateway.mock = MockConfig::from_json(gw["mock"]);
      }
    } else if (backend == "http") {
      c.gateway.backend = GatewayConfig::Backend::http;
      c.gateway.http = HttpGatewayConfig::from_json(gw.value("http", json::object()));
    } else {
      fail(ErrorCode::invalid_argument, "gateway: unknown backend '" + backend + "'");
    }

    const std::string clock = j.value("clock", std::string("wall"));
    if (clock == "wall") c.clock = ClockMode::wall;
    else if (clock == "fixed") c.clock = ClockMode::fixed;
    else fail(ErrorCode::invalid_argument, "run config: unknown clock '" + clock + "'");
  } catch (const json::exception& e) {
    fail(ErrorCode::parse, std::string("run config: ") + e.what());
  }
  c.raw = std::move(j);
  c.validate();
  return c;
}

RunConfig RunConfig::load(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    fail(ErrorCode::parse, path.string() + ": " + e.what());
  }
  return from_json(std::move(j), fs::absolute(path).parent_path());
}

std::size_t RunConfig::effective_call_budget() const {
  if (call_budget > 0) return call_budget;
  const std::size_t per_call = static_cast<std::size_t>(synthesis.meta.tasks_per_call);
  return 10 * ((target_pairs + per_call - 1) / per_call) + 10;
}

std::string RunConfig::digest() const { return sha256_hex(raw.dump()); }

void RunConfig::validate() const {
  require(iterations >= 1, "run config: iterations T must be >= 1");
  require(target_pairs >= 1, "run config: target_pairs I must be >= 1");
  if (strategy == Strategy::direct) require(iterations == 1, "run config: strategy direct requires iterations = 1");
  require(synthesis.n_seed >= 1, "run config: synthesis.n_seed must be >= 1");
  require(synthesis.max_inflight >= 1, "run config: synthesis.max_inflight must be >= 1");
  synthesis.meta.validate();
  if (synthesis.rules.enabled) synthesis.rules.validate();
  filter.validate();
  if (filter.method == FilterMethod::score && filter.threshold > 0) {
    require(assessment.level != AssessmentLevel::none,
            "run config: score filtering with threshold > 0 needs an assessment level other than none");
  }
  trainer.validate();
  base_model.validate();
}

}  // namespace loopforge
