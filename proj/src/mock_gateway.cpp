#include "loopforge/mock_gateway.hpp"

#include <cmath>
#include <regex>
#include <sstream>

#include "loopforge/hashing.hpp"
#include "loopforge/rng.hpp"
#include "loopforge/text.hpp"

namespace loopforge {

namespace {

constexpr std::array<std::string_view, 24> kVerbs{
    "Describe", "Explain", "Summarize", "List", "Compare", "Classify", "Rewrite", "Translate",
    "Suggest", "Identify", "Evaluate", "Outline", "Propose", "Define", "Estimate", "Recommend",
    "Analyze", "Generate", "Convert", "Argue", "Predict", "Rank", "Critique", "Name"};

constexpr std::string_view kWords[] = {
    "river", "budget", "protein", "orbit", "poem", "ledger", "harvest", "circuit", "treaty",
    "glacier", "recipe", "vaccine", "algorithm", "festival", "mortgage", "volcano", "sonnet",
    "enzyme", "bridge", "election", "telescope", "marathon", "novel", "bacteria", "pension",
    "compass", "lantern", "symphony", "tariff", "canyon", "molecule", "startup", "village",
    "courtroom", "dialect", "satellite", "garden", "library", "equation", "migration", "climate",
    "password", "factory", "museum", "harbor", "insurance", "puzzle", "recession", "vitamin",
    "democracy", "painting", "tornado", "coffee", "theater", "database", "ocean", "hospital",
    "airline", "wildlife", "semiconductor", "grammar", "customer", "invoice", "kitchen", "neuron",
    "battery", "farmer", "galaxy", "teacher", "contract", "virus", "pyramid", "cathedral",
    "rainforest", "spreadsheet", "philosophy", "cricket", "opera", "microscope", "fossil",
    "tax", "engine", "playlist", "island", "glossary", "keyboard", "newsletter", "shipment",
    "umbrella", "vineyard", "workshop", "yoga", "zoning", "apartment", "bakery", "calendar",
    "diplomat", "email", "forest", "guitar", "headline", "interview", "journal", "kingdom",
    "lecture", "magnet", "network", "onion", "patent", "quarantine", "rocket", "salary",
    "tunnel", "uniform", "vacation", "wallet", "xylophone", "yogurt", "zebra", "ancient",
    "brief", "careful", "distant", "efficient", "fragile", "generous", "honest", "informal",
    "juvenile", "local", "modern", "narrow", "obvious", "polite", "quiet", "rural", "simple",
    "typical", "urban", "vivid", "wealthy", "young", "formal", "annual", "hidden", "scientific",
    "digital", "ethical", "global", "historic", "medical", "natural", "personal", "seasonal",
    "technical", "political", "economic", "cultural"};

constexpr std::array<std::string_view, 6> kBlacklisted{"image", "video", "map", "diagram", "audio", "flowchart"};

constexpr std::array<std::string_view, 6> kExplanations{
    "The response is correct and follows the instruction.",
    "The response is mostly correct but lacks detail.",
    "The response is partially correct.",
    "The response does not address the instruction.",
    "The response is correct, organized, and instruction-following.",
    "The response is unclear and contains errors."};

std::uint64_t call_hash(std::uint64_t seed, const ModelRef& model, std::string_view kind,
                        std::string_view a, std::string_view b, const GenerationParams* p) {
  std::string params;
  if (p) {
    std::ostringstream os;
    os.precision(17);
    os << p->temperature << '|' << p->top_p << '|' << p->max_tokens << '|'
       << (p->rng_seed ? std::to_string(*p->rng_seed) : "-") << '|' << text::join(p->stop, "\x1f");
    params = os.str();
  }
  const std::string s = std::to_string(seed);
  const std::string digest = sha256_parts({s, model.locator, kind, a, b, params});
  return std::stoull(digest.substr(0, 16), nullptr, 16);
}

std::string words(Rng& rng, std::size_t lo, std::size_t hi) {
  const std::size_t n = lo + rng.below(hi - lo + 1);
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) out += ' ';
    out += kWords[rng.below(std::size(kWords))];
  }
  return out;
}

bool ends_with_trimmed(std::string_view s, std::string_view suffix) {
  s = text::trim(s);
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

std::string make_instruction(Rng& rng, const MockConfig& cfg, const std::vector<std::string>& demos) {
  if (!demos.empty() && rng.unit() < cfg.duplicate_rate) return demos[rng.below(demos.size())];
  std::string out(kVerbs[rng.below(kVerbs.size())]);
  out += " the ";
  out += words(rng, 4, 12);
  if (rng.unit() < cfg.blacklist_rate) {
    out += " using an ";
    out += kBlacklisted[rng.below(kBlacklisted.size())];
  }
  out += '.';
  return out;
}

std::string task_list_reply(Rng& rng, const MockConfig& cfg, std::string_view prompt) {
  static const std::regex header(R"((\d+)\s*\.\s*Instruction:)");
  static const std::regex demo_line(R"(\d+\s*\.\s*Instruction:[ \t]*([^\n]+))");
  int next = 1;
  std::vector<std::string> demos;
  const std::string p(prompt);
  for (auto it = std::sregex_iterator(p.begin(), p.end(), header); it != std::sregex_iterator(); ++it) {
    next = std::stoi((*it)[1].str());
  }
  for (auto it = std::sregex_iterator(p.begin(), p.end(), demo_line); it != std::sregex_iterator(); ++it) {
    demos.push_back(std::string(text::trim((*it)[1].str())));
  }
  std::string out;
  for (int k = 0; k < cfg.tasks_per_completion; ++k) {
    const int idx = next + k;
    if (k > 0) out += "\n###\n" + std::to_string(idx) + ". Instruction: ";
    else out += ' ';
    out += make_instruction(rng, cfg, demos);
    out += "\n" + std::to_string(idx) + ". Input:\n";
    out += rng.unit() < 0.5 ? std::string("<noinput>") : words(rng, 5, 15);
  }
  return out;
}

int draw_score(Rng& rng, const MockConfig& cfg) {
  double total = 0;
  for (double w : cfg.score_weights) total += w;
  double u = rng.unit() * total;
  for (int s = 0; s < 10; ++s) {
    u -= cfg.score_weights[s];
    if (u < 0) return s + 1;
  }
  return 10;
}

}  // namespace

MockConfig MockConfig::from_json(const nlohmann::json& j) {
  MockConfig c;
  c.seed = j.value("seed", c.seed);
  c.embedding_dim = j.value("embedding_dim", c.embedding_dim);
  c.supports_logprobs = j.value("supports_logprobs", c.supports_logprobs);
  c.supports_embeddings = j.value("supports_embeddings", c.supports_embeddings);
  const std::string mode = j.value("logprob_mode", std::string("hashed"));
  if (mode == "uniform") c.logprob_mode = LogprobMode::uniform;
  else if (mode == "hashed") c.logprob_mode = LogprobMode::hashed;
  else fail(ErrorCode::invalid_argument, "mock: unknown logprob_mode '" + mode + "'");
  c.uniform_p = j.value("uniform_p", c.uniform_p);
  c.tasks_per_completion = j.value("tasks_per_completion", c.tasks_per_completion);
  c.blacklist_rate = j.value("blacklist_rate", c.blacklist_rate);
  c.duplicate_rate = j.value("duplicate_rate", c.duplicate_rate);
  c.empty_response_rate = j.value("empty_response_rate", c.empty_response_rate);
  c.inflight = j.value("inflight", c.inflight);
  if (j.contains("score_weights")) {
    const auto w = j["score_weights"].get<std::vector<double>>();
    require(w.size() == 10, "mock: score_weights needs 10 entries");
    std::copy(w.begin(), w.end(), c.score_weights.begin());
  }
  if (j.contains("rules")) {
    for (const auto& r : j["rules"]) {
      MockRule rule;
      rule.contains = r.at("contains").get<std::string>();
      if (r.contains("reply")) rule.reply = r["reply"].get<std::string>();
      rule.fail = r.value("fail", false);
      if (r.contains("embedding")) rule.embedding = r["embedding"].get<std::vector<double>>();
      if (r.contains("logprobs")) rule.logprobs = r["logprobs"].get<std::vector<double>>();
      c.rules.push_back(std::move(rule));
    }
  }
  require(c.uniform_p > 0.0 && c.uniform_p <= 1.0, "mock: uniform_p must lie in (0,1]");
  require(c.embedding_dim > 0, "mock: embedding_dim must be > 0");
  require(c.tasks_per_completion > 0, "mock: tasks_per_completion must be > 0");
  return c;
}

MockConfig MockConfig::load(const fs::path& fixture) {
  try {
    return from_json(nlohmann::json::parse(read_file(fixture)));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::parse, fixture.string() + ": " + e.what());
  }
}

MockGateway::MockGateway(MockConfig config) : config_(std::move(config)) {}

const MockRule* MockGateway::match(std::string_view haystack, bool (*wants)(const MockRule&)) const {
  for (const auto& r : config_.rules) {
    if (wants(r) && haystack.find(r.contains) != std::string_view::npos) return &r;
  }
  return nullptr;
}

Completion MockGateway::do_complete(const ModelRef& model, std::string_view prompt,
                                    const GenerationParams& params) {
  Rng rng(call_hash(config_.seed, model, "complete", prompt, {}, &params));
  std::string reply;
  if (const MockRule* r = match(prompt, [](const MockRule& m) { return m.fail || m.reply.has_value(); })) {
    if (r->fail) fail(ErrorCode::protocol, "mock: scripted failure for prompt matching '" + r->contains + "'");
    reply = *r->reply;
  } else if (ends_with_trimmed(prompt, "your score is:") ||
             ends_with_trimmed(prompt, "Assess the instruction-response pair:")) {
    reply = std::to_string(draw_score(rng, config_)) + " || " +
            std::string(kExplanations[rng.below(kExplanations.size())]);
  } else if (ends_with_trimmed(prompt, "Instruction:") && prompt.find("###") != std::string_view::npos) {
    reply = task_list_reply(rng, config_, prompt);
  } else if (rng.unit() < config_.empty_response_rate) {
    reply.clear();
  } else {
    reply = "The " + words(rng, 8, 40) + ".";
  }

  Completion c;
  const auto tokens = text::split_whitespace(reply);
  if (tokens.size() > static_cast<std::size_t>(params.max_tokens)) {
    const auto& last = tokens[params.max_tokens - 1];
    reply.resize(static_cast<std::size_t>(last.data() + last.size() - reply.data()));
    c.truncated = true;
  }
  c.text = std::move(reply);
  return c;
}

std::vector<TokenLogprob> MockGateway::do_token_logprobs(const ModelRef& model, std::string_view context,
                                                         std::string_view continuation) {
  const auto tokens = text::split_whitespace(continuation);
  std::vector<TokenLogprob> out;
  out.reserve(tokens.size());
  const MockRule* rule = match(continuation, [](const MockRule& m) { return m.logprobs.has_value(); });
  if (rule) {
    for (std::size_t i = 0; i < rule->logprobs->size(); ++i) {
      out.push_back({i < tokens.size() ? std::string(tokens[i]) : std::string(), (*rule->logprobs)[i]});
    }
    return out;
  }
  Rng rng(call_hash(config_.seed, model, "logprobs", context, continuation, nullptr));
  for (auto tok : tokens) {
    double lp = std::log(config_.uniform_p);
    if (config_.logprob_mode == MockConfig::LogprobMode::hashed) lp = std::log(0.05 + 0.95 * (1.0 - rng.unit()));
    out.push_back({std::string(tok), lp});
  }
  return out;
}

std::vector<double> MockGateway::do_embed(const ModelRef& model, std::string_view text) {
  if (const MockRule* r = match(text, [](const MockRule& m) { return m.embedding.has_value(); })) {
    return *r->embedding;
  }
  // Feature hashing over unigrams and bigrams with Gaussian directions.
  std::vector<double> v(config_.embedding_dim, 0.0);
  const auto tokens = text::split_whitespace(text);
  auto add_feature = [&](std::string_view feature) {
    Rng rng(call_hash(config_.seed, model, "embed", feature, {}, nullptr));
    for (double& x : v) {
      const double u1 = 1.0 - rng.unit();
      const double u2 = rng.unit();
      x += std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }
  };
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    add_feature(tokens[i]);
    if (i + 1 < tokens.size()) add_feature(std::string(tokens[i]) + "\x1f" + std::string(tokens[i + 1]));
  }
  double norm = 0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  if (norm > 0) {
    for (double& x : v) x /= norm;
  }
  return v;
}

}  // namespace loopforge
