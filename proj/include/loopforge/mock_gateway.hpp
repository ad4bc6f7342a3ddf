#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "loopforge/gateway.hpp"

namespace loopforge {

/// A scripted override. The first rule whose `contains` is a substring of the
/// prompt (complete), the text (embed) or the continuation (token_logprobs)
/// decides the answer for that kind of call.
struct MockRule {
  std::string contains;
  std::optional<std::string> reply;
  bool fail = false;  // complete() raises a non-retryable protocol error
  std::optional<std::vector<double>> embedding;
  std::optional<std::vector<double>> logprobs;
};

struct MockConfig {
  std::uint64_t seed = 7;
  std::size_t embedding_dim = 16;
  bool supports_logprobs = true;
  bool supports_embeddings = true;
  // uniform: every token gets ln(uniform_p); hashed: pseudo-random in (ln 0.05, 0].
  enum class LogprobMode { uniform, hashed } logprob_mode = LogprobMode::hashed;
  double uniform_p = 0.5;
  int tasks_per_completion = 5;
  double blacklist_rate = 0.1;  // generated task mentions a non-text medium
  double duplicate_rate = 0.05;  // generated task repeats a demo verbatim
  double empty_response_rate = 0.0;
  // Relative weight of self-assessment scores 1..10.
  std::array<double, 10> score_weights{1, 1, 1, 2, 2, 3, 5, 10, 14, 16};
  std::vector<MockRule> rules;
  std::size_t inflight = 4;

  static MockConfig from_json(const nlohmann::json& j);
  static MockConfig load(const fs::path& fixture);
};

/// Deterministic in-process backend: every answer is a pure function of the
/// configured seed, the model locator, the prompt and the decoding params.
/// Understands the task-generation, response and self-assessment prompts the
/// pipeline sends, so whole runs can execute without a model server.
class MockGateway final : public Gateway {
 public:
  explicit MockGateway(MockConfig config = {});

  const MockConfig& config() const { return config_; }

  bool supports_logprobs() const override { return config_.supports_logprobs; }
  bool supports_embeddings() const override { return config_.supports_embeddings; }
  std::size_t default_inflight() const override { return config_.inflight; }

 protected:
  Completion do_complete(const ModelRef& model, std::string_view prompt,
                         const GenerationParams& params) override;
  std::vector<TokenLogprob> do_token_logprobs(const ModelRef& model, std::string_view context,
                                              std::string_view continuation) override;
  std::vector<double> do_embed(const ModelRef& model, std::string_view text) override;

 private:
  const MockRule* match(std::string_view haystack, bool (*wants)(const MockRule&)) const;

  MockConfig config_;
};

}  // namespace loopforge
