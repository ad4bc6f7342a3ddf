#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "loopforge/corpus.hpp"
#include "loopforge/error.hpp"

namespace loopforge {

struct GenerationParams {
  double temperature = 1.0;
  double top_p = 1.0;
  int max_tokens = 512;
  std::vector<std::string> stop;
  std::optional<std::uint64_t> rng_seed;

  void validate() const;
  bool operator==(const GenerationParams&) const = default;
};

nlohmann::json to_json(const GenerationParams& p);
GenerationParams generation_params_from_json(const nlohmann::json& j, GenerationParams defaults = {});

struct TokenLogprob {
  std::string token;
  double logprob = 0.0;  // natural log, <= 0
};

struct Completion {
  std::string text;
  bool truncated = false;  // generation stopped at max_tokens
  int attempts = 1;
};

/// One positional slot of a batch: either a completion or the error that
/// prevented it.
struct BatchItem {
  std::optional<Completion> completion;
  ErrorCode error_code = ErrorCode::transport;
  std::string error;

  bool ok() const { return completion.has_value(); }
};

enum class ChatTemplate { none, qwen_like, llama3_like };

std::string_view to_string(ChatTemplate t);
ChatTemplate chat_template_from_string(std::string_view s);

/// Wraps a raw user prompt in the model family's chat markup, ready for a
/// plain-completion endpoint.
std::string apply_chat_template(ChatTemplate t, std::string_view user_prompt);
std::vector<std::string> chat_template_stop_words(ChatTemplate t);

struct GatewayStats {
  std::uint64_t completions = 0;
  std::uint64_t logprob_calls = 0;
  std::uint64_t embed_calls = 0;
  std::uint64_t retries = 0;
  std::uint64_t failures = 0;
};

/// Runs fn(i) for i in [0, n) on at most `max_inflight` threads at once.
/// Exceptions from fn must be handled by fn itself.
void run_bounded(std::size_t n, std::size_t max_inflight,
                 const std::function<void(std::size_t)>& fn);

/// Every model interaction goes through a Gateway. Public entry points check
/// preconditions and apply stop sequences; backends implement the do_* hooks.
/// Implementations must be safe to call from several threads.
class Gateway {
 public:
  virtual ~Gateway() = default;

  Completion complete(const ModelRef& model, std::string_view prompt, const GenerationParams& params);

  /// Output order matches input order. A failing item never aborts the batch.
  std::vector<BatchItem> complete_batch(const ModelRef& model, const std::vector<std::string>& prompts,
                                        const GenerationParams& params, std::size_t max_inflight);

  /// One entry per continuation token under the backend's own tokenization.
  std::vector<TokenLogprob> token_logprobs(const ModelRef& model, std::string_view context,
                                           std::string_view continuation);

  std::vector<double> embed(const ModelRef& model, std::string_view text);

  virtual bool supports_logprobs() const { return true; }
  virtual bool supports_embeddings() const { return true; }

  /// Parallelism the pipeline should use for independent calls.
  virtual std::size_t default_inflight() const { return 4; }

  GatewayStats stats() const;

 protected:
  virtual Completion do_complete(const ModelRef& model, std::string_view prompt,
                                 const GenerationParams& params) = 0;
  virtual std::vector<TokenLogprob> do_token_logprobs(const ModelRef& model, std::string_view context,
                                                      std::string_view continuation) = 0;
  virtual std::vector<double> do_embed(const ModelRef& model, std::string_view text) = 0;

  void count_retry() { retries_.fetch_add(1, std::memory_order_relaxed); }

 private:
  std::atomic<std::uint64_t> completions_{0};
  std::atomic<std::uint64_t> logprob_calls_{0};
  std::atomic<std::uint64_t> embed_calls_{0};
  std::atomic<std::uint64_t> retries_{0};
  std::atomic<std::uint64_t> failures_{0};
};

}  // namespace loopforge
