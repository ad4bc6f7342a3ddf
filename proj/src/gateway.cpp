#include "loopforge/gateway.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "loopforge/text.hpp"

namespace loopforge {

void GenerationParams::validate() const {
  require(temperature >= 0.0 && std::isfinite(temperature), "temperature must be >= 0");
  require(top_p > 0.0 && top_p <= 1.0, "top_p must lie in (0,1]");
  require(max_tokens > 0, "max_tokens must be > 0");
}

nlohmann::json to_json(const GenerationParams& p) {
  nlohmann::json j;
  j["temperature"] = p.temperature;
  j["top_p"] = p.top_p;
  j["max_tokens"] = p.max_tokens;
  j["stop"] = p.stop;
  j["rng_seed"] = p.rng_seed ? nlohmann::json(*p.rng_seed) : nlohmann::json(nullptr);
  return j;
}

GenerationParams generation_params_from_json(const nlohmann::json& j, GenerationParams p) {
  if (j.contains("temperature")) p.temperature = j["temperature"].get<double>();
  if (j.contains("top_p")) p.top_p = j["top_p"].get<double>();
  if (j.contains("max_tokens")) p.max_tokens = j["max_tokens"].get<int>();
  if (j.contains("stop")) p.stop = j["stop"].get<std::vector<std::string>>();
  if (j.contains("rng_seed") && !j["rng_seed"].is_null()) p.rng_seed = j["rng_seed"].get<std::uint64_t>();
  p.validate();
  return p;
}

std::string_view to_string(ChatTemplate t) {
  switch (t) {
    case ChatTemplate::none: return "none";
    case ChatTemplate::qwen_like: return "qwen_like";
    case ChatTemplate::llama3_like: return "llama3_like";
  }
  return "none";
}

ChatTemplate chat_template_from_string(std::string_view s) {
  if (s == "none") return ChatTemplate::none;
  if (s == "qwen_like") return ChatTemplate::qwen_like;
  if (s == "llama3_like") return ChatTemplate::llama3_like;
  fail(ErrorCode::invalid_argument, "unknown chat template '" + std::string(s) + "'");
}

std::string apply_chat_template(ChatTemplate t, std::string_view user_prompt) {
  std::string out;
  switch (t) {
    case ChatTemplate::none:
      return std::string(user_prompt);
    case ChatTemplate::qwen_like:
      out = "<|im_start|>system\nYou are a helpful assistant.<|im_end|>\n";
      out += "<|im_start|>user\n";
      out += user_prompt;
      out += "<|im_end|>\n<|im_start|>assistant\n";
      return out;
    case ChatTemplate::llama3_like:
      out = "<|start_header_id|>user<|end_header_id|>\n\n";
      out += user_prompt;
      out += "<|eot_id|><|start_header_id|>assistant<|end_header_id|>\n\n";
      return out;
  }
  return out;
}

std::vector<std::string> chat_template_stop_words(ChatTemplate t) {
  switch (t) {
    case ChatTemplate::qwen_like: return {"<|im_end|>", "<|endoftext|>"};
    case ChatTemplate::llama3_like: return {"<|eot_id|>"};
    case ChatTemplate::none: break;
  }
  return {};
}

void run_bounded(std::size_t n, std::size_t max_inflight,
                 const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  const std::size_t workers = std::max<std::size_t>(1, std::min(max_inflight, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

Completion Gateway::complete(const ModelRef& model, std::string_view prompt,
                             const GenerationParams& params) {
  require(!prompt.empty(), "complete: prompt must be non-empty");
  params.validate();
  completions_.fetch_add(1, std::memory_order_relaxed);
  try {
    Completion c = do_complete(model, prompt, params);
    text::truncate_at_stop(c.text, params.stop);
    return c;
  } catch (...) {
    failures_.fetch_add(1, std::memory_order_relaxed);
    throw;
  }
}

std::vector<BatchItem> Gateway::complete_batch(const ModelRef& model,
                                               const std::vector<std::string>& prompts,
                                               const GenerationParams& params,
                                               std::size_t max_inflight) {
  require(max_inflight >= 1, "complete_batch: max_inflight must be >= 1");
  std::vector<BatchItem> results(prompts.size());
  run_bounded(prompts.size(), max_inflight, [&](std::size_t i) {
    try {
      results[i].completion = complete(model, prompts[i], params);
    } catch (const Error& e) {
      results[i].error_code = e.code();
      results[i].error = e.what();
    } catch (const std::exception& e) {
      results[i].error_code = ErrorCode::protocol;
      results[i].error = e.what();
    }
  });
  return results;
}

std::vector<TokenLogprob> Gateway::token_logprobs(const ModelRef& model, std::string_view context,
                                                  std::string_view continuation) {
  require(!continuation.empty(), "token_logprobs: continuation must be non-empty");
  if (!supports_logprobs()) fail(ErrorCode::capability, "backend does not provide token logprobs");
  logprob_calls_.fetch_add(1, std::memory_order_relaxed);
  auto out = do_token_logprobs(model, context, continuation);
  for (const auto& t : out) {
    if (!std::isfinite(t.logprob) || t.logprob > 0.0) {
      fail(ErrorCode::protocol, "backend returned invalid logprob for token '" + t.token + "'");
    }
  }
  return out;
}

std::vector<double> Gateway::embed(const ModelRef& model, std::string_view text) {
  require(!text.empty(), "embed: text must be non-empty");
  if (!supports_embeddings()) fail(ErrorCode::capability, "backend does not provide embeddings");
  embed_calls_.fetch_add(1, std::memory_order_relaxed);
  auto v = do_embed(model, text);
  for (double x : v) {
    if (!std::isfinite(x)) fail(ErrorCode::protocol, "backend returned a non-finite embedding");
  }
  return v;
}

GatewayStats Gateway::stats() const {
  GatewayStats s;
  s.completions = completions_.load();
  s.logprob_calls = logprob_calls_.load();
  s.embed_calls = embed_calls_.load();
  s.retries = retries_.load();
  s.failures = failures_.load();
  return s;
}

}  // namespace loopforge
