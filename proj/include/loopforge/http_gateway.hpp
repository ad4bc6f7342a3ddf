#pragma once

#include <optional>
#include <string>

#include "loopforge/gateway.hpp"

namespace loopforge {

struct HttpGatewayConfig {
  std::string base_url = "http://127.0.0.1:8000/v1";
  std::string api_key_env = "OPENAI_API_KEY";
  std::optional<std::string> api_key;  // wins over the environment when set
  double timeout_s = 120.0;
  int max_attempts = 5;
  int backoff_initial_ms = 500;
  int backoff_max_ms = 8000;
  // chat: /chat/completions, the server applies the chat template.
  // completions: /completions with the template applied here.
  enum class Endpoint { chat, completions } endpoint = Endpoint::chat;
  ChatTemplate chat_template = ChatTemplate::none;
  std::string embedding_model;  // empty: use the model's own locator
  bool supports_logprobs = true;
  bool supports_embeddings = true;
  std::size_t max_inflight = 8;

  static HttpGatewayConfig from_json(const nlohmann::json& j);
};

/// Client for OpenAI-compatible inference servers. Transport failures,
/// HTTP 429 and 5xx are retried with exponential backoff up to max_attempts;
/// any other non-2xx answer is a protocol error.
///
/// Token logprobs use /completions with echo=true and max_tokens=0, keeping
/// the tokens whose text extends past the end of the context.
class HttpGateway final : public Gateway {
 public:
  explicit HttpGateway(HttpGatewayConfig config);

  bool supports_logprobs() const override { return config_.supports_logprobs; }
  bool supports_embeddings() const override { return config_.supports_embeddings; }
  std::size_t default_inflight() const override { return config_.max_inflight; }

  const HttpGatewayConfig& config() const { return config_; }

 protected:
  Completion do_complete(const ModelRef& model, std::string_view prompt,
                         const GenerationParams& params) override;
  std::vector<TokenLogprob> do_token_logprobs(const ModelRef& model, std::string_view context,
                                              std::string_view continuation) override;
  std::vector<double> do_embed(const ModelRef& model, std::string_view text) override;

 private:
  struct Response {
    nlohmann::json body;
    int attempts = 1;
  };
  Response post(const std::string& path, const nlohmann::json& body);

  HttpGatewayConfig config_;
  std::string host_;         // scheme://host:port
  std::string path_prefix_;  // e.g. /v1
  std::string api_key_;
};

}  // namespace loopforge
