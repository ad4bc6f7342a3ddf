#include "loopforge/http_gateway.hpp"

#include <httplib.h>

#include <chrono>
#include <cstdlib>
#include <thread>

namespace loopforge {

using nlohmann::json;

HttpGatewayConfig HttpGatewayConfig::from_json(const json& j) {
  HttpGatewayConfig c;
  c.base_url = j.value("base_url", c.base_url);
  c.api_key_env = j.value("api_key_env", c.api_key_env);
  if (j.contains("api_key") && !j["api_key"].is_null()) c.api_key = j["api_key"].get<std::string>();
  c.timeout_s = j.value("timeout_s", c.timeout_s);
  c.max_attempts = j.value("max_retries", c.max_attempts);
  c.max_attempts = j.value("max_attempts", c.max_attempts);
  c.backoff_initial_ms = j.value("backoff_initial_ms", c.backoff_initial_ms);
  c.backoff_max_ms = j.value("backoff_max_ms", c.backoff_max_ms);
  const std::string endpoint = j.value("endpoint", std::string("chat"));
  if (endpoint == "chat") c.endpoint = Endpoint::chat;
  else if (endpoint == "completions") c.endpoint = Endpoint::completions;
  else fail(ErrorCode::invalid_argument, "http gateway: unknown endpoint '" + endpoint + "'");
  c.chat_template = chat_template_from_string(j.value("chat_template", std::string("none")));
  c.embedding_model = j.value("embedding_model", c.embedding_model);
  c.supports_logprobs = j.value("supports_logprobs", c.supports_logprobs);
  c.supports_embeddings = j.value("supports_embeddings", c.supports_embeddings);
  c.max_inflight = j.value("max_inflight", c.max_inflight);
  require(c.max_attempts >= 1 && c.max_attempts <= 5, "http gateway: max_attempts must lie in [1,5]");
  require(c.timeout_s > 0, "http gateway: timeout_s must be > 0");
  require(c.max_inflight >= 1, "http gateway: max_inflight must be >= 1");
  return c;
}

HttpGateway::HttpGateway(HttpGatewayConfig config) : config_(std::move(config)) {
  require(config_.max_attempts >= 1, "http gateway: max_attempts must be >= 1");
  const std::string& url = config_.base_url;
  const auto scheme_end = url.find("://");
  require(scheme_end != std::string::npos, "http gateway: base_url needs a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  host_ = url.substr(0, path_start);
  path_prefix_ = path_start == std::string::npos ? "" : url.substr(path_start);
  while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
  if (config_.api_key) {
    api_key_ = *config_.api_key;
  } else if (!config_.api_key_env.empty()) {
    if (const char* env = std::getenv(config_.api_key_env.c_str())) api_key_ = env;
  }
}

HttpGateway::Response HttpGateway::post(const std::string& path, const json& body) {
  const std::string payload = body.dump();
  const auto timeout = std::chrono::duration<double>(config_.timeout_s);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
  std::string last_error;
  int delay_ms = config_.backoff_initial_ms;
  for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
    if (attempt > 1) {
      count_retry();
      std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
      delay_ms = std::min(delay_ms * 2, config_.backoff_max_ms);
    }
    httplib::Client client(host_);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
    auto res = client.Post(path_prefix_ + path, headers, payload, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      continue;
    }
    const int status = res->status;
    if (status == 429 || status >= 500) {
      last_error = "HTTP " + std::to_string(status);
      continue;
    }
    if (status < 200 || status >= 300) {
      fail(ErrorCode::protocol, "POST " + path + ": HTTP " + std::to_string(status) + ": " + res->body);
    }
    try {
      return Response{json::parse(res->body), attempt};
    } catch (const json::exception& e) {
      fail(ErrorCode::protocol, "POST " + path + ": malformed JSON: " + e.what());
    }
  }
  fail(ErrorCode::transport, "POST " + path + " failed after " + std::to_string(config_.max_attempts) +
                                 " attempts: " + last_error);
}

Completion HttpGateway::do_complete(const ModelRef& model, std::string_view prompt,
                                    const GenerationParams& params) {
  json body;
  body["model"] = model.locator;
  body["temperature"] = params.temperature;
  body["top_p"] = params.top_p;
  body["max_tokens"] = params.max_tokens;
  if (params.rng_seed) body["seed"] = *params.rng_seed;
  std::vector<std::string> stop = params.stop;
  std::string path;
  if (config_.endpoint == HttpGatewayConfig::Endpoint::chat) {
    body["messages"] = json::array({{{"role", "user"}, {"content", std::string(prompt)}}});
    path = "/chat/completions";
  } else {
    body["prompt"] = apply_chat_template(config_.chat_template, prompt);
    for (auto& w : chat_template_stop_words(config_.chat_template)) stop.push_back(std::move(w));
    path = "/completions";
  }
  if (!stop.empty()) body["stop"] = stop;

  Response res = post(path, body);
  try {
    const auto& choice = res.body.at("choices").at(0);
    Completion c;
    if (config_.endpoint == HttpGatewayConfig::Endpoint::chat) {
      const auto& content = choice.at("message").at("content");
      c.text = content.is_null() ? std::string() : content.get<std::string>();
    } else {
      c.text = choice.at("text").get<std::string>();
    }
    c.truncated = choice.value("finish_reason", std::string()) == "length";
    c.attempts = res.attempts;
    return c;
  } catch (const json::exception& e) {
    fail(ErrorCode::protocol, "completion reply missing fields: " + std::string(e.what()));
  }
}

std::vector<TokenLogprob> HttpGateway::do_token_logprobs(const ModelRef& model, std::string_view context,
                                                         std::string_view continuation) {
  const std::string prefix = context.empty() ? std::string() : apply_chat_template(config_.chat_template, context);
  json body;
  body["model"] = model.locator;
  body["prompt"] = prefix + std::string(continuation);
  body["max_tokens"] = 0;
  body["echo"] = true;
  body["logprobs"] = 1;
  body["temperature"] = 0.0;
  Response res = post("/completions", body);
  try {
    const auto& lp = res.body.at("choices").at(0).at("logprobs");
    const auto& tokens = lp.at("tokens");
    const auto& values = lp.at("token_logprobs");
    const bool has_offsets = lp.contains("text_offset") && lp["text_offset"].is_array();
    std::vector<TokenLogprob> out;
    std::size_t end_of_prev = 0;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      const std::string tok = tokens[i].get<std::string>();
      const std::size_t start = has_offsets ? lp["text_offset"][i].get<std::size_t>() : end_of_prev;
      end_of_prev = start + tok.size();
      if (end_of_prev <= prefix.size()) continue;  // context token
      if (values[i].is_null()) continue;           // first token has no conditional logprob
      out.push_back({tok, values[i].get<double>()});
    }
    if (out.empty()) fail(ErrorCode::protocol, "backend returned no continuation logprobs");
    return out;
  } catch (const json::exception& e) {
    fail(ErrorCode::capability, "backend reply has no usable logprobs: " + std::string(e.what()));
  }
}

std::vector<double> HttpGateway::do_embed(const ModelRef& model, std::string_view text) {
  json body;
  body["model"] = config_.embedding_model.empty() ? model.locator : config_.embedding_model;
  body["input"] = std::string(text);
  Response res = post("/embeddings", body);
  try {
    return res.body.at("data").at(0).at("embedding").get<std::vector<double>>();
  } catch (const json::exception& e) {
    fail(ErrorCode::protocol, "embedding reply missing fields: " + std::string(e.what()));
  }
}

}  // namespace loopforge
