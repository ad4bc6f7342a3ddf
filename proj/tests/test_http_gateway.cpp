#include "helpers.hpp"

#include <httplib.h>

#include <chrono>
#include <mutex>
#include <thread>

#include "loopforge/http_gateway.hpp"

using namespace loopforge;
using nlohmann::json;

namespace {

const ModelRef kModel = ModelRef::base("served-model");
const GenerationParams kParams{0.0, 1.0, 64, {}, std::nullopt};

class StubServer {
 public:
  StubServer() {
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubServer() {
    server_.stop();
    thread_.join();
  }
  httplib::Server& server() { return server_; }
  std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

HttpGatewayConfig config_for(const StubServer& s) {
  HttpGatewayConfig c;
  c.base_url = s.base_url();
  c.backoff_initial_ms = 1;
  c.backoff_max_ms = 4;
  c.timeout_s = 5;
  c.api_key_env = "";
  return c;
}

json chat_reply(const std::string& text, const std::string& finish = "stop") {
  return {{"choices", json::array({{{"message", {{"role", "assistant"}, {"content", text}}},
                                    {"finish_reason", finish}}})}};
}

}  // namespace

TEST_CASE("HTTP 429 is retried once and the retry is recorded") {
  StubServer stub;
  std::mutex mu;
  int calls = 0;
  json last_body;
  stub.server().Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    std::lock_guard<std::mutex> lock(mu);
    last_body = json::parse(req.body);
    if (calls++ == 0) {
      res.status = 429;
      return;
    }
    res.set_content(chat_reply("hello").dump(), "application/json");
  });
  HttpGateway g(config_for(stub));
  const auto r = g.complete(kModel, "Say hello.", kParams);
  CHECK(r.text == "hello");
  CHECK(r.attempts == 2);
  CHECK(g.stats().retries == 1);
  CHECK(calls == 2);
  CHECK(last_body["model"] == "served-model");
  CHECK(last_body["messages"][0]["content"] == "Say hello.");
  CHECK(last_body["max_tokens"] == 64);
}

TEST_CASE("persistent 5xx exhausts the attempt budget") {
  StubServer stub;
  std::atomic<int> calls{0};
  stub.server().Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    ++calls;
    res.status = 503;
  });
  HttpGateway g(config_for(stub));
  CHECK_THROWS_CODE(g.complete(kModel, "x", kParams), ErrorCode::transport);
  CHECK(calls == 5);
}

TEST_CASE("other client errors are not retried") {
  StubServer stub;
  std::atomic<int> calls{0};
  stub.server().Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    ++calls;
    res.status = 400;
    res.set_content("{\"error\": \"bad\"}", "application/json");
  });
  HttpGateway g(config_for(stub));
  CHECK_THROWS_CODE(g.complete(kModel, "x", kParams), ErrorCode::protocol);
  CHECK(calls == 1);
}

TEST_CASE("unreachable server is a transport error") {
  HttpGatewayConfig c;
  c.base_url = "http://127.0.0.1:1/v1";
  c.max_attempts = 2;
  c.backoff_initial_ms = 1;
  c.timeout_s = 1;
  HttpGateway g(c);
  CHECK_THROWS_CODE(g.complete(kModel, "x", kParams), ErrorCode::transport);
}

TEST_CASE("batches never exceed max_inflight outstanding requests") {
  StubServer stub;
  std::mutex mu;
  int live = 0, peak = 0;
  stub.server().Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    {
      std::lock_guard<std::mutex> lock(mu);
      peak = std::max(peak, ++live);
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
    {
      std::lock_guard<std::mutex> lock(mu);
      --live;
    }
    const std::string prompt = json::parse(req.body)["messages"][0]["content"];
    res.set_content(chat_reply("re: " + prompt).dump(), "application/json");
  });
  HttpGateway g(config_for(stub));
  std::vector<std::string> prompts;
  for (int i = 0; i < 10; ++i) prompts.push_back("p" + std::to_string(i));
  const auto items = g.complete_batch(kModel, prompts, kParams, 3);
  REQUIRE(items.size() == 10);
  for (int i = 0; i < 10; ++i) {
    REQUIRE(items[i].ok());
    CHECK(items[i].completion->text == "re: p" + std::to_string(i));
  }
  CHECK(peak <= 3);
  CHECK(peak >= 1);
}

TEST_CASE("completions endpoint applies the chat template and flags truncation") {
  StubServer stub;
  json seen;
  stub.server().Post("/v1/completions", [&](const httplib::Request& req, httplib::Response& res) {
    seen = json::parse(req.body);
    res.set_content(json({{"choices", json::array({{{"text", "partial"}, {"finish_reason", "length"}}})}}).dump(),
                    "application/json");
  });
  HttpGatewayConfig c = config_for(stub);
  c.endpoint = HttpGatewayConfig::Endpoint::completions;
  c.chat_template = ChatTemplate::qwen_like;
  HttpGateway g(c);
  const auto r = g.complete(kModel, "hi", kParams);
  CHECK(r.text == "partial");
  CHECK(r.truncated);
  CHECK(seen["prompt"] == apply_chat_template(ChatTemplate::qwen_like, "hi"));
  const auto stops = seen["stop"].get<std::vector<std::string>>();
  CHECK(std::find(stops.begin(), stops.end(), "<|im_end|>") != stops.end());
}

TEST_CASE("logprobs keep only continuation tokens") {
  StubServer stub;
  json seen;
  stub.server().Post("/v1/completions", [&](const httplib::Request& req, httplib::Response& res) {
    seen = json::parse(req.body);
    // "Q: " + "a b c" tokenized as ["Q", ":", " a", " b", " c"].
    json lp = {{"tokens", {"Q", ":", " a", " b", " c"}},
               {"token_logprobs", {nullptr, -0.5, -0.1, -0.2, -0.3}},
               {"text_offset", {0, 1, 2, 4, 6}}};
    res.set_content(json({{"choices", json::array({{{"text", ""}, {"logprobs", lp}}})}}).dump(),
                    "application/json");
  });
  HttpGateway g(config_for(stub));
  const auto lps = g.token_logprobs(kModel, "Q:", " a b c");
  REQUIRE(lps.size() == 3);
  CHECK(lps[0].logprob == -0.1);
  CHECK(lps[2].logprob == -0.3);
  CHECK(lps[1].token == " b");
  CHECK(seen["echo"] == true);
  CHECK(seen["max_tokens"] == 0);
  CHECK(seen["prompt"] == "Q: a b c");
}

TEST_CASE("embeddings and bearer auth") {
  StubServer stub;
  std::string auth;
  stub.server().Post("/v1/embeddings", [&](const httplib::Request& req, httplib::Response& res) {
    auth = req.get_header_value("Authorization");
    res.set_content(json({{"data", json::array({{{"embedding", {0.25, -0.5, 1.0}}}})}}).dump(), "application/json");
  });
  HttpGatewayConfig c = config_for(stub);
  c.api_key = "secret";
  HttpGateway g(c);
  CHECK(g.embed(kModel, "text") == std::vector<double>{0.25, -0.5, 1.0});
  CHECK(auth == "Bearer secret");
}

TEST_CASE("malformed replies are protocol errors") {
  StubServer stub;
  stub.server().Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
    res.set_content("{\"choices\": []}", "application/json");
  });
  HttpGateway g(config_for(stub));
  CHECK_THROWS_CODE(g.complete(kModel, "x", kParams), ErrorCode::protocol);
}

TEST_CASE("config parsing") {
  const auto c = HttpGatewayConfig::from_json(
      {{"base_url", "http://h:1/v1"}, {"max_retries", 3}, {"endpoint", "completions"}, {"chat_template", "llama3_like"}});
  CHECK(c.max_attempts == 3);
  CHECK(c.endpoint == HttpGatewayConfig::Endpoint::completions);
  CHECK(c.chat_template == ChatTemplate::llama3_like);
  CHECK_THROWS_CODE(HttpGatewayConfig::from_json({{"max_attempts", 9}}), ErrorCode::invalid_argument);
}
