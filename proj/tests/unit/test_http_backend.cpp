#include <doctest.h>

#include <chrono>
#include <mutex>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "jitfb/backends.hpp"
#include "jitfb/error.hpp"

using namespace jitfb;
using nlohmann::json;

namespace {

// A local stand-in for a chat-completions endpoint.
struct FakeProvider {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::mutex mutex;
  json last_body;
  httplib::Headers last_headers;
  int status = 200;
  std::string reply = R"({"choices": [{"message": {"role": "assistant", "content": "hello"}}]})";
  std::chrono::milliseconds delay{0};

  FakeProvider() {
    server.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      std::chrono::milliseconds wait;
      {
        std::lock_guard lock(mutex);
        last_body = json::parse(req.body, nullptr, false);
        last_headers = req.headers;
        res.status = status;
        res.set_content(reply, "application/json");
        wait = delay;
      }
      std::this_thread::sleep_for(wait);
    });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }

  ~FakeProvider() {
    server.stop();
    thread.join();
  }

  HttpChatConfig config() const {
    HttpChatConfig c;
    c.base_url = "http://127.0.0.1:" + std::to_string(port);
    c.model = "tiny";
    c.api_key = "key-1";
    return c;
  }
};

CompletionParams params(int timeout_ms = 2000) {
  CompletionParams p;
  p.max_tokens = 77;
  p.temperature = 0.0;
  p.timeout = std::chrono::milliseconds(timeout_ms);
  p.idempotency_key = "idem-9";
  return p;
}

}  // namespace

TEST_SUITE("llm-gateway") {
  TEST_CASE("http backend speaks the chat-completions format") {
    FakeProvider provider;
    HttpChatBackend backend(provider.config());
    CHECK(backend.id() == "http:tiny");
    CHECK(backend.complete("the prompt", params()) == "hello");
    std::lock_guard lock(provider.mutex);
    CHECK(provider.last_body.at("model") == "tiny");
    CHECK(provider.last_body.at("max_tokens") == 77);
    CHECK(provider.last_body.at("temperature") == 0.0);
    CHECK(provider.last_body.at("messages") == json::array({{{"role", "user"}, {"content", "the prompt"}}}));
    CHECK(provider.last_headers.find("Authorization")->second == "Bearer key-1");
    CHECK(provider.last_headers.find("Idempotency-Key")->second == "idem-9");
  }

  TEST_CASE("http backend maps failures to typed errors") {
    FakeProvider provider;
    HttpChatBackend backend(provider.config());
    {
      std::lock_guard lock(provider.mutex);
      provider.status = 503;
    }
    CHECK_THROWS_AS(backend.complete("p", params()), BackendError);
    {
      std::lock_guard lock(provider.mutex);
      provider.status = 200;
      provider.reply = "not json";
    }
    CHECK_THROWS_AS(backend.complete("p", params()), BackendError);
    {
      std::lock_guard lock(provider.mutex);
      provider.reply = R"({"choices": []})";
    }
    CHECK_THROWS_AS(backend.complete("p", params()), BackendError);
    {
      std::lock_guard lock(provider.mutex);
      provider.reply = R"({"choices": [{"message": {"content": "ok"}}]})";
      provider.delay = std::chrono::milliseconds(600);
    }
    CHECK_THROWS_AS(backend.complete("p", params(150)), TimeoutError);
  }

  TEST_CASE("http backend without a model or a server") {
    CHECK_THROWS_AS(HttpChatBackend(HttpChatConfig{}), Error);
    HttpChatConfig c;
    c.base_url = "http://127.0.0.1:1";
    c.model = "m";
    HttpChatBackend backend(c);
    CHECK_THROWS_AS(backend.complete("p", params(300)), BackendError);
  }
}
