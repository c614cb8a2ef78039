#include <httplib.h>

#include <nlohmann/json.hpp>

#include "jitfb/backends.hpp"

namespace jitfb {

HttpChatBackend::HttpChatBackend(HttpChatConfig config) : config_(std::move(config)) {
  if (config_.model.empty()) throw Error("http backend requires a model name");
}

std::string HttpChatBackend::complete(std::string_view prompt_text, const CompletionParams& params) {
  httplib::Client client(config_.base_url);
  const auto secs = params.timeout.count() / 1000;
  const auto usecs = (params.timeout.count() % 1000) * 1000;
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);

  nlohmann::json body = {
      {"model", config_.model},
      {"messages", nlohmann::json::array({{{"role", "user"}, {"content", std::string(prompt_text)}}})},
      {"temperature", params.temperature},
      {"max_tokens", params.max_tokens},
  };
  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);
  if (!params.idempotency_key.empty()) headers.emplace("Idempotency-Key", params.idempotency_key);

  auto res = client.Post(config_.path, headers, body.dump(), "application/json");
  if (!res) {
    const auto err = res.error();
    if (err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout) {
      throw TimeoutError(httplib::to_string(err));
    }
    throw BackendError(httplib::to_string(err));
  }
  if (res->status != 200) throw BackendError("HTTP " + std::to_string(res->status));
  auto reply = nlohmann::json::parse(res->body, nullptr, false);
  if (reply.is_discarded()) throw BackendError("reply is not JSON");
  try {
    return reply.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception&) {
    throw BackendError("reply lacks choices[0].message.content");
  }
}

}  // namespace jitfb
