#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "jitfb/gateway.hpp"

namespace jitfb {

enum class FaultScope {
  PerAttempt,  // each attempt fails independently
  PerKey,      // every attempt of an affected idempotency key fails
};

struct FaultInjection {
  double failure_rate = 0.0;
  FaultScope scope = FaultScope::PerAttempt;
  std::uint64_t seed = 0;
  std::chrono::milliseconds latency{0};
};

/// Deterministic test double: maps prompts to canned replies. Rules are tried
/// in registration order; the first match wins. Fault decisions are a pure
/// function of (seed, idempotency key, attempt), so they do not depend on
/// thread interleaving.
class ScriptedBackend : public CompletionBackend {
 public:
  using Responder = std::function<std::optional<std::string>(std::string_view prompt)>;

  explicit ScriptedBackend(std::string id = "scripted");

  ScriptedBackend& on_hash(std::uint64_t content_hash, std::string response);
  ScriptedBackend& on_contains(std::string needle, std::string response);
  ScriptedBackend& on_prompt(Responder responder);
  ScriptedBackend& otherwise(std::string response);
  /// Matching prompts always fail with BackendError.
  ScriptedBackend& fail_on_contains(std::string needle);
  ScriptedBackend& set_faults(FaultInjection faults);

  /// Loads a rule table. Each line is one JSON object:
  ///   {"faults": {"failure_rate": 0.1, "scope": "per_attempt", "seed": 7, "latency_ms": 0}}
  ///   {"match": {"content_hash": "<16 hex>"}, "response": "..."}
  ///   {"match": {"contains": "..."}, "response": "...", "fail": false}
  ///   {"match": {"any": true}, "response": "..."}
  static std::shared_ptr<ScriptedBackend> from_jsonl(const std::filesystem::path& path,
                                                      std::string id = "scripted");

  std::string id() const override { return id_; }
  std::string complete(std::string_view prompt_text, const CompletionParams& params) override;

  std::uint64_t calls() const noexcept { return calls_.load(); }

 private:
  struct Rule {
    enum class Kind { Hash, Contains, Any, Responder } kind;
    std::uint64_t hash = 0;
    std::string needle;
    std::string response;
    Responder responder;
    bool fail = false;
  };

  bool inject_failure(const CompletionParams& params) const noexcept;

  std::string id_;
  std::vector<Rule> rules_;
  FaultInjection faults_;
  std::atomic<std::uint64_t> calls_{0};
};

struct HttpChatConfig {
  std::string base_url = "http://127.0.0.1:8000";
  std::string path = "/v1/chat/completions";
  std::string model;
  std::string api_key;
};

/// Speaks the chat-completions wire format:
///   request  {"model", "messages": [{"role": "user", "content": prompt}], "temperature", "max_tokens"}
///   response {"choices": [{"message": {"content": "..."}}]}
class HttpChatBackend : public CompletionBackend {
 public:
  explicit HttpChatBackend(HttpChatConfig config);
  std::string id() const override { return "http:" + config_.model; }
  std::string complete(std::string_view prompt_text, const CompletionParams& params) override;

 private:
  HttpChatConfig config_;
};

}  // namespace jitfb
