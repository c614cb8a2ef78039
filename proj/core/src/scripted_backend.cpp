#include "jitfb/backends.hpp"

#include <fstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "jitfb/hash.hpp"

namespace jitfb {

ScriptedBackend::ScriptedBackend(std::string id) : id_(std::move(id)) {}

ScriptedBackend& ScriptedBackend::on_hash(std::uint64_t content_hash, std::string response) {
  rules_.push_back({Rule::Kind::Hash, content_hash, {}, std::move(response), {}, false});
  return *this;
}

ScriptedBackend& ScriptedBackend::on_contains(std::string needle, std::string response) {
  rules_.push_back({Rule::Kind::Contains, 0, std::move(needle), std::move(response), {}, false});
  return *this;
}

ScriptedBackend& ScriptedBackend::on_prompt(Responder responder) {
  rules_.push_back({Rule::Kind::Responder, 0, {}, {}, std::move(responder), false});
  return *this;
}

ScriptedBackend& ScriptedBackend::otherwise(std::string response) {
  rules_.push_back({Rule::Kind::Any, 0, {}, std::move(response), {}, false});
  return *this;
}

ScriptedBackend& ScriptedBackend::fail_on_contains(std::string needle) {
  rules_.push_back({Rule::Kind::Contains, 0, std::move(needle), {}, {}, true});
  return *this;
}

ScriptedBackend& ScriptedBackend::set_faults(FaultInjection faults) {
  faults_ = faults;
  return *this;
}

bool ScriptedBackend::inject_failure(const CompletionParams& params) const noexcept {
  if (faults_.failure_rate <= 0.0) return false;
  if (faults_.failure_rate >= 1.0) return true;
  const auto key_hash = fnv1a64(params.idempotency_key);
  const auto stream = faults_.scope == FaultScope::PerKey ? 0U : static_cast<std::uint64_t>(params.attempt);
  const auto bits = mix_seed(faults_.seed ^ key_hash, stream);
  const double u = static_cast<double>(bits >> 11) * 0x1.0p-53;
  return u < faults_.failure_rate;
}

std::string ScriptedBackend::complete(std::string_view prompt_text, const CompletionParams& params) {
  ++calls_;
  if (faults_.latency.count() > 0) {
    if (faults_.latency > params.timeout) {
      std::this_thread::sleep_for(params.timeout);
      throw TimeoutError("scripted latency exceeds timeout");
    }
    std::this_thread::sleep_for(faults_.latency);
  }
  if (inject_failure(params)) throw BackendError("injected fault");

  const auto hash = fnv1a64(prompt_text);
  for (const auto& rule : rules_) {
    switch (rule.kind) {
      case Rule::Kind::Hash:
        if (rule.hash != hash) continue;
        break;
      case Rule::Kind::Contains:
        if (prompt_text.find(rule.needle) == std::string_view::npos) continue;
        break;
      case Rule::Kind::Any: break;
      case Rule::Kind::Responder:
        if (auto reply = rule.responder(prompt_text)) return *reply;
        continue;
    }
    if (rule.fail) throw BackendError("scripted failure");
    return rule.response;
  }
  throw BackendError("no scripted response for prompt " + to_hex(hash));
}

std::shared_ptr<ScriptedBackend> ScriptedBackend::from_jsonl(const std::filesystem::path& path, std::string id) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open scripted backend table " + path.string());
  auto backend = std::make_shared<ScriptedBackend>(std::move(id));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto where = path.string() + ":" + std::to_string(line_no);
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw Error(where + ": not a JSON object");
    try {
      if (j.contains("faults")) {
        const auto& f = j["faults"];
        FaultInjection faults;
        faults.failure_rate = f.value("failure_rate", 0.0);
        faults.scope = f.value("scope", std::string("per_attempt")) == "per_key" ? FaultScope::PerKey
                                                                                 : FaultScope::PerAttempt;
        faults.seed = f.value("seed", std::uint64_t{0});
        faults.latency = std::chrono::milliseconds(f.value("latency_ms", 0));
        backend->set_faults(faults);
        continue;
      }
      const auto& match = j.at("match");
      const bool fail = j.value("fail", false);
      auto response = j.value("response", std::string{});
      if (match.contains("content_hash")) {
        const auto hex = match["content_hash"].get<std::string>();
        backend->on_hash(std::stoull(hex, nullptr, 16), std::move(response));
      } else if (match.contains("contains")) {
        auto needle = match["contains"].get<std::string>();
        if (fail) {
          backend->fail_on_contains(std::move(needle));
        } else {
          backend->on_contains(std::move(needle), std::move(response));
        }
      } else if (match.value("any", false)) {
        backend->otherwise(std::move(response));
      } else {
        throw Error("unknown match kind");
      }
    } catch (const std::exception& e) {
      throw Error(where + ": " + e.what());
    }
  }
  return backend;
}

}  // namespace jitfb
