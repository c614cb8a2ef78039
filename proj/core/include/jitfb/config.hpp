#pragma once

#include <filesystem>
#include <functional>
#include <istream>
#include <memory>
#include <optional>
#include <string>

#include "jitfb/backends.hpp"
#include "jitfb/classifier.hpp"
#include "jitfb/gateway.hpp"
#include "jitfb/student_sim.hpp"

namespace jitfb {

class ConfigError : public Error {
 public:
  using Error::Error;
};

struct PathsConfig {
  std::filesystem::path bank;
  std::filesystem::path quizzes;
  std::filesystem::path log;
};

enum class BackendKind { Sim, Scripted, Http };

struct BackendConfig {
  BackendKind kind = BackendKind::Sim;
  std::filesystem::path script;  // rule table for Scripted
  HttpChatConfig http;
  /// Applied on top of Sim and Scripted backends.
  FaultInjection faults;
};

struct ServerConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  int threads = 64;
  std::string admin_token;
  std::string anonymization_key;
};

struct AppConfig {
  GatewayConfig gateway;
  RequestOptions request;
  ClassificationStrategy strategy;
  PathsConfig paths;
  BackendConfig backend;
  ServerConfig server;
  SimConfig sim;
};

/// Returns the value of an environment variable, if set.
using EnvLookup = std::function<std::optional<std::string>(const std::string& name)>;

EnvLookup process_env();

/// INI-style key = value text with [section] headers. Any key can be
/// overridden by JITFB_<SECTION>_<KEY> (upper case). Unknown sections and
/// keys are rejected. Relative paths resolve against base_dir.
AppConfig parse_config(std::istream& in, const std::filesystem::path& base_dir, const EnvLookup& env = process_env());
AppConfig load_config(const std::filesystem::path& path, const EnvLookup& env = process_env());
/// Defaults plus environment overrides, for runs without a config file.
AppConfig default_config(const EnvLookup& env = process_env());

std::shared_ptr<CompletionBackend> make_backend(const BackendConfig& config);

}  // namespace jitfb
