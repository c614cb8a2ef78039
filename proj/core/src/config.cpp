#include "jitfb/config.hpp"

#include <cctype>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

namespace jitfb {

namespace {

using Setter = std::function<void(AppConfig&, const std::string&)>;

std::string trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return std::string(s);
}

std::string upper(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

long long parse_int(const std::string& v) {
  long long out = 0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError("not an integer: '" + v + "'");
  return out;
}

double parse_double(const std::string& v) {
  char* end = nullptr;
  const double out = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size()) throw ConfigError("not a number: '" + v + "'");
  return out;
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("not a boolean: '" + v + "'");
}

std::vector<double> parse_doubles(const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double(trim(item)));
  return out;
}

template <std::size_t N>
std::array<double, N> parse_array(const std::string& v) {
  const auto values = parse_doubles(v);
  if (values.size() != N) throw ConfigError(fmt::format("expected {} comma-separated numbers", N));
  std::array<double, N> out{};
  std::copy(values.begin(), values.end(), out.begin());
  return out;
}

int to_int(const std::string& v) { return static_cast<int>(parse_int(v)); }

using Table = std::map<std::string, Setter, std::less<>>;

Table make_table() {
  Table t;
  t["gateway.rate_limit_per_s"] = [](AppConfig& c, const std::string& v) { c.gateway.rate_limit_per_s = parse_double(v); };
  t["gateway.burst"] = [](AppConfig& c, const std::string& v) { c.gateway.burst = to_int(v); };
  t["gateway.max_in_flight"] = [](AppConfig& c, const std::string& v) { c.gateway.max_in_flight = to_int(v); };
  t["gateway.retry_limit"] = [](AppConfig& c, const std::string& v) { c.gateway.retry_limit = to_int(v); };
  t["gateway.retry_backoff_ms"] = [](AppConfig& c, const std::string& v) {
    c.gateway.retry_backoff_ms.clear();
    for (double d : parse_doubles(v)) c.gateway.retry_backoff_ms.push_back(static_cast<int>(d));
  };
  t["gateway.queue_capacity"] = [](AppConfig& c, const std::string& v) { c.gateway.queue_capacity = to_int(v); };

  t["request.max_tokens"] = [](AppConfig& c, const std::string& v) { c.request.max_tokens = to_int(v); };
  t["request.temperature"] = [](AppConfig& c, const std::string& v) { c.request.temperature = parse_double(v); };
  t["request.timeout_s"] = [](AppConfig& c, const std::string& v) { c.request.timeout_s = parse_double(v); };

  t["strategy.mode"] = [](AppConfig& c, const std::string& v) {
    if (v == "zero_shot") {
      c.strategy.mode = StrategyMode::ZeroShot;
      c.strategy.k_per_label = 0;
    } else if (v == "few_shot") {
      c.strategy.mode = StrategyMode::FewShot;
    } else {
      throw ConfigError("strategy.mode must be zero_shot or few_shot");
    }
  };
  t["strategy.k_per_label"] = [](AppConfig& c, const std::string& v) {
    const auto k = parse_int(v);
    if (k < 0) throw ConfigError("k_per_label must be non-negative");
    c.strategy.k_per_label = static_cast<std::size_t>(k);
  };
  t["strategy.use_secondary"] = [](AppConfig& c, const std::string& v) { c.strategy.use_secondary = parse_bool(v); };

  t["paths.bank"] = [](AppConfig& c, const std::string& v) { c.paths.bank = v; };
  t["paths.quizzes"] = [](AppConfig& c, const std::string& v) { c.paths.quizzes = v; };
  t["paths.log"] = [](AppConfig& c, const std::string& v) { c.paths.log = v; };

  t["backend.kind"] = [](AppConfig& c, const std::string& v) {
    if (v == "sim") c.backend.kind = BackendKind::Sim;
    else if (v == "scripted") c.backend.kind = BackendKind::Scripted;
    else if (v == "http") c.backend.kind = BackendKind::Http;
    else throw ConfigError("backend.kind must be sim, scripted or http");
  };
  t["backend.script"] = [](AppConfig& c, const std::string& v) { c.backend.script = v; };
  t["backend.base_url"] = [](AppConfig& c, const std::string& v) { c.backend.http.base_url = v; };
  t["backend.path"] = [](AppConfig& c, const std::string& v) { c.backend.http.path = v; };
  t["backend.model"] = [](AppConfig& c, const std::string& v) { c.backend.http.model = v; };
  t["backend.api_key"] = [](AppConfig& c, const std::string& v) { c.backend.http.api_key = v; };
  t["backend.failure_rate"] = [](AppConfig& c, const std::string& v) { c.backend.faults.failure_rate = parse_double(v); };
  t["backend.fault_scope"] = [](AppConfig& c, const std::string& v) {
    if (v == "per_attempt") c.backend.faults.scope = FaultScope::PerAttempt;
    else if (v == "per_key") c.backend.faults.scope = FaultScope::PerKey;
    else throw ConfigError("backend.fault_scope must be per_attempt or per_key");
  };
  t["backend.fault_seed"] = [](AppConfig& c, const std::string& v) {
    c.backend.faults.seed = static_cast<std::uint64_t>(parse_int(v));
  };
  t["backend.latency_ms"] = [](AppConfig& c, const std::string& v) {
    c.backend.faults.latency = std::chrono::milliseconds(parse_int(v));
  };

  t["server.host"] = [](AppConfig& c, const std::string& v) { c.server.host = v; };
  t["server.port"] = [](AppConfig& c, const std::string& v) { c.server.port = to_int(v); };
  t["server.threads"] = [](AppConfig& c, const std::string& v) { c.server.threads = to_int(v); };
  t["server.admin_token"] = [](AppConfig& c, const std::string& v) { c.server.admin_token = v; };
  t["server.anonymization_key"] = [](AppConfig& c, const std::string& v) { c.server.anonymization_key = v; };

  t["sim.n_students"] = [](AppConfig& c, const std::string& v) {
    const auto n = parse_int(v);
    if (n < 0) throw ConfigError("n_students must be non-negative");
    c.sim.n_students = static_cast<std::uint64_t>(n);
  };
  t["sim.initial_label_dist"] = [](AppConfig& c, const std::string& v) {
    c.sim.initial_label_dist = parse_array<kLabelCount>(v);
  };
  for (auto label : kAllLabels) {
    auto name = std::string(label_name(label));
    std::replace(name.begin(), name.end(), '-', '_');
    const auto row = label_index(label);
    t["sim.dynamics_" + name] = [row](AppConfig& c, const std::string& v) {
      c.sim.revision_dynamics[row] = parse_array<kLabelCount>(v);
    };
    t["sim.word_delta_" + name] = [row](AppConfig& c, const std::string& v) {
      c.sim.word_delta[row] = parse_array<kLabelCount>(v);
    };
  }
  t["sim.p_continue"] = [](AppConfig& c, const std::string& v) { c.sim.p_continue = parse_double(v); };
  t["sim.p_continue_later"] = [](AppConfig& c, const std::string& v) { c.sim.p_continue_later = parse_double(v); };
  t["sim.max_turns"] = [](AppConfig& c, const std::string& v) { c.sim.max_turns = to_int(v); };
  t["sim.latency_base_s"] = [](AppConfig& c, const std::string& v) { c.sim.latency.base_s = parse_double(v); };
  t["sim.latency_jitter_s"] = [](AppConfig& c, const std::string& v) { c.sim.latency.jitter_s = parse_double(v); };
  t["sim.word_delta_jitter"] = [](AppConfig& c, const std::string& v) { c.sim.word_delta_jitter = parse_double(v); };
  t["sim.seed"] = [](AppConfig& c, const std::string& v) {
    std::uint64_t seed = 0;
    const auto* end = v.data() + v.size();
    const auto [ptr, ec] = std::from_chars(v.data(), end, seed);
    if (ec != std::errc() || ptr != end) throw ConfigError("not a 64-bit seed: '" + v + "'");
    c.sim.seed = seed;
  };
  t["sim.parallelism"] = [](AppConfig& c, const std::string& v) { c.sim.parallelism = to_int(v); };
  t["sim.quiz_id"] = [](AppConfig& c, const std::string& v) { c.sim.quiz_id = v; };
  t["sim.p_survey"] = [](AppConfig& c, const std::string& v) { c.sim.p_survey = parse_double(v); };
  t["sim.p_helpful"] = [](AppConfig& c, const std::string& v) { c.sim.p_helpful = parse_double(v); };
  t["sim.p_preference"] = [](AppConfig& c, const std::string& v) { c.sim.p_preference = parse_double(v); };
  t["sim.assignment_id"] = [](AppConfig& c, const std::string& v) { c.sim.assignment_id = v; };
  t["sim.start_ms"] = [](AppConfig& c, const std::string& v) { c.sim.start_ms = parse_int(v); };
  return t;
}

const Table& table() {
  static const Table t = make_table();
  return t;
}

void apply(AppConfig& config, const std::string& key, const std::string& value, std::string_view origin) {
  const auto it = table().find(key);
  if (it == table().end()) throw ConfigError(fmt::format("{}: unknown key '{}'", origin, key));
  try {
    it->second(config, trim(value));
  } catch (const ConfigError& e) {
    throw ConfigError(fmt::format("{}: {}: {}", origin, key, e.what()));
  }
}

std::string env_name(std::string_view key) {
  std::string name = "JITFB_" + upper(std::string(key));
  std::replace(name.begin(), name.end(), '.', '_');
  return name;
}

void resolve(std::filesystem::path& p, const std::filesystem::path& base) {
  if (!p.empty() && p.is_relative()) p = base / p;
}

void finish(AppConfig& config, const std::filesystem::path& base_dir, const EnvLookup& env) {
  for (const auto& [key, setter] : table()) {
    if (auto value = env ? env(env_name(key)) : std::nullopt) apply(config, key, *value, env_name(key));
  }
  resolve(config.paths.bank, base_dir);
  resolve(config.paths.quizzes, base_dir);
  resolve(config.paths.log, base_dir);
  resolve(config.backend.script, base_dir);
  try {
    config.gateway.validate();
    config.strategy.validate();
    config.sim.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  if (config.server.threads < 1) throw ConfigError("server.threads must be at least 1");
  if (config.server.port < 0 || config.server.port > 65535) throw ConfigError("server.port out of range");
}

}  // namespace

EnvLookup process_env() {
  return [](const std::string& name) -> std::optional<std::string> {
    if (const char* v = std::getenv(name.c_str())) return std::string(v);
    return std::nullopt;
  };
}

AppConfig parse_config(std::istream& in, const std::filesystem::path& base_dir, const EnvLookup& env) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(fmt::format("config line {}: {}", e.line(), e.message()));
  }
  AppConfig config;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw ConfigError(fmt::format("config: key '{}' outside a [section]", section));
    }
    for (const auto& [key, value] : body) {
      apply(config, section + "." + key, value.data(), "config");
    }
  }
  finish(config, base_dir, env);
  return config;
}

AppConfig load_config(const std::filesystem::path& path, const EnvLookup& env) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  try {
    return parse_config(in, path.parent_path().empty() ? "." : path.parent_path(), env);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

AppConfig default_config(const EnvLookup& env) {
  AppConfig config;
  finish(config, std::filesystem::current_path(), env);
  return config;
}

std::shared_ptr<CompletionBackend> make_backend(const BackendConfig& config) {
  switch (config.kind) {
    case BackendKind::Sim: {
      auto backend = make_sim_backend();
      backend->set_faults(config.faults);
      return backend;
    }
    case BackendKind::Scripted: {
      if (config.script.empty()) throw ConfigError("backend.script is required for the scripted backend");
      auto backend = ScriptedBackend::from_jsonl(config.script);
      if (config.faults.failure_rate > 0.0 || config.faults.latency.count() > 0) backend->set_faults(config.faults);
      return backend;
    }
    case BackendKind::Http:
      if (config.http.model.empty()) throw ConfigError("backend.model is required for the http backend");
      return std::make_shared<HttpChatBackend>(config.http);
  }
  throw ConfigError("unknown backend kind");
}

}  // namespace jitfb
