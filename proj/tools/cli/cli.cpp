#include "cli.hpp"

#include <atomic>
#include <chrono>
#include <csignal>
#include <fstream>
#include <map>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "jitfb/analytics.hpp"
#include "jitfb/classifier.hpp"
#include "jitfb/config.hpp"
#include "jitfb/event_log.hpp"
#include "jitfb/http_api.hpp"
#include "jitfb/prompt.hpp"
#include "jitfb/session_service.hpp"
#include "jitfb/student_sim.hpp"

namespace jitfb::cli {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop = true; }

void use_stderr_logger() {
  static const bool once = [] {
    auto logger = spdlog::stderr_color_mt("jitfb");
    spdlog::set_default_logger(logger);
    return true;
  }();
  (void)once;
}

struct Common {
  std::string format = "text";
  std::string config;
  bool verbose = false;

  bool json_output() const { return format == "json"; }

  AppConfig load() const { return config.empty() ? default_config() : load_config(config); }
};

std::filesystem::path pick(const std::string& flag, const std::filesystem::path& configured, const char* what) {
  if (!flag.empty()) return flag;
  if (!configured.empty()) return configured;
  throw Error(fmt::format("no {} given (flag or config)", what));
}

const QuizProblem& pick_quiz(const QuizCatalog& quizzes, const std::string& quiz_id) {
  if (quizzes.empty()) throw Error("the quiz catalog is empty");
  if (quiz_id.empty()) return quizzes.begin()->second;
  const auto it = quizzes.find(quiz_id);
  if (it == quizzes.end()) throw ServiceError(ServiceErrorKind::UnknownQuiz, quiz_id);
  return it->second;
}

// serve ---------------------------------------------------------------------

struct ServeArgs {
  std::string quizzes, bank, log, host;
  int port = -1;
  double duration_s = 0.0;
};

int cmd_serve(const Common& common, const ServeArgs& a, std::ostream& out) {
  auto config = common.load();
  const auto quizzes = load_quiz_catalog(pick(a.quizzes, config.paths.quizzes, "quizzes file"));
  auto bank = load_bank_jsonl(pick(a.bank, config.paths.bank, "few-shot bank"));
  const auto log_path = pick(a.log, config.paths.log, "event log path");

  EventLog log(log_path);
  auto gateway = std::make_shared<Gateway>(make_backend(config.backend), config.gateway);
  ServiceOptions options;
  options.strategy = config.strategy;
  options.request = config.request;
  SessionService service(quizzes, std::move(bank), gateway, log, options);

  HttpApiOptions api_options;
  api_options.host = a.host.empty() ? config.server.host : a.host;
  api_options.port = a.port >= 0 ? a.port : config.server.port;
  api_options.threads = config.server.threads;
  api_options.admin_token = config.server.admin_token;
  api_options.anonymization_key = config.server.anonymization_key;
  HttpApi api(service, api_options);

  g_stop = false;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  const int port = api.start();
  if (common.json_output()) {
    out << json{{"listening", fmt::format("http://{}:{}", api_options.host, port)}}.dump() << std::endl;
  } else {
    out << fmt::format("listening on http://{}:{} ({} sessions restored)", api_options.host, port,
                       service.sessions().size())
        << std::endl;
  }
  const auto started = std::chrono::steady_clock::now();
  while (!g_stop) {
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
    if (a.duration_s > 0 &&
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count() >= a.duration_s) {
      break;
    }
  }
  api.stop();
  log.flush();
  std::signal(SIGINT, SIG_DFL);
  std::signal(SIGTERM, SIG_DFL);
  if (!common.json_output()) out << fmt::format("stopped; {} events in {}", log.size(), log_path.string()) << std::endl;
  return kExitOk;
}

// eval ----------------------------------------------------------------------

struct EvalArgs {
  std::string dataset, bank, quizzes, quiz_id, script;
  int trials = 3;
  std::size_t k = 3;
};

int cmd_eval(const Common& common, const EvalArgs& a, std::ostream& out) {
  auto config = common.load();
  const auto dataset = load_dataset_jsonl(a.dataset);
  const auto bank = load_bank_jsonl(pick(a.bank, config.paths.bank, "few-shot bank"));
  const auto quizzes = load_quiz_catalog(pick(a.quizzes, config.paths.quizzes, "quizzes file"));
  const auto& quiz = pick_quiz(quizzes, a.quiz_id);
  if (!a.script.empty()) {
    config.backend.kind = BackendKind::Scripted;
    config.backend.script = a.script;
  }
  Gateway gateway(make_backend(config.backend), config.gateway);

  std::vector<EvalReport> reports;
  reports.push_back(evaluate_lexical_baseline(dataset, bank));
  for (const auto& strategy :
       {ClassificationStrategy::zero_shot(false), ClassificationStrategy::zero_shot(true),
        ClassificationStrategy::few_shot(a.k, false), ClassificationStrategy::few_shot(a.k, true)}) {
    reports.push_back(evaluate(dataset, quiz, strategy, bank, gateway, a.trials));
  }
  if (common.json_output()) {
    json arr = json::array();
    for (const auto& r : reports) arr.push_back(to_json(r));
    out << arr.dump(2) << "\n";
  } else {
    out << render_eval_table(reports);
  }
  return kExitOk;
}

// simulate ------------------------------------------------------------------

struct SimulateArgs {
  std::string out_path, quizzes, bank;
  std::optional<std::uint64_t> students, seed;
  std::optional<int> parallelism;
};

int cmd_simulate(const Common& common, const SimulateArgs& a, std::ostream& out) {
  auto config = common.load();
  if (a.students) config.sim.n_students = *a.students;
  if (a.seed) config.sim.seed = *a.seed;
  if (a.parallelism) config.sim.parallelism = *a.parallelism;
  const auto quizzes = load_quiz_catalog(pick(a.quizzes, config.paths.quizzes, "quizzes file"));
  auto bank = load_bank_jsonl(pick(a.bank, config.paths.bank, "few-shot bank"));

  const auto run = simulate_in_process(config.sim, quizzes, std::move(bank), config.gateway, config.strategy,
                                       make_backend(config.backend));
  EventLog::write_jsonl(a.out_path, run.events);
  const auto& s = run.summary;
  if (common.json_output()) {
    out << ordered_json{{"out", a.out_path},     {"events", run.events.size()},    {"students", s.students},
                        {"turns", s.turns},      {"degraded_turns", s.degraded_turns},
                        {"preferences", s.preferences}, {"posthoc_failures", s.posthoc_failures}}
               .dump(2)
        << "\n";
  } else {
    out << fmt::format("simulated {} students, {} turns ({} degraded), {} preferences",
                       s.students, s.turns, s.degraded_turns, s.preferences);
    if (s.posthoc_failures > 0) out << fmt::format(" ({} post-hoc failures)", s.posthoc_failures);
    out << fmt::format("\nwrote {} events to {}\n", run.events.size(), a.out_path);
  }
  return kExitOk;
}

// report --------------------------------------------------------------------

struct ReportArgs {
  std::string log, csv_dir;
  bool collapse = false;
};

int cmd_report(const Common& common, const ReportArgs& a, std::ostream& out) {
  const auto events = EventLog::read_jsonl(a.log);
  ReportOptions options;
  options.collapse_trajectories = a.collapse;
  const auto report = build_report(std::span<const Event>(events), options);
  if (!a.csv_dir.empty()) write_report_csvs(report, a.csv_dir);
  out << (common.json_output() ? render_report_json(report) : render_report_text(report));
  return kExitOk;
}

// validate-bank -------------------------------------------------------------

struct ValidateBankArgs {
  std::string bank;
  std::size_t k = 3;
};

int cmd_validate_bank(const Common& common, const ValidateBankArgs& a, std::ostream& out, std::ostream& err) {
  std::ifstream in(a.bank);
  if (!in) throw Error("cannot open bank " + a.bank);
  std::vector<FewShotExample> bank;
  std::vector<std::string> problems;
  std::vector<std::string> warnings;
  std::string line;
  for (int lineno = 1; std::getline(in, line); ++lineno) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      bank.push_back(parse_bank_line(line));
    } catch (const Error& e) {
      problems.push_back(fmt::format("line {}: {}", lineno, e.what()));
      continue;
    }
    const auto violations = essay_violations(bank.back().essay_text);
    for (const auto& v : violations) warnings.push_back(fmt::format("line {}: essay {}", lineno, describe(v)));
  }
  for (const auto& s : bank_shortfalls(bank, a.k)) problems.push_back(describe(s));

  std::array<std::size_t, kLabelCount> per_label{};
  for (const auto& ex : bank) ++per_label[label_index(ex.label)];
  if (common.json_output()) {
    ordered_json counts;
    for (auto l : kAllLabels) counts[std::string(label_name(l))] = per_label[label_index(l)];
    out << ordered_json{{"bank", a.bank},           {"k", a.k},
                        {"examples", bank.size()},  {"per_label", counts},
                        {"ok", problems.empty()},   {"problems", problems},
                        {"warnings", warnings}}
               .dump(2)
        << "\n";
  } else {
    out << fmt::format("{} examples:", bank.size());
    for (auto l : kAllLabels) out << fmt::format(" {} {}", label_name(l), per_label[label_index(l)]);
    out << "\n";
    for (const auto& w : warnings) out << "warning: " << w << "\n";
    for (const auto& p : problems) out << p << "\n";
    out << (problems.empty() ? "bank ok\n" : "bank rejected\n");
  }
  if (!problems.empty()) {
    for (const auto& p : problems) err << p << "\n";
    return kExitDomainError;
  }
  return kExitOk;
}

// replay --------------------------------------------------------------------

struct ReplayArgs {
  std::string log, quizzes;
};

int cmd_replay(const Common& common, const ReplayArgs& a, std::ostream& out) {
  const auto events = EventLog::read_jsonl(a.log);
  std::optional<QuizCatalog> quizzes;
  if (!a.quizzes.empty()) quizzes = load_quiz_catalog(a.quizzes);
  const auto state = replay(events, quizzes ? &*quizzes : nullptr);
  std::size_t turns = 0;
  std::size_t answered = 0;
  for (const auto& s : state.sessions) {
    turns += s.turns.size();
    if (s.final_answer) ++answered;
  }
  if (common.json_output()) {
    out << ordered_json{{"events", events.size()},
                        {"sessions", state.sessions.size()},
                        {"turns", turns},
                        {"answered", answered},
                        {"posthoc", state.posthoc.size()},
                        {"preferences", state.preferences.size()},
                        {"ok", state.issues.empty()},
                        {"issues", state.issues}}
               .dump(2)
        << "\n";
  } else {
    out << fmt::format("{} events, {} sessions, {} turns, {} answered, {} post-hoc, {} preferences\n", events.size(),
                       state.sessions.size(), turns, answered, state.posthoc.size(), state.preferences.size());
    for (const auto& issue : state.issues) out << "issue: " << issue << "\n";
    out << (state.issues.empty() ? "log ok\n" : fmt::format("{} integrity issues\n", state.issues.size()));
  }
  return state.issues.empty() ? kExitOk : kExitDomainError;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  use_stderr_logger();

  CLI::App app{"Just-in-time strategy-essay feedback service and analytics", "jitfb"};
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  app.add_option("--format", common.format, "Output format")->check(CLI::IsMember({"text", "json"}));
  app.add_option("--config", common.config, "Config file (INI key = value)")->check(CLI::ExistingFile);
  app.add_flag("-v,--verbose", common.verbose, "Debug logging");

  ServeArgs serve;
  auto* s = app.add_subcommand("serve", "Run the HTTP feedback service");
  s->add_option("--quizzes", serve.quizzes, "Quiz definitions (JSON)");
  s->add_option("--bank", serve.bank, "Few-shot bank (JSONL)");
  s->add_option("--log", serve.log, "Event log (JSONL, appended)");
  s->add_option("--host", serve.host, "Bind address");
  s->add_option("--port", serve.port, "Port (0 picks a free one)")->check(CLI::Range(0, 65535));
  s->add_option("--duration-s", serve.duration_s, "Stop after this many seconds")->check(CLI::NonNegativeNumber);

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "Evaluate classification strategies on a labelled dataset");
  e->add_option("--dataset", eval.dataset, "Labelled essays (JSONL)")->required()->check(CLI::ExistingFile);
  e->add_option("--bank", eval.bank, "Few-shot bank (JSONL)");
  e->add_option("--quizzes", eval.quizzes, "Quiz definitions (JSON)");
  e->add_option("--quiz", eval.quiz_id, "Quiz id (default: first)");
  e->add_option("--script", eval.script, "Scripted backend rule table (JSONL)")->check(CLI::ExistingFile);
  e->add_option("--trials", eval.trials, "Trials per strategy")->check(CLI::PositiveNumber);
  e->add_option("--k", eval.k, "Few-shot examples per label")->check(CLI::PositiveNumber);

  SimulateArgs sim;
  auto* m = app.add_subcommand("simulate", "Simulate a student cohort and write its event log");
  m->add_option("--out", sim.out_path, "Output event log (JSONL)")->required();
  m->add_option("--quizzes", sim.quizzes, "Quiz definitions (JSON)");
  m->add_option("--bank", sim.bank, "Few-shot bank (JSONL)");
  m->add_option("--students", sim.students, "Cohort size");
  m->add_option("--seed", sim.seed, "Random seed");
  m->add_option("--parallelism", sim.parallelism, "Concurrent students")->check(CLI::PositiveNumber);

  ReportArgs report;
  auto* r = app.add_subcommand("report", "Conversation, transition, trajectory and survey analytics");
  r->add_option("--log", report.log, "Event log (JSONL)")->required()->check(CLI::ExistingFile);
  r->add_option("--csv-dir", report.csv_dir, "Also write plotting CSVs here");
  r->add_flag("--collapse", report.collapse, "Merge repeated labels in trajectory paths");

  ValidateBankArgs vb;
  auto* v = app.add_subcommand("validate-bank", "Check a few-shot bank");
  v->add_option("--bank", vb.bank, "Few-shot bank (JSONL)")->required()->check(CLI::ExistingFile);
  v->add_option("--k", vb.k, "Required examples per label");

  ReplayArgs rp;
  auto* p = app.add_subcommand("replay", "Rebuild sessions from an event log and check its integrity");
  p->add_option("--log", rp.log, "Event log (JSONL)")->required()->check(CLI::ExistingFile);
  p->add_option("--quizzes", rp.quizzes, "Quiz definitions, to check answers")->check(CLI::ExistingFile);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& ex) {
    err << "usage error: " << ex.what() << "\n\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kExitUsage;
  }
  spdlog::set_level(common.verbose ? spdlog::level::debug : spdlog::level::warn);

  try {
    if (s->parsed()) return cmd_serve(common, serve, out);
    if (e->parsed()) return cmd_eval(common, eval, out);
    if (m->parsed()) return cmd_simulate(common, sim, out);
    if (r->parsed()) return cmd_report(common, report, out);
    if (v->parsed()) return cmd_validate_bank(common, vb, out, err);
    if (p->parsed()) return cmd_replay(common, rp, out);
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << "\n";
    return kExitDomainError;
  }
  return kExitUsage;
}

}  // namespace jitfb::cli
