#include <benchmark/benchmark.h>

#include <filesystem>
#include <map>

#include "jitfb/analytics.hpp"
#include "jitfb/classifier.hpp"
#include "jitfb/event_log.hpp"
#include "jitfb/prompt.hpp"
#include "jitfb/response_parser.hpp"
#include "jitfb/session_service.hpp"
#include "jitfb/student_sim.hpp"

using namespace jitfb;

namespace {

const std::filesystem::path kData = JITFB_DATA_DIR;

const QuizCatalog& catalog() {
  static const auto c = load_quiz_catalog(kData / "quizzes.json");
  return c;
}

const std::vector<FewShotExample>& bank() {
  static const auto b = load_bank_jsonl(kData / "bank.jsonl");
  return b;
}

const std::vector<Session>& cohort(std::uint64_t n) {
  static std::map<std::uint64_t, std::vector<Session>> cache;
  auto& sessions = cache[n];
  if (sessions.empty()) {
    SimConfig config;
    config.n_students = n;
    config.p_continue = 0.5;
    GatewayConfig gateway;
    gateway.rate_limit_per_s = 1e7;
    gateway.burst = 10000000;
    gateway.queue_capacity = 4096;
    sessions = replay(simulate_in_process(config, catalog(), bank(), gateway).events).sessions;
  }
  return sessions;
}

void BM_BuildJitPrompt(benchmark::State& state) {
  const auto& quiz = catalog().begin()->second;
  const auto essay = validate_essay(synthesize_essay(ErrorLabel::Direction, 80, 1));
  const auto k = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(build_jit_prompt(quiz, essay, bank(), k));
}
BENCHMARK(BM_BuildJitPrompt)->Arg(0)->Arg(3);

void BM_ParseJitResponse(benchmark::State& state) {
  FeedbackResponse r;
  r.classification = ErrorLabel::Position;
  r.secondary_classification = ErrorLabel::Direction;
  r.confidence = 4;
  r.feedback = "Look again at which body the force acts on and say why.";
  const auto raw = "Here is my assessment:\n```json\n" + render_jit_response(r) + "\n```";
  for (auto _ : state) benchmark::DoNotOptimize(parse_jit_response(raw));
}
BENCHMARK(BM_ParseJitResponse);

void BM_TransitionMatrix(benchmark::State& state) {
  const auto& sessions = cohort(static_cast<std::uint64_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(transition_matrix(sessions));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(sessions.size()));
}
BENCHMARK(BM_TransitionMatrix)->Arg(1000)->Arg(10000);

void BM_BuildReport(benchmark::State& state) {
  const auto& sessions = cohort(static_cast<std::uint64_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(build_report(std::span<const Session>(sessions)));
}
BENCHMARK(BM_BuildReport)->Arg(1000);

void BM_LexicalBaseline(benchmark::State& state) {
  const auto essay = validate_essay(synthesize_essay(ErrorLabel::PositionDirection, 70, 2));
  for (auto _ : state) benchmark::DoNotOptimize(classify_lexical_baseline(essay, bank()));
}
BENCHMARK(BM_LexicalBaseline);

}  // namespace

BENCHMARK_MAIN();
