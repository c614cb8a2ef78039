#include "jitfb/classifier.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "jitfb/response_parser.hpp"

namespace jitfb {

ClassificationStrategy ClassificationStrategy::zero_shot(bool use_secondary) {
  return {StrategyMode::ZeroShot, 0, use_secondary};
}

ClassificationStrategy ClassificationStrategy::few_shot(std::size_t k_per_label, bool use_secondary) {
  return {StrategyMode::FewShot, k_per_label, use_secondary};
}

void ClassificationStrategy::validate() const {
  if (mode == StrategyMode::ZeroShot && k_per_label != 0) {
    throw Error("zero-shot strategy must use k_per_label = 0");
  }
}

std::string ClassificationStrategy::display_name() const {
  std::string name = mode == StrategyMode::ZeroShot ? "Zero-shot LLM" : "Few-shot LLM";
  if (use_secondary) name += " w/ Secondary";
  return name;
}

FeedbackResponse fallback_feedback() {
  FeedbackResponse r;
  r.classification = ErrorLabel::PositionDirection;
  r.secondary_classification = ErrorLabel::PositionDirection;
  r.confidence = 1;
  r.feedback =
      "Before you finalize, check two things in your strategy. First, name the exact object whose "
      "motion you are analyzing and make sure you use that object's mass. Second, state which way "
      "each force on that object points and why.";
  r.degraded = true;
  return r;
}

FeedbackResponse classify(const ValidatedEssay& essay, const QuizProblem& problem,
                          std::span<const FewShotExample> bank, const ClassificationStrategy& strategy,
                          Gateway& gateway, const RequestOptions& options) {
  strategy.validate();
  const auto k = strategy.mode == StrategyMode::ZeroShot ? 0 : strategy.k_per_label;
  CompletionRequest request;
  request.prompt = build_jit_prompt(problem, essay, bank, k, strategy.use_secondary);
  request.max_tokens = options.max_tokens;
  request.temperature = options.temperature;
  request.timeout_s = options.timeout_s;
  request.idempotency_key = options.idempotency_key;

  for (int ask = 0; ask < 2; ++ask) {
    if (ask == 1) request.idempotency_key = options.idempotency_key + "#reask";
    auto outcome = gateway.dispatch(request);
    if (std::holds_alternative<Busy>(outcome)) {
      if (ask == 0) throw BusyError();
      break;
    }
    if (std::holds_alternative<Degraded>(outcome)) break;
    try {
      return parse_jit_response(std::get<CompletionResult>(outcome).text);
    } catch (const ResponseParseError&) {
      // re-ask once
    }
  }
  return fallback_feedback();
}

std::vector<std::string> lexical_tokens(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (u == ' ' || u == '\t' || u == '\n' || u == '\r' || u == '\v' || u == '\f') {
      if (!current.empty()) tokens.push_back(std::move(current));
      current.clear();
    } else if (u < 0x80 && std::ispunct(u)) {
      continue;
    } else {
      current.push_back(u < 0x80 ? static_cast<char>(std::tolower(u)) : c);
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

namespace {

using TermVector = std::map<std::string, double>;

TermVector normalized_tf(std::string_view text) {
  TermVector v;
  for (auto& t : lexical_tokens(text)) v[std::move(t)] += 1.0;
  double norm = 0.0;
  for (const auto& [_, x] : v) norm += x * x;
  norm = std::sqrt(norm);
  if (norm > 0.0) {
    for (auto& [_, x] : v) x /= norm;
  }
  return v;
}

double dot(const TermVector& a, const TermVector& b) {
  const auto& small = a.size() <= b.size() ? a : b;
  const auto& large = a.size() <= b.size() ? b : a;
  double s = 0.0;
  for (const auto& [term, x] : small) {
    if (auto it = large.find(term); it != large.end()) s += x * it->second;
  }
  return s;
}

}  // namespace

ErrorLabel classify_lexical_baseline(const ValidatedEssay& essay, std::span<const FewShotExample> bank) {
  if (bank.empty()) throw EmptyBankError();
  constexpr double kTieEps = 1e-12;
  const auto query = normalized_tf(essay.text());
  double best = -1.0;
  ErrorLabel best_label = ErrorLabel::PositionDirection;
  for (const auto& ex : bank) {
    const double sim = dot(query, normalized_tf(ex.essay_text));
    if (sim > best + kTieEps) {
      best = sim;
      best_label = ex.label;
    } else if (std::abs(sim - best) <= kTieEps && label_index(ex.label) < label_index(best_label)) {
      best_label = ex.label;
    }
  }
  return best_label;
}

std::uint64_t ConfusionMatrix::total() const noexcept {
  std::uint64_t s = 0;
  for (const auto& row : counts) {
    for (auto c : row) s += c;
  }
  return s;
}

std::uint64_t ConfusionMatrix::trace() const noexcept {
  std::uint64_t s = 0;
  for (std::size_t i = 0; i < kLabelCount; ++i) s += counts[i][i];
  return s;
}

double accuracy(const ConfusionMatrix& cm) noexcept {
  const auto n = cm.total();
  return n == 0 ? 0.0 : static_cast<double>(cm.trace()) / static_cast<double>(n);
}

double macro_f1(const ConfusionMatrix& cm) noexcept {
  double sum = 0.0;
  for (std::size_t c = 0; c < kLabelCount; ++c) {
    std::uint64_t tp = cm.counts[c][c];
    std::uint64_t fp = 0;
    std::uint64_t fn = 0;
    for (std::size_t o = 0; o < kLabelCount; ++o) {
      if (o == c) continue;
      fp += cm.counts[o][c];
      fn += cm.counts[c][o];
    }
    // 2PR/(P+R) rewritten over counts; zero whenever TP is zero.
    if (tp > 0) sum += 2.0 * tp / static_cast<double>(2 * tp + fp + fn);
  }
  return sum / static_cast<double>(kLabelCount);
}

EvalReport summarize_trials(std::string method, std::vector<ConfusionMatrix> per_trial) {
  EvalReport r;
  r.method = std::move(method);
  r.trials = static_cast<int>(per_trial.size());
  if (!per_trial.empty()) {
    std::vector<double> acc;
    std::vector<double> f1;
    for (const auto& cm : per_trial) {
      acc.push_back(accuracy(cm));
      f1.push_back(macro_f1(cm));
    }
    const auto mean = [](const std::vector<double>& xs) {
      double s = 0.0;
      for (double x : xs) s += x;
      return s / static_cast<double>(xs.size());
    };
    const auto halfrange = [](const std::vector<double>& xs) {
      const auto [lo, hi] = std::minmax_element(xs.begin(), xs.end());
      return (*hi - *lo) / 2.0;
    };
    r.accuracy_mean = mean(acc);
    r.accuracy_halfrange = halfrange(acc);
    r.macro_f1_mean = mean(f1);
    r.macro_f1_halfrange = halfrange(f1);
  }
  r.per_trial_confusions = std::move(per_trial);
  return r;
}

namespace {

std::vector<ValidatedEssay> validate_dataset(const LabeledDataset& dataset) {
  if (dataset.items.empty()) throw Error("dataset is empty");
  std::vector<ValidatedEssay> out;
  out.reserve(dataset.items.size());
  for (std::size_t i = 0; i < dataset.items.size(); ++i) {
    try {
      out.push_back(validate_essay(dataset.items[i].essay_text));
    } catch (const EssayValidationError& e) {
      throw Error("dataset item " + std::to_string(i + 1) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace

EvalReport evaluate(const LabeledDataset& dataset, const QuizProblem& problem,
                    const ClassificationStrategy& strategy, std::span<const FewShotExample> bank,
                    std::span<Gateway* const> gateways) {
  if (gateways.empty()) throw Error("evaluate needs at least one trial");
  strategy.validate();
  const auto essays = validate_dataset(dataset);
  const auto k = strategy.mode == StrategyMode::ZeroShot ? 0 : strategy.k_per_label;
  if (auto shortfalls = bank_shortfalls(bank, k); !shortfalls.empty()) {
    throw InsufficientBankError(std::move(shortfalls));
  }

  std::vector<ConfusionMatrix> per_trial;
  std::uint64_t degraded = 0;
  for (std::size_t trial = 0; trial < gateways.size(); ++trial) {
    Gateway& gateway = *gateways[trial];
    ConfusionMatrix cm;
    std::mutex cm_mutex;
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    const auto workers = std::min<std::size_t>(static_cast<std::size_t>(gateway.config().max_in_flight),
                                               essays.size());
    const auto work = [&] {
      for (std::size_t i = next++; i < essays.size(); i = next++) {
        RequestOptions options;
        options.idempotency_key = "eval:" + std::to_string(trial) + ":" + std::to_string(i);
        FeedbackResponse r;
        for (;;) {
          try {
            r = classify(essays[i], problem, bank, strategy, gateway, options);
            break;
          } catch (const BusyError&) {
            std::this_thread::sleep_for(std::chrono::milliseconds(10));
          } catch (...) {
            std::lock_guard lock(cm_mutex);
            if (!failure) failure = std::current_exception();
            return;
          }
        }
        std::lock_guard lock(cm_mutex);
        cm.add(dataset.items[i].gold_label, r.classification);
        if (r.degraded) ++degraded;
      }
    };
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w + 1 < workers; ++w) pool.emplace_back(work);
    work();
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
    per_trial.push_back(cm);
  }
  auto report = summarize_trials(strategy.display_name(), std::move(per_trial));
  report.degraded_responses = degraded;
  return report;
}

EvalReport evaluate(const LabeledDataset& dataset, const QuizProblem& problem,
                    const ClassificationStrategy& strategy, std::span<const FewShotExample> bank,
                    Gateway& gateway, int trials) {
  if (trials < 1) throw Error("trials must be at least 1");
  std::vector<Gateway*> gateways(static_cast<std::size_t>(trials), &gateway);
  return evaluate(dataset, problem, strategy, bank, gateways);
}

EvalReport evaluate_lexical_baseline(const LabeledDataset& dataset, std::span<const FewShotExample> bank) {
  const auto essays = validate_dataset(dataset);
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < essays.size(); ++i) {
    cm.add(dataset.items[i].gold_label, classify_lexical_baseline(essays[i], bank));
  }
  return summarize_trials("Lexical baseline", {cm});
}

nlohmann::json to_json(const ConfusionMatrix& cm) {
  auto rows = nlohmann::json::array();
  for (const auto& row : cm.counts) rows.push_back(row);
  return rows;
}

nlohmann::json to_json(const EvalReport& report) {
  auto confusions = nlohmann::json::array();
  for (const auto& cm : report.per_trial_confusions) confusions.push_back(to_json(cm));
  return {{"method", report.method},
          {"accuracy_mean", report.accuracy_mean},
          {"accuracy_halfrange", report.accuracy_halfrange},
          {"macro_f1_mean", report.macro_f1_mean},
          {"macro_f1_halfrange", report.macro_f1_halfrange},
          {"trials", report.trials},
          {"degraded_responses", report.degraded_responses},
          {"per_trial_confusions", confusions}};
}

std::string render_eval_table(std::span<const EvalReport> reports) {
  std::size_t width = std::string_view("Method").size();
  for (const auto& r : reports) width = std::max(width, r.method.size());
  std::string out = fmt::format("{:<{}}  {:>14}  {:>14}\n", "Method", width, "Accuracy", "Macro F1");
  for (const auto& r : reports) {
    out += fmt::format("{:<{}}  {:>14}  {:>14}\n", r.method, width,
                       fmt::format("{:.2f} ±{:.3f}", 100.0 * r.accuracy_mean, r.accuracy_halfrange),
                       fmt::format("{:.2f} ±{:.3f}", 100.0 * r.macro_f1_mean, r.macro_f1_halfrange));
  }
  return out;
}

LabeledDataset load_dataset_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open dataset " + path.string());
  LabeledDataset ds;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ds.items.push_back({j.at("essay").get<std::string>(), j.at("label").get<ErrorLabel>()});
    } catch (const std::exception& e) {
      throw Error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (ds.items.empty()) throw Error("dataset " + path.string() + " is empty");
  return ds;
}

FewShotExample parse_bank_line(std::string_view line) {
  const auto j = nlohmann::json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error("not a JSON object");
  FewShotExample ex;
  try {
    ex.essay_text = j.at("essay").get<std::string>();
    ex.label = j.at("label").get<ErrorLabel>();
    ex.expert_feedback = j.at("feedback").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(e.what());
  }
  if (ex.essay_text.empty()) throw Error("empty essay");
  if (ex.expert_feedback.empty()) throw Error("empty feedback");
  return ex;
}

std::vector<FewShotExample> load_bank_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open bank " + path.string());
  std::vector<FewShotExample> bank;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      bank.push_back(parse_bank_line(line));
    } catch (const std::exception& e) {
      throw Error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return bank;
}

}  // namespace jitfb
