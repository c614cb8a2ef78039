#include "jitfb/student_sim.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include <fmt/format.h>

#include "jitfb/hash.hpp"
#include "jitfb/prompt.hpp"
#include "jitfb/response_parser.hpp"

namespace jitfb {

namespace {

// splitmix64 stream; portable across standard libraries, unlike <random>
// distributions.
class SimRng {
 public:
  explicit SimRng(std::uint64_t state) : state_(state) {}

  std::uint64_t next() noexcept {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double symmetric() noexcept { return 2.0 * uniform() - 1.0; }
  bool chance(double p) noexcept { return uniform() < p; }

  template <std::size_t N>
  std::size_t categorical(const std::array<double, N>& probs) noexcept {
    const double u = uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < N; ++i) {
      acc += probs[i];
      if (u < acc) return i;
    }
    return N - 1;
  }

 private:
  std::uint64_t state_;
};

const std::array<std::vector<std::string>, kLabelCount> kCores = {{
    {
        "I start by treating both blocks as one system, so the shared acceleration comes from the applied force "
        "divided by the combined mass. Then I isolate the top block and take its mass times that acceleration. "
        "The force it exerts on the bottom block points opposite to the applied force.",
        "Since the blocks move together I first get their common acceleration from the push and the total mass. "
        "The top block is the one I focus on, so I multiply the mass of the top block by the acceleration, and by "
        "the third law its push on the bottom block acts against the applied force.",
    },
    {
        "I start by treating both blocks as one system, so the shared acceleration comes from the applied force "
        "divided by the combined mass. Then I isolate the top block and take its mass times that acceleration. "
        "The force it exerts on the bottom block points the same way as the applied force.",
        "Since the blocks move together I first get their common acceleration from the push and the total mass. "
        "I multiply the mass of the top block by the acceleration and that gives the size of the force on the "
        "bottom block, which I expect to act along the push.",
    },
    {
        "I start by treating both blocks as one system, so the shared acceleration comes from the applied force "
        "divided by the combined mass. Then I isolate the bottom block and take its mass times that acceleration. "
        "The force the top block exerts on the bottom block points opposite to the applied force.",
        "Since the blocks move together I first get their common acceleration from the push and the total mass. "
        "I multiply the mass of the bottom block by the acceleration, and by the third law the push on the bottom "
        "block acts against the applied force.",
    },
    {
        "I start by treating both blocks as one system, so the shared acceleration comes from the applied force "
        "divided by the combined mass. Then I isolate the bottom block and take its mass times that acceleration. "
        "The force on the bottom block points the same way as the applied force.",
        "I think the answer is just the mass of some block times how fast things speed up, and the force simply "
        "follows the applied push along the table.",
    },
}};

const std::vector<std::string> kFillers = {
    "I will reread the question to make sure I answer what it asks.",
    "Friction between the blocks is what lets them move as one unit.",
    "I also want to draw a free body diagram for each block before answering.",
    "Newton's second law links the net force on a body to its acceleration.",
    "The table is treated as frictionless in this problem.",
    "I will keep track of which body each force acts on.",
    "Checking units at the end helps me catch mistakes.",
    "Both blocks share the same acceleration because they do not slip.",
};

const std::array<std::string, kLabelCount> kFeedback = {
    "Your plan is well organised and the reasoning hangs together. Before you finish, reread each step and confirm "
    "that every quantity you use belongs to the body the question asks about.",
    "Think carefully about which way the push on the lower block must point compared with the applied force. "
    "Newton's third law pairs forces that act on different bodies in opposite senses.",
    "Check which block's mass you are using. The force in question acts on the lower block, but its size is set by "
    "what it takes to accelerate the upper one.",
    "Two things deserve another look: which block's mass sets the size of this force, and which way the force "
    "points compared with the applied push. Try a free body diagram for the upper block alone.",
};

const std::vector<std::string> kHelpfulReasons = {
    "clarified overlooked aspects",
    "pointed out a mistake in my reasoning",
    "encouraged me to think again",
};
const std::vector<std::string> kUnhelpfulReasons = {
    "too vague",
    "repeated what I already knew",
};
const std::vector<std::string> kPreferenceReasons = {
    "Helps me better understand the concept",
    "Better explains the errors in my strategy",
    "Aligns better with my level of knowledge",
};

constexpr std::string_view kSimRubric =
    "A complete strategy names the upper block as the body whose mass sets the interaction force, uses the shared "
    "acceleration of both blocks, and states that the force on the lower block acts against the applied push.";

constexpr int kMaxBusyRetries = 2000;
constexpr std::size_t kMaxEssayWords = 600;

void check_probability(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) throw Error(fmt::format("sim: {} must be within [0, 1], got {}", name, p));
}

template <std::size_t N>
void normalise(std::array<double, N>& probs, const std::string& name) {
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw Error("sim: " + name + " has a negative or non-finite entry");
    sum += p;
  }
  if (!(sum > 0.0)) throw Error("sim: " + name + " sums to zero");
  for (double& p : probs) p /= sum;
}

template <typename F>
auto with_busy_retry(F&& f, std::atomic<std::uint64_t>& retries) {
  for (int attempt = 0;; ++attempt) {
    try {
      return f();
    } catch (const BusyError&) {
      if (attempt >= kMaxBusyRetries) throw ServiceUnavailableError("still busy after retries");
      ++retries;
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
  }
}

}  // namespace

void SimConfig::validate() {
  if (n_students == 0) throw Error("sim: n_students must be positive");
  normalise(initial_label_dist, "initial_label_dist");
  for (auto label : kAllLabels) {
    normalise(revision_dynamics[label_index(label)], fmt::format("revision_dynamics row {}", label_name(label)));
  }
  check_probability(p_continue, "p_continue");
  if (p_continue_later) check_probability(*p_continue_later, "p_continue_later");
  check_probability(p_survey, "p_survey");
  check_probability(p_helpful, "p_helpful");
  check_probability(p_preference, "p_preference");
  if (max_turns < 1) throw Error("sim: max_turns must be at least 1");
  if (!(latency.base_s >= 0.0) || !(latency.jitter_s >= 0.0)) throw Error("sim: latency must be non-negative");
  if (!(word_delta_jitter >= 0.0)) throw Error("sim: word_delta_jitter must be non-negative");
  for (const auto& row : word_delta) {
    for (double d : row) {
      if (!std::isfinite(d)) throw Error("sim: word_delta must be finite");
    }
  }
  if (parallelism < 1) throw Error("sim: parallelism must be at least 1");
}

const std::vector<std::string>& sim_essay_cores(ErrorLabel label) { return kCores[label_index(label)]; }

std::optional<ErrorLabel> sim_essay_label(std::string_view essay) {
  for (auto label : kAllLabels) {
    for (const auto& core : kCores[label_index(label)]) {
      if (essay.find(core) != std::string_view::npos) return label;
    }
  }
  return std::nullopt;
}

std::string synthesize_essay(ErrorLabel label, std::size_t target_words, std::uint64_t variant) {
  const auto& cores = kCores[label_index(label)];
  std::string text = cores[variant % cores.size()];
  std::size_t words = word_count(text);
  std::size_t filler = static_cast<std::size_t>(variant / cores.size());
  while (words < target_words) {
    const auto& sentence = kFillers[filler++ % kFillers.size()];
    const auto n = word_count(sentence);
    if (words + n <= target_words) {
      text += ' ';
      text += sentence;
      words += n;
      continue;
    }
    // Take a prefix of the sentence and close it off.
    std::size_t taken = 0;
    std::size_t pos = 0;
    std::string part;
    while (words + taken < target_words) {
      const auto end = sentence.find(' ', pos);
      const auto word = sentence.substr(pos, end == std::string::npos ? std::string::npos : end - pos);
      if (!part.empty()) part += ' ';
      part += word;
      ++taken;
      pos = end + 1;
    }
    if (part.back() != '.') part += '.';
    text += ' ';
    text += part;
    words += taken;
  }
  return text;
}

std::string sim_feedback(ErrorLabel label) { return kFeedback[label_index(label)]; }

std::shared_ptr<ScriptedBackend> make_sim_backend(std::string id) {
  auto backend = std::make_shared<ScriptedBackend>(std::move(id));
  backend->on_prompt([](std::string_view prompt) -> std::optional<std::string> {
    if (prompt.find("Pedagogical Specialist") != std::string_view::npos) {
      PosthocFeedback fb;
      fb.essay_evaluation = "The plan uses the shared acceleration but should say more clearly which block matters.";
      fb.inferred_level = sim_essay_label(prompt) == ErrorLabel::Correct ? KnowledgeLevel::Advanced
                                                                         : KnowledgeLevel::Novice;
      fb.novice_feedback =
          "Start by drawing the upper block by itself and listing every force on it. Ask what makes it speed up "
          "along with the lower block. Then use the third law to go from that force to the one you need.";
      fb.advanced_feedback =
          "Your system level step is sound, so focus on the interaction pair between the blocks. Decide which body's "
          "inertia fixes its magnitude and how the third law fixes its sense. Compare this with the applied push.";
      return render_posthoc_response(fb);
    }
    const auto essay = extract_student_essay(prompt);
    if (!essay) return std::nullopt;
    const auto label = sim_essay_label(*essay).value_or(ErrorLabel::PositionDirection);
    FeedbackResponse r;
    r.classification = label;
    r.confidence = 4;
    r.secondary_classification =
        label == ErrorLabel::Correct ? ErrorLabel::Direction
        : label == ErrorLabel::PositionDirection ? ErrorLabel::Position
                                                 : ErrorLabel::PositionDirection;
    r.feedback = sim_feedback(label);
    return render_jit_response(r);
  });
  return backend;
}

std::string ServiceSimTarget::create_session(const std::string& student_ref, const std::string& quiz_id,
                                             TimestampMs at) {
  return service_.create_session(student_ref, quiz_id, at);
}

SubmitResult ServiceSimTarget::submit_essay(const std::string& session_id, const std::string& text, TimestampMs at) {
  return service_.submit_essay(session_id, text, at);
}

void ServiceSimTarget::record_answer(const std::string& session_id, const std::string& option_key, TimestampMs at) {
  service_.record_answer(session_id, option_key, at);
}

void ServiceSimTarget::record_survey(const std::string& session_id, const SurveyResponse& survey, TimestampMs at) {
  service_.record_survey(session_id, survey, at);
}

void ServiceSimTarget::generate_posthoc(const std::string& assignment_id, const std::string& student_ref,
                                        const std::string& quiz_id, const std::string& essay) {
  service_.generate_posthoc(assignment_id, student_ref, quiz_id, essay, kSimRubric);
}

PreferencePair ServiceSimTarget::get_preference_pair(const std::string& assignment_id,
                                                     const std::string& student_ref) {
  return service_.get_preference_pair(assignment_id, student_ref);
}

void ServiceSimTarget::record_preference(const std::string& assignment_id, const std::string& student_ref,
                                         Choice chosen, const std::vector<std::string>& reasons) {
  service_.record_preference(assignment_id, student_ref, chosen, reasons);
}

std::string sim_student_ref(std::uint64_t i) { return fmt::format("student-{:08}", i); }

std::string sim_session_id(std::string_view student_ref) {
  auto suffix = student_ref;
  if (const auto dash = student_ref.rfind('-'); dash != std::string_view::npos) suffix = student_ref.substr(dash + 1);
  return fmt::format("session-{}", suffix);
}

SimSummary simulate_cohort(const SimConfig& input, const QuizProblem& quiz, SimTarget& target) {
  SimConfig config = input;
  config.validate();
  const double p_later = config.p_continue_later.value_or(config.p_continue);

  std::string answer_for[kLabelCount];
  for (auto label : kAllLabels) {
    answer_for[label_index(label)] = quiz.correct_option;
    for (const auto& opt : quiz.options) {
      if (opt.mapped_label == label) {
        answer_for[label_index(label)] = opt.key;
        break;
      }
    }
  }

  std::atomic<std::uint64_t> next{0};
  std::atomic<std::uint64_t> turns{0};
  std::atomic<std::uint64_t> degraded{0};
  std::atomic<std::uint64_t> retries{0};
  std::atomic<std::uint64_t> preferences{0};
  std::atomic<std::uint64_t> posthoc_failures{0};
  std::mutex error_mutex;
  std::exception_ptr error;

  const auto run_student = [&](std::uint64_t i) {
    SimRng rng(mix_seed(config.seed, i));
    const auto student = sim_student_ref(i);
    TimestampMs t = config.start_ms + static_cast<TimestampMs>(i) * 120000;

    const auto session = target.create_session(student, quiz.quiz_id, t);
    auto label = kAllLabels[rng.categorical(config.initial_label_dist)];
    const std::size_t first_min = std::max<std::size_t>(kMinEssayWords, word_count(sim_essay_cores(label)[0]));
    std::size_t words = first_min + rng.next() % 21;
    std::uint64_t variant = rng.next() % 64;
    std::string essay = synthesize_essay(label, words, variant);
    std::string first_essay = essay;
    words = word_count(essay);

    for (int turn = 1;; ++turn) {
      t += 1000;
      const auto result = with_busy_retry([&] { return target.submit_essay(session, essay, t); }, retries);
      ++turns;
      if (result.degraded) ++degraded;
      if (turn >= config.max_turns) break;
      if (!rng.chance(turn == 1 ? config.p_continue : p_later)) break;

      const auto prev = label;
      label = kAllLabels[rng.categorical(config.revision_dynamics[label_index(prev)])];
      const double latency =
          std::max(1.0, config.latency.base_s + config.latency.jitter_s * rng.symmetric());
      t += static_cast<TimestampMs>(std::llround(latency * 1000.0)) - 1000;
      const double delta = config.word_delta[label_index(prev)][label_index(label)] +
                           config.word_delta_jitter * rng.symmetric();
      const auto floor_words = static_cast<long long>(
          std::max<std::size_t>(kMinEssayWords, word_count(sim_essay_cores(label)[variant % 2])));
      const auto target_words = std::clamp<long long>(static_cast<long long>(words) + std::llround(delta),
                                                      floor_words, static_cast<long long>(kMaxEssayWords));
      essay = synthesize_essay(label, static_cast<std::size_t>(target_words), variant);
      words = word_count(essay);
    }

    t += 30000;
    target.record_answer(session, answer_for[label_index(label)], t);

    if (rng.chance(config.p_survey)) {
      SurveyResponse survey;
      survey.helpful = rng.chance(config.p_helpful);
      const auto& pool = survey.helpful ? kHelpfulReasons : kUnhelpfulReasons;
      survey.reasons.push_back(pool[rng.next() % pool.size()]);
      t += 60000;
      target.record_survey(session, survey, t);
    }

    if (rng.chance(config.p_preference)) {
      const bool want_novice = rng.chance(0.6);
      const auto& reason = kPreferenceReasons[rng.next() % kPreferenceReasons.size()];
      try {
        with_busy_retry(
            [&] {
              target.generate_posthoc(config.assignment_id, student, quiz.quiz_id, first_essay);
              return 0;
            },
            retries);
      } catch (const PosthocUnavailableError&) {
        ++posthoc_failures;
        return;
      } catch (const ServiceUnavailableError&) {
        ++posthoc_failures;
        return;
      }
      const auto pair = target.get_preference_pair(config.assignment_id, student);
      const Choice chosen = want_novice == pair.novice_first() ? Choice::A : Choice::B;
      target.record_preference(config.assignment_id, student, chosen, {reason});
      ++preferences;
    }
  };

  const auto worker = [&] {
    for (;;) {
      {
        std::lock_guard lock(error_mutex);
        if (error) return;
      }
      const auto i = next++;
      if (i >= config.n_students) return;
      try {
        run_student(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };

  const auto n_threads = static_cast<std::size_t>(
      std::min<std::uint64_t>(static_cast<std::uint64_t>(config.parallelism), config.n_students));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t k = 0; k < n_threads; ++k) pool.emplace_back(worker);
  }
  if (error) std::rethrow_exception(error);

  SimSummary summary;
  summary.students = config.n_students;
  summary.turns = turns;
  summary.degraded_turns = degraded;
  summary.busy_retries = retries;
  summary.preferences = preferences;
  summary.posthoc_failures = posthoc_failures;
  return summary;
}

SimRun simulate_in_process(const SimConfig& config, const QuizCatalog& quizzes, std::vector<FewShotExample> bank,
                           const GatewayConfig& gateway, const ClassificationStrategy& strategy,
                           std::shared_ptr<CompletionBackend> backend) {
  if (quizzes.empty()) throw Error("sim: no quizzes loaded");
  const auto quiz_it = config.quiz_id.empty() ? quizzes.begin() : quizzes.find(config.quiz_id);
  if (quiz_it == quizzes.end()) throw ServiceError(ServiceErrorKind::UnknownQuiz, config.quiz_id);
  if (!backend) backend = make_sim_backend();

  EventLog log;
  ServiceOptions options;
  options.strategy = strategy;
  options.session_ids = [](std::string_view student) { return sim_session_id(student); };
  options.clock = [start = config.start_ms] { return start; };
  SessionService service(quizzes, std::move(bank), std::make_shared<Gateway>(std::move(backend), gateway), log,
                         options);
  ServiceSimTarget target(service);
  SimRun run;
  run.summary = simulate_cohort(config, quiz_it->second, target);
  const auto events = log.snapshot();
  run.events = canonical_order(events);
  return run;
}

}  // namespace jitfb
