#include "jitfb/session_service.hpp"

#include <chrono>
#include <fstream>
#include <random>

#include <spdlog/spdlog.h>

#include "jitfb/hash.hpp"
#include "jitfb/response_parser.hpp"

namespace jitfb {

using nlohmann::json;

QuizCatalog load_quiz_catalog(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open quiz definitions " + path.string());
  const auto j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(path.string() + ": not valid JSON");
  QuizCatalog catalog;
  const auto add = [&](const json& item) {
    auto quiz = item.get<QuizProblem>();
    quiz.validate();
    const auto id = quiz.quiz_id;
    if (!catalog.emplace(id, std::move(quiz)).second) throw Error("duplicate quiz id " + id);
  };
  try {
    if (j.is_array()) {
      for (const auto& item : j) add(item);
    } else {
      add(j);
    }
  } catch (const json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
  return catalog;
}

std::string_view to_string(ServiceErrorKind kind) noexcept {
  switch (kind) {
    case ServiceErrorKind::UnknownQuiz: return "UnknownQuiz";
    case ServiceErrorKind::UnknownSession: return "UnknownSession";
    case ServiceErrorKind::SessionClosed: return "SessionClosed";
    case ServiceErrorKind::UnknownOption: return "UnknownOption";
    case ServiceErrorKind::AlreadyAnswered: return "AlreadyAnswered";
    case ServiceErrorKind::NotAnswered: return "NotAnswered";
    case ServiceErrorKind::DuplicateSurvey: return "DuplicateSurvey";
    case ServiceErrorKind::NotGenerated: return "NotGenerated";
    case ServiceErrorKind::DuplicateChoice: return "DuplicateChoice";
    case ServiceErrorKind::BadRequest: return "BadRequest";
  }
  return "Unknown";
}

int http_status(ServiceErrorKind kind) noexcept {
  switch (kind) {
    case ServiceErrorKind::UnknownQuiz:
    case ServiceErrorKind::UnknownSession:
    case ServiceErrorKind::NotGenerated: return 404;
    case ServiceErrorKind::SessionClosed:
    case ServiceErrorKind::AlreadyAnswered:
    case ServiceErrorKind::NotAnswered:
    case ServiceErrorKind::DuplicateSurvey:
    case ServiceErrorKind::DuplicateChoice: return 409;
    case ServiceErrorKind::UnknownOption: return 422;
    case ServiceErrorKind::BadRequest: return 400;
  }
  return 500;
}

ServiceError::ServiceError(ServiceErrorKind kind, const std::string& detail)
    : Error(std::string(to_string(kind)) + (detail.empty() ? "" : ": " + detail)), kind_(kind) {}

std::uint64_t preference_seed(std::string_view assignment_id, std::string_view student_ref) noexcept {
  return stable_hash({assignment_id, student_ref});
}

namespace {

TimestampMs system_now() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

std::string random_session_id(std::string_view) {
  static std::mutex mutex;
  static std::mt19937_64 rng{std::random_device{}()};
  std::lock_guard lock(mutex);
  return to_hex(rng()) + to_hex(rng());
}

}  // namespace

SessionService::SessionService(QuizCatalog quizzes, std::vector<FewShotExample> bank,
                               std::shared_ptr<Gateway> gateway, EventLog& log, ServiceOptions options)
    : quizzes_(std::move(quizzes)),
      bank_(std::move(bank)),
      gateway_(std::move(gateway)),
      log_(log),
      options_(std::move(options)) {
  if (!gateway_) throw Error("session service requires a gateway");
  if (!options_.clock) options_.clock = system_now;
  if (!options_.session_ids) options_.session_ids = random_session_id;
  options_.strategy.validate();
  for (const auto& [id, quiz] : quizzes_) quiz.validate();
  const auto k = options_.strategy.mode == StrategyMode::ZeroShot ? 0 : options_.strategy.k_per_label;
  if (auto shortfalls = bank_shortfalls(bank_, k); !shortfalls.empty()) {
    throw InsufficientBankError(std::move(shortfalls));
  }
  restore();
}

void SessionService::restore() {
  const auto events = log_.snapshot();
  if (events.empty()) return;
  const auto state = replay(events, &quizzes_);
  for (const auto& issue : state.issues) spdlog::warn("event log: {}", issue);
  for (const auto& s : state.sessions) {
    auto st = std::make_shared<SessionState>();
    st->session = s;
    sessions_.emplace(s.session_id, st);
    session_order_.push_back(s.session_id);
  }
  for (const auto& e : events) {
    if (e.type != EventType::TurnRecorded || !e.data.contains("client_key")) continue;
    if (auto it = sessions_.find(e.stream); it != sessions_.end()) {
      it->second->client_keys[e.data["client_key"].get<std::string>()] = e.data["turn"]["turn_index"].get<int>();
    }
  }
  for (const auto& p : state.posthoc) preferences_[{p.assignment_id, p.student_ref}].feedback = p.feedback;
  for (const auto& p : state.preferences) preferences_[{p.assignment_id, p.student_ref}].record = p;
}

const QuizProblem& SessionService::quiz(const std::string& quiz_id) const {
  const auto it = quizzes_.find(quiz_id);
  if (it == quizzes_.end()) throw ServiceError(ServiceErrorKind::UnknownQuiz, quiz_id);
  return it->second;
}

std::shared_ptr<SessionService::SessionState> SessionService::find(const std::string& session_id) const {
  std::shared_lock lock(sessions_mutex_);
  const auto it = sessions_.find(session_id);
  if (it == sessions_.end()) throw ServiceError(ServiceErrorKind::UnknownSession, session_id);
  return it->second;
}

std::string SessionService::create_session(const std::string& student_ref, const std::string& quiz_id,
                                           std::optional<TimestampMs> at) {
  quiz(quiz_id);
  auto st = std::make_shared<SessionState>();
  st->session.student_ref = student_ref;
  st->session.quiz_id = quiz_id;
  std::lock_guard session_lock(st->mutex);
  {
    std::unique_lock lock(sessions_mutex_);
    std::string id = options_.session_ids(student_ref);
    for (int tries = 1; sessions_.count(id); ++tries) {
      if (tries == 8) throw Error("session id generator keeps returning taken ids");
      id = options_.session_ids(student_ref);
    }
    st->session.session_id = id;
    sessions_.emplace(id, st);
    session_order_.push_back(id);
  }
  log_.append(EventType::SessionCreated, st->session.session_id, at.value_or(now()),
              {{"session_id", st->session.session_id}, {"student_ref", student_ref}, {"quiz_id", quiz_id}});
  return st->session.session_id;
}

SubmitResult SessionService::submit_essay(const std::string& session_id, std::string_view text,
                                          std::optional<TimestampMs> at, std::optional<std::string> client_key) {
  auto st = find(session_id);
  std::lock_guard lock(st->mutex);
  auto& s = st->session;
  if (client_key) {
    if (auto it = st->client_keys.find(*client_key); it != st->client_keys.end()) {
      const auto& turn = s.turns.at(static_cast<std::size_t>(it->second - 1));
      return {turn.turn_index, turn.response.feedback, turn.response.degraded};
    }
  }
  if (s.final_answer) throw ServiceError(ServiceErrorKind::SessionClosed, session_id);
  const auto submitted_at = at.value_or(now());
  const auto essay = validate_essay(text, submitted_at);

  const int turn_index = static_cast<int>(s.turns.size()) + 1;
  RequestOptions request = options_.request;
  request.idempotency_key = to_hex(stable_hash({session_id, std::to_string(turn_index)}));
  auto response = classify(essay, quiz(s.quiz_id), bank_, options_.strategy, *gateway_, request);

  ConversationTurn turn;
  turn.turn_index = turn_index;
  turn.essay = essay.essay();
  turn.response = std::move(response);
  if (!s.turns.empty()) {
    const auto delta_ms = submitted_at - s.turns.back().essay.submitted_at;
    turn.latency_since_prev_s = delta_ms > 0 ? static_cast<double>(delta_ms) / 1000.0 : 0.0;
  }
  json data = {{"turn", turn}};
  if (client_key) data["client_key"] = *client_key;
  log_.append(EventType::TurnRecorded, session_id, submitted_at, std::move(data));

  SubmitResult result{turn.turn_index, turn.response.feedback, turn.response.degraded};
  if (client_key) st->client_keys[*client_key] = turn_index;
  s.turns.push_back(std::move(turn));
  return result;
}

bool SessionService::record_answer(const std::string& session_id, const std::string& option_key,
                                   std::optional<TimestampMs> at) {
  auto st = find(session_id);
  std::lock_guard lock(st->mutex);
  auto& s = st->session;
  if (s.final_answer) throw ServiceError(ServiceErrorKind::AlreadyAnswered, session_id);
  const auto& q = quiz(s.quiz_id);
  const auto* option = q.find_option(option_key);
  if (option == nullptr) throw ServiceError(ServiceErrorKind::UnknownOption, option_key);
  const bool correct = option_key == q.correct_option;
  log_.append(EventType::AnswerRecorded, session_id, at.value_or(now()),
              {{"final_answer", option_key}, {"answer_correct", correct}, {"answer_label", option->mapped_label}});
  s.final_answer = option_key;
  s.answer_correct = correct;
  return correct;
}

void SessionService::record_survey(const std::string& session_id, SurveyResponse survey,
                                   std::optional<TimestampMs> at) {
  auto st = find(session_id);
  std::lock_guard lock(st->mutex);
  auto& s = st->session;
  if (!s.final_answer) throw ServiceError(ServiceErrorKind::NotAnswered, session_id);
  if (s.survey) throw ServiceError(ServiceErrorKind::DuplicateSurvey, session_id);
  log_.append(EventType::SurveyRecorded, session_id, at.value_or(now()), {{"survey", survey}});
  s.survey = std::move(survey);
}

void SessionService::register_posthoc(const std::string& assignment_id, const std::string& student_ref,
                                      PosthocFeedback feedback) {
  if (feedback.novice_feedback.empty() || feedback.advanced_feedback.empty()) {
    throw ServiceError(ServiceErrorKind::BadRequest, "post-hoc feedback needs both variants");
  }
  std::lock_guard lock(preference_mutex_);
  auto& state = preferences_[{assignment_id, student_ref}];
  if (state.feedback == feedback) return;
  if (state.record) throw ServiceError(ServiceErrorKind::DuplicateChoice, "preference already recorded");
  log_.append(EventType::PosthocGenerated, preference_stream(assignment_id, student_ref), now(),
              {{"assignment_id", assignment_id}, {"student_ref", student_ref}, {"feedback", feedback}});
  state.feedback = std::move(feedback);
}

PosthocFeedback SessionService::generate_posthoc(const std::string& assignment_id, const std::string& student_ref,
                                                 const std::string& quiz_id, std::string_view essay_text,
                                                 std::string_view expert_rubric) {
  const auto essay = validate_essay(essay_text);
  CompletionRequest request;
  request.prompt = build_posthoc_prompt(quiz(quiz_id), essay, expert_rubric);
  request.max_tokens = options_.request.max_tokens;
  request.temperature = options_.request.temperature;
  request.timeout_s = options_.request.timeout_s;
  request.idempotency_key = to_hex(stable_hash({"posthoc", assignment_id, student_ref}));
  const auto outcome = gateway_->dispatch(request);
  if (std::holds_alternative<Busy>(outcome)) throw BusyError();
  if (const auto* degraded = std::get_if<Degraded>(&outcome)) {
    throw PosthocUnavailableError(degraded->last_error);
  }
  auto feedback = parse_posthoc_response(std::get<CompletionResult>(outcome).text);
  register_posthoc(assignment_id, student_ref, feedback);
  return feedback;
}

PreferencePair SessionService::get_preference_pair(const std::string& assignment_id,
                                                   const std::string& student_ref) const {
  std::lock_guard lock(preference_mutex_);
  const auto it = preferences_.find({assignment_id, student_ref});
  if (it == preferences_.end() || it->second.feedback.novice_feedback.empty()) {
    throw ServiceError(ServiceErrorKind::NotGenerated, assignment_id);
  }
  PreferencePair pair;
  pair.assignment_id = assignment_id;
  pair.order_seed = preference_seed(assignment_id, student_ref);
  const auto& fb = it->second.feedback;
  if (pair.novice_first()) {
    pair.variant_a = fb.novice_feedback;
    pair.variant_b = fb.advanced_feedback;
  } else {
    pair.variant_a = fb.advanced_feedback;
    pair.variant_b = fb.novice_feedback;
  }
  if (it->second.record) {
    pair.chosen = it->second.record->chosen;
    pair.reasons = it->second.record->reasons;
  }
  return pair;
}

void SessionService::record_preference(const std::string& assignment_id, const std::string& student_ref,
                                       Choice chosen, std::vector<std::string> reasons) {
  const auto pair = get_preference_pair(assignment_id, student_ref);
  std::lock_guard lock(preference_mutex_);
  auto& state = preferences_[{assignment_id, student_ref}];
  if (state.record) throw ServiceError(ServiceErrorKind::DuplicateChoice, assignment_id);
  PreferenceRecord record;
  record.assignment_id = assignment_id;
  record.student_ref = student_ref;
  record.chosen = chosen;
  record.reasons = std::move(reasons);
  record.order_seed = pair.order_seed;
  record.novice_chosen = (chosen == Choice::A) == pair.novice_first();
  log_.append(EventType::PreferenceRecorded, preference_stream(assignment_id, student_ref), now(),
              {{"assignment_id", assignment_id},
               {"student_ref", student_ref},
               {"chosen", to_string(chosen)},
               {"reasons", record.reasons},
               {"order_seed", record.order_seed},
               {"novice_chosen", record.novice_chosen}});
  state.record = std::move(record);
}

std::optional<Session> SessionService::session(const std::string& session_id) const {
  std::shared_ptr<SessionState> st;
  {
    std::shared_lock lock(sessions_mutex_);
    const auto it = sessions_.find(session_id);
    if (it == sessions_.end()) return std::nullopt;
    st = it->second;
  }
  std::lock_guard lock(st->mutex);
  return st->session;
}

std::vector<Session> SessionService::sessions() const {
  std::vector<std::shared_ptr<SessionState>> states;
  {
    std::shared_lock lock(sessions_mutex_);
    for (const auto& id : session_order_) states.push_back(sessions_.at(id));
  }
  std::vector<Session> out;
  out.reserve(states.size());
  for (const auto& st : states) {
    std::lock_guard lock(st->mutex);
    out.push_back(st->session);
  }
  return out;
}

}  // namespace jitfb
