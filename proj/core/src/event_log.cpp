#include "jitfb/event_log.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <unordered_map>

namespace jitfb {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, 6> kEventNames{
    "SessionCreated", "TurnRecorded", "AnswerRecorded", "SurveyRecorded", "PreferenceRecorded", "PosthocGenerated"};

std::string dump(const json& j) { return j.dump(-1, ' ', false, json::error_handler_t::replace); }

}  // namespace

std::string_view to_string(EventType type) noexcept { return kEventNames[static_cast<std::size_t>(type)]; }

std::optional<EventType> parse_event_type(std::string_view name) noexcept {
  for (std::size_t i = 0; i < kEventNames.size(); ++i) {
    if (kEventNames[i] == name) return static_cast<EventType>(i);
  }
  return std::nullopt;
}

std::string_view to_string(Choice c) noexcept { return c == Choice::A ? "A" : "B"; }

std::optional<Choice> parse_choice(std::string_view s) noexcept {
  if (s == "A") return Choice::A;
  if (s == "B") return Choice::B;
  return std::nullopt;
}

std::string preference_stream(std::string_view assignment_id, std::string_view student_ref) {
  return "preference/" + std::string(assignment_id) + "/" + std::string(student_ref);
}

std::string serialize_event(const Event& event) {
  json j = {{"seq", event.seq},
            {"stream", event.stream},
            {"stream_seq", event.stream_seq},
            {"ts", event.ts},
            {"type", to_string(event.type)},
            {"data", event.data}};
  return dump(j);
}

Event parse_event(std::string_view line) {
  const auto j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw Error("event line is not a JSON object");
  Event e;
  try {
    e.seq = j.at("seq").get<std::uint64_t>();
    e.stream = j.at("stream").get<std::string>();
    e.stream_seq = j.at("stream_seq").get<std::uint64_t>();
    e.ts = j.at("ts").get<TimestampMs>();
    const auto type = parse_event_type(j.at("type").get<std::string>());
    if (!type) throw Error("unknown event type " + j.at("type").dump());
    e.type = *type;
    e.data = j.at("data");
  } catch (const json::exception& ex) {
    throw Error(std::string("malformed event: ") + ex.what());
  }
  return e;
}

EventLog::EventLog(std::filesystem::path path) : path_(std::move(path)) {
  if (std::filesystem::exists(*path_)) {
    events_ = read_jsonl(*path_);
    for (const auto& e : events_) {
      auto& s = stream_seq_[e.stream];
      s = std::max(s, e.stream_seq);
    }
  } else if (path_->has_parent_path()) {
    std::filesystem::create_directories(path_->parent_path());
  }
  out_.open(*path_, std::ios::app);
  if (!out_) throw Error("cannot open event log " + path_->string() + " for append");
}

Event EventLog::append(EventType type, std::string stream, TimestampMs ts, json data) {
  std::unique_lock lock(mutex_);
  Event e;
  e.seq = events_.size() + 1;
  e.stream_seq = ++stream_seq_[stream];
  e.stream = std::move(stream);
  e.ts = ts;
  e.type = type;
  e.data = std::move(data);
  if (out_.is_open()) {
    out_ << serialize_event(e) << '\n';
    out_.flush();
    if (!out_) throw Error("event log write failed");
  }
  events_.push_back(e);
  return e;
}

std::vector<Event> EventLog::snapshot() const {
  std::shared_lock lock(mutex_);
  return events_;
}

std::size_t EventLog::size() const {
  std::shared_lock lock(mutex_);
  return events_.size();
}

void EventLog::flush() {
  std::unique_lock lock(mutex_);
  if (out_.is_open()) out_.flush();
}

std::vector<Event> EventLog::parse_jsonl(std::istream& in) {
  std::vector<Event> events;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      events.push_back(parse_event(line));
    } catch (const Error& e) {
      throw Error("event log line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return events;
}

std::vector<Event> EventLog::read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open event log " + path.string());
  return parse_jsonl(in);
}

std::string EventLog::to_jsonl(std::span<const Event> events) {
  std::string out;
  for (const auto& e : events) {
    out += serialize_event(e);
    out += '\n';
  }
  return out;
}

void EventLog::write_jsonl(const std::filesystem::path& path, std::span<const Event> events) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << to_jsonl(events);
  if (!out) throw Error("write failed for " + path.string());
}

const Session* ReplayResult::find(std::string_view session_id) const noexcept {
  for (const auto& s : sessions) {
    if (s.session_id == session_id) return &s;
  }
  return nullptr;
}

ReplayResult replay(std::span<const Event> events, const std::map<std::string, QuizProblem, std::less<>>* quizzes) {
  ReplayResult out;
  std::unordered_map<std::string, std::size_t> index;
  std::unordered_map<std::string, std::uint64_t> stream_seq;
  std::set<std::pair<std::string, std::string>> posthoc_keys;
  std::set<std::pair<std::string, std::string>> preference_keys;
  auto issue = [&](const Event& e, const std::string& what) {
    out.issues.push_back("seq " + std::to_string(e.seq) + " (" + std::string(to_string(e.type)) + "): " + what);
  };

  std::uint64_t expected_seq = 1;
  for (const auto& e : events) {
    if (e.seq != expected_seq) issue(e, "global sequence expected " + std::to_string(expected_seq));
    expected_seq = e.seq + 1;
    auto& sseq = stream_seq[e.stream];
    if (e.stream_seq != sseq + 1) issue(e, "stream sequence expected " + std::to_string(sseq + 1));
    sseq = e.stream_seq;

    try {
      if (e.type == EventType::PreferenceRecorded) {
        PreferenceRecord p;
        p.assignment_id = e.data.at("assignment_id").get<std::string>();
        p.student_ref = e.data.at("student_ref").get<std::string>();
        const auto chosen = parse_choice(e.data.at("chosen").get<std::string>());
        if (!chosen) throw Error("bad choice");
        p.chosen = *chosen;
        p.reasons = e.data.value("reasons", std::vector<std::string>{});
        p.order_seed = e.data.at("order_seed").get<std::uint64_t>();
        p.novice_chosen = e.data.at("novice_chosen").get<bool>();
        if (!preference_keys.insert({p.assignment_id, p.student_ref}).second) issue(e, "duplicate preference");
        out.preferences.push_back(std::move(p));
        continue;
      }
      if (e.type == EventType::PosthocGenerated) {
        PosthocRecord p;
        p.assignment_id = e.data.at("assignment_id").get<std::string>();
        p.student_ref = e.data.at("student_ref").get<std::string>();
        p.feedback = e.data.at("feedback").get<PosthocFeedback>();
        if (!posthoc_keys.insert({p.assignment_id, p.student_ref}).second) issue(e, "duplicate post-hoc feedback");
        out.posthoc.push_back(std::move(p));
        continue;
      }
      if (e.type == EventType::SessionCreated) {
        if (index.count(e.stream)) {
          issue(e, "session created twice");
          continue;
        }
        Session s;
        s.session_id = e.data.at("session_id").get<std::string>();
        s.student_ref = e.data.at("student_ref").get<std::string>();
        s.quiz_id = e.data.at("quiz_id").get<std::string>();
        if (s.session_id != e.stream) issue(e, "stream does not match session_id");
        index.emplace(e.stream, out.sessions.size());
        out.sessions.push_back(std::move(s));
        continue;
      }
      const auto it = index.find(e.stream);
      if (it == index.end()) {
        issue(e, "event for unknown session " + e.stream);
        continue;
      }
      Session& s = out.sessions[it->second];
      switch (e.type) {
        case EventType::TurnRecorded: {
          auto turn = e.data.at("turn").get<ConversationTurn>();
          if (s.final_answer) issue(e, "essay after the session was answered");
          if (turn.turn_index != static_cast<int>(s.turns.size()) + 1) issue(e, "turn index gap");
          if (turn.latency_since_prev_s && *turn.latency_since_prev_s < 0) issue(e, "negative latency");
          if ((turn.turn_index == 1) == turn.latency_since_prev_s.has_value()) {
            issue(e, "latency must be present exactly on turns after the first");
          }
          s.turns.push_back(std::move(turn));
          break;
        }
        case EventType::AnswerRecorded: {
          if (s.final_answer) {
            issue(e, "second answer");
            break;
          }
          s.final_answer = e.data.at("final_answer").get<std::string>();
          s.answer_correct = e.data.at("answer_correct").get<bool>();
          if (quizzes) {
            const auto q = quizzes->find(s.quiz_id);
            if (q == quizzes->end()) {
              issue(e, "unknown quiz " + s.quiz_id);
            } else if (*s.answer_correct != (*s.final_answer == q->second.correct_option)) {
              issue(e, "answer_correct disagrees with the quiz key");
            }
          }
          break;
        }
        case EventType::SurveyRecorded: {
          if (!s.final_answer) issue(e, "survey before answer");
          if (s.survey) {
            issue(e, "second survey");
            break;
          }
          s.survey = e.data.at("survey").get<SurveyResponse>();
          break;
        }
        default: break;
      }
    } catch (const std::exception& ex) {
      issue(e, std::string("malformed payload: ") + ex.what());
    }
  }
  return out;
}

std::vector<Event> canonical_order(std::span<const Event> events) {
  std::vector<Event> out(events.begin(), events.end());
  std::stable_sort(out.begin(), out.end(), [](const Event& a, const Event& b) {
    if (a.stream != b.stream) return a.stream < b.stream;
    return a.stream_seq < b.stream_seq;
  });
  for (std::size_t i = 0; i < out.size(); ++i) out[i].seq = i + 1;
  return out;
}

}  // namespace jitfb
