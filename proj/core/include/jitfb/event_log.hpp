#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "jitfb/domain.hpp"
#include "jitfb/response_parser.hpp"

namespace jitfb {

enum class EventType {
  SessionCreated,
  TurnRecorded,
  AnswerRecorded,
  SurveyRecorded,
  PreferenceRecorded,
  PosthocGenerated,
};

std::string_view to_string(EventType type) noexcept;
std::optional<EventType> parse_event_type(std::string_view name) noexcept;

/// One JSONL record. `stream` is the session id for session events and
/// "preference/<assignment_id>/<student_ref>" for preference events;
/// `stream_seq` counts 1, 2, 3, ... within a stream.
struct Event {
  std::uint64_t seq = 0;
  std::string stream;
  std::uint64_t stream_seq = 0;
  TimestampMs ts = 0;
  EventType type = EventType::SessionCreated;
  nlohmann::json data;

  bool operator==(const Event&) const = default;
};

std::string serialize_event(const Event& event);
/// Throws Error on malformed input.
Event parse_event(std::string_view line);

std::string preference_stream(std::string_view assignment_id, std::string_view student_ref);

/// Append-only event store. With a path, every append is written and flushed
/// before it becomes visible; opening an existing file loads its events and
/// continues the sequence.
class EventLog {
 public:
  EventLog() = default;
  explicit EventLog(std::filesystem::path path);

  EventLog(const EventLog&) = delete;
  EventLog& operator=(const EventLog&) = delete;

  Event append(EventType type, std::string stream, TimestampMs ts, nlohmann::json data);

  std::vector<Event> snapshot() const;
  std::size_t size() const;
  const std::optional<std::filesystem::path>& path() const noexcept { return path_; }
  void flush();

  static std::vector<Event> read_jsonl(const std::filesystem::path& path);
  static std::vector<Event> parse_jsonl(std::istream& in);
  static void write_jsonl(const std::filesystem::path& path, std::span<const Event> events);
  static std::string to_jsonl(std::span<const Event> events);

 private:
  std::optional<std::filesystem::path> path_;
  std::ofstream out_;
  mutable std::shared_mutex mutex_;
  std::vector<Event> events_;
  std::map<std::string, std::uint64_t, std::less<>> stream_seq_;
};

enum class Choice { A, B };

std::string_view to_string(Choice c) noexcept;
std::optional<Choice> parse_choice(std::string_view s) noexcept;

struct PreferenceRecord {
  std::string assignment_id;
  std::string student_ref;
  Choice chosen = Choice::A;
  std::vector<std::string> reasons;
  std::uint64_t order_seed = 0;
  bool novice_chosen = false;

  bool operator==(const PreferenceRecord&) const = default;
};

struct PosthocRecord {
  std::string assignment_id;
  std::string student_ref;
  PosthocFeedback feedback;

  bool operator==(const PosthocRecord&) const = default;
};

/// State rebuilt from an event sequence.
struct ReplayResult {
  std::vector<Session> sessions;  // creation order
  std::vector<PosthocRecord> posthoc;
  std::vector<PreferenceRecord> preferences;
  std::vector<std::string> issues;  // integrity violations, empty when clean

  const Session* find(std::string_view session_id) const noexcept;
};

/// Folds events into sessions and checks the log invariants: contiguous
/// global sequence, contiguous per-stream sequence, gap-free turn indices,
/// no essays after the answer, at most one answer and one survey per session
/// and, when quizzes are supplied, answer_correct consistency.
ReplayResult replay(std::span<const Event> events,
                    const std::map<std::string, QuizProblem, std::less<>>* quizzes = nullptr);

/// Events ordered by stream id then stream_seq, with seq renumbered.
/// Independent of the interleaving in which concurrent writers appended.
std::vector<Event> canonical_order(std::span<const Event> events);

}  // namespace jitfb
