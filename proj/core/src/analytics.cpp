#include "jitfb/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace jitfb {

namespace {

std::string_view kind_name(AnalyticsErrorKind kind) {
  switch (kind) {
    case AnalyticsErrorKind::EmptyLog: return "EmptyLog";
    case AnalyticsErrorKind::NoTransitions: return "NoTransitions";
    case AnalyticsErrorKind::TooFewPairs: return "TooFewPairs";
  }
  return "AnalyticsError";
}

double pct(std::uint64_t k, std::uint64_t n) { return 100.0 * static_cast<double>(k) / static_cast<double>(n); }

}  // namespace

AnalyticsError::AnalyticsError(AnalyticsErrorKind kind, const std::string& detail)
    : Error(std::string(kind_name(kind)) + ": " + detail), kind_(kind) {}

std::string format_percent(std::uint64_t k, std::uint64_t n) {
  if (n == 0) return "n/a";
  const std::uint64_t basis = k * 10000 / n;
  auto frac = std::to_string(basis % 100);
  if (frac.size() < 2) frac.insert(0, "0");
  return std::to_string(basis / 100) + "." + frac + "%";
}

ConvStats conversation_stats(std::span<const Session> sessions) {
  ConvStats out;
  std::vector<double> turns;
  for (const auto& s : sessions) {
    if (s.turns.empty()) continue;
    ++out.total_instances;
    if (s.turns.size() < 2) continue;
    turns.push_back(static_cast<double>(s.turns.size()));
    if (s.turns.front().response.classification == ErrorLabel::Correct) ++out.first_turn_correct;
    if (s.turns.back().response.classification == ErrorLabel::Correct) ++out.last_turn_correct;
  }
  if (out.total_instances == 0) throw AnalyticsError(AnalyticsErrorKind::EmptyLog, "no session has a feedback turn");
  out.conversational_instances = turns.size();
  out.conversational_pct = pct(out.conversational_instances, out.total_instances);
  if (turns.empty()) return out;

  out.mean_turns = mean(turns);
  out.std_turns = population_stddev(turns);
  const auto [lo, hi] = std::minmax_element(turns.begin(), turns.end());
  out.min_turns = static_cast<int>(*lo);
  out.max_turns = static_cast<int>(*hi);
  if (turns.size() >= 2 && *lo != *hi) out.skewness_g1 = fisher_pearson_skewness(turns);
  out.first_turn_correct_pct = pct(out.first_turn_correct, out.conversational_instances);
  out.last_turn_correct_pct = pct(out.last_turn_correct, out.conversational_instances);
  return out;
}

std::uint64_t TransitionMatrix::total() const noexcept {
  std::uint64_t n = 0;
  for (auto c : row_counts) n += c;
  return n;
}

TransitionMatrix transition_matrix(std::span<const Session> sessions) {
  TransitionMatrix m;
  for (const auto& s : sessions) {
    for (std::size_t i = 1; i < s.turns.size(); ++i) {
      const auto from = label_index(s.turns[i - 1].response.classification);
      const auto to = label_index(s.turns[i].response.classification);
      ++m.counts[from][to];
      ++m.row_counts[from];
    }
  }
  if (m.total() == 0) throw AnalyticsError(AnalyticsErrorKind::NoTransitions, "no session has two or more turns");
  for (std::size_t r = 0; r < kLabelCount; ++r) {
    if (m.row_counts[r] == 0) continue;
    for (std::size_t c = 0; c < kLabelCount; ++c) {
      m.probs[r][c] = static_cast<double>(m.counts[r][c]) / static_cast<double>(m.row_counts[r]);
    }
  }
  return m;
}

std::string trajectory_path(const Session& session, bool collapse) {
  std::string path;
  char last = 0;
  for (const auto& turn : session.turns) {
    const char code = short_code(turn.response.classification);
    if (collapse && code == last) continue;
    if (!path.empty()) path += '-';
    path += code;
    last = code;
  }
  return path;
}

TrajectoryReport extract_trajectories(std::span<const Session> sessions, ErrorLabel start_label, bool collapse) {
  TrajectoryReport out;
  out.start_label = start_label;
  std::map<std::string, TrajectoryEntry> groups;
  for (const auto& s : sessions) {
    if (s.turns.size() < 2 || s.turns.front().response.classification != start_label) continue;
    auto path = trajectory_path(s, collapse);
    auto& entry = groups[path];
    entry.path = std::move(path);
    ++entry.n_students;
    if (s.answer_correct.value_or(false)) ++entry.n_correct_answers;
  }
  for (auto& [path, entry] : groups) out.entries.push_back(std::move(entry));
  std::stable_sort(out.entries.begin(), out.entries.end(),
                   [](const TrajectoryEntry& a, const TrajectoryEntry& b) { return a.n_students > b.n_students; });
  return out;
}

ActivityCorrelations activity_correlations(std::span<const Session> sessions) {
  std::vector<double> latency;
  std::vector<double> latency_y;
  std::vector<double> delta;
  std::vector<double> delta_y;
  for (const auto& s : sessions) {
    for (std::size_t i = 1; i < s.turns.size(); ++i) {
      const auto& next = s.turns[i];
      const double y = next.response.classification == ErrorLabel::Correct ? 1.0 : 0.0;
      delta.push_back(static_cast<double>(word_count_delta(s.turns[i - 1].essay, next.essay)));
      delta_y.push_back(y);
      if (next.latency_since_prev_s) {
        latency.push_back(*next.latency_since_prev_s);
        latency_y.push_back(y);
      }
    }
  }
  if (delta.size() < 3) {
    throw AnalyticsError(AnalyticsErrorKind::TooFewPairs, std::to_string(delta.size()) + " adjacent turn pairs");
  }
  return {pearson(latency, latency_y), pearson(delta, delta_y)};
}

SurveyTally survey_tally(std::span<const Session> sessions) {
  SurveyTally out;
  for (const auto& s : sessions) {
    if (!s.survey) continue;
    ++out.responses;
    if (s.survey->helpful) ++out.helpful;
    if (s.survey->cluster_label) {
      ++out.reasons["cluster " + std::to_string(*s.survey->cluster_label)];
    } else {
      for (const auto& r : s.survey->reasons) ++out.reasons[r];
    }
  }
  return out;
}

Report build_report(std::span<const Session> input, const ReportOptions& options) {
  if (input.empty()) throw AnalyticsError(AnalyticsErrorKind::EmptyLog, "no sessions");
  // Sort first so floating-point accumulation never depends on input order.
  std::vector<const Session*> order;
  for (const auto& s : input) order.push_back(&s);
  std::sort(order.begin(), order.end(),
            [](const Session* a, const Session* b) { return a->session_id < b->session_id; });
  std::vector<Session> sessions;
  sessions.reserve(order.size());
  for (const auto* s : order) sessions.push_back(*s);

  Report report;
  report.sessions = sessions.size();
  report.collapsed = options.collapse_trajectories;
  report.conversation = conversation_stats(sessions);
  if (report.conversation.conversational_instances > 0) report.transitions = transition_matrix(sessions);
  for (auto label : kAllLabels) {
    report.trajectories[label_index(label)] = extract_trajectories(sessions, label, options.collapse_trajectories);
  }
  try {
    report.correlations = activity_correlations(sessions);
  } catch (const Error& e) {
    report.correlations_note = e.what();
  }
  report.survey = survey_tally(sessions);
  for (const auto& s : sessions) {
    if (!s.turns.empty()) ++report.turn_histogram[static_cast<int>(s.turns.size())];
  }
  return report;
}

Report build_report(std::span<const Event> events, const ReportOptions& options) {
  if (events.empty()) throw AnalyticsError(AnalyticsErrorKind::EmptyLog, "the event log is empty");
  const auto state = replay(events);
  return build_report(std::span<const Session>(state.sessions), options);
}

}  // namespace jitfb
