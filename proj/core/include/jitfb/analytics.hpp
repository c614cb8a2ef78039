#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "jitfb/domain.hpp"
#include "jitfb/event_log.hpp"
#include "jitfb/stats.hpp"

namespace jitfb {

enum class AnalyticsErrorKind { EmptyLog, NoTransitions, TooFewPairs };

class AnalyticsError : public Error {
 public:
  AnalyticsError(AnalyticsErrorKind kind, const std::string& detail);
  AnalyticsErrorKind kind() const noexcept { return kind_; }

 private:
  AnalyticsErrorKind kind_;
};

/// "20.05%": k/n as a percentage truncated (not rounded) to two decimals.
std::string format_percent(std::uint64_t k, std::uint64_t n);

struct ConvStats {
  std::uint64_t total_instances = 0;
  std::uint64_t conversational_instances = 0;
  double conversational_pct = 0.0;
  // Absent when there are no conversational instances (or, for skewness,
  // when the turn counts do not vary).
  std::optional<double> mean_turns;
  std::optional<double> std_turns;
  std::optional<int> min_turns;
  std::optional<int> max_turns;
  std::optional<double> skewness_g1;
  std::optional<double> first_turn_correct_pct;
  std::optional<double> last_turn_correct_pct;
  std::uint64_t first_turn_correct = 0;
  std::uint64_t last_turn_correct = 0;
};

/// Sessions with at least one turn are instances; two or more, conversational.
ConvStats conversation_stats(std::span<const Session> sessions);

struct TransitionMatrix {
  std::array<std::array<std::uint64_t, kLabelCount>, kLabelCount> counts{};
  std::array<std::array<double, kLabelCount>, kLabelCount> probs{};
  std::array<std::uint64_t, kLabelCount> row_counts{};

  bool has_row(ErrorLabel from) const noexcept { return row_counts[label_index(from)] > 0; }
  double prob(ErrorLabel from, ErrorLabel to) const noexcept {
    return probs[label_index(from)][label_index(to)];
  }
  std::uint64_t total() const noexcept;
};

/// Count-and-normalise over adjacent turn pairs. Throws NoTransitions.
TransitionMatrix transition_matrix(std::span<const Session> sessions);

struct TrajectoryEntry {
  std::string path;
  std::uint64_t n_students = 0;
  std::uint64_t n_correct_answers = 0;

  bool operator==(const TrajectoryEntry&) const = default;
};

struct TrajectoryReport {
  ErrorLabel start_label = ErrorLabel::Correct;
  std::vector<TrajectoryEntry> entries;  // most frequent first, then by path
};

/// Conversational sessions whose first turn has start_label, grouped by the
/// sequence of per-turn short codes. collapse merges repeated neighbours.
TrajectoryReport extract_trajectories(std::span<const Session> sessions, ErrorLabel start_label,
                                      bool collapse = false);

std::string trajectory_path(const Session& session, bool collapse = false);

struct ActivityCorrelations {
  CorrelationResult latency_vs_correct;
  CorrelationResult worddelta_vs_correct;
};

/// Over adjacent turn pairs: latency and word-count change of the later turn
/// against whether its classification is Correct. Throws TooFewPairs below 3.
ActivityCorrelations activity_correlations(std::span<const Session> sessions);

struct SurveyTally {
  std::uint64_t responses = 0;
  std::uint64_t helpful = 0;
  std::map<std::string, std::uint64_t> reasons;  // by cluster_label when set, otherwise by reason text
};

SurveyTally survey_tally(std::span<const Session> sessions);

struct ReportOptions {
  bool collapse_trajectories = false;
};

struct Report {
  std::uint64_t sessions = 0;
  ConvStats conversation;
  std::optional<TransitionMatrix> transitions;
  std::array<TrajectoryReport, kLabelCount> trajectories;
  std::optional<ActivityCorrelations> correlations;
  std::string correlations_note;  // why correlations are absent
  SurveyTally survey;
  std::map<int, std::uint64_t> turn_histogram;  // turns -> instances
  bool collapsed = false;
};

/// Pure function of the session set: input order does not matter.
Report build_report(std::span<const Session> sessions, const ReportOptions& options = {});
/// Replays the events first. Throws EmptyLog when there is nothing to report.
Report build_report(std::span<const Event> events, const ReportOptions& options = {});

nlohmann::ordered_json report_to_json(const Report& report);
std::string render_report_json(const Report& report);
std::string render_report_text(const Report& report);

std::string transitions_csv(const Report& report);
std::string trajectories_csv(const TrajectoryReport& trajectories);
std::string turns_hist_csv(const Report& report);

/// Writes transitions.csv, trajectories_<label>.csv and turns_hist.csv.
void write_report_csvs(const Report& report, const std::filesystem::path& dir);

}  // namespace jitfb
