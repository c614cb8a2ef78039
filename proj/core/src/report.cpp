#include <fstream>

#include <fmt/format.h>

#include "jitfb/analytics.hpp"

namespace jitfb {

using nlohmann::ordered_json;

namespace {

constexpr std::string_view kInstanceFootnote =
    "instances count sessions with at least one feedback turn, not distinct students";

template <typename T>
ordered_json opt(const std::optional<T>& v) {
  return v ? ordered_json(*v) : ordered_json(nullptr);
}

ordered_json correlation_json(const CorrelationResult& c) {
  return {{"r", c.r}, {"p_two_sided", c.p_two_sided}, {"n", c.n}};
}

std::string fixed2(const std::optional<double>& v) { return v ? fmt::format("{:.2f}", *v) : "n/a"; }

std::string p_value(double p) { return p < 0.001 ? "< 0.001" : fmt::format("= {:.3f}", p); }

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << content;
}

}  // namespace

ordered_json report_to_json(const Report& r) {
  const auto& c = r.conversation;
  ordered_json conv = {
      {"total_instances", c.total_instances},
      {"conversational_instances", c.conversational_instances},
      {"conversational_pct", c.conversational_pct},
      {"conversational_pct_text", format_percent(c.conversational_instances, c.total_instances)},
      {"mean_turns", opt(c.mean_turns)},
      {"std_turns", opt(c.std_turns)},
      {"min_turns", opt(c.min_turns)},
      {"max_turns", opt(c.max_turns)},
      {"skewness_g1", opt(c.skewness_g1)},
      {"first_turn_correct_pct", opt(c.first_turn_correct_pct)},
      {"last_turn_correct_pct", opt(c.last_turn_correct_pct)},
      {"footnote", kInstanceFootnote},
  };

  ordered_json transitions = nullptr;
  if (r.transitions) {
    const auto& m = *r.transitions;
    transitions = ordered_json::object();
    transitions["labels"] = ordered_json::array();
    for (auto l : kAllLabels) transitions["labels"].push_back(label_name(l));
    transitions["row_counts"] = m.row_counts;
    transitions["counts"] = m.counts;
    auto probs = ordered_json::array();
    for (auto from : kAllLabels) {
      if (!m.has_row(from)) {
        probs.push_back(nullptr);
        continue;
      }
      auto row = ordered_json::array();
      for (auto to : kAllLabels) row.push_back(m.prob(from, to));
      probs.push_back(std::move(row));
    }
    transitions["probs"] = std::move(probs);
  }

  auto trajectories = ordered_json::object();
  for (const auto& t : r.trajectories) {
    auto entries = ordered_json::array();
    for (const auto& e : t.entries) {
      entries.push_back({{"path", e.path}, {"n_students", e.n_students}, {"n_correct_answers", e.n_correct_answers}});
    }
    trajectories[std::string(label_name(t.start_label))] = std::move(entries);
  }

  ordered_json correlations = nullptr;
  if (r.correlations) {
    correlations = {{"latency_vs_correct", correlation_json(r.correlations->latency_vs_correct)},
                    {"worddelta_vs_correct", correlation_json(r.correlations->worddelta_vs_correct)}};
  }

  ordered_json survey = {
      {"responses", r.survey.responses},
      {"helpful", r.survey.helpful},
      {"helpful_pct_text", format_percent(r.survey.helpful, r.survey.responses)},
      {"reasons", r.survey.reasons},
  };

  auto hist = ordered_json::array();
  for (const auto& [turns, n] : r.turn_histogram) hist.push_back({{"turns", turns}, {"instances", n}});

  ordered_json out;
  out["sessions"] = r.sessions;
  out["conversation"] = std::move(conv);
  out["transitions"] = std::move(transitions);
  out["trajectories_collapsed"] = r.collapsed;
  out["trajectories"] = std::move(trajectories);
  out["correlations"] = std::move(correlations);
  if (!r.correlations) out["correlations_note"] = r.correlations_note;
  out["survey"] = std::move(survey);
  out["turn_histogram"] = std::move(hist);
  return out;
}

std::string render_report_json(const Report& report) { return report_to_json(report).dump(2) + "\n"; }

std::string render_report_text(const Report& r) {
  const auto& c = r.conversation;
  std::string out;
  auto line = [&out](std::string_view label, const std::string& value) {
    out += fmt::format("  {:<38} {}\n", label, value);
  };

  out += "Conversation statistics\n";
  line("Total instances", std::to_string(c.total_instances) + " *");
  line("Conversational instances",
       fmt::format("{} ({})", c.conversational_instances, format_percent(c.conversational_instances, c.total_instances)));
  line("Mean # conv. turns (std)",
       c.mean_turns ? fmt::format("{} ({})", fixed2(c.mean_turns), fixed2(c.std_turns)) : "n/a");
  line("Min/Max # conv. turns", c.min_turns ? fmt::format("{} / {}", *c.min_turns, *c.max_turns) : "n/a");
  line("Skewness (Fisher-Pearson g1)", fixed2(c.skewness_g1));
  line("Turn 1 (Initial essay)",
       c.mean_turns ? format_percent(c.first_turn_correct, c.conversational_instances) : "n/a");
  line("Last turn (Final essay)",
       c.mean_turns ? format_percent(c.last_turn_correct, c.conversational_instances) : "n/a");
  out += fmt::format("  * {}\n", kInstanceFootnote);

  out += "\nTransition probabilities (row: from, column: to)\n";
  if (!r.transitions) {
    out += "  n/a (no conversational instances)\n";
  } else {
    const auto& m = *r.transitions;
    out += fmt::format("  {:<20}", "");
    for (auto to : kAllLabels) out += fmt::format("{:>20}", label_name(to));
    out += fmt::format("{:>8}\n", "n");
    for (auto from : kAllLabels) {
      out += fmt::format("  {:<20}", label_name(from));
      for (auto to : kAllLabels) {
        out += m.has_row(from) ? fmt::format("{:>20.4f}", m.prob(from, to)) : fmt::format("{:>20}", "-");
      }
      out += fmt::format("{:>8}\n", m.row_counts[label_index(from)]);
    }
  }

  out += fmt::format("\nLearning trajectories{}\n", r.collapsed ? " (repeats collapsed)" : "");
  for (const auto& t : r.trajectories) {
    out += fmt::format("  starting {}:", label_name(t.start_label));
    if (t.entries.empty()) out += " none";
    for (const auto& e : t.entries) out += fmt::format(" {}: {}/{}", e.path, e.n_correct_answers, e.n_students);
    out += "\n";
  }

  out += "\nActivity correlations (outcome: revised essay classified correct)\n";
  if (r.correlations) {
    const auto& lat = r.correlations->latency_vs_correct;
    const auto& wd = r.correlations->worddelta_vs_correct;
    out += fmt::format("  latency vs correct      r = {:.2f}, p {}, n = {}\n", lat.r, p_value(lat.p_two_sided), lat.n);
    out += fmt::format("  word delta vs correct   r = {:.2f}, p {}, n = {}\n", wd.r, p_value(wd.p_two_sided), wd.n);
  } else {
    out += fmt::format("  n/a ({})\n", r.correlations_note);
  }

  out += "\nSurvey\n";
  line("Responses", std::to_string(r.survey.responses));
  line("Helpful", fmt::format("{} ({})", r.survey.helpful, format_percent(r.survey.helpful, r.survey.responses)));
  for (const auto& [reason, n] : r.survey.reasons) line(fmt::format("  {}", reason), std::to_string(n));
  return out;
}

std::string transitions_csv(const Report& report) {
  std::string out = "from,to,count,prob\n";
  if (!report.transitions) return out;
  const auto& m = *report.transitions;
  for (auto from : kAllLabels) {
    for (auto to : kAllLabels) {
      out += fmt::format("{},{},{},{}\n", label_name(from), label_name(to),
                         m.counts[label_index(from)][label_index(to)],
                         m.has_row(from) ? fmt::format("{:.6f}", m.prob(from, to)) : "");
    }
  }
  return out;
}

std::string trajectories_csv(const TrajectoryReport& trajectories) {
  std::string out = "path,n,correct\n";
  for (const auto& e : trajectories.entries) out += fmt::format("{},{},{}\n", e.path, e.n_students, e.n_correct_answers);
  return out;
}

std::string turns_hist_csv(const Report& report) {
  std::string out = "turns,instances\n";
  for (const auto& [turns, n] : report.turn_histogram) out += fmt::format("{},{}\n", turns, n);
  return out;
}

void write_report_csvs(const Report& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_file(dir / "transitions.csv", transitions_csv(report));
  for (const auto& t : report.trajectories) {
    write_file(dir / fmt::format("trajectories_{}.csv", label_name(t.start_label)), trajectories_csv(t));
  }
  write_file(dir / "turns_hist.csv", turns_hist_csv(report));
}

}  // namespace jitfb
