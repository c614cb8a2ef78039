#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <random>

#include <fmt/format.h>

#include "fixtures.hpp"
#include "jitfb/analytics.hpp"
#include "oracles.hpp"

using namespace jitfb;

namespace {

std::vector<Session> sessions_from(std::initializer_list<std::string_view> codes) {
  std::vector<Session> out;
  int i = 0;
  for (auto c : codes) out.push_back(test::make_session(fmt::format("s{:04}", i++), c));
  return out;
}

AnalyticsErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const AnalyticsError& e) {
    return e.kind();
  }
  FAIL("expected AnalyticsError");
  return AnalyticsErrorKind::EmptyLog;
}

std::vector<Session> random_sessions(std::mt19937_64& rng, std::size_t n) {
  std::vector<Session> out;
  for (std::size_t i = 0; i < n; ++i) {
    std::string codes;
    const auto turns = rng() % 4 == 0 ? 2 + rng() % 6 : rng() % 2;
    for (std::size_t t = 0; t < turns; ++t) codes += "CDPX"[rng() % 4];
    std::optional<bool> answer;
    if (rng() % 3 != 0) answer = rng() % 2 == 0;
    out.push_back(test::make_session(fmt::format("r{:05}", i), codes, answer));
  }
  return out;
}

// Adjacent pairs with varying word deltas, latencies and outcomes.
std::vector<Session> varied_sessions() {
  auto sessions = sessions_from({"DC", "PX", "DDC", "XC", "PP"});
  sessions[1].turns[1].latency_since_prev_s = 200.0;
  sessions[2].turns[1].latency_since_prev_s.reset();
  sessions[2].turns[2].essay = StrategyEssay::from_text(test::essay_of(80), 2'000'000);
  return sessions;
}

// 1042 instances, 209 conversational, with turn counts spanning 2..14.
std::vector<Session> table_two_cohort() {
  std::vector<Session> out;
  for (int i = 0; i < 1042; ++i) {
    std::string codes = "D";
    if (i < 209) codes += std::string(i == 0 ? 13 : (i == 1 ? 1 : 1 + i % 4), 'C');
    out.push_back(test::make_session(fmt::format("t{:04}", i), codes, true));
  }
  return out;
}

}  // namespace

TEST_SUITE("analytics") {
  TEST_CASE("percent text truncates to two decimals") {
    CHECK(format_percent(209, 1042) == "20.05%");
    CHECK(format_percent(7759, 10000) == "77.59%");
    CHECK(format_percent(1, 3) == "33.33%");
    CHECK(format_percent(2, 3) == "66.66%");
    CHECK(format_percent(1, 1) == "100.00%");
    CHECK(format_percent(0, 5) == "0.00%");
    CHECK(format_percent(1, 10000) == "0.01%");
    CHECK(format_percent(0, 0) == "n/a");
  }

  TEST_CASE("turn statistics on a hand-built set") {
    const auto sessions = sessions_from({"DC", "PC", "XX", std::string(14, 'C'), "C", ""});
    const auto c = conversation_stats(sessions);
    CHECK(c.total_instances == 5);
    CHECK(c.conversational_instances == 4);
    CHECK(c.conversational_pct == doctest::Approx(80.0));
    CHECK(*c.mean_turns == doctest::Approx(5.0));
    CHECK(*c.min_turns == 2);
    CHECK(*c.max_turns == 14);
    CHECK(*c.skewness_g1 == doctest::Approx(1.1547005).epsilon(1e-7));
    CHECK(c.first_turn_correct == 1);
    CHECK(c.last_turn_correct == 3);
    CHECK(*c.last_turn_correct_pct == doctest::Approx(75.0));
  }

  TEST_CASE("equal turn counts leave skewness undefined") {
    const auto c = conversation_stats(sessions_from({"DC", "PC", "C"}));
    CHECK(*c.std_turns == 0.0);
    CHECK_FALSE(c.skewness_g1.has_value());
    const auto none = conversation_stats(sessions_from({"C", "D"}));
    CHECK(none.conversational_instances == 0);
    CHECK_FALSE(none.mean_turns.has_value());
  }

  TEST_CASE("empty inputs are typed errors") {
    CHECK(kind_of([] { conversation_stats(sessions_from({"", ""})); }) == AnalyticsErrorKind::EmptyLog);
    CHECK(kind_of([] { build_report(std::span<const Session>{}); }) == AnalyticsErrorKind::EmptyLog);
    CHECK(kind_of([] { build_report(std::span<const Event>{}); }) == AnalyticsErrorKind::EmptyLog);
    CHECK(kind_of([] { transition_matrix(sessions_from({"C", "D"})); }) == AnalyticsErrorKind::NoTransitions);
    CHECK(kind_of([] { activity_correlations(sessions_from({"DC", "PC"})); }) == AnalyticsErrorKind::TooFewPairs);
  }

  TEST_CASE("transition rows are count-and-normalise") {
    const auto m = transition_matrix(sessions_from({"DC", "DC", "DD"}));
    const auto d = label_index(ErrorLabel::Direction);
    CHECK(m.row_counts[d] == 3);
    CHECK(m.prob(ErrorLabel::Direction, ErrorLabel::Correct) == doctest::Approx(2.0 / 3.0));
    CHECK(m.prob(ErrorLabel::Direction, ErrorLabel::Direction) == doctest::Approx(1.0 / 3.0));
    CHECK_FALSE(m.has_row(ErrorLabel::Correct));
    CHECK(m.total() == 3);
  }

  TEST_CASE("transition matrix matches the oracle and rows sum to one") {
    std::mt19937_64 rng(8);
    for (int round = 0; round < 50; ++round) {
      const auto sessions = random_sessions(rng, 300);
      const auto want = oracle::transitions(sessions);
      if (want.counts.empty()) continue;
      const auto m = transition_matrix(sessions);
      for (auto from : kAllLabels) {
        double row = 0;
        for (auto to : kAllLabels) {
          const auto p = want.prob(from, to);
          CHECK(m.has_row(from) == p.has_value());
          if (p) CHECK(m.prob(from, to) == doctest::Approx(*p).epsilon(1e-12));
          row += m.prob(from, to);
        }
        if (m.has_row(from)) CHECK(row == doctest::Approx(1.0).epsilon(1e-12));
      }
    }
  }

  TEST_CASE("conversation statistics match the oracle") {
    std::mt19937_64 rng(9);
    for (int round = 0; round < 50; ++round) {
      const auto sessions = random_sessions(rng, 400);
      const auto want = oracle::turn_stats(sessions);
      const auto got = conversation_stats(sessions);
      CHECK(got.total_instances == want.instances);
      CHECK(got.conversational_instances == want.conversational);
      if (want.conversational > 0) {
        CHECK(std::abs(*got.mean_turns - want.mean) < 1e-9);
        CHECK(std::abs(*got.std_turns - want.std) < 1e-9);
        CHECK(*got.min_turns == want.min);
        CHECK(*got.max_turns == want.max);
        if (got.skewness_g1) CHECK(std::abs(*got.skewness_g1 - want.skew) < 1e-9);
      }
    }
  }

  TEST_CASE("trajectories keep repeated labels distinct") {
    auto sessions = sessions_from({"DDC", "DC", "DC", "PC"});
    sessions[1].answer_correct = true;
    const auto t = extract_trajectories(sessions, ErrorLabel::Direction);
    REQUIRE(t.entries.size() == 2);
    CHECK(t.entries[0] == TrajectoryEntry{"D-C", 2, 1});
    CHECK(t.entries[1] == TrajectoryEntry{"D-D-C", 1, 0});
    const auto collapsed = extract_trajectories(sessions, ErrorLabel::Direction, true);
    REQUIRE(collapsed.entries.size() == 1);
    CHECK(collapsed.entries[0] == TrajectoryEntry{"D-C", 3, 1});
    CHECK(trajectory_path(sessions[0]) == "D-D-C");
    CHECK(trajectory_path(sessions[0], true) == "D-C");
  }

  TEST_CASE("a D-C trace of 17 correct out of 19") {
    std::vector<Session> sessions;
    for (int i = 0; i < 19; ++i) sessions.push_back(test::make_session(fmt::format("dc{:02}", i), "DC", i < 17));
    for (int i = 0; i < 4; ++i) sessions.push_back(test::make_session(fmt::format("dx{:02}", i), "DX", false));
    const auto report = build_report(sessions);
    const auto& d = report.trajectories[label_index(ErrorLabel::Direction)];
    REQUIRE_FALSE(d.entries.empty());
    CHECK(d.entries.front() == TrajectoryEntry{"D-C", 19, 17});
    CHECK(render_report_text(report).find("D-C: 17/19") != std::string::npos);
  }

  TEST_CASE("trajectory ordering: count descending, then path") {
    const auto t = extract_trajectories(sessions_from({"PX", "PC", "PD", "PC", "PX"}), ErrorLabel::Position);
    REQUIRE(t.entries.size() == 3);
    CHECK(t.entries[0].path == "P-C");
    CHECK(t.entries[1].path == "P-X");
    CHECK(t.entries[2].path == "P-D");
  }

  TEST_CASE("activity correlations follow the oracle") {
    const auto sessions = varied_sessions();
    const auto c = activity_correlations(sessions);
    std::vector<double> lat, laty, wd, wdy;
    for (const auto& s : sessions) {
      for (std::size_t i = 1; i < s.turns.size(); ++i) {
        const double y = s.turns[i].response.classification == ErrorLabel::Correct;
        wd.push_back(static_cast<double>(s.turns[i].essay.word_count) - static_cast<double>(s.turns[i - 1].essay.word_count));
        wdy.push_back(y);
        if (s.turns[i].latency_since_prev_s) {
          lat.push_back(*s.turns[i].latency_since_prev_s);
          laty.push_back(y);
        }
      }
    }
    CHECK(c.worddelta_vs_correct.n == 6);
    CHECK(c.latency_vs_correct.n == 5);
    CHECK(std::abs(c.latency_vs_correct.r - oracle::pearson(lat, laty).r) < 1e-9);
    CHECK(std::abs(c.latency_vs_correct.p_two_sided - oracle::pearson(lat, laty).p) < 1e-9);
    CHECK(std::abs(c.worddelta_vs_correct.r - oracle::pearson(wd, wdy).r) < 1e-9);
  }

  TEST_CASE("survey tally groups by cluster when present") {
    auto sessions = sessions_from({"C", "D", "P", "X"});
    sessions[0].survey = SurveyResponse{true, {"clear", "short"}, std::nullopt, std::nullopt};
    sessions[1].survey = SurveyResponse{true, {"clear"}, std::nullopt, 3};
    sessions[2].survey = SurveyResponse{false, {}, std::string("meh"), std::nullopt};
    const auto t = survey_tally(sessions);
    CHECK(t.responses == 3);
    CHECK(t.helpful == 2);
    CHECK(t.reasons == std::map<std::string, std::uint64_t>{{"clear", 1}, {"cluster 3", 1}, {"short", 1}});
  }

  TEST_CASE("table-style rendering of a 1042-instance cohort") {
    const auto report = build_report(table_two_cohort());
    CHECK(report.conversation.total_instances == 1042);
    CHECK(report.conversation.conversational_instances == 209);
    CHECK(*report.conversation.min_turns == 2);
    CHECK(*report.conversation.max_turns == 14);
    const auto text = render_report_text(report);
    CHECK(text.find("209 (20.05%)") != std::string::npos);
    CHECK(text.find("2 / 14") != std::string::npos);
    CHECK(text.find("not distinct students") != std::string::npos);
    const auto j = report_to_json(report);
    CHECK(j["conversation"]["conversational_pct_text"] == "20.05%");
    CHECK(j["conversation"]["min_turns"] == 2);
    CHECK(j["conversation"]["max_turns"] == 14);
  }

  TEST_CASE("survey helpful share renders 77.59%") {
    std::vector<Session> sessions;
    for (int i = 0; i < 10000; ++i) {
      auto s = test::make_session(fmt::format("v{:05}", i), "C", true);
      s.survey = SurveyResponse{i < 7759, {}, std::nullopt, std::nullopt};
      sessions.push_back(std::move(s));
    }
    const auto report = build_report(sessions);
    CHECK(report.survey.helpful == 7759);
    CHECK(render_report_text(report).find("7759 (77.59%)") != std::string::npos);
    CHECK(report_to_json(report)["survey"]["helpful_pct_text"] == "77.59%");
    CHECK_FALSE(report.transitions.has_value());
    CHECK_FALSE(report.correlations.has_value());
    CHECK(report_to_json(report)["correlations_note"].get<std::string>().find("TooFewPairs") == 0);
  }

  TEST_CASE("reports do not depend on session order and replay agrees") {
    std::mt19937_64 rng(12);
    auto sessions = random_sessions(rng, 500);
    const auto a = render_report_json(build_report(sessions));
    std::shuffle(sessions.begin(), sessions.end(), rng);
    CHECK(render_report_json(build_report(sessions)) == a);
    CHECK(render_report_json(build_report(test::events_for(sessions))) == a);
    CHECK(render_report_text(build_report(sessions)) == render_report_text(build_report(sessions)));
  }

  TEST_CASE("CSV exports") {
    auto sessions = sessions_from({"DC", "DC", "DD", "C", "PXC"});
    sessions[0].answer_correct = true;
    const auto report = build_report(sessions);
    const auto tcsv = transitions_csv(report);
    CHECK(tcsv.starts_with("from,to,count,prob\n"));
    CHECK(tcsv.find("direction,correct,2,0.666667\n") != std::string::npos);
    CHECK(tcsv.find("correct,correct,0,\n") != std::string::npos);
    CHECK(std::count(tcsv.begin(), tcsv.end(), '\n') == 17);
    CHECK(trajectories_csv(report.trajectories[label_index(ErrorLabel::Direction)]) ==
          "path,n,correct\nD-C,2,1\nD-D,1,0\n");
    CHECK(turns_hist_csv(report) == "turns,instances\n1,1\n2,3\n3,1\n");

    const auto dir = std::filesystem::temp_directory_path() / "jitfb_tests" / "csv";
    std::filesystem::remove_all(dir);
    write_report_csvs(report, dir);
    CHECK(test::read_file(dir / "transitions.csv") == tcsv);
    CHECK(test::read_file(dir / "turns_hist.csv") == turns_hist_csv(report));
    for (auto label : kAllLabels) {
      CHECK(std::filesystem::exists(dir / fmt::format("trajectories_{}.csv", label_name(label))));
    }
  }

  TEST_CASE("JSON report shape") {
    const auto report = build_report(varied_sessions());
    const auto j = report_to_json(report);
    CHECK(j["transitions"]["labels"][3] == "position-direction");
    CHECK(j["transitions"]["probs"][0].is_null());
    CHECK(j["trajectories"].contains("direction"));
    CHECK(j["correlations"]["worddelta_vs_correct"]["n"] == 6);
    CHECK(j["turn_histogram"][0]["turns"] == 2);
    CHECK_FALSE(j.contains("correlations_note"));
    CHECK(render_report_json(report).back() == '\n');
  }
}
