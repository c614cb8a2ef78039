#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <set>
#include <thread>

#include "fixtures.hpp"
#include "jitfb/backends.hpp"
#include "jitfb/hash.hpp"
#include "jitfb/session_service.hpp"

using namespace jitfb;

namespace {

constexpr TimestampMs kT0 = 1'767'225'600'000;

GatewayConfig open_gateway() {
  GatewayConfig c;
  c.rate_limit_per_s = 1e6;
  c.burst = 1000000;
  c.retry_limit = 0;
  c.retry_backoff_ms = {};
  c.queue_capacity = 1024;
  c.max_in_flight = 64;
  return c;
}

struct Harness {
  std::shared_ptr<ScriptedBackend> backend = std::make_shared<ScriptedBackend>();
  EventLog log;
  std::unique_ptr<SessionService> service;
  std::atomic<TimestampMs> clock{kT0};

  explicit Harness(ErrorLabel reply = ErrorLabel::Direction) {
    backend->on_contains("Pedagogical Specialist",
                         render_posthoc_response({"fine", KnowledgeLevel::Novice, "nov text", "adv text"}));
    backend->otherwise(test::jit_reply(reply));
    service = make();
  }

  std::unique_ptr<SessionService> make() {
    ServiceOptions options;
    options.clock = [this] { return clock.load(); };
    return std::make_unique<SessionService>(test::stacked_blocks_catalog(), test::sample_bank(),
                                            std::make_shared<Gateway>(backend, open_gateway()), log, options);
  }
};

ServiceErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const ServiceError& e) {
    return e.kind();
  }
  FAIL("expected ServiceError");
  return ServiceErrorKind::BadRequest;
}

}  // namespace

TEST_SUITE("session-service") {
  TEST_CASE("error kinds map to HTTP statuses") {
    CHECK(http_status(ServiceErrorKind::UnknownSession) == 404);
    CHECK(http_status(ServiceErrorKind::UnknownQuiz) == 404);
    CHECK(http_status(ServiceErrorKind::NotGenerated) == 404);
    CHECK(http_status(ServiceErrorKind::SessionClosed) == 409);
    CHECK(http_status(ServiceErrorKind::DuplicateChoice) == 409);
    CHECK(http_status(ServiceErrorKind::UnknownOption) == 422);
    CHECK(http_status(ServiceErrorKind::BadRequest) == 400);
    CHECK(to_string(ServiceErrorKind::NotAnswered) == "NotAnswered");
  }

  TEST_CASE("quiz catalog loading") {
    const auto catalog = load_quiz_catalog(test::data_dir() / "quizzes.json");
    REQUIRE(catalog.count("stacked-blocks") == 1);
    CHECK(catalog.at("stacked-blocks").correct_option == "A");
    const auto dir = std::filesystem::temp_directory_path() / "jitfb_tests";
    std::filesystem::create_directories(dir);
    const nlohmann::json q = test::stacked_blocks_quiz();
    {
      std::ofstream(dir / "single.json") << q.dump();
      std::ofstream(dir / "dup.json") << nlohmann::json::array({q, q}).dump();
      std::ofstream(dir / "broken.json") << "[{";
    }
    CHECK(load_quiz_catalog(dir / "single.json").size() == 1);
    CHECK_THROWS_AS(load_quiz_catalog(dir / "dup.json"), Error);
    CHECK_THROWS_AS(load_quiz_catalog(dir / "broken.json"), Error);
    CHECK_THROWS_AS(load_quiz_catalog(dir / "missing.json"), Error);
  }

  TEST_CASE("construction rejects a bank that is too small") {
    EventLog log;
    auto bank = test::sample_bank();
    bank.pop_back();
    auto gw = std::make_shared<Gateway>(std::make_shared<ScriptedBackend>(), open_gateway());
    CHECK_THROWS_AS(SessionService(test::stacked_blocks_catalog(), bank, gw, log), InsufficientBankError);
    ServiceOptions zero;
    zero.strategy = ClassificationStrategy::zero_shot(true);
    CHECK_NOTHROW(SessionService(test::stacked_blocks_catalog(), bank, gw, log, zero));
  }

  TEST_CASE("sessions get distinct opaque ids") {
    Harness h;
    std::set<std::string> ids;
    for (int i = 0; i < 200; ++i) ids.insert(h.service->create_session("student", "stacked-blocks"));
    CHECK(ids.size() == 200);
    for (const auto& id : ids) {
      CHECK(id.size() == 32);
      CHECK(id.find("student") == std::string::npos);
    }
    CHECK(kind_of([&] { h.service->create_session("student", "no-such-quiz"); }) == ServiceErrorKind::UnknownQuiz);
  }

  TEST_CASE("a stuck id generator is reported instead of looping") {
    EventLog log;
    ServiceOptions options;
    options.session_ids = [](std::string_view) { return std::string("same"); };
    SessionService svc(test::stacked_blocks_catalog(), test::sample_bank(),
                       std::make_shared<Gateway>(std::make_shared<ScriptedBackend>(), open_gateway()), log, options);
    CHECK(svc.create_session("a", "stacked-blocks") == "same");
    CHECK_THROWS_AS(svc.create_session("b", "stacked-blocks"), Error);
  }

  TEST_CASE("essay turns record classification, latency and the log") {
    Harness h;
    const auto id = h.service->create_session("stu", "stacked-blocks", kT0);
    const auto first = h.service->submit_essay(id, test::essay_of(55), kT0 + 1'000);
    CHECK(first.turn_index == 1);
    CHECK_FALSE(first.degraded);
    const auto second = h.service->submit_essay(id, test::essay_of(60), kT0 + 91'000);
    CHECK(second.turn_index == 2);
    const auto s = *h.service->session(id);
    REQUIRE(s.turns.size() == 2);
    CHECK_FALSE(s.turns[0].latency_since_prev_s.has_value());
    CHECK(*s.turns[1].latency_since_prev_s == doctest::Approx(90.0));
    CHECK(s.turns[1].response.classification == ErrorLabel::Direction);
    CHECK(h.log.size() == 3);
    CHECK(replay(h.log.snapshot()).sessions.front() == s);
  }

  TEST_CASE("clock going backwards clamps latency at zero") {
    Harness h;
    const auto id = h.service->create_session("stu", "stacked-blocks");
    h.service->submit_essay(id, test::essay_of(55), kT0 + 5'000);
    h.service->submit_essay(id, test::essay_of(55), kT0 + 1'000);
    CHECK(*h.service->session(id)->turns[1].latency_since_prev_s == 0.0);
  }

  TEST_CASE("invalid essays never reach the model") {
    Harness h;
    const auto id = h.service->create_session("stu", "stacked-blocks");
    CHECK_THROWS_AS(h.service->submit_essay(id, test::essay_of(40)), EssayValidationError);
    CHECK_THROWS_AS(h.service->submit_essay(id, test::essay_of(60) + " F = ma"), EssayValidationError);
    CHECK(h.backend->calls() == 0);
    CHECK(h.service->session(id)->turns.empty());
    CHECK(kind_of([&] { h.service->submit_essay("nope", test::essay_of(60)); }) == ServiceErrorKind::UnknownSession);
  }

  TEST_CASE("answers, surveys and closure") {
    Harness h;
    const auto id = h.service->create_session("stu", "stacked-blocks");
    h.service->submit_essay(id, test::essay_of(55));
    CHECK(kind_of([&] { h.service->record_survey(id, {}); }) == ServiceErrorKind::NotAnswered);
    CHECK(kind_of([&] { h.service->record_answer(id, "E"); }) == ServiceErrorKind::UnknownOption);
    CHECK_FALSE(h.service->record_answer(id, "B"));
    CHECK(kind_of([&] { h.service->record_answer(id, "A"); }) == ServiceErrorKind::AlreadyAnswered);
    CHECK(kind_of([&] { h.service->submit_essay(id, test::essay_of(55)); }) == ServiceErrorKind::SessionClosed);
    h.service->record_survey(id, {true, {"clear"}, std::nullopt, std::nullopt});
    CHECK(kind_of([&] { h.service->record_survey(id, {}); }) == ServiceErrorKind::DuplicateSurvey);
    const auto s = *h.service->session(id);
    CHECK(s.final_answer == "B");
    CHECK(s.answer_correct == false);
    CHECK(s.survey->helpful);
    const auto quizzes = test::stacked_blocks_catalog();
    CHECK(replay(h.log.snapshot(), &quizzes).issues.empty());
    const auto other = h.service->create_session("stu2", "stacked-blocks");
    CHECK(h.service->record_answer(other, "A"));
  }

  TEST_CASE("a repeated client key returns the recorded turn") {
    Harness h;
    const auto id = h.service->create_session("stu", "stacked-blocks");
    const auto a = h.service->submit_essay(id, test::essay_of(55), std::nullopt, "key-1");
    const auto again = h.service->submit_essay(id, test::essay_of(70), std::nullopt, "key-1");
    CHECK(again.turn_index == a.turn_index);
    CHECK(again.feedback == a.feedback);
    CHECK(h.backend->calls() == 1);
    CHECK(h.service->submit_essay(id, test::essay_of(55), std::nullopt, "key-2").turn_index == 2);
  }

  TEST_CASE("degraded model path returns fallback feedback") {
    Harness h;
    h.backend->set_faults({1.0, FaultScope::PerAttempt, 0, std::chrono::milliseconds(0)});
    const auto id = h.service->create_session("stu", "stacked-blocks");
    const auto r = h.service->submit_essay(id, test::essay_of(55));
    CHECK(r.degraded);
    CHECK(r.feedback == fallback_feedback().feedback);
    CHECK(h.service->session(id)->turns.at(0).response.degraded);
  }

  TEST_CASE("concurrent submissions on one session get gap-free turns") {
    Harness h;
    const auto id = h.service->create_session("stu", "stacked-blocks");
    std::vector<std::thread> threads;
    for (int t = 0; t < 16; ++t) {
      threads.emplace_back([&] {
        for (int i = 0; i < 5; ++i) h.service->submit_essay(id, test::essay_of(55));
      });
    }
    for (auto& t : threads) t.join();
    const auto s = *h.service->session(id);
    REQUIRE(s.turns.size() == 80);
    for (std::size_t i = 0; i < s.turns.size(); ++i) CHECK(s.turns[i].turn_index == static_cast<int>(i) + 1);
    CHECK(replay(h.log.snapshot()).issues.empty());
  }

  TEST_CASE("concurrent sessions stay independent") {
    Harness h;
    std::vector<std::string> ids;
    for (int i = 0; i < 12; ++i) ids.push_back(h.service->create_session("s" + std::to_string(i), "stacked-blocks"));
    std::vector<std::thread> threads;
    for (int i = 0; i < 12; ++i) {
      threads.emplace_back([&, i] {
        for (int k = 0; k <= i % 4; ++k) h.service->submit_essay(ids[i], test::essay_of(55));
        h.service->record_answer(ids[i], "A");
      });
    }
    for (auto& t : threads) t.join();
    const auto all = h.service->sessions();
    REQUIRE(all.size() == 12);
    for (int i = 0; i < 12; ++i) {
      CHECK(all[i].session_id == ids[i]);
      CHECK(all[i].turns.size() == static_cast<std::size_t>(i % 4 + 1));
    }
    CHECK(replay(h.log.snapshot()).issues.empty());
  }

  TEST_CASE("a new service over the same log restores all state") {
    Harness h;
    const auto id = h.service->create_session("stu", "stacked-blocks");
    h.service->submit_essay(id, test::essay_of(55), std::nullopt, "ck");
    h.service->record_answer(id, "A");
    h.service->register_posthoc("hw1", "stu", {"e", KnowledgeLevel::Advanced, "n", "a"});
    h.service->record_preference("hw1", "stu", Choice::B, {"clearer"});
    const auto before = h.service->sessions();

    auto restored = h.make();
    CHECK(restored->sessions() == before);
    CHECK(kind_of([&] { restored->record_answer(id, "B"); }) == ServiceErrorKind::AlreadyAnswered);
    CHECK(restored->get_preference_pair("hw1", "stu").chosen == Choice::B);
    CHECK(kind_of([&] { restored->record_preference("hw1", "stu", Choice::A, {}); }) ==
          ServiceErrorKind::DuplicateChoice);
    const auto calls = h.backend->calls();
    restored->create_session("other", "stacked-blocks");
    CHECK(h.backend->calls() == calls);
  }

  TEST_CASE("restored client keys still deduplicate") {
    Harness h;
    const auto id = h.service->create_session("stu", "stacked-blocks");
    h.service->submit_essay(id, test::essay_of(55), std::nullopt, "ck");
    auto restored = h.make();
    const auto calls = h.backend->calls();
    CHECK(restored->submit_essay(id, test::essay_of(55), std::nullopt, "ck").turn_index == 1);
    CHECK(h.backend->calls() == calls);
  }

  TEST_CASE("preference pairs: registration, ordering, choice") {
    Harness h;
    CHECK(kind_of([&] { h.service->get_preference_pair("hw", "stu"); }) == ServiceErrorKind::NotGenerated);
    CHECK(kind_of([&] { h.service->register_posthoc("hw", "stu", {"e", KnowledgeLevel::Novice, "", "a"}); }) ==
          ServiceErrorKind::BadRequest);
    const PosthocFeedback fb{"e", KnowledgeLevel::Novice, "novice words", "advanced words"};
    h.service->register_posthoc("hw", "stu", fb);
    const auto logged = h.log.size();
    h.service->register_posthoc("hw", "stu", fb);
    CHECK(h.log.size() == logged);

    const auto pair = h.service->get_preference_pair("hw", "stu");
    CHECK(pair.order_seed == preference_seed("hw", "stu"));
    CHECK(pair.novice_first() == (pair.order_seed % 2 == 0));
    CHECK((pair.novice_first() ? pair.variant_a : pair.variant_b) == "novice words");
    CHECK(h.service->get_preference_pair("hw", "stu") == pair);
    CHECK_FALSE(pair.chosen.has_value());

    h.service->record_preference("hw", "stu", Choice::A, {"level"});
    const auto prefs = replay(h.log.snapshot()).preferences;
    REQUIRE(prefs.size() == 1);
    CHECK(prefs[0].novice_chosen == pair.novice_first());
    CHECK(prefs[0].order_seed == pair.order_seed);
    CHECK(kind_of([&] { h.service->register_posthoc("hw", "stu", {"x", KnowledgeLevel::Novice, "n2", "a2"}); }) ==
          ServiceErrorKind::DuplicateChoice);
  }

  TEST_CASE("presentation order is balanced across students") {
    std::size_t novice_first = 0;
    constexpr std::size_t n = 10000;
    for (std::size_t i = 0; i < n; ++i) {
      novice_first += preference_seed("assignment-1", "student-" + std::to_string(i)) % 2 == 0;
    }
    const double frac = static_cast<double>(novice_first) / n;
    CHECK(frac >= 0.48);
    CHECK(frac <= 0.52);
  }

  TEST_CASE("post-hoc generation through the gateway") {
    Harness h;
    const auto fb = h.service->generate_posthoc("hw", "stu", "stacked-blocks", test::essay_of(60), "rubric text");
    CHECK(fb.inferred_level == KnowledgeLevel::Novice);
    CHECK(fb.novice_feedback == "nov text");
    CHECK(h.service->get_preference_pair("hw", "stu").assignment_id == "hw");
    CHECK_THROWS_AS(h.service->generate_posthoc("hw", "stu", "stacked-blocks", test::essay_of(60), ""),
                    EmptyRubricError);
    h.backend->set_faults({1.0, FaultScope::PerAttempt, 0, std::chrono::milliseconds(0)});
    CHECK_THROWS_AS(h.service->generate_posthoc("hw", "other", "stacked-blocks", test::essay_of(60), "r"),
                    PosthocUnavailableError);
    CHECK(kind_of([&] { h.service->get_preference_pair("hw", "other"); }) == ServiceErrorKind::NotGenerated);
  }
}
