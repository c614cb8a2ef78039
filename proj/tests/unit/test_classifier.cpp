#include <doctest.h>

#include <atomic>
#include <condition_variable>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <thread>

#include "fixtures.hpp"
#include "jitfb/backends.hpp"
#include "jitfb/classifier.hpp"
#include "jitfb/prompt.hpp"
#include "oracles.hpp"

using namespace jitfb;

namespace {

GatewayConfig quick_gateway() {
  GatewayConfig c;
  c.rate_limit_per_s = 1e6;
  c.burst = 1000000;
  c.retry_limit = 1;
  c.retry_backoff_ms = {0};
  return c;
}

ValidatedEssay essay() { return validate_essay(test::essay_of(55)); }

// Replies with the gold label of whatever dataset essay the prompt carries.
std::shared_ptr<ScriptedBackend> echo_gold_backend(const LabeledDataset& ds) {
  std::map<std::string, ErrorLabel, std::less<>> gold;
  for (const auto& item : ds.items) gold.emplace(item.essay_text, item.gold_label);
  auto backend = std::make_shared<ScriptedBackend>("echo-gold");
  backend->on_prompt([gold](std::string_view prompt) -> std::optional<std::string> {
    const auto text = extract_student_essay(prompt);
    if (!text) return std::nullopt;
    const auto it = gold.find(*text);
    if (it == gold.end()) return std::nullopt;
    return test::jit_reply(it->second);
  });
  return backend;
}

class HoldBackend : public CompletionBackend {
 public:
  std::string id() const override { return "hold"; }
  std::string complete(std::string_view, const CompletionParams&) override {
    std::unique_lock lock(m);
    entered = true;
    cv.notify_all();
    cv.wait(lock, [&] { return released; });
    return test::jit_reply(ErrorLabel::Correct);
  }
  std::mutex m;
  std::condition_variable cv;
  bool entered = false;
  bool released = false;
};

}  // namespace

TEST_SUITE("classifier") {
  TEST_CASE("strategy names and validation") {
    CHECK(ClassificationStrategy::zero_shot(false).display_name() == "Zero-shot LLM");
    CHECK(ClassificationStrategy::zero_shot(true).display_name() == "Zero-shot LLM w/ Secondary");
    CHECK(ClassificationStrategy::few_shot(3, false).display_name() == "Few-shot LLM");
    CHECK(ClassificationStrategy::few_shot(3, true).display_name() == "Few-shot LLM w/ Secondary");
    ClassificationStrategy bad{StrategyMode::ZeroShot, 3, true};
    CHECK_THROWS_AS(bad.validate(), Error);
  }

  TEST_CASE("classify returns the parsed model reply") {
    auto backend = std::make_shared<ScriptedBackend>();
    backend->otherwise(test::jit_reply(ErrorLabel::Direction, 5, "Which way does it point?"));
    Gateway gw(backend, quick_gateway());
    const auto r = classify(essay(), test::stacked_blocks_quiz(), test::sample_bank(),
                            ClassificationStrategy::few_shot(3, true), gw);
    CHECK(r.classification == ErrorLabel::Direction);
    CHECK(r.confidence == 5);
    CHECK(r.feedback == "Which way does it point?");
    CHECK_FALSE(r.degraded);
    CHECK(backend->calls() == 1);
  }

  TEST_CASE("an unparseable reply is re-asked once") {
    auto backend = std::make_shared<ScriptedBackend>();
    std::atomic<int> asks{0};
    backend->on_prompt([&](std::string_view) -> std::optional<std::string> {
      return ++asks == 1 ? std::string("I think it is direction.") : test::jit_reply(ErrorLabel::Position);
    });
    Gateway gw(backend, quick_gateway());
    const auto r = classify(essay(), test::stacked_blocks_quiz(), test::sample_bank(),
                            ClassificationStrategy::zero_shot(true), gw);
    CHECK(r.classification == ErrorLabel::Position);
    CHECK_FALSE(r.degraded);
    CHECK(asks.load() == 2);
  }

  TEST_CASE("two unparseable replies fall back") {
    auto backend = std::make_shared<ScriptedBackend>();
    backend->otherwise("{\"classification\": \"unsure\"}");
    Gateway gw(backend, quick_gateway());
    const auto r = classify(essay(), test::stacked_blocks_quiz(), test::sample_bank(),
                            ClassificationStrategy::zero_shot(true), gw);
    CHECK(r == fallback_feedback());
    CHECK(r.degraded);
    CHECK(backend->calls() == 2);
  }

  TEST_CASE("a degraded gateway falls back without re-asking") {
    auto backend = std::make_shared<ScriptedBackend>();
    backend->fail_on_contains("");
    Gateway gw(backend, quick_gateway());
    const auto r = classify(essay(), test::stacked_blocks_quiz(), test::sample_bank(),
                            ClassificationStrategy::zero_shot(true), gw);
    CHECK(r.degraded);
    CHECK(backend->calls() == 2);
    CHECK(gw.stats().degraded == 1);
  }

  TEST_CASE("fallback feedback reveals no label or option") {
    const auto fb = fallback_feedback();
    CHECK(fb.degraded);
    CHECK(word_count(fb.feedback) <= kFeedbackWarnWords);
    for (auto label : kAllLabels) CHECK(fb.feedback.find(label_name(label)) == std::string::npos);
    CHECK(fb.feedback.find(" A ") == std::string::npos);
  }

  TEST_CASE("Busy on first dispatch raises BusyError") {
    auto backend = std::make_shared<HoldBackend>();
    auto c = quick_gateway();
    c.queue_capacity = 1;
    Gateway gw(backend, c);
    std::thread holder([&] {
      classify(essay(), test::stacked_blocks_quiz(), test::sample_bank(), ClassificationStrategy::zero_shot(true),
               gw);
    });
    {
      std::unique_lock lock(backend->m);
      backend->cv.wait(lock, [&] { return backend->entered; });
    }
    CHECK_THROWS_AS(classify(essay(), test::stacked_blocks_quiz(), test::sample_bank(),
                             ClassificationStrategy::zero_shot(true), gw),
                    BusyError);
    {
      std::lock_guard lock(backend->m);
      backend->released = true;
    }
    backend->cv.notify_all();
    holder.join();
  }

  TEST_CASE("accuracy and macro F1 agree with the oracle on random confusions") {
    std::mt19937_64 rng(11);
    for (int round = 0; round < 500; ++round) {
      const auto n = 1 + rng() % 60;
      oracle::Pairs pairs;
      ConfusionMatrix cm;
      for (std::size_t i = 0; i < n; ++i) {
        const auto g = kAllLabels[rng() % 4];
        const auto p = rng() % 3 == 0 ? g : kAllLabels[rng() % 4];
        pairs.emplace_back(g, p);
        cm.add(g, p);
      }
      CHECK(accuracy(cm) == doctest::Approx(oracle::accuracy(pairs)).epsilon(1e-12));
      CHECK(macro_f1(cm) == doctest::Approx(oracle::macro_f1(pairs)).epsilon(1e-12));
      CHECK(cm.total() == n);
    }
    CHECK(accuracy(ConfusionMatrix{}) == 0.0);
    CHECK(macro_f1(ConfusionMatrix{}) == 0.0);
  }

  TEST_CASE("balanced dataset with an all-correct predictor: 0.25 and 0.1") {
    ConfusionMatrix cm;
    for (auto g : kAllLabels) {
      for (int i = 0; i < 10; ++i) cm.add(g, ErrorLabel::Correct);
    }
    CHECK(accuracy(cm) == doctest::Approx(0.25));
    CHECK(macro_f1(cm) == doctest::Approx(0.1));
  }

  TEST_CASE("evaluate: all-correct model and echo-gold model") {
    const auto ds = load_dataset_jsonl(test::data_dir() / "dataset.jsonl");
    REQUIRE(ds.items.size() == 40);
    auto all_correct = std::make_shared<ScriptedBackend>();
    all_correct->otherwise(test::jit_reply(ErrorLabel::Correct));
    Gateway gw(all_correct, quick_gateway());
    const auto r = evaluate(ds, test::stacked_blocks_quiz(), ClassificationStrategy::few_shot(3, true),
                            test::sample_bank(), gw, 3);
    CHECK(r.trials == 3);
    CHECK(r.accuracy_mean == doctest::Approx(0.25));
    CHECK(r.macro_f1_mean == doctest::Approx(0.1));
    CHECK(r.accuracy_halfrange == 0.0);
    CHECK(r.degraded_responses == 0);
    CHECK(r.method == "Few-shot LLM w/ Secondary");

    Gateway echo(echo_gold_backend(ds), quick_gateway());
    const auto perfect = evaluate(ds, test::stacked_blocks_quiz(), ClassificationStrategy::zero_shot(false),
                                  test::sample_bank(), echo, 2);
    CHECK(perfect.accuracy_mean == doctest::Approx(1.0));
    CHECK(perfect.macro_f1_mean == doctest::Approx(1.0));
  }

  TEST_CASE("evaluate rejects a short bank and an empty dataset") {
    const auto ds = load_dataset_jsonl(test::data_dir() / "dataset.jsonl");
    auto backend = std::make_shared<ScriptedBackend>();
    backend->otherwise(test::jit_reply(ErrorLabel::Correct));
    Gateway gw(backend, quick_gateway());
    CHECK_THROWS_AS(evaluate(ds, test::stacked_blocks_quiz(), ClassificationStrategy::few_shot(4, true),
                             test::sample_bank(), gw, 1),
                    InsufficientBankError);
    CHECK_THROWS_AS(evaluate(LabeledDataset{}, test::stacked_blocks_quiz(), ClassificationStrategy::zero_shot(true),
                             test::sample_bank(), gw, 1),
                    Error);
    CHECK_THROWS_AS(evaluate(ds, test::stacked_blocks_quiz(), ClassificationStrategy::zero_shot(true),
                             test::sample_bank(), gw, 0),
                    Error);
  }

  TEST_CASE("trial summary: mean and half-range") {
    ConfusionMatrix a;
    ConfusionMatrix b;
    for (int i = 0; i < 4; ++i) a.add(ErrorLabel::Correct, ErrorLabel::Correct);
    b.add(ErrorLabel::Correct, ErrorLabel::Correct);
    b.add(ErrorLabel::Correct, ErrorLabel::Correct);
    b.add(ErrorLabel::Correct, ErrorLabel::Direction);
    b.add(ErrorLabel::Correct, ErrorLabel::Direction);
    const auto r = summarize_trials("m", {a, b});
    CHECK(r.accuracy_mean == doctest::Approx(0.75));
    CHECK(r.accuracy_halfrange == doctest::Approx(0.25));
    const auto table = render_eval_table(std::vector<EvalReport>{r});
    CHECK(table.find("75.00 ±0.250") != std::string::npos);
    CHECK(table.starts_with("Method"));
    const auto j = to_json(r);
    CHECK(j["per_trial_confusions"].size() == 2);
    CHECK(j["per_trial_confusions"][1][0][1] == 2);
  }

  TEST_CASE("lexical baseline") {
    CHECK(lexical_tokens("Hello, World!  it's") == std::vector<std::string>{"hello", "world", "its"});
    const auto bank = test::sample_bank();
    for (const auto& ex : bank) {
      CHECK(classify_lexical_baseline(validate_essay(ex.essay_text), bank) == ex.label);
    }
    std::vector<FewShotExample> tie = {
        {test::essay_of(50, "alpha"), ErrorLabel::Position, "f"},
        {test::essay_of(50, "alpha"), ErrorLabel::Direction, "f"},
    };
    CHECK(classify_lexical_baseline(validate_essay(test::essay_of(52, "beta")), tie) == ErrorLabel::Direction);
    CHECK_THROWS_AS(classify_lexical_baseline(essay(), std::vector<FewShotExample>{}), EmptyBankError);
    const auto ds = load_dataset_jsonl(test::data_dir() / "dataset.jsonl");
    const auto r = evaluate_lexical_baseline(ds, bank);
    CHECK(r.trials == 1);
    CHECK(r.method == "Lexical baseline");
    CHECK(r.accuracy_mean >= 0.0);
    CHECK(r.accuracy_mean <= 1.0);
  }

  TEST_CASE("bank and dataset loading") {
    const auto bank = test::sample_bank();
    CHECK(bank.size() == 12);
    CHECK(bank_shortfalls(bank, 3).empty());
    CHECK_THROWS_AS(parse_bank_line("[]"), Error);
    CHECK_THROWS_AS(parse_bank_line(R"({"essay": "x", "label": "sideways", "feedback": "f"})"), Error);
    CHECK_THROWS_AS(parse_bank_line(R"({"essay": "", "label": "correct", "feedback": "f"})"), Error);
    CHECK_THROWS_AS(parse_bank_line(R"({"essay": "x", "label": "correct"})"), Error);
    CHECK(parse_bank_line(R"({"essay": "x", "label": "position", "feedback": "f"})").label == ErrorLabel::Position);

    const auto path = std::filesystem::temp_directory_path() / "jitfb_bad_dataset.jsonl";
    {
      std::ofstream out(path);
      out << R"({"essay": "fine", "label": "correct"})" << "\n" << "{oops\n";
    }
    try {
      load_dataset_jsonl(path);
      FAIL("expected Error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find(":2:") != std::string::npos);
    }
    std::filesystem::remove(path);
    CHECK_THROWS_AS(load_bank_jsonl(path), Error);
  }
}
