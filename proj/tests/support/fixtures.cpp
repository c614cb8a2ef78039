#include "fixtures.hpp"

#include <fmt/format.h>

#include "jitfb/response_parser.hpp"

namespace jitfb::test {

std::filesystem::path data_dir() { return JITFB_DATA_DIR; }
std::filesystem::path golden_dir() { return JITFB_GOLDEN_DIR; }

QuizProblem stacked_blocks_quiz() {
  QuizProblem q;
  q.quiz_id = "stacked-blocks";
  q.statement =
      "Two blocks are stacked on a frictionless table. A horizontal force F is applied to the bottom block, and the "
      "two blocks move together without slipping. What force does the top block exert on the bottom block?";
  q.options = {
      {"A", "The mass of the top block times the acceleration, directed opposite to F", ErrorLabel::Correct},
      {"B", "The mass of the top block times the acceleration, directed along F", ErrorLabel::Direction},
      {"C", "The mass of the bottom block times the acceleration, directed opposite to F", ErrorLabel::Position},
      {"D", "The mass of the bottom block times the acceleration, directed along F", ErrorLabel::PositionDirection},
  };
  q.correct_option = "A";
  return q;
}

QuizCatalog stacked_blocks_catalog() {
  QuizCatalog c;
  auto q = stacked_blocks_quiz();
  c.emplace(q.quiz_id, q);
  return c;
}

std::vector<FewShotExample> sample_bank() { return load_bank_jsonl(data_dir() / "bank.jsonl"); }

std::string essay_of(std::size_t words, std::string_view seed_word) {
  static const std::vector<std::string_view> vocab = {
      "I",    "will", "find",  "the",     "shared", "acceleration", "of", "both", "blocks", "and", "then",
      "look", "at",   "which", "body",    "feels",  "the",          "pull", "from", "the",  "other", "one",
  };
  std::string out;
  for (std::size_t i = 0; i < words; ++i) {
    if (!out.empty()) out += ' ';
    out += i == 0 ? seed_word : vocab[i % vocab.size()];
  }
  out += '.';
  return out;
}

Session make_session(std::string id, std::string_view codes, std::optional<bool> answer_correct) {
  Session s;
  s.session_id = std::move(id);
  s.student_ref = "student-of-" + s.session_id;
  s.quiz_id = "stacked-blocks";
  TimestampMs t = 1'000'000;
  for (std::size_t i = 0; i < codes.size(); ++i) {
    ConversationTurn turn;
    turn.turn_index = static_cast<int>(i) + 1;
    turn.essay = StrategyEssay::from_text(essay_of(50 + 5 * i), t);
    turn.response.classification = *label_from_short_code(codes[i]);
    turn.response.secondary_classification = turn.response.classification;
    turn.response.confidence = 3;
    turn.response.feedback = "Keep refining your plan.";
    if (i > 0) turn.latency_since_prev_s = 60.0;
    s.turns.push_back(std::move(turn));
    t += 60'000;
  }
  if (answer_correct) {
    s.answer_correct = answer_correct;
    s.final_answer = *answer_correct ? "A" : "B";
  }
  return s;
}

std::vector<Event> events_for(const std::vector<Session>& sessions) {
  EventLog log;
  for (const auto& s : sessions) {
    log.append(EventType::SessionCreated, s.session_id, 0,
               {{"session_id", s.session_id}, {"student_ref", s.student_ref}, {"quiz_id", s.quiz_id}});
    for (const auto& turn : s.turns) {
      log.append(EventType::TurnRecorded, s.session_id, turn.essay.submitted_at, {{"turn", turn}});
    }
    if (s.final_answer) {
      const auto quiz = stacked_blocks_quiz();
      log.append(EventType::AnswerRecorded, s.session_id, 9'000'000,
                 {{"final_answer", *s.final_answer},
                  {"answer_correct", *s.answer_correct},
                  {"answer_label", quiz.find_option(*s.final_answer)->mapped_label}});
    }
    if (s.survey) log.append(EventType::SurveyRecorded, s.session_id, 9'500'000, {{"survey", *s.survey}});
  }
  return log.snapshot();
}

std::string jit_reply(ErrorLabel label, int confidence, std::string feedback) {
  FeedbackResponse r;
  r.classification = label;
  r.secondary_classification = label;
  r.confidence = confidence;
  r.feedback = std::move(feedback);
  return render_jit_response(r);
}

}  // namespace jitfb::test

#include <fstream>
#include <sstream>

#include "jitfb/prompt.hpp"

namespace jitfb::test {

namespace {

constexpr std::string_view kGoldenEssay =
    "I will treat both blocks as one system to get the shared acceleration from the applied force and the total "
    "mass. Then I isolate the top block, because the only horizontal force on it comes from the bottom block. Its "
    "mass times the acceleration gives the size of the force, and by the third law the force on the bottom block "
    "points opposite to the applied force.";

constexpr std::string_view kGoldenRubric =
    "Full credit names the top block as the body to isolate, uses the common acceleration of the stack, and states "
    "that the force on the bottom block acts opposite to the applied force.";

}  // namespace

std::vector<GoldenCase> golden_cases() {
  const auto quiz = stacked_blocks_quiz();
  const auto bank = sample_bank();
  const auto essay = validate_essay(kGoldenEssay);
  return {
      {"jit_k0.txt", build_jit_prompt(quiz, essay, bank, 0).text},
      {"jit_k3.txt", build_jit_prompt(quiz, essay, bank, 3).text},
      {"posthoc.txt", build_posthoc_prompt(quiz, essay, kGoldenRubric).text},
  };
}

std::optional<std::string> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace jitfb::test

#include <random>

namespace jitfb::test {

namespace {

const std::vector<std::string> kFeedbackPool = {
    "Reread your plan and check which body each force acts on.",
    "Think about the pair of forces between the blocks.",
    "Name the object you isolate, and say \"why\" it matters.",
    "Consider the sense of the push \\ pull on the lower block.",
    "Unicode is fine too: naïve café, and a { brace } in prose.",
};

}  // namespace

FeedbackResponse random_response(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  FeedbackResponse r;
  r.classification = kAllLabels[rng() % 4];
  r.secondary_classification = kAllLabels[rng() % 4];
  r.confidence = static_cast<int>(rng() % 5) + 1;
  r.feedback = kFeedbackPool[rng() % kFeedbackPool.size()];
  return r;
}

std::vector<std::string> fuzz_corpus(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto pick = [&](std::size_t k) { return static_cast<std::size_t>(rng() % k); };
  const std::vector<std::string> fragments = {
      "{", "}", "\"", "\\", ",", ":", "[", "]", "null", "true", "6", "0", "-1", "3.5", "\"correct\"",
      "\"Correct\"", "\"confidence\"", "\"feedback\"", "\xff", "\xc3\xa9", "\n", "```json\n", "```", "\\u0000"};
  std::vector<std::string> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto r = random_response(rng());
    std::string s = render_jit_response(r);
    switch (pick(4)) {
      case 0: s = "Here is my analysis.\n" + s + "\nThanks!"; break;
      case 1: s = "```json\n" + s + "\n```"; break;
      case 2: s = "{\"reasoning\": \"step one, step two\", " + s.substr(1); break;
      default: break;
    }
    const std::size_t mutations = pick(4);
    for (std::size_t m = 0; m < mutations && !s.empty(); ++m) {
      switch (pick(7)) {
        case 0: s.resize(pick(s.size() + 1)); break;
        case 1: s.erase(pick(s.size()), 1 + pick(8)); break;
        case 2: s.insert(pick(s.size() + 1), fragments[pick(fragments.size())]); break;
        case 3: {
          const auto a = pick(s.size());
          const auto b = pick(s.size());
          std::swap(s[a], s[b]);
          break;
        }
        case 4: {
          for (const std::string from : {"\"direction\"", "\"position\"", "\"correct\""}) {
            if (auto at = s.find(from); at != std::string::npos) {
              s.replace(at, from.size(), pick(2) ? "\"Direction \"" : "\"unknown\"");
              break;
            }
          }
          break;
        }
        case 5: {
          if (auto at = s.find("\"confidence\":"); at != std::string::npos) {
            const std::vector<std::string> values = {"0", "6", "\"3\"", "2.5", "4.0", "-2", "1e400", "null"};
            const auto colon = at + 13;
            const auto end = s.find_first_of(",}", colon);
            s.replace(colon, end == std::string::npos ? std::string::npos : end - colon, values[pick(values.size())]);
          }
          break;
        }
        default: s += s.substr(pick(s.size())); break;
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace jitfb::test
