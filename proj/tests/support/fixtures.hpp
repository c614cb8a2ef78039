#pragma once

#include <filesystem>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "jitfb/classifier.hpp"
#include "jitfb/domain.hpp"
#include "jitfb/event_log.hpp"
#include "jitfb/session_service.hpp"

namespace jitfb::test {

std::filesystem::path data_dir();
std::filesystem::path golden_dir();

/// The stacked-blocks quiz: A correct, B direction, C position, D both.
QuizProblem stacked_blocks_quiz();
QuizCatalog stacked_blocks_catalog();

/// data/bank.jsonl: three examples per label.
std::vector<FewShotExample> sample_bank();

/// A rule-abiding essay with exactly `words` words.
std::string essay_of(std::size_t words, std::string_view seed_word = "force");

/// Session whose turns carry the given short codes, e.g. "DDC".
Session make_session(std::string id, std::string_view codes, std::optional<bool> answer_correct = std::nullopt);

/// Writes the sessions to a fresh in-memory log through the public event
/// vocabulary so tests can go through replay.
std::vector<Event> events_for(const std::vector<Session>& sessions);

/// Scripted backend reply carrying a classification.
std::string jit_reply(ErrorLabel label, int confidence = 4, std::string feedback = "Revisit your plan step by step.");

}  // namespace jitfb::test

namespace jitfb::test {

struct GoldenCase {
  std::string file;  // under golden_dir()
  std::string text;
};

/// Prompts pinned by committed golden files: JiT k=0, JiT k=3, post-hoc.
std::vector<GoldenCase> golden_cases();

/// Exact file contents, or nullopt when missing.
std::optional<std::string> read_file(const std::filesystem::path& path);

}  // namespace jitfb::test

namespace jitfb::test {

/// Randomly generated well-formed response and its rendering.
FeedbackResponse random_response(std::uint64_t seed);

/// Model outputs derived from well-formed replies by byte and token level
/// mutations: truncation, deletion, insertion, label and number edits,
/// wrapper prose and code fences.
std::vector<std::string> fuzz_corpus(std::size_t n, std::uint64_t seed);

}  // namespace jitfb::test
