#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "iviq/question.hpp"

namespace iviq {

// Noun lists used for pattern-matching objects out of free text.
struct ObjectLexicon {
  std::set<std::string, std::less<>> living;
  std::set<std::string, std::less<>> nonliving;
  std::set<std::string, std::less<>> stopwords;

  // Plain UTF-8, one token per line under "[living]", "[nonliving]" and
  // "[stopwords]" headers. Blank lines and lines starting with '#' are skipped.
  static ObjectLexicon parse(std::string_view contents);
  static ObjectLexicon load(const std::filesystem::path& path);
};

struct ExtractedObject {
  std::string token;
  bool living = false;

  friend bool operator==(const ExtractedObject&, const ExtractedObject&) = default;
};

std::vector<ExtractedObject> extract_objects(std::string_view query, const ObjectLexicon& lexicon);

struct Augmentations {
  bool ask_segment = false;  // AS
  bool ask_object = false;   // AO

  friend bool operator==(const Augmentations&, const Augmentations&) = default;
};

inline constexpr std::size_t kHeuristicQuestionCap = 6;

struct QuestionPlan {
  std::vector<Question> pending;
  std::vector<Question> emitted;
  std::set<std::string> asked_objects;
  bool awaiting_object = false;
  // AO requested while the fallback identify question is outstanding.
  bool inventory_deferred = false;
  Augmentations augmentations;
  std::size_t cap = kHeuristicQuestionCap;

  bool exhausted() const { return pending.empty(); }
  // Moves the next pending question to `emitted`.
  std::optional<Question> pop();
};

QuestionPlan plan_initial(std::string_view query, const ObjectLexicon& lexicon, Augmentations augmentations,
                          std::size_t cap = kHeuristicQuestionCap);

// Folds the answer to the most recently emitted question into the plan.
// Throws ValidationError for any other question.
QuestionPlan on_answer(QuestionPlan plan, const Question& question, std::string_view answer,
                       const ObjectLexicon& lexicon);

}  // namespace iviq
