#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "iviq/common.hpp"

namespace iviq {

enum class QuestionKind { action, scene, object_identify, object_inventory, open };

std::string_view to_string(QuestionKind k) noexcept;
QuestionKind question_kind_from_string(std::string_view s);

struct Question {
  std::string text;
  QuestionKind kind = QuestionKind::open;
  Segment segment = Segment::whole;

  friend bool operator==(const Question&, const Question&) = default;
};

// Attribute slots of the synthetic ground truth.
enum class Slot { object, action, scene, color, material, extra_objects };

inline constexpr Slot kAllSlots[] = {Slot::object, Slot::action,   Slot::scene,
                                     Slot::color,  Slot::material, Slot::extra_objects};

std::string_view to_string(Slot s) noexcept;
Slot slot_from_string(std::string_view s);

// What a truth-backed answerer should read out for a question.
struct AnswerTarget {
  QuestionKind kind = QuestionKind::open;
  // Set when an open question names one slot ("what is the color in the video?").
  std::optional<Slot> slot;
};

// Surface-form constants shared by the heuristic planner, the synthetic
// language model and the text classifier below.
namespace phrasing {
inline constexpr std::string_view kIdentifyObject = "what object is in the video?";
inline constexpr std::string_view kInventory = "what other objects are in the video?";
inline constexpr std::string_view kFirstHalfPrefix = "in the first half of the video, ";
inline constexpr std::string_view kSecondHalfPrefix = "in the second half of the video, ";

std::string action_question(std::string_view object);
std::string scene_question(std::string_view object);
// "what is the {slot} in the video?"
std::string slot_question(Slot slot);
std::string with_segment_prefix(std::string_view question, Segment segment);
// Removes a leading half-of-the-video prefix, if any.
std::string_view strip_segment_prefix(std::string_view question) noexcept;
}  // namespace phrasing

// Infers the answer target from the question text alone, the way a VideoQA
// endpoint that only receives the text must. Agrees with the `kind` tag of
// every templated question.
AnswerTarget classify_question(std::string_view text);

// Resolves a tagged question: non-open kinds are taken as-is, open questions
// are refined through classify_question.
AnswerTarget answer_target(const Question& q);

}  // namespace iviq
