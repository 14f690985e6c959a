#include "iviq/question.hpp"

namespace iviq {

std::string_view to_string(QuestionKind k) noexcept {
  switch (k) {
    case QuestionKind::action:
      return "action";
    case QuestionKind::scene:
      return "scene";
    case QuestionKind::object_identify:
      return "object_identify";
    case QuestionKind::object_inventory:
      return "object_inventory";
    case QuestionKind::open:
      return "open";
  }
  return "open";
}

QuestionKind question_kind_from_string(std::string_view s) {
  if (s == "action") return QuestionKind::action;
  if (s == "scene") return QuestionKind::scene;
  if (s == "object_identify") return QuestionKind::object_identify;
  if (s == "object_inventory") return QuestionKind::object_inventory;
  if (s == "open") return QuestionKind::open;
  throw ParseError("unknown question kind '" + std::string(s) + "'");
}

std::string_view to_string(Slot s) noexcept {
  switch (s) {
    case Slot::object:
      return "object";
    case Slot::action:
      return "action";
    case Slot::scene:
      return "scene";
    case Slot::color:
      return "color";
    case Slot::material:
      return "material";
    case Slot::extra_objects:
      return "extra_objects";
  }
  return "object";
}

Slot slot_from_string(std::string_view s) {
  for (const Slot slot : kAllSlots) {
    if (to_string(slot) == s) return slot;
  }
  throw ParseError("unknown attribute slot '" + std::string(s) + "'");
}

namespace phrasing {

std::string action_question(std::string_view object) {
  return "what is the " + std::string(object) + " doing?";
}

std::string scene_question(std::string_view object) { return "where is the " + std::string(object) + "?"; }

std::string slot_question(Slot slot) { return "what is the " + std::string(to_string(slot)) + " in the video?"; }

std::string with_segment_prefix(std::string_view question, Segment segment) {
  switch (segment) {
    case Segment::first_half:
      return std::string(kFirstHalfPrefix) + std::string(question);
    case Segment::second_half:
      return std::string(kSecondHalfPrefix) + std::string(question);
    case Segment::whole:
      break;
  }
  return std::string(question);
}

std::string_view strip_segment_prefix(std::string_view question) noexcept {
  for (const auto prefix : {kFirstHalfPrefix, kSecondHalfPrefix}) {
    if (text::starts_with(question, prefix)) return question.substr(prefix.size());
  }
  return question;
}

}  // namespace phrasing

AnswerTarget classify_question(std::string_view raw) {
  const std::string lowered = text::to_lower(text::trim(raw));
  const std::string_view q = phrasing::strip_segment_prefix(lowered);

  if (q.find("what other objects") != std::string_view::npos) return {QuestionKind::object_inventory, {}};
  if (q == phrasing::kIdentifyObject) return {QuestionKind::object_identify, {}};
  for (const Slot slot : kAllSlots) {
    if (q == phrasing::slot_question(slot)) {
      switch (slot) {
        case Slot::object:
          return {QuestionKind::object_identify, {}};
        case Slot::action:
          return {QuestionKind::action, {}};
        case Slot::scene:
          return {QuestionKind::scene, {}};
        case Slot::extra_objects:
          return {QuestionKind::object_inventory, {}};
        default:
          return {QuestionKind::open, slot};
      }
    }
  }
  if (q.find(" doing") != std::string_view::npos) return {QuestionKind::action, {}};
  if (text::starts_with(q, "where")) return {QuestionKind::scene, {}};
  return {QuestionKind::open, {}};
}

AnswerTarget answer_target(const Question& q) {
  if (q.kind != QuestionKind::open) return {q.kind, {}};
  return classify_question(q.text);
}

}  // namespace iviq
