#include "iviq/heuristic.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace iviq {

namespace {

bool same_slot(const Question& a, const Question& b) { return a.text == b.text && a.segment == b.segment; }

bool already_planned(const QuestionPlan& plan, const Question& q) {
  const auto hit = [&](const Question& other) { return same_slot(other, q); };
  return std::any_of(plan.emitted.begin(), plan.emitted.end(), hit) ||
         std::any_of(plan.pending.begin(), plan.pending.end(), hit);
}

void enqueue(QuestionPlan& plan, const Question& base) {
  std::vector<Question> variants;
  if (plan.augmentations.ask_segment) {
    for (const Segment s : {Segment::first_half, Segment::second_half}) {
      variants.push_back({phrasing::with_segment_prefix(base.text, s), base.kind, s});
    }
  } else {
    variants.push_back(base);
  }
  for (auto& q : variants) {
    if (plan.emitted.size() + plan.pending.size() >= plan.cap) return;
    if (!already_planned(plan, q)) plan.pending.push_back(std::move(q));
  }
}

void enqueue_object(QuestionPlan& plan, const ExtractedObject& object) {
  if (!plan.asked_objects.insert(object.token).second) return;
  if (object.living) enqueue(plan, {phrasing::action_question(object.token), QuestionKind::action, Segment::whole});
  enqueue(plan, {phrasing::scene_question(object.token), QuestionKind::scene, Segment::whole});
}

void enqueue_inventory(QuestionPlan& plan) {
  enqueue(plan, {std::string(phrasing::kInventory), QuestionKind::object_inventory, Segment::whole});
}

}  // namespace

ObjectLexicon ObjectLexicon::parse(std::string_view contents) {
  ObjectLexicon lex;
  std::set<std::string, std::less<>>* section = nullptr;
  std::istringstream in{std::string(contents)};
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = text::trim(line);
    if (t.empty() || t.front() == '#') continue;
    if (t == "[living]") {
      section = &lex.living;
    } else if (t == "[nonliving]") {
      section = &lex.nonliving;
    } else if (t == "[stopwords]") {
      section = &lex.stopwords;
    } else if (section == nullptr) {
      throw ParseError("lexicon line " + std::to_string(line_no) + ": entry outside a section");
    } else if (t != text::to_lower(t) || t.find_first_of(" \t") != std::string::npos) {
      throw ParseError("lexicon line " + std::to_string(line_no) + ": '" + t +
                       "' must be a single lowercase token");
    } else {
      section->insert(t);
    }
  }
  for (const auto& w : lex.living) {
    if (lex.nonliving.contains(w)) throw ValidationError("lexicon: '" + w + "' is both living and nonliving");
  }
  return lex;
}

ObjectLexicon ObjectLexicon::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open lexicon '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::vector<ExtractedObject> extract_objects(std::string_view query, const ObjectLexicon& lexicon) {
  std::vector<ExtractedObject> out;
  for (const auto& token : text::tokenize(query)) {
    if (lexicon.stopwords.contains(token)) continue;
    const bool living = lexicon.living.contains(token);
    if (!living && !lexicon.nonliving.contains(token)) continue;
    const bool seen = std::any_of(out.begin(), out.end(), [&](const auto& o) { return o.token == token; });
    if (!seen) out.push_back({token, living});
  }
  return out;
}

std::optional<Question> QuestionPlan::pop() {
  if (pending.empty()) return std::nullopt;
  Question q = pending.front();
  pending.erase(pending.begin());
  emitted.push_back(q);
  return q;
}

QuestionPlan plan_initial(std::string_view query, const ObjectLexicon& lexicon, Augmentations augmentations,
                          std::size_t cap) {
  QuestionPlan plan;
  plan.augmentations = augmentations;
  plan.cap = cap;
  const auto objects = extract_objects(query, lexicon);
  if (objects.empty()) {
    // The identify question is asked once about the whole video; its answer
    // seeds the object questions, which do get the segment treatment.
    if (plan.cap > 0) {
      plan.pending.push_back({std::string(phrasing::kIdentifyObject), QuestionKind::object_identify, Segment::whole});
    }
    plan.awaiting_object = true;
    plan.inventory_deferred = augmentations.ask_object;
    return plan;
  }
  for (const auto& o : objects) enqueue_object(plan, o);
  if (augmentations.ask_object) enqueue_inventory(plan);
  return plan;
}

QuestionPlan on_answer(QuestionPlan plan, const Question& question, std::string_view answer,
                       const ObjectLexicon& lexicon) {
  if (plan.emitted.empty() || !(plan.emitted.back() == question)) {
    throw ValidationError("stale question: '" + question.text + "' is not the most recently emitted question");
  }
  if (question.kind == QuestionKind::object_identify && plan.awaiting_object) {
    plan.awaiting_object = false;
    for (const auto& o : extract_objects(answer, lexicon)) enqueue_object(plan, o);
    if (plan.inventory_deferred) {
      plan.inventory_deferred = false;
      enqueue_inventory(plan);
    }
  } else if (question.kind == QuestionKind::object_inventory) {
    for (const auto& o : extract_objects(answer, lexicon)) enqueue_object(plan, o);
  }
  return plan;
}

}  // namespace iviq
