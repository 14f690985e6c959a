#include "iviq/dialogue.hpp"

#include <algorithm>
#include <array>
#include <map>

#include "iviq/gateway.hpp"

namespace iviq {

using nlohmann::json;

namespace {

template <typename E, std::size_t N>
E enum_from(std::string_view s, const std::array<E, N>& values, std::string_view what) {
  for (const E v : values) {
    if (to_string(v) == s) return v;
  }
  throw ValidationError(std::string(what) + ": unknown value '" + std::string(s) + "'");
}

constexpr std::array kGenerators = {GeneratorKind::heuristic, GeneratorKind::auto_text, GeneratorKind::auto_text_vid,
                                    GeneratorKind::external};
constexpr std::array kComposers = {ComposerStrategy::concat_sep, ComposerStrategy::similarity_aggregation,
                                   ComposerStrategy::rank_aggregation};
constexpr std::array kStyles = {FragmentStyle::question_plus_answer, FragmentStyle::answer_only};
constexpr std::array kProviders = {AnswerProviderKind::videoqa, AnswerProviderKind::cap_lm,
                                   AnswerProviderKind::scripted, AnswerProviderKind::human};

std::vector<std::string> pieces_of(const QueryState& q) {
  std::vector<std::string> pieces{q.initial_query};
  pieces.insert(pieces.end(), q.fragments.begin(), q.fragments.end());
  return pieces;
}

json question_to_json(const Question& q) {
  return {{"text", q.text}, {"kind", to_string(q.kind)}, {"segment", to_string(q.segment)}};
}

Question question_from_json(const json& j) {
  return {j.at("text").get<std::string>(), question_kind_from_string(j.at("kind").get<std::string>()),
          segment_from_string(j.at("segment").get<std::string>())};
}

std::vector<Question> segment_variants(const Question& base, const Augmentations& aug) {
  if (!aug.ask_segment) return {base};
  std::vector<Question> out;
  for (const Segment s : {Segment::first_half, Segment::second_half}) {
    out.push_back({phrasing::with_segment_prefix(base.text, s), base.kind, s});
  }
  return out;
}

}  // namespace

std::string_view to_string(GeneratorKind k) noexcept {
  switch (k) {
    case GeneratorKind::heuristic:
      return "heuristic";
    case GeneratorKind::auto_text:
      return "auto_text";
    case GeneratorKind::auto_text_vid:
      return "auto_text_vid";
    case GeneratorKind::external:
      return "external";
  }
  return "heuristic";
}

std::string_view to_string(ComposerStrategy k) noexcept {
  switch (k) {
    case ComposerStrategy::concat_sep:
      return "concat_sep";
    case ComposerStrategy::similarity_aggregation:
      return "similarity_aggregation";
    case ComposerStrategy::rank_aggregation:
      return "rank_aggregation";
  }
  return "concat_sep";
}

std::string_view to_string(FragmentStyle k) noexcept {
  return k == FragmentStyle::answer_only ? "answer_only" : "question_plus_answer";
}

std::string_view to_string(AnswerProviderKind k) noexcept {
  switch (k) {
    case AnswerProviderKind::videoqa:
      return "videoqa";
    case AnswerProviderKind::cap_lm:
      return "cap_lm";
    case AnswerProviderKind::scripted:
      return "scripted";
    case AnswerProviderKind::human:
      return "human";
  }
  return "videoqa";
}

// --- config -------------------------------------------------------------------

int SessionConfig::effective_max_rounds() const {
  if (max_rounds) return *max_rounds;
  return generator == GeneratorKind::heuristic ? static_cast<int>(kHeuristicQuestionCap) : kMaxRoundsCap;
}

std::vector<std::string> SessionConfig::validate() const {
  std::vector<std::string> errors;
  if (max_rounds && (*max_rounds < 0 || *max_rounds > kMaxRoundsCap)) {
    errors.push_back("max_rounds must be in [0, " + std::to_string(kMaxRoundsCap) + "], got " +
                     std::to_string(*max_rounds));
  }
  if (rerank_k < 1) errors.push_back("rerank_k must be >= 1, got " + std::to_string(rerank_k));
  if (caption_k < 1) errors.push_back("caption_k must be >= 1, got " + std::to_string(caption_k));
  if (!(answer_deadline_s > 0)) errors.push_back("answer_deadline_s must be > 0");
  return errors;
}

json to_json(const SessionConfig& c) {
  json aug = json::array();
  if (c.augmentations.ask_segment) aug.push_back("AS");
  if (c.augmentations.ask_object) aug.push_back("AO");
  return {
      {"generator", to_string(c.generator)},
      {"composer", to_string(c.composer)},
      {"max_rounds", c.effective_max_rounds()},
      {"rerank", c.rerank},
      {"rerank_k", c.rerank_k},
      {"caption_k", c.caption_k},
      {"augmentations", aug},
      {"answer_provider", to_string(c.answer_provider)},
      {"fragment_style", to_string(c.fragment_style)},
      {"answer_deadline_s", c.answer_deadline_s},
  };
}

SessionConfig apply_overrides(SessionConfig c, const json& overrides) {
  if (overrides.is_null()) return c;
  if (!overrides.is_object()) throw ValidationError("session config must be a JSON object");
  std::vector<std::string> errors;
  for (const auto& [key, value] : overrides.items()) {
    try {
      if (key == "generator") {
        c.generator = enum_from(value.get<std::string>(), kGenerators, "generator");
      } else if (key == "composer") {
        c.composer = enum_from(value.get<std::string>(), kComposers, "composer");
      } else if (key == "max_rounds") {
        if (value.is_null()) {
          c.max_rounds.reset();
        } else if (!value.is_number_integer()) {
          throw ValidationError("max_rounds must be an integer");
        } else {
          c.max_rounds = value.get<int>();
        }
      } else if (key == "rerank") {
        c.rerank = value.get<bool>();
      } else if (key == "rerank_k") {
        if (!value.is_number_integer()) throw ValidationError("rerank_k must be an integer");
        c.rerank_k = value.get<int>();
      } else if (key == "caption_k") {
        if (!value.is_number_integer()) throw ValidationError("caption_k must be an integer");
        c.caption_k = value.get<int>();
      } else if (key == "augmentations") {
        if (!value.is_array()) throw ValidationError("augmentations must be a list");
        Augmentations aug;
        for (const auto& a : value) {
          const auto tag = a.get<std::string>();
          if (tag == "AS") {
            aug.ask_segment = true;
          } else if (tag == "AO") {
            aug.ask_object = true;
          } else {
            throw ValidationError("augmentations: unknown value '" + tag + "'");
          }
        }
        c.augmentations = aug;
      } else if (key == "answer_provider") {
        c.answer_provider = enum_from(value.get<std::string>(), kProviders, "answer_provider");
      } else if (key == "fragment_style") {
        c.fragment_style = enum_from(value.get<std::string>(), kStyles, "fragment_style");
      } else if (key == "answer_deadline_s") {
        c.answer_deadline_s = value.get<double>();
      } else {
        errors.push_back("unknown config key '" + key + "'");
      }
    } catch (const ValidationError& e) {
      errors.emplace_back(e.what());
    } catch (const json::exception&) {
      errors.push_back(key + ": wrong type");
    }
  }
  for (auto& e : c.validate()) errors.push_back(std::move(e));
  if (!errors.empty()) throw ValidationError("invalid session config: " + text::join(errors, "; "));
  return c;
}

// --- composition ----------------------------------------------------------------

std::string compose_concat(std::string_view initial, const std::vector<std::string>& fragments) {
  std::string out(initial);
  for (const auto& f : fragments) {
    out += kSeparator;
    out += f;
  }
  return out;
}

std::string compose_fragment(const Question& question, std::string_view answer) {
  return compose_fragment(question, answer, FragmentStyle::question_plus_answer);
}

std::string compose_fragment(const Question& question, std::string_view answer, FragmentStyle style) {
  std::string a = text::trim(answer);
  if (a.empty()) throw ValidationError("compose_fragment: empty answer");
  if (style == FragmentStyle::answer_only) return a;
  return question.text + " " + a;
}

RankedList aggregate_similarity(const std::vector<std::string>& ids, const std::vector<Eigen::VectorXd>& piece_scores) {
  if (piece_scores.empty()) throw ValidationError("aggregate_similarity: no pieces");
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(ids.size()));
  for (const auto& s : piece_scores) {
    if (s.size() != mean.size()) throw ValidationError("aggregate_similarity: score vector size mismatch");
    mean += s;
  }
  mean /= static_cast<double>(piece_scores.size());
  return order_by_scores(ids, mean);
}

RankedList aggregate_ranks(const std::vector<RankedList>& piece_rankings) {
  if (piece_rankings.empty()) throw ValidationError("aggregate_ranks: no pieces");
  struct Acc {
    double rank_sum = 0.0;
    double score_sum = 0.0;
  };
  std::map<std::string, Acc> acc;
  for (const auto& list : piece_rankings) {
    if (list.size() != piece_rankings.front().size()) throw ValidationError("aggregate_ranks: ranking size mismatch");
    for (std::size_t i = 0; i < list.entries.size(); ++i) {
      auto& a = acc[list.entries[i].video_id];
      a.rank_sum += static_cast<double>(i + 1);
      a.score_sum += list.entries[i].cosine_score;
    }
  }
  const double n = static_cast<double>(piece_rankings.size());
  std::vector<std::pair<std::string, Acc>> rows(acc.begin(), acc.end());
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    if (a.second.rank_sum != b.second.rank_sum) return a.second.rank_sum < b.second.rank_sum;
    return a.first < b.first;
  });
  RankedList out;
  for (auto& [id, a] : rows) out.entries.push_back({id, a.score_sum / n, std::nullopt});
  return out;
}

// --- retriever -----------------------------------------------------------------

Retriever::Retriever(const CorpusManifest& manifest, const EmbeddingMatrix& index, const ModelGateway& gateway,
                     ObjectLexicon lexicon, int itm_parallelism)
    : manifest_(manifest),
      gateway_(gateway),
      lexicon_(std::move(lexicon)),
      gallery_(index.gallery(Segment::whole)),
      itm_parallelism_(itm_parallelism),
      captions_(std::make_unique<CaptionCache>()) {
  if (gallery_.ids.empty()) throw ValidationError("retriever: index has no whole-video rows");
  if (index.dimension() != gateway.dimension()) {
    throw ValidationError("retriever: index dimension " + std::to_string(index.dimension()) +
                          " does not match provider dimension " + std::to_string(gateway.dimension()));
  }
}

RankedList Retriever::rank(const QueryState& query, const SessionConfig& config) const {
  RankedList list;
  switch (config.composer) {
    case ComposerStrategy::concat_sep:
      list = rank_cosine(gateway_.embed_text(query.composed), gallery_);
      break;
    case ComposerStrategy::similarity_aggregation: {
      std::vector<Eigen::VectorXd> scores;
      for (const auto& p : pieces_of(query)) scores.push_back(cosine_scores(gateway_.embed_text(p), gallery_));
      list = aggregate_similarity(gallery_.ids, scores);
      break;
    }
    case ComposerStrategy::rank_aggregation: {
      std::vector<RankedList> rankings;
      for (const auto& p : pieces_of(query)) rankings.push_back(rank_cosine(gateway_.embed_text(p), gallery_));
      list = aggregate_ranks(rankings);
      break;
    }
  }
  if (!config.rerank) return list;
  const auto k = std::min<std::size_t>(static_cast<std::size_t>(config.rerank_k), list.size());
  return rerank_itm(list, query.composed, k, gateway_, itm_parallelism_);
}

// --- generators ----------------------------------------------------------------

HeuristicGenerator::HeuristicGenerator(std::string_view initial_query, const ObjectLexicon& lexicon,
                                       Augmentations augmentations)
    : plan_(plan_initial(initial_query, lexicon, augmentations)) {}

std::optional<Question> HeuristicGenerator::next(const GenerationContext&) { return plan_.pop(); }

void HeuristicGenerator::observe(const Question& question, std::string_view answer, const ObjectLexicon& lexicon) {
  plan_ = on_answer(std::move(plan_), question, answer, lexicon);
}

ParametricGenerator::ParametricGenerator(GeneratorKind kind, Augmentations augmentations, std::size_t caption_k)
    : kind_(kind), augmentations_(augmentations), caption_k_(caption_k) {
  if (kind != GeneratorKind::auto_text && kind != GeneratorKind::auto_text_vid) {
    throw ValidationError("parametric generator needs auto_text or auto_text_vid");
  }
}

std::optional<Question> ParametricGenerator::next(const GenerationContext& ctx) {
  if (!queued_.empty()) {
    Question q = queued_.front();
    queued_.erase(queued_.begin());
    return q;
  }
  Question base;
  if (augmentations_.ask_object && !inventory_asked_) {
    inventory_asked_ = true;
    base = {std::string(phrasing::kInventory), QuestionKind::object_inventory, Segment::whole};
  } else if (kind_ == GeneratorKind::auto_text) {
    base = generate_question(render_auto_text(ctx.query.composed), ctx.retriever.gateway());
  } else {
    auto captions = gather_captions(ctx.ranking, caption_k_, ctx.retriever.gateway(), &ctx.retriever.captions(),
                                    ctx.round);
    base = generate_question(render_auto_text_vid(ctx.query.composed, captions), ctx.retriever.gateway());
    last_captions_ = std::move(captions);
  }
  auto variants = segment_variants(base, augmentations_);
  Question first = variants.front();
  queued_.assign(variants.begin() + 1, variants.end());
  return first;
}

// --- session -------------------------------------------------------------------

Session Session::start(std::string initial_query, SessionConfig config, const Retriever& retriever,
                       std::optional<std::string> target) {
  if (text::trim(initial_query).empty()) throw ValidationError("initial query is empty");
  if (auto errors = config.validate(); !errors.empty()) {
    throw ValidationError("invalid session config: " + text::join(errors, "; "));
  }
  if (config.generator == GeneratorKind::external) {
    throw ValidationError("generator 'external' only tags recorded dialogues");
  }
  if (config.augmentations.ask_segment && !retriever.segment_support()) {
    throw CapabilityError("Ask Segment requires half-segment support, which corpus '" + retriever.manifest().name +
                          "' does not declare");
  }
  if (config.generator == GeneratorKind::auto_text_vid &&
      static_cast<std::size_t>(config.caption_k) > retriever.corpus_size()) {
    throw ValidationError("caption_k=" + std::to_string(config.caption_k) + " exceeds corpus size " +
                          std::to_string(retriever.corpus_size()));
  }
  if (target && retriever.manifest().find(*target) == nullptr) {
    throw NotFoundError("target '" + *target + "' is not in the corpus");
  }

  SessionRecord record;
  record.target = std::move(target);
  record.config = config;
  record.query.initial_query = initial_query;
  record.query.composed = initial_query;
  RankedList ranking = retriever.rank(record.query, config);
  if (record.target) record.trajectory.push_back(rank_of(ranking, *record.target).rank);

  QuestionGenerator generator =
      config.generator == GeneratorKind::heuristic
          ? QuestionGenerator{HeuristicGenerator(initial_query, retriever.lexicon(), config.augmentations)}
          : QuestionGenerator{ParametricGenerator(config.generator, config.augmentations,
                                                  static_cast<std::size_t>(config.caption_k))};
  return Session(std::move(record), std::move(generator), std::move(ranking));
}

std::optional<Question> Session::propose(const Retriever& retriever) {
  if (pending_) throw ValidationError("a question is already pending");
  if (!rounds_remaining()) return std::nullopt;
  QuestionGenerator next_generator = generator_;
  const GenerationContext ctx{retriever, record_.config, record_.query, ranking_, rounds_completed()};
  auto q = std::visit([&](auto& g) { return g.next(ctx); }, next_generator);
  if (!q) return std::nullopt;
  if (text::trim(q->text).empty()) throw ProviderError("generator", "empty question");
  generator_ = std::move(next_generator);
  pending_ = q;
  return q;
}

void Session::complete(const Retriever& retriever, const AnswerResult& answer) {
  if (!pending_) throw ValidationError("no pending question");
  const Question& question = *pending_;
  const std::string normalized = text::normalize_answer(answer.answer);
  if (normalized.empty()) throw ValidationError("empty answer");

  SessionRecord next = record_;
  next.query.fragments.push_back(compose_fragment(question, normalized, next.config.fragment_style));
  next.query.composed = compose_concat(next.query.initial_query, next.query.fragments);
  RankedList ranking = retriever.rank(next.query, next.config);
  if (next.target) next.trajectory.push_back(rank_of(ranking, *next.target).rank);
  next.rounds.push_back({rounds_completed() + 1, question, normalized, next.config.generator, answer.provider,
                         std::max(0.0, answer.latency_s)});
  QuestionGenerator next_generator = generator_;
  std::visit([&](auto& g) { g.observe(question, normalized, retriever.lexicon()); }, next_generator);

  record_ = std::move(next);
  ranking_ = std::move(ranking);
  generator_ = std::move(next_generator);
  pending_.reset();
}

StepStatus Session::step(const Retriever& retriever, AnswerProvider& provider) {
  if (!record_.target) throw ValidationError("step needs a target video to answer about");
  Session trial = *this;
  const auto q = trial.propose(retriever);
  if (!q) return StepStatus::exhausted;
  const AnswerResult answer = provider.answer({*record_.target, *q, record_.config.answer_deadline_s});
  trial.complete(retriever, answer);
  *this = std::move(trial);
  return StepStatus::advanced;
}

// --- records -------------------------------------------------------------------

json to_json(const SessionRecord& r) {
  json rounds = json::array();
  for (const auto& d : r.rounds) {
    rounds.push_back({
        {"round_index", d.round_index},
        {"question", question_to_json(d.question)},
        {"answer", d.answer},
        {"generator", to_string(d.generator)},
        {"answer_provider", d.answer_provider},
        {"answer_latency_s", d.answer_latency_s},
    });
  }
  return {
      {"schema", kSessionSchema},
      {"target", r.target ? json(*r.target) : json(nullptr)},
      {"config", to_json(r.config)},
      {"query", {{"initial_query", r.query.initial_query}, {"fragments", r.query.fragments}, {"composed", r.query.composed}}},
      {"rounds", rounds},
      {"trajectory", r.trajectory},
  };
}

SessionRecord session_record_from_json(const json& doc) {
  try {
    if (doc.at("schema").get<std::string>() != kSessionSchema) {
      throw ParseError("session record: unsupported schema '" + doc.at("schema").get<std::string>() + "'");
    }
    SessionRecord r;
    if (!doc.at("target").is_null()) r.target = doc.at("target").get<std::string>();
    r.config = apply_overrides(SessionConfig{}, doc.at("config"));
    const auto& q = doc.at("query");
    r.query.initial_query = q.at("initial_query").get<std::string>();
    r.query.fragments = q.at("fragments").get<std::vector<std::string>>();
    r.query.composed = q.at("composed").get<std::string>();
    for (const auto& d : doc.at("rounds")) {
      r.rounds.push_back({d.at("round_index").get<int>(), question_from_json(d.at("question")),
                          d.at("answer").get<std::string>(),
                          enum_from(d.at("generator").get<std::string>(), kGenerators, "generator"),
                          d.at("answer_provider").get<std::string>(), d.at("answer_latency_s").get<double>()});
    }
    r.trajectory = doc.at("trajectory").get<std::vector<int>>();
    if (r.query.fragments.size() != r.rounds.size()) {
      throw ValidationError("session record: " + std::to_string(r.query.fragments.size()) + " fragments for " +
                            std::to_string(r.rounds.size()) + " rounds");
    }
    if (r.target && r.trajectory.size() != r.rounds.size() + 1) {
      throw ValidationError("session record: trajectory length must be rounds + 1");
    }
    return r;
  } catch (const json::exception& e) {
    throw ParseError(std::string("session record: ") + e.what());
  }
}

// --- replay --------------------------------------------------------------------

ReplayResult replay(const SessionRecord& record, const Retriever& retriever) {
  ReplayResult out;
  QueryState state;
  state.initial_query = record.query.initial_query;
  state.composed = state.initial_query;
  const auto observe = [&] {
    const RankedList list = retriever.rank(state, record.config);
    out.composed.push_back(state.composed);
    std::vector<std::string> ids;
    ids.reserve(list.size());
    for (const auto& e : list.entries) ids.push_back(e.video_id);
    out.top_ids.push_back(std::move(ids));
    if (record.target) out.trajectory.push_back(rank_of(list, *record.target).rank);
  };
  observe();
  for (const auto& round : record.rounds) {
    state.fragments.push_back(compose_fragment(round.question, round.answer, record.config.fragment_style));
    state.composed = compose_concat(state.initial_query, state.fragments);
    observe();
  }
  out.matches = state.fragments == record.query.fragments && state.composed == record.query.composed &&
                out.trajectory == record.trajectory;
  return out;
}

SessionRecord compose_external_dialog(std::string initial_query,
                                      const std::vector<std::pair<std::string, std::string>>& dialog,
                                      SessionConfig config, const Retriever& retriever,
                                      std::optional<std::string> target) {
  if (text::trim(initial_query).empty()) throw ValidationError("initial query is empty");
  config.generator = GeneratorKind::external;
  config.fragment_style = FragmentStyle::answer_only;
  config.max_rounds = std::min<int>(static_cast<int>(dialog.size()), kMaxRoundsCap);
  if (target && retriever.manifest().find(*target) == nullptr) {
    throw NotFoundError("target '" + *target + "' is not in the corpus");
  }
  SessionRecord r;
  r.target = std::move(target);
  r.config = config;
  r.query.initial_query = initial_query;
  r.query.composed = initial_query;
  const auto track = [&] {
    if (r.target) r.trajectory.push_back(rank_of(retriever.rank(r.query, r.config), *r.target).rank);
  };
  track();
  for (std::size_t i = 0; i < dialog.size() && static_cast<int>(i) < kMaxRoundsCap; ++i) {
    const auto& [question, answer] = dialog[i];
    const std::string normalized = text::normalize_answer(answer);
    if (normalized.empty()) throw ValidationError("external dialog round " + std::to_string(i + 1) + ": empty answer");
    r.query.fragments.push_back(normalized);
    r.query.composed = compose_concat(r.query.initial_query, r.query.fragments);
    r.rounds.push_back({static_cast<int>(i + 1), {question, classify_question(question).kind, Segment::whole},
                        normalized, GeneratorKind::external, "external", 0.0});
    track();
  }
  return r;
}

}  // namespace iviq
