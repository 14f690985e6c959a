#pragma once

#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "iviq/answers.hpp"
#include "iviq/corpus.hpp"
#include "iviq/heuristic.hpp"
#include "iviq/parametric.hpp"
#include "iviq/ranking.hpp"

namespace iviq {

class ModelGateway;

inline constexpr std::string_view kSessionSchema = "iviq-session/1";
inline constexpr std::string_view kSeparator = " [SEP] ";

// `external` tags rounds taken from a recorded dialogue; sessions cannot run it.
enum class GeneratorKind { heuristic, auto_text, auto_text_vid, external };
enum class ComposerStrategy { concat_sep, similarity_aggregation, rank_aggregation };
enum class FragmentStyle { question_plus_answer, answer_only };
enum class AnswerProviderKind { videoqa, cap_lm, scripted, human };

std::string_view to_string(GeneratorKind k) noexcept;
std::string_view to_string(ComposerStrategy k) noexcept;
std::string_view to_string(FragmentStyle k) noexcept;
std::string_view to_string(AnswerProviderKind k) noexcept;

inline constexpr int kMaxRoundsCap = 10;

struct SessionConfig {
  GeneratorKind generator = GeneratorKind::heuristic;
  ComposerStrategy composer = ComposerStrategy::concat_sep;
  // Unset means 6 for the heuristic generator and 10 for parametric ones.
  std::optional<int> max_rounds;
  bool rerank = true;
  int rerank_k = 128;
  int caption_k = 5;
  Augmentations augmentations{.ask_segment = false, .ask_object = true};
  AnswerProviderKind answer_provider = AnswerProviderKind::videoqa;
  FragmentStyle fragment_style = FragmentStyle::question_plus_answer;
  double answer_deadline_s = 30.0;

  int effective_max_rounds() const;
  // Every violated constraint, empty when valid.
  std::vector<std::string> validate() const;
};

nlohmann::json to_json(const SessionConfig& config);
// Applies the keys present in `overrides` on top of `base`. Unknown keys and
// malformed values are collected into one ValidationError.
SessionConfig apply_overrides(SessionConfig base, const nlohmann::json& overrides);

struct QueryState {
  std::string initial_query;
  std::vector<std::string> fragments;
  std::string composed;
};

// initial [SEP] f1 [SEP] f2 ...
std::string compose_concat(std::string_view initial, const std::vector<std::string>& fragments);

// Question text verbatim, one space, trimmed answer.
std::string compose_fragment(const Question& question, std::string_view answer);
std::string compose_fragment(const Question& question, std::string_view answer, FragmentStyle style);

struct DialogueRound {
  int round_index = 0;
  Question question;
  std::string answer;
  GeneratorKind generator = GeneratorKind::heuristic;
  std::string answer_provider;
  double answer_latency_s = 0.0;
};

struct SessionRecord {
  std::optional<std::string> target;
  SessionConfig config;
  QueryState query;
  std::vector<DialogueRound> rounds;
  // Target rank after each round, starting with the initial query.
  std::vector<int> trajectory;
};

nlohmann::json to_json(const SessionRecord& record);
SessionRecord session_record_from_json(const nlohmann::json& doc);

// Mean of per-piece cosine scores; ties by id.
RankedList aggregate_similarity(const std::vector<std::string>& ids, const std::vector<Eigen::VectorXd>& piece_scores);
// Mean of per-piece 1-based ranks, ascending; ties by id. Scores carry the
// mean cosine of each video across pieces.
RankedList aggregate_ranks(const std::vector<RankedList>& piece_rankings);

// Immutable view over one loaded corpus, shared by every session.
class Retriever {
 public:
  Retriever(const CorpusManifest& manifest, const EmbeddingMatrix& index, const ModelGateway& gateway,
            ObjectLexicon lexicon, int itm_parallelism = 1);

  const CorpusManifest& manifest() const noexcept { return manifest_; }
  const ModelGateway& gateway() const noexcept { return gateway_; }
  const ObjectLexicon& lexicon() const noexcept { return lexicon_; }
  const Gallery<float>& gallery() const noexcept { return gallery_; }
  std::size_t corpus_size() const noexcept { return gallery_.ids.size(); }
  bool segment_support() const noexcept { return manifest_.segment_support; }
  CaptionCache& captions() const noexcept { return *captions_; }

  // Ranking for the current query state under the configured composer,
  // followed by the ITM rerank when enabled.
  RankedList rank(const QueryState& query, const SessionConfig& config) const;

 private:
  const CorpusManifest& manifest_;
  const ModelGateway& gateway_;
  ObjectLexicon lexicon_;
  Gallery<float> gallery_;
  int itm_parallelism_;
  std::unique_ptr<CaptionCache> captions_;
};

struct GenerationContext {
  const Retriever& retriever;
  const SessionConfig& config;
  const QueryState& query;
  const RankedList& ranking;
  int round = 0;
};

class HeuristicGenerator {
 public:
  HeuristicGenerator(std::string_view initial_query, const ObjectLexicon& lexicon, Augmentations augmentations);
  std::optional<Question> next(const GenerationContext& ctx);
  void observe(const Question& question, std::string_view answer, const ObjectLexicon& lexicon);
  const QuestionPlan& plan() const noexcept { return plan_; }

 private:
  QuestionPlan plan_;
};

// Auto-text / Auto-text-vid. With AO the inventory question is asked first;
// with AS every question is asked once per half.
class ParametricGenerator {
 public:
  ParametricGenerator(GeneratorKind kind, Augmentations augmentations, std::size_t caption_k);
  std::optional<Question> next(const GenerationContext& ctx);
  void observe(const Question&, std::string_view, const ObjectLexicon&) {}
  const std::optional<CaptionSet>& last_captions() const noexcept { return last_captions_; }

 private:
  GeneratorKind kind_;
  Augmentations augmentations_;
  std::size_t caption_k_;
  bool inventory_asked_ = false;
  std::vector<Question> queued_;
  std::optional<CaptionSet> last_captions_;
};

using QuestionGenerator = std::variant<HeuristicGenerator, ParametricGenerator>;

enum class StepStatus { advanced, exhausted };

// The interaction state machine: one instance per session, single writer.
// Every mutating call is all-or-nothing.
class Session {
 public:
  static Session start(std::string initial_query, SessionConfig config, const Retriever& retriever,
                       std::optional<std::string> target = std::nullopt);

  const SessionRecord& record() const noexcept { return record_; }
  const RankedList& ranking() const noexcept { return ranking_; }
  int rounds_completed() const noexcept { return static_cast<int>(record_.rounds.size()); }
  bool rounds_remaining() const noexcept { return rounds_completed() < record_.config.effective_max_rounds(); }

  // Generates the next question; nullopt when the session is done.
  std::optional<Question> propose(const Retriever& retriever);
  // Completes the round opened by propose(). Throws ValidationError when no
  // question is pending or the answer is empty.
  void complete(const Retriever& retriever, const AnswerResult& answer);
  const std::optional<Question>& pending() const noexcept { return pending_; }

  // propose -> answer the target video -> complete, all or nothing.
  StepStatus step(const Retriever& retriever, AnswerProvider& provider);

  const QuestionGenerator& generator() const noexcept { return generator_; }

 private:
  Session(SessionRecord record, QuestionGenerator generator, RankedList ranking)
      : record_(std::move(record)), generator_(std::move(generator)), ranking_(std::move(ranking)) {}

  SessionRecord record_;
  QuestionGenerator generator_;
  RankedList ranking_;
  std::optional<Question> pending_;
};

struct ReplayResult {
  std::vector<std::string> composed;  // composed query after each round, round 0 first
  std::vector<std::vector<std::string>> top_ids;  // full ranking after each round
  std::vector<int> trajectory;  // target ranks, when the record has a target
  bool matches = false;  // recomputed fragments, composed query and trajectory equal the record
};

// Rebuilds a session from its log without consulting any generator or answerer.
ReplayResult replay(const SessionRecord& record, const Retriever& retriever);

// Human-dialog baseline: the answers of an externally recorded dialogue are
// appended to the initial query, questions dropped.
SessionRecord compose_external_dialog(std::string initial_query,
                                      const std::vector<std::pair<std::string, std::string>>& dialog,
                                      SessionConfig config, const Retriever& retriever,
                                      std::optional<std::string> target = std::nullopt);

}  // namespace iviq
