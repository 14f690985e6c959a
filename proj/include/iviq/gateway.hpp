#pragma once

#include <Eigen/Core>

#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <semaphore>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "iviq/corpus.hpp"

namespace httplib {
class Server;
}

namespace iviq {

// The five model roles behind the engine: text/video embedding, VideoQA,
// captioning, image-text matching and a text-to-text language model.
// Implementations must be safe to call concurrently.
class ModelGateway {
 public:
  virtual ~ModelGateway() = default;

  virtual int dimension() const = 0;
  virtual Eigen::VectorXf embed_text(std::string_view text) const = 0;
  virtual Eigen::VectorXf embed_video(std::string_view video_id, Segment segment) const = 0;
  virtual std::string vqa(std::string_view video_id, std::string_view question, Segment segment) const = 0;
  virtual std::string caption(std::string_view video_id) const = 0;
  virtual double itm(std::string_view video_id, std::string_view text) const = 0;
  virtual std::string lm_generate(std::string_view prompt, int max_tokens) const = 0;
};

// Tokens dropped by the synthetic text rules: function words, the question
// scaffolding used by every generator, and slot names.
const std::set<std::string, std::less<>>& synthetic_stopwords();

// Content tokens of a text under the synthetic rules: tokenize, drop
// stopwords, keep first occurrences only.
std::vector<std::string> content_tokens(std::string_view text);

// Deterministic token -> unit vector map. Stream seed is
// FNV-1a64(token) ^ (seed * 0x9e3779b97f4a7c15); each component is
// 2u - 1 with u the next SplitMix64 draw scaled to [0, 1); the vector is
// L2-normalized in double precision.
Eigen::VectorXd token_vector(std::uint64_t seed, std::string_view token, int dimension);

// Readout of a truth-backed answer as (slot, token) pairs before formatting.
struct AnswerTokens {
  QuestionKind kind = QuestionKind::open;
  std::vector<std::pair<Slot, std::string>> tokens;
};

// The perfect-oracle reading of ground truth.
AnswerTokens read_truth(const AttributeTruth& truth, Segment segment, const AnswerTarget& target);
std::string format_answer(const AnswerTokens& answer);

// Synthetic stand-in for the model zoo, defined entirely by a seed and the
// corpus ground truth. Pure and reentrant.
class SyntheticWorld {
 public:
  SyntheticWorld(const CorpusManifest& manifest, std::uint64_t seed, int dimension, double noise_rate = 0.0);

  std::uint64_t seed() const noexcept { return seed_; }
  int dimension() const noexcept { return dimension_; }
  double noise_rate() const noexcept { return noise_rate_; }
  bool segment_support() const noexcept { return segment_support_; }

  const AttributeTruth& truth(std::string_view video_id) const;
  // All tokens seen in a slot across the corpus, sorted.
  const std::vector<std::string>& slot_vocabulary(Slot slot) const;

  Eigen::VectorXd token_vector(std::string_view token) const;
  // Normalized sum of unique token vectors; the null vector for no tokens.
  Eigen::VectorXf embed_tokens(const std::vector<std::string>& tokens) const;
  Eigen::VectorXf null_vector() const;

 private:
  std::uint64_t seed_;
  int dimension_;
  double noise_rate_;
  bool segment_support_;
  std::unordered_map<std::string, AttributeTruth> truth_;
  std::map<Slot, std::vector<std::string>> vocabulary_;
};

class SyntheticGateway final : public ModelGateway {
 public:
  explicit SyntheticGateway(std::shared_ptr<const SyntheticWorld> world);

  const SyntheticWorld& world() const noexcept { return *world_; }

  int dimension() const override;
  Eigen::VectorXf embed_text(std::string_view text) const override;
  Eigen::VectorXf embed_video(std::string_view video_id, Segment segment) const override;
  std::string vqa(std::string_view video_id, std::string_view question, Segment segment) const override;
  std::string caption(std::string_view video_id) const override;
  double itm(std::string_view video_id, std::string_view text) const override;
  std::string lm_generate(std::string_view prompt, int max_tokens) const override;

 private:
  const AttributeTruth& segment_truth(std::string_view video_id, Segment segment, std::string_view endpoint) const;
  std::shared_ptr<const SyntheticWorld> world_;
};

std::string synthetic_caption(const AttributeTruth& truth);

// The synthetic language model. Question prompts (recognized by the
// "What question would you ask" phrase) get a slot question chosen by
// FNV-1a of the prompt among slots not yet asked in it; caption-conditioned
// prompts restrict the choice to slots whose caption words are missing from
// the query. Caption-answer prompts are answered from the caption text.
std::string synthetic_lm(std::string_view prompt);

// JSON over HTTP client for the /v1 wire protocol.
class RemoteGateway final : public ModelGateway {
 public:
  struct Options {
    std::string base_url;
    int dimension = 256;
    double timeout_s = 30.0;
    int max_concurrency = 8;
    int attempts = 3;
    std::chrono::milliseconds backoff{50};
  };

  explicit RemoteGateway(Options options);
  ~RemoteGateway() override;

  int dimension() const override;
  Eigen::VectorXf embed_text(std::string_view text) const override;
  Eigen::VectorXf embed_video(std::string_view video_id, Segment segment) const override;
  std::string vqa(std::string_view video_id, std::string_view question, Segment segment) const override;
  std::string caption(std::string_view video_id) const override;
  double itm(std::string_view video_id, std::string_view text) const override;
  std::string lm_generate(std::string_view prompt, int max_tokens) const override;

 private:
  nlohmann::json post(const std::string& path, const nlohmann::json& body) const;
  Eigen::VectorXf vector_field(const nlohmann::json& response, const std::string& path) const;

  Options options_;
  mutable std::counting_semaphore<1024> slots_;
};

// Adds a fixed sleep before every call; used by timing studies.
class DelayGateway final : public ModelGateway {
 public:
  DelayGateway(const ModelGateway& inner, std::chrono::microseconds delay) : inner_(inner), delay_(delay) {}

  int dimension() const override { return inner_.dimension(); }
  Eigen::VectorXf embed_text(std::string_view text) const override;
  Eigen::VectorXf embed_video(std::string_view video_id, Segment segment) const override;
  std::string vqa(std::string_view video_id, std::string_view question, Segment segment) const override;
  std::string caption(std::string_view video_id) const override;
  double itm(std::string_view video_id, std::string_view text) const override;
  std::string lm_generate(std::string_view prompt, int max_tokens) const override;

 private:
  void wait() const;
  const ModelGateway& inner_;
  std::chrono::microseconds delay_;
};

std::unique_ptr<ModelGateway> make_gateway(const CorpusManifest& manifest);

// Mounts the /v1 endpoints on `server`, answering from `gateway`.
void mount_provider_routes(httplib::Server& server, const ModelGateway& gateway);

}  // namespace iviq
