#pragma once

#include <chrono>
#include <condition_variable>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>

#include "iviq/corpus.hpp"
#include "iviq/question.hpp"

namespace iviq {

class ModelGateway;

struct AnswerRequest {
  // Target video id for simulated answerers, session id for the human relay.
  std::string subject;
  Question question;
  double deadline_s = 30.0;
};

struct AnswerResult {
  std::string answer;
  double latency_s = 0.0;
  std::string provider;
};

// Simulation of the retrieval baseline's answerer: caption the video, then
// ask the language model. Not the original system, only its two-call shape.
inline constexpr std::string_view kCapLmPromptTemplate =
    "Answer the question based on the description. Description: {caption} Question: {question}";

std::string render_cap_lm_prompt(std::string_view caption, std::string_view question);

AnswerResult answer_videoqa(const AnswerRequest& req, const ModelGateway& gateway);
AnswerResult answer_cap_lm(const AnswerRequest& req, const ModelGateway& gateway);
AnswerResult answer_scripted(const AnswerRequest& req, const AttributeTruth& truth);

class DetachedError : public Error {
 public:
  using Error::Error;
};

// Hands generated questions to a person and their answers back to the
// waiting session. At most one pending question per session.
class HumanRelay {
 public:
  using Clock = std::chrono::steady_clock;

  void attach(const std::string& session_id);
  // Wakes any waiter with DetachedError; the pending question is kept so the
  // session can resume after attach().
  void detach(const std::string& session_id);

  void ask(const std::string& session_id, const Question& question);
  // Rejects empty answers; the question stays pending.
  void deliver(const std::string& session_id, std::string_view answer);
  bool has_pending(const std::string& session_id) const;
  std::optional<Question> pending(const std::string& session_id) const;
  void forget(const std::string& session_id);

  // Blocks until an answer is delivered or the deadline passes.
  AnswerResult await(const std::string& session_id, double deadline_s);

 private:
  struct Slot {
    bool attached = true;
    std::optional<Question> question;
    Clock::time_point asked_at{};
    std::optional<std::string> answer;
    Clock::time_point answered_at{};
  };

  Slot& slot(const std::string& session_id);

  mutable std::mutex mutex_;
  std::condition_variable cv_;
  std::unordered_map<std::string, Slot> slots_;
};

AnswerResult answer_human(const AnswerRequest& req, HumanRelay& relay);

// Uniform answering interface the session machine talks to.
class AnswerProvider {
 public:
  virtual ~AnswerProvider() = default;
  virtual std::string_view tag() const = 0;
  virtual AnswerResult answer(const AnswerRequest& req) = 0;
};

class VideoQaAnswerer final : public AnswerProvider {
 public:
  explicit VideoQaAnswerer(const ModelGateway& gateway) : gateway_(gateway) {}
  std::string_view tag() const override { return "videoqa"; }
  AnswerResult answer(const AnswerRequest& req) override { return answer_videoqa(req, gateway_); }

 private:
  const ModelGateway& gateway_;
};

class CapLmAnswerer final : public AnswerProvider {
 public:
  explicit CapLmAnswerer(const ModelGateway& gateway) : gateway_(gateway) {}
  std::string_view tag() const override { return "cap_lm"; }
  AnswerResult answer(const AnswerRequest& req) override { return answer_cap_lm(req, gateway_); }

 private:
  const ModelGateway& gateway_;
};

class ScriptedAnswerer final : public AnswerProvider {
 public:
  explicit ScriptedAnswerer(const CorpusManifest& manifest);
  std::string_view tag() const override { return "scripted"; }
  AnswerResult answer(const AnswerRequest& req) override;

 private:
  std::map<std::string, AttributeTruth, std::less<>> truth_;
};

class HumanAnswerer final : public AnswerProvider {
 public:
  explicit HumanAnswerer(HumanRelay& relay) : relay_(relay) {}
  std::string_view tag() const override { return "human"; }
  AnswerResult answer(const AnswerRequest& req) override { return answer_human(req, relay_); }

 private:
  HumanRelay& relay_;
};

}  // namespace iviq
