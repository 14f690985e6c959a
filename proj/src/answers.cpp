#include "iviq/answers.hpp"

#include "iviq/gateway.hpp"

namespace iviq {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void check_deadline(const AnswerRequest& req) {
  if (!(req.deadline_s > 0)) throw ValidationError("answer deadline must be > 0");
}

AnswerResult finish(const AnswerRequest& req, std::string raw, Clock::time_point start, std::string_view provider,
                    std::string_view endpoint) {
  const double latency = seconds_since(start);
  if (latency > req.deadline_s) {
    throw TimeoutError(std::string(provider) + ": deadline of " + std::to_string(req.deadline_s) +
                       " s exceeded");
  }
  std::string answer = text::normalize_answer(raw);
  if (answer.empty()) throw ProviderError(std::string(endpoint), "empty answer");
  return {std::move(answer), latency, std::string(provider)};
}

}  // namespace

std::string render_cap_lm_prompt(std::string_view caption, std::string_view question) {
  std::string out(kCapLmPromptTemplate);
  const std::string_view caption_key = "{caption}";
  out.replace(out.find(caption_key), caption_key.size(), caption);
  const std::string_view question_key = "{question}";
  out.replace(out.rfind(question_key), question_key.size(), question);
  return out;
}

AnswerResult answer_videoqa(const AnswerRequest& req, const ModelGateway& gateway) {
  check_deadline(req);
  const auto start = Clock::now();
  std::string raw = gateway.vqa(req.subject, req.question.text, req.question.segment);
  return finish(req, std::move(raw), start, "videoqa", "/v1/vqa");
}

AnswerResult answer_cap_lm(const AnswerRequest& req, const ModelGateway& gateway) {
  check_deadline(req);
  // Captions describe the whole clip; a segment-scoped question reaches the
  // language model only through its prefixed text.
  const auto start = Clock::now();
  std::string caption;
  try {
    caption = gateway.caption(req.subject);
  } catch (const ProviderError&) {
    throw;
  } catch (const Error& e) {
    throw ProviderError("/v1/caption", e.what());
  }
  std::string raw;
  try {
    raw = gateway.lm_generate(render_cap_lm_prompt(caption, req.question.text), 16);
  } catch (const ProviderError&) {
    throw;
  } catch (const Error& e) {
    throw ProviderError("/v1/lm/generate", e.what());
  }
  return finish(req, std::move(raw), start, "cap_lm", "/v1/lm/generate");
}

AnswerResult answer_scripted(const AnswerRequest& req, const AttributeTruth& truth) {
  check_deadline(req);
  const auto start = Clock::now();
  const Segment segment = req.question.segment;
  if (!truth.segments.contains(segment)) {
    throw CapabilityError("scripted: no truth for segment " + std::string(to_string(segment)) + " of '" +
                          req.subject + "'");
  }
  std::string raw = format_answer(read_truth(truth, segment, answer_target(req.question)));
  return finish(req, std::move(raw), start, "scripted", "scripted");
}

ScriptedAnswerer::ScriptedAnswerer(const CorpusManifest& manifest) {
  for (const auto& v : manifest.videos) {
    if (v.truth) truth_.emplace(v.video_id, *v.truth);
  }
}

AnswerResult ScriptedAnswerer::answer(const AnswerRequest& req) {
  const auto it = truth_.find(req.subject);
  if (it == truth_.end()) throw NotFoundError("scripted: no truth for '" + req.subject + "'");
  return answer_scripted(req, it->second);
}

// --- human relay ------------------------------------------------------------

HumanRelay::Slot& HumanRelay::slot(const std::string& session_id) {
  const auto it = slots_.find(session_id);
  if (it == slots_.end()) throw NotFoundError("relay: unknown session '" + session_id + "'");
  return it->second;
}

void HumanRelay::attach(const std::string& session_id) {
  std::lock_guard lock(mutex_);
  slots_[session_id].attached = true;
}

void HumanRelay::detach(const std::string& session_id) {
  {
    std::lock_guard lock(mutex_);
    slot(session_id).attached = false;
  }
  cv_.notify_all();
}

void HumanRelay::ask(const std::string& session_id, const Question& question) {
  std::lock_guard lock(mutex_);
  auto& s = slot(session_id);
  if (s.question) throw ValidationError("relay: session '" + session_id + "' already has a pending question");
  s.question = question;
  s.asked_at = Clock::now();
  s.answer.reset();
}

void HumanRelay::deliver(const std::string& session_id, std::string_view answer) {
  std::string normalized = text::normalize_answer(answer);
  {
    std::lock_guard lock(mutex_);
    auto& s = slot(session_id);
    if (!s.question) throw ValidationError("relay: session '" + session_id + "' has no pending question");
    if (normalized.empty()) throw ValidationError("relay: empty answer");
    s.answer = std::move(normalized);
    s.answered_at = Clock::now();
  }
  cv_.notify_all();
}

bool HumanRelay::has_pending(const std::string& session_id) const {
  std::lock_guard lock(mutex_);
  const auto it = slots_.find(session_id);
  return it != slots_.end() && it->second.question.has_value();
}

std::optional<Question> HumanRelay::pending(const std::string& session_id) const {
  std::lock_guard lock(mutex_);
  const auto it = slots_.find(session_id);
  if (it == slots_.end()) return std::nullopt;
  return it->second.question;
}

void HumanRelay::forget(const std::string& session_id) {
  std::lock_guard lock(mutex_);
  slots_.erase(session_id);
}

AnswerResult HumanRelay::await(const std::string& session_id, double deadline_s) {
  if (!(deadline_s > 0)) throw ValidationError("answer deadline must be > 0");
  std::unique_lock lock(mutex_);
  const auto until = Clock::now() + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(deadline_s));
  auto& s = slot(session_id);
  if (!s.question) throw ValidationError("relay: session '" + session_id + "' has no pending question");
  const bool ready = cv_.wait_until(lock, until, [&] { return s.answer.has_value() || !s.attached; });
  if (s.answer) {
    AnswerResult r{*s.answer, std::chrono::duration<double>(s.answered_at - s.asked_at).count(), "human"};
    s.answer.reset();
    s.question.reset();
    return r;
  }
  if (!s.attached) throw DetachedError("relay: session '" + session_id + "' detached");
  (void)ready;
  throw TimeoutError("human: deadline of " + std::to_string(deadline_s) + " s exceeded");
}

AnswerResult answer_human(const AnswerRequest& req, HumanRelay& relay) {
  return relay.await(req.subject, req.deadline_s);
}

}  // namespace iviq
