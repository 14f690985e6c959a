#include "iviq/gateway.hpp"

#include <algorithm>
#include <thread>

#include <httplib.h>

namespace iviq {

namespace {

struct CaptionParts {
  std::string object;
  std::string action;
  std::string scene;
};

// Inverse of synthetic_caption: "a {object}[ {action}][ in the {scene}]".
std::optional<CaptionParts> parse_caption(std::string_view caption) {
  auto words = text::tokenize(caption);
  if (words.size() < 2 || words[0] != "a") return std::nullopt;
  CaptionParts parts;
  parts.object = words[1];
  std::size_t i = 2;
  if (i < words.size() && words[i] != "in") parts.action = words[i++];
  if (i + 2 < words.size() && words[i] == "in" && words[i + 1] == "the") {
    parts.scene = words[i + 2];
    i += 3;
  }
  if (i != words.size()) return std::nullopt;
  return parts;
}

std::string_view between(std::string_view s, std::string_view open, std::string_view close) {
  const auto b = s.find(open);
  if (b == std::string_view::npos) return {};
  const auto start = b + open.size();
  const auto e = close.empty() ? s.size() : s.find(close, start);
  if (e == std::string_view::npos) return s.substr(start);
  return s.substr(start, e - start);
}

std::string answer_from_caption(std::string_view caption, std::string_view question) {
  const auto parts = parse_caption(caption);
  const auto fallback = text::join(content_tokens(caption), " ");
  if (!parts) return fallback.empty() ? "none" : fallback;
  const auto target = classify_question(question);
  switch (target.kind) {
    case QuestionKind::action:
      if (!parts->action.empty()) return parts->action;
      break;
    case QuestionKind::scene:
      if (!parts->scene.empty()) return parts->scene;
      break;
    case QuestionKind::object_identify:
      return "a " + parts->object;
    case QuestionKind::object_inventory:
      return "none";
    case QuestionKind::open:
      break;
  }
  return fallback.empty() ? "none" : fallback;
}

constexpr Slot kQuestionSlots[] = {Slot::action, Slot::scene, Slot::object, Slot::color, Slot::material};

std::string generate_question(std::string_view prompt) {
  const bool with_captions = prompt.find("described as follows: ") != std::string_view::npos;
  std::string_view query;
  std::string_view captions;
  if (with_captions) {
    captions = between(prompt, "descriptions: ", ". What question");
    query = between(prompt, "described as follows: ", "");
    if (!query.empty() && query.back() == '?') query.remove_suffix(1);
  } else {
    query = between(prompt, "descriptions ", ", What question");
  }
  const std::string lowered_query = text::to_lower(query);

  std::vector<Slot> unasked;
  for (const Slot s : kQuestionSlots) {
    if (lowered_query.find(phrasing::slot_question(s)) == std::string::npos) unasked.push_back(s);
  }

  std::vector<Slot> candidates;
  if (with_captions) {
    const auto query_tokens = content_tokens(query);
    const auto missing = [&](const std::string& token) {
      return !token.empty() && std::find(query_tokens.begin(), query_tokens.end(), token) == query_tokens.end();
    };
    std::set<Slot> informative;
    std::string_view rest = captions;
    while (!rest.empty()) {
      const auto cut = rest.find("; ");
      const auto one = rest.substr(0, cut);
      rest = cut == std::string_view::npos ? std::string_view{} : rest.substr(cut + 2);
      if (const auto parts = parse_caption(one)) {
        if (missing(parts->object)) informative.insert(Slot::object);
        if (missing(parts->action)) informative.insert(Slot::action);
        if (missing(parts->scene)) informative.insert(Slot::scene);
      }
    }
    for (const Slot s : unasked) {
      if (informative.contains(s)) candidates.push_back(s);
    }
  }
  if (candidates.empty()) candidates = unasked;
  if (candidates.empty()) candidates.assign(std::begin(kQuestionSlots), std::end(kQuestionSlots));
  const Slot pick = candidates[fnv1a64(prompt) % candidates.size()];
  return phrasing::slot_question(pick);
}

std::string truncate_words(const std::string& s, int max_tokens) {
  if (max_tokens <= 0) return s;
  std::size_t words = 0;
  bool in_word = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const bool space = s[i] == ' ';
    if (!space && !in_word && ++words > static_cast<std::size_t>(max_tokens)) return text::trim(s.substr(0, i));
    in_word = !space;
  }
  return s;
}

}  // namespace

const std::set<std::string, std::less<>>& synthetic_stopwords() {
  static const std::set<std::string, std::less<>> words = {
      "a",       "about",  "action",  "an",       "and",       "any",    "are",     "as",     "at",
      "be",      "being",  "by",      "clip",     "color",     "described", "did",  "do",     "does",
      "doing",   "else",   "first",   "follows",  "for",       "from",   "half",    "happening", "he",
      "her",     "here",   "his",     "how",      "in",        "into",   "is",      "it",     "its",
      "material", "none",  "object",  "objects",  "of",        "on",     "onto",    "or",     "other",
      "others",  "scene",  "second",  "she",      "some",      "someone", "something", "that", "the",
      "their",   "them",   "there",   "these",    "they",      "this",   "those",   "to",     "video",
      "videos",  "was",    "were",    "what",     "when",      "where",  "which",   "who",    "why",
      "with",
  };
  return words;
}

std::vector<std::string> content_tokens(std::string_view s) {
  const auto& stop = synthetic_stopwords();
  std::vector<std::string> out;
  for (auto& t : text::tokenize(s)) {
    if (stop.contains(t)) continue;
    if (std::find(out.begin(), out.end(), t) == out.end()) out.push_back(std::move(t));
  }
  return out;
}

Eigen::VectorXd token_vector(std::uint64_t seed, std::string_view token, int dimension) {
  SplitMix64 rng(mix_seed(seed, token));
  Eigen::VectorXd v(dimension);
  for (int i = 0; i < dimension; ++i) v[i] = 2.0 * rng.uniform() - 1.0;
  return v / v.norm();
}

AnswerTokens read_truth(const AttributeTruth& truth, Segment segment, const AnswerTarget& target) {
  AnswerTokens out;
  out.kind = target.kind;
  const auto add = [&](Slot slot) {
    for (const auto& t : truth.tokens(segment, slot)) out.tokens.emplace_back(slot, t);
  };
  switch (target.kind) {
    case QuestionKind::action:
      add(Slot::action);
      break;
    case QuestionKind::scene:
      add(Slot::scene);
      break;
    case QuestionKind::object_identify: {
      const auto& objects = truth.tokens(segment, Slot::object);
      const auto& extras = truth.tokens(segment, Slot::extra_objects);
      if (!objects.empty()) {
        out.tokens.emplace_back(Slot::object, objects.front());
      } else if (!extras.empty()) {
        out.tokens.emplace_back(Slot::extra_objects, extras.front());
      }
      break;
    }
    case QuestionKind::object_inventory: {
      const auto& objects = truth.tokens(segment, Slot::object);
      for (std::size_t i = 1; i < objects.size(); ++i) out.tokens.emplace_back(Slot::object, objects[i]);
      add(Slot::extra_objects);
      break;
    }
    case QuestionKind::open:
      if (target.slot) {
        add(*target.slot);
      } else {
        for (const Slot s : kAllSlots) add(s);
      }
      break;
  }
  return out;
}

std::string format_answer(const AnswerTokens& answer) {
  if (answer.tokens.empty()) return "none";
  std::vector<std::string> words;
  for (const auto& [slot, t] : answer.tokens) words.push_back(t);
  switch (answer.kind) {
    case QuestionKind::object_identify:
      return "a " + words.front();
    case QuestionKind::object_inventory:
      return text::join(words, ", ");
    case QuestionKind::open:
      // A slot-specific open question reads out one slot; the general one
      // lists every token of the segment.
      if (std::all_of(answer.tokens.begin(), answer.tokens.end(),
                      [&](const auto& p) { return p.first == answer.tokens.front().first; })) {
        return text::join(words, " and ");
      }
      return text::join(words, " ");
    default:
      return text::join(words, " and ");
  }
}

SyntheticWorld::SyntheticWorld(const CorpusManifest& manifest, std::uint64_t seed, int dimension, double noise_rate)
    : seed_(seed), dimension_(dimension), noise_rate_(noise_rate), segment_support_(manifest.segment_support) {
  if (dimension < 8) throw ValidationError("synthetic world dimension must be >= 8");
  std::map<Slot, std::set<std::string>> vocab;
  for (const auto& v : manifest.videos) {
    AttributeTruth truth = v.truth.value_or(AttributeTruth{});
    truth.segments.try_emplace(Segment::whole);
    for (const auto& [segment, slots] : truth.segments) {
      for (const auto& [slot, tokens] : slots) vocab[slot].insert(tokens.begin(), tokens.end());
    }
    truth_.emplace(v.video_id, std::move(truth));
  }
  for (const Slot s : kAllSlots) vocabulary_[s].assign(vocab[s].begin(), vocab[s].end());
}

const AttributeTruth& SyntheticWorld::truth(std::string_view video_id) const {
  const auto it = truth_.find(std::string(video_id));
  if (it == truth_.end()) throw NotFoundError("unknown video '" + std::string(video_id) + "'");
  return it->second;
}

const std::vector<std::string>& SyntheticWorld::slot_vocabulary(Slot slot) const { return vocabulary_.at(slot); }

Eigen::VectorXd SyntheticWorld::token_vector(std::string_view token) const {
  return iviq::token_vector(seed_, token, dimension_);
}

Eigen::VectorXf SyntheticWorld::null_vector() const {
  Eigen::VectorXf v = Eigen::VectorXf::Zero(dimension_);
  v[0] = 1.0F;
  return v;
}

Eigen::VectorXf SyntheticWorld::embed_tokens(const std::vector<std::string>& tokens) const {
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(dimension_);
  std::set<std::string_view> seen;
  for (const auto& t : tokens) {
    if (seen.insert(t).second) sum += token_vector(t);
  }
  const double norm = sum.norm();
  if (norm == 0.0) return null_vector();
  return (sum / norm).cast<float>();
}

SyntheticGateway::SyntheticGateway(std::shared_ptr<const SyntheticWorld> world) : world_(std::move(world)) {}

int SyntheticGateway::dimension() const { return world_->dimension(); }

const AttributeTruth& SyntheticGateway::segment_truth(std::string_view video_id, Segment segment,
                                                      std::string_view endpoint) const {
  const auto& truth = world_->truth(video_id);
  if (segment != Segment::whole && !(world_->segment_support() && truth.has_halves())) {
    throw CapabilityError(std::string(endpoint) + ": segment " + std::string(to_string(segment)) +
                          " is not available for '" + std::string(video_id) + "'");
  }
  return truth;
}

Eigen::VectorXf SyntheticGateway::embed_text(std::string_view text) const {
  return world_->embed_tokens(content_tokens(text));
}

Eigen::VectorXf SyntheticGateway::embed_video(std::string_view video_id, Segment segment) const {
  const auto& truth = segment_truth(video_id, segment, "embed_video");
  return world_->embed_tokens(truth.all_tokens(segment));
}

std::string SyntheticGateway::vqa(std::string_view video_id, std::string_view question, Segment segment) const {
  const auto& truth = segment_truth(video_id, segment, "vqa");
  AnswerTokens answer = read_truth(truth, segment, classify_question(question));
  if (world_->noise_rate() > 0.0) {
    for (std::size_t i = 0; i < answer.tokens.size(); ++i) {
      auto& [slot, token] = answer.tokens[i];
      const std::string key = std::string(video_id) + '\x1f' + std::string(question) + '\x1f' +
                              std::string(to_string(segment)) + '\x1f' + std::to_string(i);
      SplitMix64 rng(mix_seed(world_->seed(), key));
      if (rng.uniform() >= world_->noise_rate()) continue;
      std::vector<std::string> distractors;
      for (const auto& t : world_->slot_vocabulary(slot)) {
        if (t != token) distractors.push_back(t);
      }
      if (!distractors.empty()) token = distractors[rng.below(distractors.size())];
    }
  }
  return format_answer(answer);
}

std::string synthetic_caption(const AttributeTruth& truth) {
  const auto first = [&](Slot s) -> std::string {
    const auto& t = truth.tokens(Segment::whole, s);
    return t.empty() ? std::string() : t.front();
  };
  std::string object = first(Slot::object);
  if (object.empty()) object = first(Slot::extra_objects);
  if (object.empty()) object = "thing";
  std::string out = "a " + object;
  if (const auto action = first(Slot::action); !action.empty()) out += " " + action;
  if (const auto scene = first(Slot::scene); !scene.empty()) out += " in the " + scene;
  return out;
}

std::string SyntheticGateway::caption(std::string_view video_id) const {
  return synthetic_caption(world_->truth(video_id));
}

double SyntheticGateway::itm(std::string_view video_id, std::string_view text) const {
  const auto video = world_->truth(video_id).all_tokens(Segment::whole);
  const auto query = content_tokens(text);
  const std::set<std::string> a(query.begin(), query.end());
  const std::set<std::string> b(video.begin(), video.end());
  std::size_t inter = 0;
  for (const auto& t : a) inter += b.contains(t) ? 1 : 0;
  const std::size_t uni = a.size() + b.size() - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::string synthetic_lm(std::string_view prompt) {
  if (prompt.find("What question would you ask") != std::string_view::npos) return generate_question(prompt);
  if (prompt.find("Description: ") != std::string_view::npos && prompt.find(" Question: ") != std::string_view::npos) {
    return answer_from_caption(between(prompt, "Description: ", " Question: "), between(prompt, " Question: ", ""));
  }
  return "what is happening in the video?";
}

std::string SyntheticGateway::lm_generate(std::string_view prompt, int max_tokens) const {
  return truncate_words(synthetic_lm(prompt), max_tokens);
}

// --- remote ---------------------------------------------------------------

RemoteGateway::RemoteGateway(Options options) : options_(std::move(options)), slots_(std::max(1, options_.max_concurrency)) {
  if (options_.dimension < 8) throw ValidationError("remote provider dimension must be >= 8");
  if (!(options_.timeout_s > 0)) throw ValidationError("remote provider timeout must be > 0");
}

RemoteGateway::~RemoteGateway() = default;

int RemoteGateway::dimension() const { return options_.dimension; }

nlohmann::json RemoteGateway::post(const std::string& path, const nlohmann::json& body) const {
  slots_.acquire();
  struct Release {
    std::counting_semaphore<1024>& s;
    ~Release() { s.release(); }
  } release{slots_};

  const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(
      std::chrono::duration<double>(options_.timeout_s));
  const int attempts = std::max(1, options_.attempts);
  std::string last_error;
  for (int attempt = 1; attempt <= attempts; ++attempt) {
    httplib::Client client(options_.base_url);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    const auto res = client.Post(path, body.dump(), "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
    } else if (res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
    } else if (res->status >= 400) {
      std::string message = "HTTP " + std::to_string(res->status);
      try {
        const auto err = nlohmann::json::parse(res->body).at("error");
        message += " " + err.value("code", std::string()) + ": " + err.value("message", std::string());
      } catch (const nlohmann::json::exception&) {
      }
      throw ProviderError(path, message, attempt, res->status);
    } else {
      try {
        return nlohmann::json::parse(res->body);
      } catch (const nlohmann::json::exception&) {
        throw ProviderError(path, "malformed response: body is not JSON", attempt, res->status);
      }
    }
    if (attempt < attempts) std::this_thread::sleep_for(options_.backoff * (1 << (attempt - 1)));
  }
  throw ProviderError(path, last_error, attempts);
}

namespace {

template <typename T>
T field(const nlohmann::json& response, const char* name, const std::string& path) {
  try {
    return response.at(name).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ProviderError(path, std::string("malformed response: missing or invalid \"") + name + "\"");
  }
}

}  // namespace

Eigen::VectorXf RemoteGateway::vector_field(const nlohmann::json& response, const std::string& path) const {
  const auto values = field<std::vector<float>>(response, "vector", path);
  if (static_cast<int>(values.size()) != options_.dimension) {
    throw ProviderError(path, "dimension mismatch: got " + std::to_string(values.size()) + ", expected " +
                                  std::to_string(options_.dimension));
  }
  return Eigen::Map<const Eigen::VectorXf>(values.data(), static_cast<Eigen::Index>(values.size()));
}

Eigen::VectorXf RemoteGateway::embed_text(std::string_view text) const {
  const std::string path = "/v1/embed/text";
  return vector_field(post(path, {{"text", text}}), path);
}

Eigen::VectorXf RemoteGateway::embed_video(std::string_view video_id, Segment segment) const {
  const std::string path = "/v1/embed/video";
  return vector_field(post(path, {{"video_id", video_id}, {"segment", to_string(segment)}}), path);
}

std::string RemoteGateway::vqa(std::string_view video_id, std::string_view question, Segment segment) const {
  const std::string path = "/v1/vqa";
  return field<std::string>(
      post(path, {{"video_id", video_id}, {"question", question}, {"segment", to_string(segment)}}), "answer", path);
}

std::string RemoteGateway::caption(std::string_view video_id) const {
  const std::string path = "/v1/caption";
  return field<std::string>(post(path, {{"video_id", video_id}}), "caption", path);
}

double RemoteGateway::itm(std::string_view video_id, std::string_view text) const {
  const std::string path = "/v1/itm";
  return field<double>(post(path, {{"video_id", video_id}, {"text", text}}), "score", path);
}

std::string RemoteGateway::lm_generate(std::string_view prompt, int max_tokens) const {
  const std::string path = "/v1/lm/generate";
  return field<std::string>(post(path, {{"prompt", prompt}, {"max_tokens", max_tokens}}), "text", path);
}

// --- delay decorator --------------------------------------------------------

void DelayGateway::wait() const { std::this_thread::sleep_for(delay_); }

Eigen::VectorXf DelayGateway::embed_text(std::string_view text) const {
  wait();
  return inner_.embed_text(text);
}
Eigen::VectorXf DelayGateway::embed_video(std::string_view video_id, Segment segment) const {
  wait();
  return inner_.embed_video(video_id, segment);
}
std::string DelayGateway::vqa(std::string_view video_id, std::string_view question, Segment segment) const {
  wait();
  return inner_.vqa(video_id, question, segment);
}
std::string DelayGateway::caption(std::string_view video_id) const {
  wait();
  return inner_.caption(video_id);
}
double DelayGateway::itm(std::string_view video_id, std::string_view text) const {
  wait();
  return inner_.itm(video_id, text);
}
std::string DelayGateway::lm_generate(std::string_view prompt, int max_tokens) const {
  wait();
  return inner_.lm_generate(prompt, max_tokens);
}

std::unique_ptr<ModelGateway> make_gateway(const CorpusManifest& manifest) {
  const auto& p = manifest.provider;
  if (p.kind == ProviderDescriptor::Kind::remote) {
    RemoteGateway::Options o;
    o.base_url = p.base_url;
    o.dimension = p.dimension;
    o.timeout_s = p.timeout_s;
    o.max_concurrency = p.max_concurrency;
    return std::make_unique<RemoteGateway>(o);
  }
  return std::make_unique<SyntheticGateway>(
      std::make_shared<const SyntheticWorld>(manifest, p.seed, p.dimension, p.noise_rate));
}

// --- provider routes ---------------------------------------------------------

namespace {

void send_error(httplib::Response& res, int status, std::string_view code, std::string_view message) {
  res.status = status;
  res.set_content(nlohmann::json{{"error", {{"code", code}, {"message", message}}}}.dump(), "application/json");
}

template <typename Fn>
httplib::Server::Handler json_route(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      const auto body = nlohmann::json::parse(req.body);
      res.set_content(fn(body).dump(), "application/json");
    } catch (const nlohmann::json::exception& e) {
      send_error(res, 400, "bad_request", e.what());
    } catch (const NotFoundError& e) {
      send_error(res, 404, "not_found", e.what());
    } catch (const CapabilityError& e) {
      send_error(res, 400, "unsupported_segment", e.what());
    } catch (const ParseError& e) {
      send_error(res, 400, "bad_request", e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "provider_error", e.what());
    }
  };
}

std::vector<float> as_list(const Eigen::VectorXf& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

void mount_provider_routes(httplib::Server& server, const ModelGateway& gateway) {
  server.Post("/v1/embed/text", json_route([&gateway](const nlohmann::json& b) {
                return nlohmann::json{{"vector", as_list(gateway.embed_text(b.at("text").get<std::string>()))}};
              }));
  server.Post("/v1/embed/video", json_route([&gateway](const nlohmann::json& b) {
                const auto segment = segment_from_string(b.value("segment", std::string("whole")));
                return nlohmann::json{
                    {"vector", as_list(gateway.embed_video(b.at("video_id").get<std::string>(), segment))}};
              }));
  server.Post("/v1/caption", json_route([&gateway](const nlohmann::json& b) {
                return nlohmann::json{{"caption", gateway.caption(b.at("video_id").get<std::string>())}};
              }));
  server.Post("/v1/vqa", json_route([&gateway](const nlohmann::json& b) {
                const auto segment = segment_from_string(b.value("segment", std::string("whole")));
                return nlohmann::json{{"answer", gateway.vqa(b.at("video_id").get<std::string>(),
                                                             b.at("question").get<std::string>(), segment)}};
              }));
  server.Post("/v1/itm", json_route([&gateway](const nlohmann::json& b) {
                return nlohmann::json{
                    {"score", gateway.itm(b.at("video_id").get<std::string>(), b.at("text").get<std::string>())}};
              }));
  server.Post("/v1/lm/generate", json_route([&gateway](const nlohmann::json& b) {
                return nlohmann::json{
                    {"text", gateway.lm_generate(b.at("prompt").get<std::string>(), b.value("max_tokens", 32))}};
              }));
}

}  // namespace iviq
