#include "iviq/service.hpp"

#include <httplib.h>

#include <cstdio>
#include <random>

namespace iviq {

using nlohmann::json;

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view code, std::string_view message) {
  send_json(res, status, {{"error", {{"code", code}, {"message", message}}}});
}

json question_json(const Question& q) {
  return {{"text", q.text}, {"kind", to_string(q.kind)}, {"segment", to_string(q.segment)}};
}

// Maps library errors onto the API's status codes.
void send_exception(httplib::Response& res, const std::exception& e) {
  if (dynamic_cast<const CapabilityError*>(&e) != nullptr) return send_error(res, 400, "capability", e.what());
  if (dynamic_cast<const ValidationError*>(&e) != nullptr) return send_error(res, 400, "bad_request", e.what());
  if (dynamic_cast<const NotFoundError*>(&e) != nullptr) return send_error(res, 400, "not_found", e.what());
  if (dynamic_cast<const ProviderError*>(&e) != nullptr) return send_error(res, 502, "provider_error", e.what());
  if (dynamic_cast<const TimeoutError*>(&e) != nullptr) return send_error(res, 504, "timeout", e.what());
  send_error(res, 500, "internal", e.what());
}

}  // namespace

Engine::Engine(CorpusManifest m, std::unique_ptr<ModelGateway> g, EmbeddingMatrix i, ObjectLexicon lexicon,
               int itm_parallelism)
    : manifest(std::move(m)), gateway(std::move(g)), index(std::move(i)) {
  retriever = std::make_unique<Retriever>(manifest, index, *gateway, std::move(lexicon), itm_parallelism);
}

std::string new_session_id() {
  std::random_device rd;
  std::string out;
  for (int i = 0; i < 4; ++i) {
    char buf[9];
    std::snprintf(buf, sizeof buf, "%08x", static_cast<unsigned>(rd()));
    out += buf;
  }
  return out;
}

RetrievalService::RetrievalService(Options options) : options_(std::move(options)) {}

void RetrievalService::attach(std::shared_ptr<const Engine> engine) {
  std::unique_lock lock(mutex_);
  engine_ = std::move(engine);
}

bool RetrievalService::ready() const { return engine() != nullptr; }

std::shared_ptr<const Engine> RetrievalService::engine() const {
  std::shared_lock lock(mutex_);
  return engine_;
}

std::shared_ptr<RetrievalService::LiveSession> RetrievalService::find(const std::string& id) const {
  std::shared_lock lock(mutex_);
  const auto it = sessions_.find(id);
  return it == sessions_.end() ? nullptr : it->second;
}

json RetrievalService::top_slice(const RankedList& list) const {
  const auto e = engine();
  json top = json::array();
  for (std::size_t i = 0; i < std::min(options_.top_n, list.size()); ++i) {
    const auto& entry = list.entries[i];
    const auto* video = e->manifest.find(entry.video_id);
    json j = {{"video_id", entry.video_id},
              {"score", entry.cosine_score},
              {"media_uri", video != nullptr ? video->media_uri : std::string()}};
    if (entry.itm_score) j["itm_score"] = *entry.itm_score;
    top.push_back(std::move(j));
  }
  return top;
}

void RetrievalService::mount(httplib::Server& server) {
  server.Get("/api/healthz", [this](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, {{"status", ready() ? "ok" : "loading"}});
  });

  server.Post("/api/sessions", [this](const httplib::Request& req, httplib::Response& res) {
    const auto e = engine();
    if (!e) return send_error(res, 503, "loading", "index not loaded");
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::parse_error&) {
      return send_error(res, 400, "bad_request", "body is not JSON");
    }
    if (!body.is_object() || !body.contains("query") || !body["query"].is_string()) {
      return send_error(res, 400, "bad_request", "missing string field 'query'");
    }
    try {
      SessionConfig config = apply_overrides(options_.defaults, body.value("config", json::object()));
      std::optional<std::string> target;
      if (body.contains("target") && !body["target"].is_null()) target = body["target"].get<std::string>();
      auto live = std::make_shared<LiveSession>();
      live->session.emplace(Session::start(body["query"].get<std::string>(), config, *e->retriever, target));
      const std::string id = new_session_id();
      json out = {{"session_id", id}, {"round", 0}, {"top", top_slice(live->session->ranking())}};
      if (target) out["rank"] = live->session->record().trajectory.back();
      {
        std::unique_lock lock(mutex_);
        sessions_.emplace(id, live);
      }
      relay_.attach(id);
      send_json(res, 201, out);
    } catch (const std::exception& ex) {
      send_exception(res, ex);
    }
  });

  server.Post(R"(/api/sessions/([0-9a-f]+)/next)", [this](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    const auto live = find(id);
    if (!live) return send_error(res, 404, "not_found", "unknown session");
    const auto e = engine();
    std::lock_guard lock(live->mutex);
    auto& s = *live->session;
    if (s.pending()) return send_error(res, 409, "pending", "a question is already pending");
    try {
      const auto q = s.propose(*e->retriever);
      if (!q) return send_error(res, 410, "exhausted", "no more questions in this session");
      relay_.ask(id, *q);
      send_json(res, 200, {{"question", question_json(*q)}, {"round", s.rounds_completed() + 1}});
    } catch (const std::exception& ex) {
      send_exception(res, ex);
    }
  });

  server.Post(R"(/api/sessions/([0-9a-f]+)/answer)", [this](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    const auto live = find(id);
    if (!live) return send_error(res, 404, "not_found", "unknown session");
    const auto e = engine();
    std::lock_guard lock(live->mutex);
    auto& s = *live->session;
    if (!s.pending()) return send_error(res, 409, "no_pending", "no pending question");
    std::string answer;
    try {
      const auto body = json::parse(req.body);
      answer = body.at("answer").get<std::string>();
    } catch (const json::exception&) {
      return send_error(res, 422, "empty_answer", "missing string field 'answer'");
    }
    if (text::normalize_answer(answer).empty()) return send_error(res, 422, "empty_answer", "answer is empty");
    try {
      relay_.deliver(id, answer);
      const AnswerResult result = relay_.await(id, s.record().config.answer_deadline_s);
      const auto before = s.record().trajectory;
      try {
        s.complete(*e->retriever, result);
      } catch (...) {
        // Keep the turn open so the client can resubmit.
        relay_.ask(id, *s.pending());
        throw;
      }
      json out = {{"round", s.rounds_completed()}, {"top", top_slice(s.ranking())}};
      const auto& after = s.record().trajectory;
      if (!before.empty() && !after.empty()) {
        out["rank"] = after.back();
        out["rank_delta"] = before.back() - after.back();
      }
      send_json(res, 200, out);
    } catch (const std::exception& ex) {
      send_exception(res, ex);
    }
  });

  server.Get(R"(/api/sessions/([0-9a-f]+))", [this](const httplib::Request& req, httplib::Response& res) {
    const auto live = find(req.matches[1]);
    if (!live) return send_error(res, 404, "not_found", "unknown session");
    std::lock_guard lock(live->mutex);
    res.status = 200;
    res.set_content(to_json(live->session->record()).dump(), "application/json");
  });

  if (options_.static_dir && std::filesystem::is_directory(*options_.static_dir)) {
    server.set_mount_point("/", options_.static_dir->string());
  }
}

}  // namespace iviq
