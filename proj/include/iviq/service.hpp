#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>

#include "iviq/dialogue.hpp"
#include "iviq/gateway.hpp"

namespace httplib {
class Server;
}

namespace iviq {

// Everything a live session needs, loaded once. Not movable: the retriever
// keeps references into the manifest, index and gateway.
struct Engine {
  CorpusManifest manifest;
  std::unique_ptr<ModelGateway> gateway;
  EmbeddingMatrix index;
  std::unique_ptr<Retriever> retriever;

  Engine(CorpusManifest m, std::unique_ptr<ModelGateway> g, EmbeddingMatrix i, ObjectLexicon lexicon,
         int itm_parallelism = 4);
  Engine(const Engine&) = delete;
  Engine& operator=(const Engine&) = delete;
};

// 128 random bits as 32 lowercase hex digits.
std::string new_session_id();

class RetrievalService {
 public:
  struct Options {
    std::size_t top_n = 10;
    std::optional<std::filesystem::path> static_dir;
    SessionConfig defaults;
  };

  explicit RetrievalService(Options options);

  // Until an engine is attached, session routes answer 503 and healthz
  // reports "loading".
  void attach(std::shared_ptr<const Engine> engine);
  bool ready() const;

  void mount(httplib::Server& server);

 private:
  struct LiveSession {
    std::mutex mutex;
    std::optional<Session> session;
  };

  std::shared_ptr<LiveSession> find(const std::string& id) const;
  std::shared_ptr<const Engine> engine() const;
  nlohmann::json top_slice(const RankedList& list) const;

  Options options_;
  mutable std::shared_mutex mutex_;
  std::shared_ptr<const Engine> engine_;
  std::map<std::string, std::shared_ptr<LiveSession>> sessions_;
  HumanRelay relay_;
};

}  // namespace iviq
