// iviq command line: corpus indexing, simulation, evaluation, timing and serving.

#include "iviq/config.hpp"
#include "iviq/eval.hpp"
#include "iviq/gateway.hpp"
#include "iviq/service.hpp"
#include "iviq/world.hpp"

#include <chrono>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <httplib.h>

#ifndef IVIQ_DATA_DIR
#define IVIQ_DATA_DIR "data"
#endif

namespace {

using namespace iviq;

struct Common {
  std::string manifest;
  std::string config;
  std::string provider;
  std::string lexicon = std::string(IVIQ_DATA_DIR) + "/lexicon.txt";
  std::optional<std::uint64_t> seed;
  std::optional<double> noise;
  int parallelism = 4;
};

void add_common(CLI::App* cmd, Common& c, bool manifest_required = true) {
  auto* m = cmd->add_option("--manifest", c.manifest, "corpus manifest (JSON)");
  if (manifest_required) m->required();
  cmd->add_option("--config", c.config, "experiment config (JSON)");
  cmd->add_option("--provider", c.provider, "'synthetic' or a provider base URL");
  cmd->add_option("--seed", c.seed, "synthetic provider seed");
  cmd->add_option("--noise", c.noise, "synthetic VQA noise rate")->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--lexicon", c.lexicon, "object lexicon file");
  cmd->add_option("--parallelism", c.parallelism, "concurrent provider calls or sessions")->check(CLI::PositiveNumber);
}

ExperimentConfig resolve_config(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : load_experiment_config(c.config);
  if (!c.provider.empty()) cfg.provider = c.provider;
  if (c.seed) cfg.seed = c.seed;
  if (c.noise) cfg.noise_rate = c.noise;
  return cfg;
}

std::shared_ptr<Engine> load_engine(const Common& c, const ExperimentConfig& cfg, const std::string& index_path) {
  CorpusManifest manifest = load_manifest(c.manifest);
  apply_provider_overrides(manifest, cfg);
  auto gateway = make_gateway(manifest);
  EmbeddingMatrix index = index_path.empty() ? build_index(manifest, *gateway, c.parallelism)
                                             : load_index(index_path, manifest.dimension);
  return std::make_shared<Engine>(std::move(manifest), std::move(gateway), std::move(index),
                                  ObjectLexicon::load(c.lexicon), c.parallelism);
}

void write_text(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << contents;
}

int run_world(const std::string& out, const WorldSpec& spec, const std::string& lexicon) {
  save_manifest(make_synthetic_manifest(spec, ObjectLexicon::load(lexicon)), out);
  std::cout << "wrote " << out << " (" << spec.videos << " videos)\n";
  return 0;
}

int run_index_build(const Common& c, const std::string& out) {
  const auto cfg = resolve_config(c);
  CorpusManifest manifest = load_manifest(c.manifest);
  apply_provider_overrides(manifest, cfg);
  const auto gateway = make_gateway(manifest);
  const auto index = build_index(manifest, *gateway, c.parallelism);
  save_index(index, out);
  std::cout << "wrote " << out << ": " << index.size() << " rows x " << index.dimension() << "\n";
  return 0;
}

int run_index_verify(const Common& c, const std::string& path) {
  const auto cfg = resolve_config(c);
  CorpusManifest manifest = load_manifest(c.manifest);
  apply_provider_overrides(manifest, cfg);
  const auto stored = load_index(path, manifest.dimension);
  const auto gateway = make_gateway(manifest);
  const auto rebuilt = build_index(manifest, *gateway, c.parallelism);
  if (!(stored == rebuilt)) {
    std::cerr << "index " << path << " does not match the manifest's provider output\n";
    return 1;
  }
  std::cout << "ok: " << stored.size() << " rows verified\n";
  return 0;
}

int run_simulate(const Common& c, const std::string& index_path, std::string query, std::string target,
                 const std::string& generator, const std::string& answerer, const std::string& record_out) {
  auto cfg = resolve_config(c);
  nlohmann::json overrides = nlohmann::json::object();
  if (!generator.empty()) overrides["generator"] = generator;
  if (!answerer.empty()) overrides["answer_provider"] = answerer;
  cfg.session = apply_overrides(cfg.session, overrides);
  const auto engine = load_engine(c, cfg, index_path);
  const auto& captions = engine->manifest.captions;
  if (target.empty()) {
    for (const auto& cap : captions) {
      if (query.empty() || cap.query == query) {
        target = cap.video_id;
        if (query.empty()) query = cap.query;
        break;
      }
    }
  }
  if (query.empty()) throw ValidationError("--query is required when --target is given");
  if (target.empty()) {
    // No known subject: answer about the query's own best match.
    target = Session::start(query, cfg.session, *engine->retriever).ranking().entries.front().video_id;
    std::cout << "no caption matches the query; answering about its top result\n";
  }

  auto provider = make_answer_provider(cfg.session.answer_provider, *engine->gateway, engine->manifest);
  Session session = Session::start(query, cfg.session, *engine->retriever, target);
  std::cout << "query: " << query << "\ntarget: " << target << "  rank " << session.record().trajectory.back()
            << "\n";
  while (session.step(*engine->retriever, *provider) == StepStatus::advanced) {
    const auto& r = session.record().rounds.back();
    std::cout << "Q" << r.round_index << ": " << r.question.text << "\nA" << r.round_index << ": " << r.answer
              << "\n   rank " << session.record().trajectory.back() << "\n";
  }
  std::cout << "final query: " << session.record().query.composed << "\n";
  if (!record_out.empty()) write_text(record_out, to_json(session.record()).dump(2) + "\n");
  return 0;
}

int run_eval(const Common& c, const std::string& index_path, const std::string& out, const std::string& records_dir) {
  auto cfg = resolve_config(c);
  if (!records_dir.empty()) cfg.options.keep_records = true;
  const auto engine = load_engine(c, cfg, index_path);
  const auto report = run_experiment(*engine->retriever, cfg.session, cfg.options);
  emit_report(report, out);
  if (!records_dir.empty()) {
    std::filesystem::create_directories(records_dir);
    for (const auto& s : report.sessions) {
      if (s.record) write_text(records_dir + "/" + s.video_id + ".json", to_json(*s.record).dump(2) + "\n");
    }
  }
  std::cout << report_to_csv(report);
  if (report.failures > 0) std::cerr << report.failures << " session(s) failed\n";
  return 0;
}

int run_timing(const Common& c, const std::string& out, std::size_t sample_n, const std::vector<std::string>& names,
               int delay_ms) {
  const auto cfg = resolve_config(c);
  CorpusManifest manifest = load_manifest(c.manifest);
  apply_provider_overrides(manifest, cfg);
  const auto gateway = make_gateway(manifest);
  const DelayGateway delayed(*gateway, std::chrono::milliseconds(delay_ms));
  std::vector<AnswerProviderKind> kinds;
  for (const auto& n : names) {
    const auto probe = apply_overrides(SessionConfig{}, {{"answer_provider", n}});
    kinds.push_back(probe.answer_provider);
  }
  TimingOptions opts;
  opts.sample_n = sample_n;
  opts.parallelism = c.parallelism;
  const auto rows = timing_study(manifest, delayed, ObjectLexicon::load(c.lexicon), kinds, opts);
  const auto csv = timing_to_csv(rows);
  if (!out.empty()) write_text(out, csv);
  std::cout << csv;
  return 0;
}

int run_serve(const Common& c, const std::string& index_path, int port, const std::string& host,
              const std::string& static_dir) {
  const auto cfg = resolve_config(c);
  RetrievalService::Options opts;
  opts.defaults = cfg.session;
  if (!static_dir.empty()) opts.static_dir = static_dir;
  RetrievalService service(opts);
  httplib::Server server;
  service.mount(server);
  std::thread loader([&] {
    try {
      service.attach(load_engine(c, cfg, index_path));
      std::cerr << "index loaded\n";
    } catch (const std::exception& e) {
      std::cerr << "load failed: " << e.what() << "\n";
      server.stop();
    }
  });
  std::cerr << "listening on " << host << ":" << port << "\n";
  const bool ok = server.listen(host, port);
  loader.join();
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"interactive text-to-video retrieval"};
  app.require_subcommand(1);

  Common common;
  std::string out;
  std::string index_path;

  auto* world = app.add_subcommand("world", "generate a synthetic corpus manifest");
  WorldSpec spec;
  std::string world_lexicon = std::string(IVIQ_DATA_DIR) + "/lexicon.txt";
  bool no_halves = false;
  world->add_option("--out", out, "manifest path")->required();
  world->add_option("--seed", spec.seed);
  world->add_option("--videos", spec.videos);
  world->add_option("--per-object", spec.videos_per_object);
  world->add_option("--living", spec.living_objects, "objects that get actions (default 13)");
  world->add_option("--noise", spec.noise_rate)->check(CLI::Range(0.0, 1.0));
  world->add_option("--dimension", spec.dimension);
  world->add_option("--lexicon", world_lexicon);
  world->add_flag("--no-halves", no_halves);

  auto* index = app.add_subcommand("index", "build or verify an embedding index");
  index->require_subcommand(1);
  auto* build = index->add_subcommand("build", "embed every (video, segment) and save the container");
  add_common(build, common);
  build->add_option("--out", out, "index path")->required();
  auto* verify = index->add_subcommand("verify", "rebuild and compare against a saved container");
  add_common(verify, common);
  verify->add_option("--index", index_path, "index path")->required();

  auto* simulate = app.add_subcommand("simulate", "run one verbose session");
  add_common(simulate, common);
  std::string query, target, generator, answerer, record_out;
  simulate->add_option("--index", index_path);
  simulate->add_option("--query", query);
  simulate->add_option("--target", target);
  simulate->add_option("--generator", generator, "heuristic | auto_text | auto_text_vid");
  simulate->add_option("--answerer", answerer, "videoqa | cap_lm | scripted");
  simulate->add_option("--out", record_out, "write the session record here");

  auto* eval = app.add_subcommand("eval", "run one session per evaluation caption and write a report");
  add_common(eval, common);
  std::string records_dir;
  eval->add_option("--index", index_path);
  eval->add_option("--out", out, "report path stem (.json, .csv, .latency.json)")->required();
  eval->add_option("--records", records_dir, "directory for per-session records");

  auto* timing = app.add_subcommand("timing", "mean answer latency per provider");
  add_common(timing, common);
  std::size_t sample_n = 50;
  std::vector<std::string> providers{"videoqa", "cap_lm"};
  int delay_ms = 0;
  timing->add_option("--out", out, "CSV path");
  timing->add_option("--sample-n", sample_n);
  timing->add_option("--providers", providers)->delimiter(',');
  timing->add_option("--delay-ms", delay_ms, "injected delay per provider call")->check(CLI::NonNegativeNumber);

  auto* serve = app.add_subcommand("serve", "host the session API and UI assets");
  add_common(serve, common);
  int port = 8080;
  std::string host = "127.0.0.1";
  std::string static_dir;
  serve->add_option("--index", index_path);
  serve->add_option("--port", port);
  serve->add_option("--host", host);
  serve->add_option("--static", static_dir, "UI bundle directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*world) {
      spec.halves = !no_halves;
      return run_world(out, spec, world_lexicon);
    }
    if (*build) return run_index_build(common, out);
    if (*verify) return run_index_verify(common, index_path);
    if (*simulate) return run_simulate(common, index_path, query, target, generator, answerer, record_out);
    if (*eval) return run_eval(common, index_path, out, records_dir);
    if (*timing) return run_timing(common, out, sample_n, providers, delay_ms);
    if (*serve) return run_serve(common, index_path, port, host, static_dir);
  } catch (const iviq::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
