#include <doctest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "test_support.hpp"

using namespace iviq;
using namespace iviq::testing;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct SmallWorld {
  CorpusManifest manifest = make_synthetic_manifest(small_world_spec(), lexicon());
  std::unique_ptr<Engine> engine = make_engine(manifest);
  const Retriever& retriever() const { return *engine->retriever; }
};

}  // namespace

TEST_CASE("compute_metrics examples") {
  const auto m = compute_metrics({1, 5, 12}, 20);
  CHECK(m.recall_at_1 == doctest::Approx(33.33).epsilon(1e-4));
  CHECK(m.recall_at_5 == doctest::Approx(66.67).epsilon(1e-4));
  CHECK(m.recall_at_10 == doctest::Approx(66.67).epsilon(1e-4));
  CHECK(m.median_rank == 5.0);
  CHECK(compute_metrics({5, 6}, 10).median_rank == 5.5);
  const auto perfect = compute_metrics({1, 1, 1}, 3);
  CHECK(perfect.recall_at_1 == 100.0);
  CHECK(perfect.median_rank == 1.0);
  CHECK_THROWS_AS(compute_metrics({}, 10), ValidationError);
  CHECK_THROWS_AS(compute_metrics({11}, 10), ValidationError);
  CHECK_THROWS_AS(compute_metrics({0}, 10), ValidationError);
}

TEST_CASE("compute_metrics equals a brute-force count on 1000 random vectors") {
  std::mt19937_64 rng(17);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t corpus = 1 + rng() % 300;
    std::vector<int> ranks(1 + rng() % 50);
    for (auto& r : ranks) r = 1 + static_cast<int>(rng() % corpus);
    int c1 = 0, c5 = 0, c10 = 0;
    for (const int r : ranks) {
      c1 += r <= 1;
      c5 += r <= 5;
      c10 += r <= 10;
    }
    // Median by counting: the smallest value with at least half the ranks at or below it.
    std::vector<int> s = ranks;
    std::sort(s.begin(), s.end());
    const double median = s.size() % 2 ? s[s.size() / 2] : 0.5 * (s[s.size() / 2 - 1] + s[s.size() / 2]);
    const double n = static_cast<double>(ranks.size());
    const auto m = compute_metrics(ranks, corpus, t);
    CHECK(m.recall_at_1 == 100.0 * c1 / n);
    CHECK(m.recall_at_5 == 100.0 * c5 / n);
    CHECK(m.recall_at_10 == 100.0 * c10 / n);
    CHECK(m.median_rank == median);
    CHECK(m.recall_at_1 <= m.recall_at_5);
    CHECK(m.recall_at_5 <= m.recall_at_10);
    CHECK(m.median_rank >= 1.0);
    CHECK(m.count == ranks.size());
    CHECK(m.round == t);
  }
}

TEST_CASE("max_rounds=0 gives only the baseline snapshot") {
  SmallWorld w;
  SessionConfig c;
  c.max_rounds = 0;
  const auto r = run_experiment(w.retriever(), c);
  REQUIRE(r.rounds.size() == 1);
  CHECK(r.rounds[0].round == 0);
  CHECK(r.rounds[0].count == w.manifest.captions.size());
  const auto csv = report_to_csv(r);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);
}

TEST_CASE("reports are deterministic, including under parallelism") {
  SmallWorld w;
  SessionConfig c;
  const auto seq = report_to_json(run_experiment(w.retriever(), c)).dump();
  CHECK(report_to_json(run_experiment(w.retriever(), c)).dump() == seq);
  ExperimentOptions par;
  par.parallelism = 4;
  CHECK(report_to_json(run_experiment(w.retriever(), c, par)).dump() == seq);
  const auto parsed = nlohmann::json::parse(seq);
  CHECK(parsed.at("schema") == "iviq-report/1");
}

TEST_CASE("interaction improves retrieval on a small world") {
  SmallWorld w;
  const auto r = run_experiment(w.retriever(), {});
  REQUIRE(r.rounds.size() >= 2);
  CHECK(r.rounds.back().recall_at_1 > r.rounds.front().recall_at_1);
  for (const auto& m : r.rounds) {
    CHECK(m.recall_at_1 <= m.recall_at_5);
    CHECK(m.recall_at_5 <= m.recall_at_10);
  }
}

TEST_CASE("round 0 is the same for every generator") {
  SmallWorld w;
  std::optional<MetricsSnapshot> first;
  for (const auto gen : {GeneratorKind::heuristic, GeneratorKind::auto_text, GeneratorKind::auto_text_vid}) {
    SessionConfig c;
    c.generator = gen;
    c.max_rounds = 2;
    const auto r = run_experiment(w.retriever(), c);
    if (!first) first = r.rounds.front();
    CHECK(r.rounds.front() == *first);
  }
}

TEST_CASE("failed sessions are counted and left out of the metrics") {
  auto m = make_synthetic_manifest(small_world_spec(), lexicon());
  const auto g = make_gateway(m);
  const auto index = build_index(m, *g);
  FaultyGateway faulty(*g);
  faulty.fail_vqa_for = m.captions[2].video_id;
  Retriever r(m, index, faulty, lexicon());
  ExperimentOptions o;
  o.limit = 10;
  const auto report = run_experiment(r, {}, o);
  CHECK(report.failures == 1);
  REQUIRE(report.sessions.size() == 10);
  CHECK(report.sessions[2].error);
  CHECK(report.sessions[2].error->find("/v1/vqa") != std::string::npos);
  for (const auto& snap : report.rounds) CHECK(snap.count == 9);
  CHECK(report_to_json(report).at("failures") == 1);
}

TEST_CASE("sessions that stop early carry their last rank forward") {
  SmallWorld w;
  SessionConfig c;
  c.augmentations.ask_object = false;  // living objects get 2 questions, others 1
  ExperimentOptions o;
  o.keep_records = true;
  const auto r = run_experiment(w.retriever(), c, o);
  const std::size_t rounds = r.rounds.size();
  for (std::size_t k = 0; k < rounds; ++k) {
    std::vector<int> ranks;
    for (const auto& s : r.sessions) ranks.push_back(s.ranks[std::min(k, s.ranks.size() - 1)]);
    CHECK(r.rounds[k] == compute_metrics(ranks, w.manifest.videos.size(), static_cast<int>(k)));
  }
}

TEST_CASE("CSV golden file and report files") {
  ExperimentReport r;
  r.rounds = {compute_metrics({1, 5, 12}, 12, 0), compute_metrics({5, 6}, 12, 1), compute_metrics({1, 1}, 12, 2)};
  CHECK(report_to_csv(r) == slurp(std::string(IVIQ_TEST_DATA) + "/golden_report.csv"));

  SmallWorld w;
  SessionConfig c;
  c.max_rounds = 0;
  const auto report = run_experiment(w.retriever(), c);
  const auto dir = temp_dir("eval");
  emit_report(report, dir / "run");
  CHECK(slurp(dir / "run.csv") == report_to_csv(report));
  CHECK(nlohmann::json::parse(slurp(dir / "run.json")) == report_to_json(report));
  CHECK(nlohmann::json::parse(slurp(dir / "run.latency.json")).contains("providers"));
  CHECK_THROWS_AS(emit_report(report, "/nonexistent/dir/run"), IoError);
}

TEST_CASE("timing study") {
  const auto m = make_synthetic_manifest(small_world_spec(), lexicon());
  const auto g = make_gateway(m);
  DelayGateway slow(*g, std::chrono::milliseconds(5));
  TimingOptions o;
  o.sample_n = 5;
  const auto rows = timing_study(m, slow, lexicon(), {AnswerProviderKind::videoqa, AnswerProviderKind::cap_lm}, o);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].provider == "videoqa");
  CHECK(rows[0].errors == 0);
  CHECK(rows[0].answers > 0);
  CHECK(rows[1].mean_s > rows[0].mean_s);
  CHECK(timing_to_csv(rows).rfind("provider,answers,errors,mean_s\n", 0) == 0);
  CHECK(timing_to_json(rows).size() == 2);

  CHECK_THROWS_AS(timing_study(m, *g, lexicon(), {}, o), ValidationError);
  o.sample_n = m.captions.size() + 1;
  CHECK_THROWS_AS(timing_study(m, *g, lexicon(), {AnswerProviderKind::videoqa}, o), ValidationError);
  o.sample_n = 0;
  CHECK_THROWS_AS(timing_study(m, *g, lexicon(), {AnswerProviderKind::videoqa}, o), ValidationError);

  TimingOptions fifty;
  CHECK(fifty.sample_n == 50);

  FaultyGateway faulty(*g);
  faulty.fail_vqa_for = m.captions[0].video_id;
  o.sample_n = 3;
  const auto with_errors = timing_study(m, faulty, lexicon(), {AnswerProviderKind::videoqa}, o);
  CHECK(with_errors[0].errors > 0);
}

TEST_CASE("experiment config") {
  const auto cfg = parse_experiment_config(nlohmann::json::parse(
      R"({"session":{"generator":"auto_text"},"parallelism":3,"limit":5,"seed":9,"noise_rate":0.2})"));
  CHECK(cfg.session.generator == GeneratorKind::auto_text);
  CHECK(cfg.options.parallelism == 3);
  CHECK(cfg.options.limit == 5u);
  CHECK(cfg.seed == 9u);
  CHECK(cfg.noise_rate == 0.2);
  CHECK(parse_experiment_config(to_json(cfg)).session.generator == GeneratorKind::auto_text);

  try {
    parse_experiment_config(nlohmann::json::parse(
        R"({"session":{"max_rounds":99},"parallelism":0,"noise_rate":1.5,"extra":true,"limit":-1})"));
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    for (const char* part : {"max_rounds", "parallelism", "noise_rate", "extra", "limit"}) {
      CHECK_MESSAGE(msg.find(part) != std::string::npos, part);
    }
  }
  CHECK_THROWS_AS(load_experiment_config("/nonexistent/config.json"), IoError);
  const auto dir = temp_dir("config");
  std::ofstream(dir / "bad.json") << "{not json";
  CHECK_THROWS_AS(load_experiment_config(dir / "bad.json"), ParseError);

  auto m = make_synthetic_manifest(small_world_spec(), lexicon());
  apply_provider_overrides(m, cfg);
  CHECK(m.provider.seed == 9u);
  CHECK(m.provider.noise_rate == 0.2);
}
