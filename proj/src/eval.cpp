#include "iviq/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <thread>

#include "iviq/gateway.hpp"

namespace iviq {

using nlohmann::json;

namespace {

// Runs job(i) for i in [0, n) on up to `parallelism` threads.
template <typename Job>
void parallel_for(std::size_t n, int parallelism, Job job) {
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) job(i);
  };
  const auto threads = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, parallelism)), n);
  if (threads <= 1) {
    worker();
    return;
  }
  std::vector<std::jthread> pool;
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
}

std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

void write_file(const std::filesystem::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << contents;
  if (!out.flush()) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace

MetricsSnapshot compute_metrics(const std::vector<int>& ranks, std::size_t corpus_size, int round) {
  if (ranks.empty()) throw ValidationError("compute_metrics: empty rank list");
  for (const int r : ranks) {
    if (r < 1 || static_cast<std::size_t>(r) > corpus_size) {
      throw ValidationError("compute_metrics: rank " + std::to_string(r) + " outside [1, " +
                            std::to_string(corpus_size) + "]");
    }
  }
  const auto n = static_cast<double>(ranks.size());
  const auto within = [&](int k) {
    return 100.0 * static_cast<double>(std::count_if(ranks.begin(), ranks.end(), [&](int r) { return r <= k; })) / n;
  };
  std::vector<int> sorted = ranks;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t mid = sorted.size() / 2;
  const double median = sorted.size() % 2 == 1 ? sorted[mid] : (sorted[mid - 1] + sorted[mid]) / 2.0;
  return {round, within(1), within(5), within(10), median, ranks.size()};
}

std::unique_ptr<AnswerProvider> make_answer_provider(AnswerProviderKind kind, const ModelGateway& gateway,
                                                     const CorpusManifest& manifest) {
  switch (kind) {
    case AnswerProviderKind::videoqa:
      return std::make_unique<VideoQaAnswerer>(gateway);
    case AnswerProviderKind::cap_lm:
      return std::make_unique<CapLmAnswerer>(gateway);
    case AnswerProviderKind::scripted:
      return std::make_unique<ScriptedAnswerer>(manifest);
    case AnswerProviderKind::human:
      break;
  }
  throw ValidationError("the human answer provider needs a live session, not a batch run");
}

ExperimentReport run_experiment(const Retriever& retriever, const SessionConfig& config,
                                const ExperimentOptions& options) {
  if (auto errors = config.validate(); !errors.empty()) {
    throw ValidationError("invalid session config: " + text::join(errors, "; "));
  }
  const auto& manifest = retriever.manifest();
  if (config.answer_provider == AnswerProviderKind::human) {
    throw ValidationError("the human answer provider needs a live session, not a batch run");
  }
  std::vector<EvaluationCaption> captions = manifest.captions;
  if (options.limit && *options.limit < captions.size()) captions.resize(*options.limit);

  ExperimentReport report;
  report.config = to_json(config);
  report.corpus = {{"name", manifest.name},
                   {"videos", retriever.corpus_size()},
                   {"dimension", manifest.dimension},
                   {"provider", manifest.provider.kind == ProviderDescriptor::Kind::synthetic ? "synthetic" : "remote"},
                   {"segment_support", manifest.segment_support}};
  if (manifest.provider.kind == ProviderDescriptor::Kind::synthetic) {
    report.corpus["seed"] = manifest.provider.seed;
    report.corpus["noise_rate"] = manifest.provider.noise_rate;
  }
  report.sessions.resize(captions.size());

  std::mutex latency_mutex;
  parallel_for(captions.size(), options.parallelism, [&](std::size_t i) {
    auto& out = report.sessions[i];
    out.video_id = captions[i].video_id;
    out.query = captions[i].query;
    try {
      auto answerer = make_answer_provider(config.answer_provider, retriever.gateway(), manifest);
      Session session = Session::start(captions[i].query, config, retriever, captions[i].video_id);
      while (session.step(retriever, *answerer) == StepStatus::advanced) {
      }
      out.ranks = session.record().trajectory;
      std::lock_guard lock(latency_mutex);
      for (const auto& r : session.record().rounds) {
        auto& stat = report.latency[r.answer_provider];
        ++stat.answers;
        stat.total_s += r.answer_latency_s;
      }
      if (options.keep_records) out.record = session.record();
    } catch (const Error& e) {
      out.ranks.clear();
      out.error = e.what();
    }
  });

  std::size_t rounds = 0;
  for (const auto& s : report.sessions) {
    if (s.error) {
      ++report.failures;
    } else {
      rounds = std::max(rounds, s.ranks.size());
    }
  }
  for (std::size_t t = 0; t < rounds; ++t) {
    std::vector<int> ranks;
    for (const auto& s : report.sessions) {
      if (!s.error) ranks.push_back(s.ranks[std::min(t, s.ranks.size() - 1)]);
    }
    report.rounds.push_back(compute_metrics(ranks, retriever.corpus_size(), static_cast<int>(t)));
  }
  return report;
}

json report_to_json(const ExperimentReport& report) {
  json rounds = json::array();
  for (const auto& m : report.rounds) {
    rounds.push_back({{"round", m.round},
                      {"R1", m.recall_at_1},
                      {"R5", m.recall_at_5},
                      {"R10", m.recall_at_10},
                      {"MdR", m.median_rank},
                      {"n", m.count}});
  }
  json sessions = json::array();
  for (const auto& s : report.sessions) {
    json j = {{"video_id", s.video_id}, {"query", s.query}, {"ranks", s.ranks}};
    if (s.error) j["error"] = *s.error;
    sessions.push_back(std::move(j));
  }
  return {{"schema", kReportSchema}, {"config", report.config}, {"corpus", report.corpus},
          {"failures", report.failures}, {"rounds", rounds}, {"sessions", sessions}};
}

std::string report_to_csv(const ExperimentReport& report) {
  std::string out(kCsvHeader);
  out += '\n';
  for (const auto& m : report.rounds) {
    out += std::to_string(m.round) + ',' + fixed2(m.recall_at_1) + ',' + fixed2(m.recall_at_5) + ',' +
           fixed2(m.recall_at_10) + ',' + fixed2(m.median_rank) + '\n';
  }
  return out;
}

json latency_to_json(const ExperimentReport& report) {
  json providers = json::object();
  for (const auto& [name, stat] : report.latency) {
    providers[name] = {{"answers", stat.answers}, {"total_s", stat.total_s}, {"mean_s", stat.mean_s()}};
  }
  return {{"providers", providers}};
}

void emit_report(const ExperimentReport& report, const std::filesystem::path& stem) {
  const auto with = [&](const char* ext) {
    auto p = stem;
    p += ext;
    return p;
  };
  write_file(with(".json"), report_to_json(report).dump(2) + "\n");
  write_file(with(".csv"), report_to_csv(report));
  write_file(with(".latency.json"), latency_to_json(report).dump(2) + "\n");
}

std::vector<TimingRow> timing_study(const CorpusManifest& manifest, const ModelGateway& gateway,
                                    const ObjectLexicon& lexicon, const std::vector<AnswerProviderKind>& providers,
                                    const TimingOptions& options) {
  if (providers.empty()) throw ValidationError("timing study: empty provider list");
  if (options.sample_n < 1 || options.sample_n > manifest.captions.size()) {
    throw ValidationError("timing study: sample_n=" + std::to_string(options.sample_n) + " outside [1, " +
                          std::to_string(manifest.captions.size()) + "]");
  }
  if (options.augmentations.ask_segment && !manifest.segment_support) {
    throw CapabilityError("timing study: Ask Segment requires half-segment support");
  }
  struct Cell {
    std::string video_id;
    Question question;
  };
  std::vector<Cell> cells;
  for (std::size_t i = 0; i < options.sample_n; ++i) {
    const auto& c = manifest.captions[i];
    for (const auto& q : plan_initial(c.query, lexicon, options.augmentations).pending) cells.push_back({c.video_id, q});
  }

  std::vector<TimingRow> rows;
  for (const auto kind : providers) {
    TimingRow row;
    row.provider = std::string(to_string(kind));
    std::vector<std::optional<double>> latency(cells.size());
    parallel_for(cells.size(), options.parallelism, [&](std::size_t i) {
      try {
        auto answerer = make_answer_provider(kind, gateway, manifest);
        latency[i] = answerer->answer({cells[i].video_id, cells[i].question, 300.0}).latency_s;
      } catch (const Error&) {
        latency[i].reset();
      }
    });
    double total = 0.0;
    for (const auto& l : latency) {
      if (l) {
        ++row.answers;
        total += *l;
      } else {
        ++row.errors;
      }
    }
    row.mean_s = row.answers == 0 ? 0.0 : total / static_cast<double>(row.answers);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string timing_to_csv(const std::vector<TimingRow>& rows) {
  std::string out = "provider,answers,errors,mean_s\n";
  for (const auto& r : rows) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", r.mean_s);
    out += r.provider + ',' + std::to_string(r.answers) + ',' + std::to_string(r.errors) + ',' + buf + '\n';
  }
  return out;
}

json timing_to_json(const std::vector<TimingRow>& rows) {
  json out = json::array();
  for (const auto& r : rows) {
    out.push_back({{"provider", r.provider}, {"answers", r.answers}, {"errors", r.errors}, {"mean_s", r.mean_s}});
  }
  return out;
}

}  // namespace iviq
