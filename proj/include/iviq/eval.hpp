#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "iviq/dialogue.hpp"

namespace iviq {

inline constexpr std::string_view kReportSchema = "iviq-report/1";
inline constexpr std::string_view kCsvHeader = "round,R1,R5,R10,MdR";

struct MetricsSnapshot {
  int round = 0;
  double recall_at_1 = 0.0;  // percentages
  double recall_at_5 = 0.0;
  double recall_at_10 = 0.0;
  double median_rank = 0.0;
  std::size_t count = 0;

  friend bool operator==(const MetricsSnapshot&, const MetricsSnapshot&) = default;
};

// R@K = 100 * |{r <= K}| / n; the median of an even count averages the two
// middle ranks.
MetricsSnapshot compute_metrics(const std::vector<int>& ranks, std::size_t corpus_size, int round = 0);

// Builds the simulated answerer for a batch run. The human relay has no
// place in a batch and is rejected.
std::unique_ptr<AnswerProvider> make_answer_provider(AnswerProviderKind kind, const ModelGateway& gateway,
                                                     const CorpusManifest& manifest);

struct ExperimentOptions {
  int parallelism = 1;  // concurrent sessions
  std::optional<std::size_t> limit;  // first N evaluation captions only
  bool keep_records = false;
};

struct SessionOutcome {
  std::string video_id;
  std::string query;
  std::vector<int> ranks;  // round 0 first; as executed, no carry-forward
  std::optional<std::string> error;
  std::optional<SessionRecord> record;
};

struct LatencyStat {
  std::size_t answers = 0;
  double total_s = 0.0;
  double mean_s() const { return answers == 0 ? 0.0 : total_s / static_cast<double>(answers); }
};

struct ExperimentReport {
  nlohmann::json config;  // effective session config
  nlohmann::json corpus;  // name, size, dimension, provider
  std::vector<MetricsSnapshot> rounds;
  std::vector<SessionOutcome> sessions;  // evaluation-caption order
  std::size_t failures = 0;
  // Wall-clock, so kept out of the deterministic report document.
  std::map<std::string, LatencyStat> latency;
};

// One session per evaluation caption, each stepped until max_rounds or the
// generator runs dry. A session that stops early keeps its last rank in the
// later rounds' metrics. Failed sessions are listed and left out of metrics.
ExperimentReport run_experiment(const Retriever& retriever, const SessionConfig& config,
                                const ExperimentOptions& options = {});

nlohmann::json report_to_json(const ExperimentReport& report);
std::string report_to_csv(const ExperimentReport& report);
nlohmann::json latency_to_json(const ExperimentReport& report);

// Writes <stem>.json, <stem>.csv and <stem>.latency.json.
void emit_report(const ExperimentReport& report, const std::filesystem::path& stem);

struct TimingRow {
  std::string provider;
  std::size_t answers = 0;
  std::size_t errors = 0;
  double mean_s = 0.0;
};

struct TimingOptions {
  std::size_t sample_n = 50;
  int parallelism = 1;
  Augmentations augmentations{.ask_segment = false, .ask_object = true};
};

// Mean wall-clock per answer for each provider, over the first sample_n
// evaluation captions and the heuristic questions planned for each.
std::vector<TimingRow> timing_study(const CorpusManifest& manifest, const ModelGateway& gateway,
                                    const ObjectLexicon& lexicon, const std::vector<AnswerProviderKind>& providers,
                                    const TimingOptions& options = {});

std::string timing_to_csv(const std::vector<TimingRow>& rows);
nlohmann::json timing_to_json(const std::vector<TimingRow>& rows);

}  // namespace iviq
