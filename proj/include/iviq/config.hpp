#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "iviq/dialogue.hpp"
#include "iviq/eval.hpp"

namespace iviq {

// Experiment config document:
//   { "session": { ...SessionConfig keys... },
//     "parallelism": 4, "limit": 100,
//     "seed": 7, "noise_rate": 0.2, "provider": "synthetic" | "<base url>" }
// Every key is optional. Synthetic-provider keys override the manifest's
// provider descriptor.
struct ExperimentConfig {
  SessionConfig session;
  ExperimentOptions options;
  std::optional<std::uint64_t> seed;
  std::optional<double> noise_rate;
  std::optional<std::string> provider;
};

// Unknown keys and bad values are all reported in one ValidationError.
ExperimentConfig parse_experiment_config(const nlohmann::json& doc);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& config);

// Applies seed / noise / provider overrides to a loaded manifest.
void apply_provider_overrides(CorpusManifest& manifest, const ExperimentConfig& config);

}  // namespace iviq
