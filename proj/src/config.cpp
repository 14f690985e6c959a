#include "iviq/config.hpp"

#include <fstream>

namespace iviq {

using nlohmann::json;

ExperimentConfig parse_experiment_config(const json& doc) {
  if (!doc.is_object()) throw ValidationError("experiment config must be a JSON object");
  ExperimentConfig c;
  std::vector<std::string> errors;
  for (const auto& [key, value] : doc.items()) {
    try {
      if (key == "session") {
        c.session = apply_overrides(c.session, value);
      } else if (key == "parallelism") {
        if (!value.is_number_integer() || value.get<int>() < 1) throw ValidationError("parallelism must be an integer >= 1");
        c.options.parallelism = value.get<int>();
      } else if (key == "limit") {
        if (!value.is_number_integer() || value.get<long long>() < 1) throw ValidationError("limit must be an integer >= 1");
        c.options.limit = value.get<std::size_t>();
      } else if (key == "seed") {
        if (!value.is_number_unsigned()) throw ValidationError("seed must be a non-negative integer");
        c.seed = value.get<std::uint64_t>();
      } else if (key == "noise_rate") {
        if (!value.is_number()) throw ValidationError("noise_rate must be a number");
        const double r = value.get<double>();
        if (r < 0.0 || r > 1.0) throw ValidationError("noise_rate must be in [0, 1]");
        c.noise_rate = r;
      } else if (key == "provider") {
        c.provider = value.get<std::string>();
      } else {
        errors.push_back("unknown config key '" + key + "'");
      }
    } catch (const ValidationError& e) {
      errors.emplace_back(e.what());
    } catch (const json::exception&) {
      errors.push_back(key + ": wrong type");
    }
  }
  if (!errors.empty()) throw ValidationError("invalid experiment config: " + text::join(errors, "; "));
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  try {
    return parse_experiment_config(json::parse(in));
  } catch (const json::parse_error& e) {
    throw ParseError("config '" + path.string() + "': " + e.what());
  }
}

json to_json(const ExperimentConfig& c) {
  json j = {{"session", to_json(c.session)}, {"parallelism", c.options.parallelism}};
  if (c.options.limit) j["limit"] = *c.options.limit;
  if (c.seed) j["seed"] = *c.seed;
  if (c.noise_rate) j["noise_rate"] = *c.noise_rate;
  if (c.provider) j["provider"] = *c.provider;
  return j;
}

void apply_provider_overrides(CorpusManifest& manifest, const ExperimentConfig& config) {
  if (config.provider) {
    if (*config.provider == "synthetic") {
      manifest.provider.kind = ProviderDescriptor::Kind::synthetic;
    } else {
      manifest.provider.kind = ProviderDescriptor::Kind::remote;
      manifest.provider.base_url = *config.provider;
    }
  }
  if (config.seed) manifest.provider.seed = *config.seed;
  if (config.noise_rate) manifest.provider.noise_rate = *config.noise_rate;
}

}  // namespace iviq
