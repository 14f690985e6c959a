#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "iviq/corpus.hpp"
#include "iviq/heuristic.hpp"

namespace iviq {

// Parameters of a generated synthetic corpus. Captions name only the primary
// object, so every caption is shared by `videos_per_object` videos.
struct WorldSpec {
  std::uint64_t seed = 7;
  int videos = 500;
  int videos_per_object = 20;
  int living_objects = 13;  // the rest of videos / videos_per_object are nonliving
  int actions = 5;
  int scenes = 5;
  int extra_pool = 12;
  int dimension = 256;
  double noise_rate = 0.0;
  bool halves = true;
  std::string name = "synthetic";
};

// Deterministic in (spec, lexicon). Object tokens come from the lexicon;
// scene words are kept out of it so the planner never mistakes a place for
// an object.
CorpusManifest make_synthetic_manifest(const WorldSpec& spec, const ObjectLexicon& lexicon);

}  // namespace iviq
