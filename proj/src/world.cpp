#include "iviq/world.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

namespace iviq {

namespace {

const std::vector<std::string> kActionWords = {"singing",  "running", "dancing", "cooking", "jumping",
                                               "swimming", "talking", "eating",  "walking", "climbing"};
const std::vector<std::string> kSceneWords = {"park",   "kitchen", "stage", "forest",    "office", "garden", "studio",
                                              "field",  "bedroom", "gym",   "classroom", "mall",   "desert"};

template <typename T>
void shuffle(std::vector<T>& v, SplitMix64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

std::vector<std::string> draw(std::vector<std::string> pool, std::size_t n, SplitMix64& rng, const char* what) {
  if (pool.size() < n) {
    throw ValidationError(std::string("world: need ") + std::to_string(n) + " " + what + ", only " +
                          std::to_string(pool.size()) + " available");
  }
  shuffle(pool, rng);
  pool.resize(n);
  return pool;
}

void add_unique(std::vector<std::string>& v, const std::string& t) {
  if (std::find(v.begin(), v.end(), t) == v.end()) v.push_back(t);
}

}  // namespace

CorpusManifest make_synthetic_manifest(const WorldSpec& spec, const ObjectLexicon& lexicon) {
  if (spec.videos < 1 || spec.videos_per_object < 1 || spec.videos % spec.videos_per_object != 0) {
    throw ValidationError("world: videos must be a positive multiple of videos_per_object");
  }
  const int n_objects = spec.videos / spec.videos_per_object;
  if (spec.living_objects < 0 || spec.living_objects > n_objects) {
    throw ValidationError("world: living_objects=" + std::to_string(spec.living_objects) + " outside [0, " +
                          std::to_string(n_objects) + "], the number of objects");
  }
  if (spec.actions < 1 || spec.scenes < 1 || spec.extra_pool < 2) throw ValidationError("world: empty attribute pool");

  SplitMix64 rng(mix_seed(spec.seed, "world"));
  const std::vector<std::string> living(lexicon.living.begin(), lexicon.living.end());
  const std::vector<std::string> nonliving(lexicon.nonliving.begin(), lexicon.nonliving.end());
  std::vector<std::string> scene_pool;
  for (const auto& s : kSceneWords) {
    if (!lexicon.living.contains(s) && !lexicon.nonliving.contains(s)) scene_pool.push_back(s);
  }

  const auto living_objects = draw(living, static_cast<std::size_t>(spec.living_objects), rng, "living objects");
  const auto nonliving_draw = draw(nonliving, static_cast<std::size_t>(n_objects - spec.living_objects + spec.extra_pool),
                                   rng, "nonliving objects");
  const std::vector<std::string> nonliving_objects(nonliving_draw.begin(),
                                                   nonliving_draw.end() - spec.extra_pool);
  const std::vector<std::string> extras(nonliving_draw.end() - spec.extra_pool, nonliving_draw.end());
  const auto actions = draw(kActionWords, static_cast<std::size_t>(spec.actions), rng, "actions");
  const auto scenes = draw(scene_pool, static_cast<std::size_t>(spec.scenes), rng, "scenes");

  std::vector<std::pair<std::string, bool>> objects;
  for (const auto& o : living_objects) objects.emplace_back(o, true);
  for (const auto& o : nonliving_objects) objects.emplace_back(o, false);

  CorpusManifest m;
  m.name = spec.name;
  m.provider.kind = ProviderDescriptor::Kind::synthetic;
  m.provider.dimension = spec.dimension;
  m.provider.seed = spec.seed;
  m.provider.noise_rate = spec.noise_rate;
  m.dimension = spec.dimension;
  m.frame_sampling = "8 uniform frames (recorded, not executed)";
  m.segment_support = spec.halves;

  std::set<std::set<std::string>> seen;
  for (int i = 0; i < spec.videos; ++i) {
    const auto& [object, is_living] = objects[static_cast<std::size_t>(i / spec.videos_per_object)];
    AttributeTruth truth;
    std::set<std::string> key;
    for (int attempt = 0;; ++attempt) {
      if (attempt == 1000) throw ValidationError("world: cannot draw distinct attribute sets for '" + object + "'");
      SlotTokens first;
      SlotTokens second;
      first[Slot::object] = second[Slot::object] = {object};
      if (is_living) {
        const auto a1 = actions[rng.below(actions.size())];
        auto a2 = a1;
        if (rng.uniform() < 0.5) a2 = actions[rng.below(actions.size())];
        first[Slot::action] = {a1};
        second[Slot::action] = {a2};
      }
      first[Slot::scene] = second[Slot::scene] = {scenes[rng.below(scenes.size())]};
      const auto e1 = extras[rng.below(extras.size())];
      if (rng.uniform() < 0.5) {
        first[Slot::extra_objects] = second[Slot::extra_objects] = {e1};
      } else {
        auto e2 = extras[rng.below(extras.size() - 1)];
        if (e2 == e1) e2 = extras.back();
        first[Slot::extra_objects] = {e1};
        second[Slot::extra_objects] = {e2};
      }
      SlotTokens whole;
      for (const Slot s : kAllSlots) {
        std::vector<std::string> merged;
        for (const auto* half : {&first, &second}) {
          if (const auto it = half->find(s); it != half->end()) {
            for (const auto& t : it->second) add_unique(merged, t);
          }
        }
        if (!merged.empty()) whole[s] = std::move(merged);
      }
      truth.segments.clear();
      truth.segments[Segment::whole] = whole;
      if (spec.halves) {
        truth.segments[Segment::first_half] = first;
        truth.segments[Segment::second_half] = second;
      }
      const auto tokens = truth.all_tokens(Segment::whole);
      key = std::set<std::string>(tokens.begin(), tokens.end());
      if (seen.insert(key).second) break;
    }
    char id[16];
    std::snprintf(id, sizeof id, "v%04d", i);
    VideoRecord v;
    v.video_id = id;
    v.media_uri = std::string("synthetic://") + id;
    v.segments = spec.halves ? std::vector<Segment>{Segment::whole, Segment::first_half, Segment::second_half}
                             : std::vector<Segment>{Segment::whole};
    v.truth = std::move(truth);
    m.videos.push_back(std::move(v));
    m.captions.push_back({id, "a " + object});
  }
  return m;
}

}  // namespace iviq
