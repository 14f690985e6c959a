#include "iviq/corpus.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "iviq/gateway.hpp"

namespace iviq {

namespace {

const std::vector<std::string> kNoTokens;

bool valid_token(const std::string& t) {
  if (t.empty()) return false;
  return std::none_of(t.begin(), t.end(), [](unsigned char c) { return std::isspace(c) != 0 || std::isupper(c) != 0; });
}

std::set<std::string> token_set(const std::vector<std::string>& v) { return {v.begin(), v.end()}; }

void validate_truth(const std::string& id, const AttributeTruth& truth, std::vector<std::string>& errors) {
  if (!truth.segments.contains(Segment::whole)) {
    errors.push_back("video '" + id + "': truth lacks the whole segment");
    return;
  }
  for (const auto& [segment, slots] : truth.segments) {
    for (const auto& [slot, tokens] : slots) {
      for (const auto& t : tokens) {
        if (!valid_token(t)) {
          errors.push_back("video '" + id + "': invalid token '" + t + "' in " + std::string(to_string(segment)) +
                           "." + std::string(to_string(slot)));
        }
      }
    }
  }
  if (truth.has_halves()) {
    for (const Slot slot : kAllSlots) {
      std::set<std::string> halves = token_set(truth.tokens(Segment::first_half, slot));
      const auto second = token_set(truth.tokens(Segment::second_half, slot));
      halves.insert(second.begin(), second.end());
      if (halves != token_set(truth.tokens(Segment::whole, slot))) {
        errors.push_back("video '" + id + "': whole." + std::string(to_string(slot)) +
                         " is not the union of the halves");
      }
    }
  }
}

AttributeTruth parse_truth(const nlohmann::json& j) {
  AttributeTruth truth;
  for (const auto& [segment_name, slots] : j.items()) {
    SlotTokens parsed;
    for (const auto& [slot_name, tokens] : slots.items()) {
      parsed[slot_from_string(slot_name)] = tokens.get<std::vector<std::string>>();
    }
    truth.segments[segment_from_string(segment_name)] = std::move(parsed);
  }
  return truth;
}

nlohmann::json truth_to_json(const AttributeTruth& truth) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [segment, slots] : truth.segments) {
    nlohmann::json s = nlohmann::json::object();
    for (const auto& [slot, tokens] : slots) s[std::string(to_string(slot))] = tokens;
    j[std::string(to_string(segment))] = std::move(s);
  }
  return j;
}

ProviderDescriptor parse_provider(const nlohmann::json& j, std::vector<std::string>& errors) {
  ProviderDescriptor p;
  const auto kind = j.value("kind", std::string("synthetic"));
  if (kind == "synthetic") {
    p.kind = ProviderDescriptor::Kind::synthetic;
  } else if (kind == "remote") {
    p.kind = ProviderDescriptor::Kind::remote;
  } else {
    errors.push_back("provider.kind must be 'synthetic' or 'remote', got '" + kind + "'");
  }
  p.base_url = j.value("base_url", std::string());
  p.dimension = j.value("dimension", 256);
  p.timeout_s = j.value("timeout_s", 30.0);
  p.max_concurrency = j.value("max_concurrency", 8);
  p.seed = j.value("seed", std::uint64_t{7});
  p.noise_rate = j.value("noise_rate", 0.0);
  if (p.dimension < 8) errors.push_back("provider.dimension must be >= 8");
  if (!(p.timeout_s > 0)) errors.push_back("provider.timeout_s must be > 0");
  if (p.max_concurrency < 1) errors.push_back("provider.max_concurrency must be >= 1");
  if (p.noise_rate < 0 || p.noise_rate > 1) errors.push_back("provider.noise_rate must be in [0, 1]");
  if (p.kind == ProviderDescriptor::Kind::remote && p.base_url.empty()) {
    errors.push_back("provider.base_url is required for remote providers");
  }
  return p;
}

// Little-endian byte writer/reader for the index container.
class ByteWriter {
 public:
  template <typename T>
  void put(T value) {
    static_assert(std::is_integral_v<T>);
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      out_.push_back(static_cast<char>(static_cast<std::uint64_t>(value) >> (8 * i) & 0xff));
    }
  }
  void put_f32(float value) { put(std::bit_cast<std::uint32_t>(value)); }
  void put_bytes(std::string_view bytes) { out_.append(bytes); }
  std::string& str() { return out_; }

 private:
  std::string out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }
  float get_f32() { return std::bit_cast<float>(get<std::uint32_t>()); }
  std::string_view get_bytes(std::size_t n) {
    need(n);
    auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw ParseError("index container is truncated");
  }
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

constexpr std::string_view kIndexMagic = "IVIQIDX1";
constexpr std::uint32_t kIndexVersion = 1;

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace

bool AttributeTruth::has_halves() const {
  return segments.contains(Segment::first_half) && segments.contains(Segment::second_half);
}

const std::vector<std::string>& AttributeTruth::tokens(Segment segment, Slot slot) const {
  const auto s = segments.find(segment);
  if (s == segments.end()) return kNoTokens;
  const auto t = s->second.find(slot);
  return t == s->second.end() ? kNoTokens : t->second;
}

std::vector<std::string> AttributeTruth::all_tokens(Segment segment) const {
  std::vector<std::string> out;
  for (const Slot slot : kAllSlots) {
    for (const auto& t : tokens(segment, slot)) {
      if (std::find(out.begin(), out.end(), t) == out.end()) out.push_back(t);
    }
  }
  return out;
}

const VideoRecord* CorpusManifest::find(std::string_view video_id) const {
  for (const auto& v : videos) {
    if (v.video_id == video_id) return &v;
  }
  return nullptr;
}

CorpusManifest parse_manifest(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ParseError("manifest must be a JSON object");
  std::vector<std::string> errors;
  CorpusManifest m;
  try {
    const auto schema = doc.value("schema", std::string());
    if (schema != kManifestSchema) {
      errors.push_back("schema must be '" + std::string(kManifestSchema) + "', got '" + schema + "'");
    }
    m.name = doc.value("name", std::string());
    m.dimension = doc.value("dimension", 256);
    m.frame_sampling = doc.value("frame_sampling", std::string());
    m.segment_support = doc.value("segment_support", false);
    m.provider = parse_provider(doc.value("provider", nlohmann::json::object()), errors);
    if (m.provider.dimension != m.dimension) {
      errors.push_back("dimension mismatch: manifest declares " + std::to_string(m.dimension) + ", provider " +
                       std::to_string(m.provider.dimension));
    }

    std::set<std::string> seen;
    for (const auto& v : doc.at("videos")) {
      VideoRecord r;
      r.video_id = v.at("video_id").get<std::string>();
      r.media_uri = v.value("media_uri", std::string());
      r.segments = {Segment::whole};
      if (m.segment_support) {
        r.segments.push_back(Segment::first_half);
        r.segments.push_back(Segment::second_half);
      }
      if (v.contains("truth")) r.truth = parse_truth(v.at("truth"));
      if (r.video_id.empty()) {
        errors.push_back("video with empty video_id");
      } else if (!seen.insert(r.video_id).second) {
        errors.push_back("duplicate video_id '" + r.video_id + "'");
      }
      if (r.truth) validate_truth(r.video_id, *r.truth, errors);
      m.videos.push_back(std::move(r));
    }
    for (const auto& c : doc.value("captions", nlohmann::json::array())) {
      EvaluationCaption ec{c.at("video_id").get<std::string>(), c.at("query").get<std::string>()};
      if (!seen.contains(ec.video_id)) {
        errors.push_back("caption references unknown video_id '" + ec.video_id + "'");
      }
      if (text::trim(ec.query).empty()) errors.push_back("empty caption for '" + ec.video_id + "'");
      m.captions.push_back(std::move(ec));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed manifest: ") + e.what());
  }
  if (!errors.empty()) throw ValidationError("invalid manifest: " + text::join(errors, "; "));
  return m;
}

CorpusManifest load_manifest(const std::filesystem::path& path) {
  const std::string body = read_file(path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError("cannot parse manifest '" + path.string() + "': " + e.what());
  }
  return parse_manifest(doc);
}

nlohmann::json manifest_to_json(const CorpusManifest& m) {
  nlohmann::json provider = {
      {"kind", m.provider.kind == ProviderDescriptor::Kind::synthetic ? "synthetic" : "remote"},
      {"dimension", m.provider.dimension},
      {"timeout_s", m.provider.timeout_s},
      {"max_concurrency", m.provider.max_concurrency},
  };
  if (m.provider.kind == ProviderDescriptor::Kind::synthetic) {
    provider["seed"] = m.provider.seed;
    provider["noise_rate"] = m.provider.noise_rate;
  } else {
    provider["base_url"] = m.provider.base_url;
  }
  nlohmann::json videos = nlohmann::json::array();
  for (const auto& v : m.videos) {
    nlohmann::json j = {{"video_id", v.video_id}, {"media_uri", v.media_uri}};
    if (v.truth) j["truth"] = truth_to_json(*v.truth);
    videos.push_back(std::move(j));
  }
  nlohmann::json captions = nlohmann::json::array();
  for (const auto& c : m.captions) captions.push_back({{"video_id", c.video_id}, {"query", c.query}});
  return {
      {"schema", kManifestSchema}, {"name", m.name},       {"provider", provider},
      {"dimension", m.dimension},  {"frame_sampling", m.frame_sampling},
      {"segment_support", m.segment_support},               {"videos", videos},
      {"captions", captions},
  };
}

void save_manifest(const CorpusManifest& manifest, const std::filesystem::path& path) {
  write_file(path, manifest_to_json(manifest).dump(2) + "\n");
}

EmbeddingMatrix build_index(const CorpusManifest& manifest, const ModelGateway& gateway, int parallelism) {
  std::vector<RowKey> keys;
  for (const auto& v : manifest.videos) {
    for (const Segment s : v.segments) keys.push_back({v.video_id, s});
  }
  const int dim = manifest.dimension;
  EmbeddingMatrix::Matrix rows(static_cast<Eigen::Index>(keys.size()), dim);

  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  struct Failure {
    std::size_t row;
    std::string message;
    bool dimension;
  };
  std::optional<Failure> first_error;

  auto worker = [&] {
    for (std::size_t i = next++; i < keys.size(); i = next++) {
      try {
        Eigen::VectorXf v = gateway.embed_video(keys[i].video_id, keys[i].segment);
        if (v.size() != dim) {
          throw ValidationError("dimension mismatch for '" + keys[i].video_id + "': provider returned " +
                                std::to_string(v.size()) + ", corpus declares " + std::to_string(dim));
        }
        const double norm = v.cast<double>().norm();
        if (norm == 0.0) throw ProviderError("/v1/embed/video", "zero vector for '" + keys[i].video_id + "'");
        rows.row(static_cast<Eigen::Index>(i)) = (v.cast<double>() / norm).cast<float>().transpose();
      } catch (const Error& e) {
        std::lock_guard lock(error_mutex);
        // Keep the lowest failing row so the reported id does not depend on scheduling.
        if (!first_error || i < first_error->row) {
          first_error = Failure{i, e.what(), dynamic_cast<const ValidationError*>(&e) != nullptr};
        }
      }
    }
  };

  const int n_threads = std::max(1, parallelism);
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }
  if (first_error) {
    const auto& key = keys[first_error->row];
    const std::string where = "video '" + key.video_id + "' (" + std::string(to_string(key.segment)) + "): ";
    if (first_error->dimension) throw ValidationError("build_index: " + where + first_error->message);
    throw ProviderError("build_index", where + first_error->message);
  }
  return EmbeddingMatrix(std::move(keys), std::move(rows));
}

std::string serialize_index(const EmbeddingMatrix& index) {
  ByteWriter w;
  w.put_bytes(kIndexMagic);
  w.put(kIndexVersion);
  w.put(static_cast<std::uint32_t>(index.dimension()));
  w.put(static_cast<std::uint64_t>(index.size()));
  for (const auto& k : index.keys()) {
    w.put(static_cast<std::uint32_t>(k.video_id.size()));
    w.put_bytes(k.video_id);
    w.put(static_cast<std::uint8_t>(k.segment));
  }
  const auto& rows = index.rows();
  for (Eigen::Index r = 0; r < rows.rows(); ++r) {
    for (Eigen::Index c = 0; c < rows.cols(); ++c) w.put_f32(rows(r, c));
  }
  const std::uint64_t checksum = fnv1a64(w.str());
  w.put(checksum);
  return std::move(w.str());
}

EmbeddingMatrix deserialize_index(std::string_view bytes, std::optional<int> expected_dimension) {
  if (bytes.size() < kIndexMagic.size() + 24 || bytes.substr(0, kIndexMagic.size()) != kIndexMagic) {
    if (bytes.size() >= kIndexMagic.size() && bytes.substr(0, kIndexMagic.size()) == kIndexMagic) {
      throw ParseError("index container is truncated");
    }
    throw ParseError("index container: bad magic");
  }
  ByteReader r(bytes);
  r.get_bytes(kIndexMagic.size());
  const auto version = r.get<std::uint32_t>();
  if (version != kIndexVersion) throw ParseError("index container: unsupported version " + std::to_string(version));
  const auto dim = r.get<std::uint32_t>();
  const auto n = r.get<std::uint64_t>();
  if (expected_dimension && static_cast<int>(dim) != *expected_dimension) {
    throw ParseError("index header declares dimension " + std::to_string(dim) + ", expected " +
                     std::to_string(*expected_dimension));
  }
  // Each row needs at least 5 id-table bytes plus its floats; reject absurd counts before allocating.
  if (n > r.remaining() / (5 + 4ULL * dim)) throw ParseError("index container is truncated");

  std::vector<RowKey> keys;
  keys.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    const auto len = r.get<std::uint32_t>();
    std::string id(r.get_bytes(len));
    const auto seg = r.get<std::uint8_t>();
    if (seg > 2) throw ParseError("index container: bad segment tag");
    keys.push_back({std::move(id), static_cast<Segment>(seg)});
  }
  EmbeddingMatrix::Matrix rows(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    for (Eigen::Index c = 0; c < rows.cols(); ++c) rows(i, c) = r.get_f32();
  }
  const std::size_t body_len = bytes.size() - r.remaining();
  const auto stored = r.get<std::uint64_t>();
  if (r.remaining() != 0) throw ParseError("index container: trailing bytes");
  if (stored != fnv1a64(bytes.substr(0, body_len))) throw ParseError("index container: checksum mismatch");
  return EmbeddingMatrix(std::move(keys), std::move(rows));
}

void save_index(const EmbeddingMatrix& index, const std::filesystem::path& path) {
  write_file(path, serialize_index(index));
}

EmbeddingMatrix load_index(const std::filesystem::path& path, std::optional<int> expected_dimension) {
  return deserialize_index(read_file(path), expected_dimension);
}

}  // namespace iviq
