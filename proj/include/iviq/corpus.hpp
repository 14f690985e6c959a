#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "iviq/common.hpp"
#include "iviq/question.hpp"

namespace iviq {

class ModelGateway;

inline constexpr std::string_view kManifestSchema = "iviq-manifest/1";

using SlotTokens = std::map<Slot, std::vector<std::string>>;

// Ground-truth attributes per segment. Only consulted by simulated answerers
// and the synthetic provider.
struct AttributeTruth {
  std::map<Segment, SlotTokens> segments;

  bool has_halves() const;
  // Tokens of one slot; empty when the slot or segment is absent.
  const std::vector<std::string>& tokens(Segment segment, Slot slot) const;
  // Unique tokens of every slot of a segment, in slot order then first occurrence.
  std::vector<std::string> all_tokens(Segment segment) const;

  friend bool operator==(const AttributeTruth&, const AttributeTruth&) = default;
};

struct VideoRecord {
  std::string video_id;
  std::string media_uri;
  std::vector<Segment> segments;  // always contains whole
  std::optional<AttributeTruth> truth;
};

struct ProviderDescriptor {
  enum class Kind { synthetic, remote };
  Kind kind = Kind::synthetic;
  std::string base_url;  // remote only
  int dimension = 256;
  double timeout_s = 30.0;
  int max_concurrency = 8;
  std::uint64_t seed = 7;  // synthetic only
  double noise_rate = 0.0;  // synthetic VQA answer noise
};

struct EvaluationCaption {
  std::string video_id;
  std::string query;
};

struct CorpusManifest {
  std::string name;
  ProviderDescriptor provider;
  int dimension = 256;
  std::string frame_sampling;
  bool segment_support = false;
  std::vector<VideoRecord> videos;
  std::vector<EvaluationCaption> captions;

  const VideoRecord* find(std::string_view video_id) const;
};

// Parses and validates; every invariant violation is reported in one
// ValidationError.
CorpusManifest parse_manifest(const nlohmann::json& doc);
CorpusManifest load_manifest(const std::filesystem::path& path);
nlohmann::json manifest_to_json(const CorpusManifest& manifest);
void save_manifest(const CorpusManifest& manifest, const std::filesystem::path& path);

struct RowKey {
  std::string video_id;
  Segment segment = Segment::whole;

  friend bool operator==(const RowKey&, const RowKey&) = default;
};

// Row-major gallery of one segment: row i is the embedding of ids[i].
template <typename Scalar>
struct Gallery {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  std::vector<std::string> ids;
  Matrix rows;

  Eigen::Index size() const { return rows.rows(); }
  Eigen::Index dimension() const { return rows.cols(); }
};

// Unit-norm embeddings keyed by (video_id, segment). Immutable once built.
template <typename Scalar>
class BasicEmbeddingMatrix {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  BasicEmbeddingMatrix() = default;

  BasicEmbeddingMatrix(std::vector<RowKey> keys, Matrix rows) : keys_(std::move(keys)), rows_(std::move(rows)) {
    if (static_cast<Eigen::Index>(keys_.size()) != rows_.rows()) {
      throw ValidationError("embedding matrix: " + std::to_string(keys_.size()) + " keys for " +
                            std::to_string(rows_.rows()) + " rows");
    }
    for (Eigen::Index i = 0; i < rows_.rows(); ++i) {
      const double norm = rows_.row(i).template cast<double>().norm();
      if (std::abs(norm - 1.0) > 1e-6) {
        throw ValidationError("embedding matrix: row for '" + keys_[i].video_id + "' has norm " +
                              std::to_string(norm));
      }
    }
  }

  int dimension() const { return static_cast<int>(rows_.cols()); }
  std::size_t size() const { return keys_.size(); }
  const std::vector<RowKey>& keys() const { return keys_; }
  const Matrix& rows() const { return rows_; }

  std::optional<Eigen::Index> find(std::string_view video_id, Segment segment) const {
    for (std::size_t i = 0; i < keys_.size(); ++i) {
      if (keys_[i].video_id == video_id && keys_[i].segment == segment) return static_cast<Eigen::Index>(i);
    }
    return std::nullopt;
  }

  Gallery<Scalar> gallery(Segment segment = Segment::whole) const {
    Gallery<Scalar> g;
    std::vector<Eigen::Index> picked;
    for (std::size_t i = 0; i < keys_.size(); ++i) {
      if (keys_[i].segment == segment) {
        g.ids.push_back(keys_[i].video_id);
        picked.push_back(static_cast<Eigen::Index>(i));
      }
    }
    g.rows.resize(static_cast<Eigen::Index>(picked.size()), rows_.cols());
    for (std::size_t r = 0; r < picked.size(); ++r) g.rows.row(static_cast<Eigen::Index>(r)) = rows_.row(picked[r]);
    return g;
  }

  friend bool operator==(const BasicEmbeddingMatrix& a, const BasicEmbeddingMatrix& b) {
    return a.keys_ == b.keys_ && a.rows_.rows() == b.rows_.rows() && a.rows_.cols() == b.rows_.cols() &&
           a.rows_ == b.rows_;
  }

 private:
  std::vector<RowKey> keys_;
  Matrix rows_;
};

using EmbeddingMatrix = BasicEmbeddingMatrix<float>;

// One row per (video, available segment), in manifest order. `parallelism`
// bounds concurrent provider calls.
EmbeddingMatrix build_index(const CorpusManifest& manifest, const ModelGateway& gateway, int parallelism = 1);

// Binary container, little-endian:
//   magic "IVIQIDX1" | u32 version=1 | u32 dimension | u64 rows
//   rows x { u32 id_len | id bytes | u8 segment }
//   rows x dimension float32
//   u64 FNV-1a of every preceding byte
std::string serialize_index(const EmbeddingMatrix& index);
EmbeddingMatrix deserialize_index(std::string_view bytes, std::optional<int> expected_dimension = std::nullopt);
void save_index(const EmbeddingMatrix& index, const std::filesystem::path& path);
EmbeddingMatrix load_index(const std::filesystem::path& path, std::optional<int> expected_dimension = std::nullopt);

}  // namespace iviq
