#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "iviq/corpus.hpp"

namespace iviq {

class ModelGateway;

enum class RankStage { cosine_only, reranked };

std::string_view to_string(RankStage s) noexcept;

struct RankedEntry {
  std::string video_id;
  double cosine_score = 0.0;
  std::optional<double> itm_score;

  friend bool operator==(const RankedEntry&, const RankedEntry&) = default;
};

// A full permutation of the gallery, best first.
struct RankedList {
  std::vector<RankedEntry> entries;
  RankStage stage = RankStage::cosine_only;
  std::size_t k_used = 0;

  std::size_t size() const { return entries.size(); }
  friend bool operator==(const RankedList&, const RankedList&) = default;
};

struct RankOfTarget {
  std::string video_id;
  int rank = 0;  // 1 = best
};

// Stable order used at every stage: higher score first, then ascending id.
inline bool score_order(double sa, const std::string& ia, double sb, const std::string& ib) {
  if (sa != sb) return sa > sb;
  return ia < ib;
}

// Scores in double regardless of the gallery scalar so near-ties resolve
// the same way as a long-double reference.
template <typename Scalar, typename Derived>
Eigen::VectorXd cosine_scores(const Eigen::MatrixBase<Derived>& query, const Gallery<Scalar>& gallery) {
  if (query.size() != gallery.dimension()) {
    throw ValidationError("query dimension " + std::to_string(query.size()) + " does not match index dimension " +
                          std::to_string(gallery.dimension()));
  }
  const Eigen::VectorXd q = query.template cast<double>();
  Eigen::VectorXd scores(gallery.size());
  for (Eigen::Index i = 0; i < gallery.size(); ++i) {
    scores[i] = gallery.rows.row(i).template cast<double>().dot(q);
  }
  return scores;
}

// Orders gallery ids by `scores` (descending, ties by ascending id).
RankedList order_by_scores(const std::vector<std::string>& ids, const Eigen::VectorXd& scores);

// Full-corpus cosine ranking. The query must be unit-norm and the gallery
// rows unit-norm, so the dot product is the cosine.
template <typename Scalar, typename Derived>
RankedList rank_cosine(const Eigen::MatrixBase<Derived>& query, const Gallery<Scalar>& gallery) {
  return order_by_scores(gallery.ids, cosine_scores(query, gallery));
}

// Reorders the first K entries by the provider's ITM score (ties by id);
// entries past K keep their input order. `parallelism` bounds concurrent
// ITM calls.
RankedList rerank_itm(const RankedList& list, std::string_view query_text, std::size_t k, const ModelGateway& gateway,
                      int parallelism = 1);

RankOfTarget rank_of(const RankedList& list, std::string_view target);

}  // namespace iviq
