#include "iviq/ranking.hpp"

#include <atomic>
#include <mutex>
#include <thread>

#include "iviq/gateway.hpp"

namespace iviq {

std::string_view to_string(RankStage s) noexcept { return s == RankStage::reranked ? "reranked" : "cosine_only"; }

RankedList order_by_scores(const std::vector<std::string>& ids, const Eigen::VectorXd& scores) {
  std::vector<std::size_t> order(ids.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return score_order(scores[static_cast<Eigen::Index>(a)], ids[a], scores[static_cast<Eigen::Index>(b)], ids[b]);
  });
  RankedList out;
  out.entries.reserve(ids.size());
  for (const std::size_t i : order) out.entries.push_back({ids[i], scores[static_cast<Eigen::Index>(i)], std::nullopt});
  out.stage = RankStage::cosine_only;
  out.k_used = 0;
  return out;
}

RankedList rerank_itm(const RankedList& list, std::string_view query_text, std::size_t k, const ModelGateway& gateway,
                      int parallelism) {
  if (list.stage != RankStage::cosine_only) throw ValidationError("rerank_itm expects a cosine_only list");
  if (k < 1 || k > list.size()) {
    throw ValidationError("rerank K=" + std::to_string(k) + " out of range [1, " + std::to_string(list.size()) + "]");
  }
  RankedList out = list;
  std::vector<double> itm(k);
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::optional<std::pair<std::size_t, std::string>> failure;

  auto worker = [&] {
    for (std::size_t i = next++; i < k; i = next++) {
      try {
        itm[i] = gateway.itm(list.entries[i].video_id, query_text);
      } catch (const std::exception& e) {
        std::lock_guard lock(error_mutex);
        if (!failure || i < failure->first) failure = {i, e.what()};
      }
    }
  };
  const auto n_threads = static_cast<std::size_t>(std::max(1, parallelism));
  if (n_threads == 1 || k == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < std::min(n_threads, k); ++t) pool.emplace_back(worker);
  }
  if (failure) {
    throw ProviderError("/v1/itm", "video '" + list.entries[failure->first].video_id + "': " + failure->second);
  }

  for (std::size_t i = 0; i < k; ++i) out.entries[i].itm_score = itm[i];
  std::sort(out.entries.begin(), out.entries.begin() + static_cast<std::ptrdiff_t>(k),
            [](const RankedEntry& a, const RankedEntry& b) {
              return score_order(*a.itm_score, a.video_id, *b.itm_score, b.video_id);
            });
  out.stage = RankStage::reranked;
  out.k_used = k;
  return out;
}

RankOfTarget rank_of(const RankedList& list, std::string_view target) {
  for (std::size_t i = 0; i < list.entries.size(); ++i) {
    if (list.entries[i].video_id == target) return {std::string(target), static_cast<int>(i + 1)};
  }
  throw NotFoundError("target '" + std::string(target) + "' is not in the ranking");
}

}  // namespace iviq
