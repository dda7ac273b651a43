#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "hymirec/common.hpp"
#include "hymirec/matrix.hpp"

namespace hymirec {

/// Immutable candidate pool: unit-normalized f32 vectors scored with the
/// float kernels. Exact brute-force top-K; no ANN at desk scale.
class RetrievalIndex {
  public:
    static RetrievalIndex build(const std::vector<std::uint64_t>& ids, const EmbeddingArray& embs);
    static RetrievalIndex load(const std::string& path);
    void save(const std::string& path) const;

    std::size_t size() const { return ids_.size(); }
    int dim() const { return dim_; }
    const std::vector<std::uint64_t>& ids() const { return ids_; }
    const float* vec(std::size_t i) const { return vecs_.data() + i * static_cast<std::size_t>(dim_); }
    std::size_t position_of(std::uint64_t id) const;

  private:
    void index_ids();

    int dim_ = 0;
    std::vector<std::uint64_t> ids_;
    std::vector<float> vecs_;
    std::unordered_map<std::uint64_t, std::size_t> pos_of_;
};

/// One user's current interest vectors plus the interaction count at the
/// last refresh.
struct InterestSet {
    std::uint64_t user_id = 0;
    Mat interests;  // s x d, rows normalized on construction
    std::uint64_t version = 0;
    std::vector<float> flat;  // f32 copy used for scoring

    static InterestSet make(std::uint64_t user_id, const Mat& interests, std::uint64_t version);
};

struct ScoredItem {
    std::uint64_t id = 0;
    float score = 0.0f;
};

/// Max over queries of cos(item, r_j); the multi-interest relevance rule.
double score(VecView item, const InterestSet& interests);

/// Query-splitting retrieval: per-query exact top-K, deduplicated union,
/// rescored by the max rule, final top-K. Ties break toward the lower item
/// id everywhere, which makes the result identical to a full scan.
std::vector<ScoredItem> retrieve_topk(const RetrievalIndex& index, const InterestSet& interests,
                                      int k);

struct SessionLogEntry {
    std::size_t event_index = 0;
    std::uint64_t version = 0;
    std::vector<ScoredItem> items;
};

/// Serving simulation: interests recomputed every refresh_period events
/// (stale in between), recommendations never contain already-interacted
/// items.
std::vector<SessionLogEntry> serve_session(
    const std::vector<std::uint64_t>& events,
    const std::function<Mat(std::span<const std::uint64_t>)>& recompute_interests,
    const RetrievalIndex& index, int refresh_period, int k);

}  // namespace hymirec
