#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "hymirec/common.hpp"
#include "hymirec/matrix.hpp"
#include "hymirec/rng.hpp"

namespace hymirec {

/// The w future interactions supervising one training example.
struct WindowTargets {
    Mat embeddings;  // w x d
    std::vector<std::uint64_t> ids;
};

struct MatchResult {
    std::vector<int> group_of_target;  // target -> group
    Mat centroids;                     // g x d group means, g = min(s, distinct targets)
    std::vector<int> group_of_query;   // s entries, -1 for unmatched queries
    std::vector<int> query_of_group;   // g entries
};

struct LossReport {
    double total = 0.0;
    std::vector<double> per_query;            // summed matched loss, zero when unmatched
    std::vector<double> per_query_grad_mass;  // L2 of d(total)/d(r_j)
    std::vector<int> targets_per_query;       // supervision count behind each query
};

/// Cluster the window targets into g = min(s, #distinct targets) groups by
/// cosine k-means and match group centroids to the refined interest
/// embeddings by maximum-total-cosine assignment. Recomputed every step and
/// treated as non-differentiable.
MatchResult cluster_and_match(const WindowTargets& targets, const Mat& r_refined,
                              std::uint64_t seed, int kmeans_iters = 50);

/// InfoNCE with cosine logits: -log exp(cos(t,r)/tau) over
/// (positive + sum_i exp(cos(r,e_i)/tau)), stabilized by max subtraction.
double contrastive_loss(VecView t, VecView r, const Mat& negatives, double tau);

/// Same, accumulating d(loss)/d(r) into dr (length d).
double contrastive_loss_grad(VecView t, VecView r, const Mat& negatives, double tau, double* dr);

/// Masked window loss per the match: each target supervises only the query
/// its group was matched to; total is normalized by w_norm. Gradients reach
/// only matched queries; d_refined (s x d) receives d(total)/d(r) when
/// non-null.
LossReport dmil_loss(const WindowTargets& targets, const Mat& r_refined, const MatchResult& match,
                     const Mat& negatives, double tau, int w_norm, Mat* d_refined);

enum class LossVariant { Dmil, NoDmil, NoWindow, MaxMatching };
LossVariant loss_variant_from_string(const std::string& name);

/// Dispatches between the full objective and its ablations. NoDmil uses the
/// first target against query 0 only; NoWindow sends the first target to its
/// most similar query; MaxMatching sends every target to its most similar
/// query (no assignment step).
LossReport interest_loss(LossVariant variant, const WindowTargets& targets, const Mat& r_refined,
                         const Mat& negatives, double tau, int w_norm, std::uint64_t seed,
                         Mat* d_refined, int kmeans_iters = 50);

/// Item catalogue with id lookup, shared by negative sampling and serving.
struct ItemUniverse {
    const EmbeddingArray* items = nullptr;
    const std::vector<std::uint64_t>* ids = nullptr;
    std::unordered_map<std::uint64_t, std::size_t> index_of;

    ItemUniverse() = default;
    ItemUniverse(const EmbeddingArray& embs, const std::vector<std::uint64_t>& item_ids);
    std::size_t require(std::uint64_t id) const;  // data_error when unknown
};

/// m distinct items drawn uniformly outside the excluded set. Errors when
/// the pool is too small after exclusion.
Mat sample_negatives(const ItemUniverse& universe, const std::unordered_set<std::uint64_t>& excluded,
                     int m, Rng& rng);

}  // namespace hymirec
