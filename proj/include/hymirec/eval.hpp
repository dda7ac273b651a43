#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "hymirec/common.hpp"
#include "hymirec/io.hpp"
#include "hymirec/matrix.hpp"

namespace hymirec {

/// Planted multi-interest world: G well-separated cluster directions, items
/// scattered around them, users who interleave draws from a small personal
/// pool per interest. The per-user taste concentration is what makes
/// Recall@K sensitive to how many interests the model covers.
struct SyntheticSpec {
    int clusters = 4;  // G
    int items_per_cluster = 5000;
    double spread = 0.1;  // item noise around the cluster direction
    int users = 2000;
    int interests_min = 1;
    int interests_max = 3;
    int seq_len = 80;
    int dim = 64;
    double taste_spread = 0.05;  // user taste noise within a cluster
    int taste_pool = 100;        // items a user actually interacts with, per interest
    double max_pairwise_cos = 0.3;

    void validate() const;
};

struct SyntheticData {
    EmbeddingTable items;  // unit-norm embeddings, ids 0..N-1
    std::vector<int> item_cluster;
    Mat cluster_dirs;  // G x d planted directions
    std::vector<UserSequence> sequences;
    std::vector<std::vector<int>> user_interests;
};

SyntheticData generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

/// |top-K hits| / |distinct window ids|.
double recall_at_k(const std::vector<std::uint64_t>& ranked, const std::vector<std::uint64_t>& window,
                   int k);

/// Binary-relevance NDCG with 1/log2(rank+1) discounting.
double ndcg_at_k(const std::vector<std::uint64_t>& ranked, const std::vector<std::uint64_t>& window,
                 int k);

struct MetricsReport {
    std::map<int, double> recall;
    std::map<int, double> ndcg;
    std::map<int, std::vector<double>> per_user_recall;
    std::map<int, std::vector<double>> per_user_ndcg;
};

/// (long_history | last_n | window) boundaries over one sequence.
struct SeqSplit {
    std::span<const std::uint64_t> history;
    std::span<const std::uint64_t> last_n;
    std::span<const std::uint64_t> window;
};

/// Held-out split: the final w items are the evaluation window.
SeqSplit eval_split(const UserSequence& seq, int n_last, int l_max, int w);

/// Training split with targets starting at `cut`; inputs never reach the
/// final eval window (cut + w <= len - w_eval is enforced by the caller's
/// cut range).
SeqSplit train_split(const UserSequence& seq, std::size_t cut, int n_last, int l_max, int w);

}  // namespace hymirec
