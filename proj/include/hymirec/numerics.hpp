#pragma once

#include <cstdint>
#include <vector>

#include "hymirec/common.hpp"
#include "hymirec/matrix.hpp"
#include "hymirec/rng.hpp"

namespace hymirec {

/// Cosine similarity in [-1, 1]. Throws numeric_error on zero-norm input —
/// never a silent 0.
double cosine_similarity(VecView a, VecView b);

double norm2(VecView v);

struct KMeansResult {
    EmbeddingArray centroids;     // arithmetic means, not renormalized
    std::vector<int> assignment;  // per input point
    int iterations = 0;
    double objective = 0.0;  // sum of cos(point, assigned centroid)
};

struct KMeansOptions {
    int max_iters = 50;
};

/// Capacity-constrained cosine k-means: every cluster ends with either
/// floor(N/k) or ceil(N/k) points. Assignment is greedy by similarity margin
/// (best minus second-best, descending) under per-cluster capacity.
/// Deterministic for a fixed seed and independent of the thread count.
KMeansResult balanced_kmeans_cosine(const EmbeddingArray& points, int k, std::uint64_t seed,
                                    const KMeansOptions& opts = {});

/// Unconstrained cosine k-means with k clamped to the point count; empty
/// clusters are reseeded from the point worst-fit to its current centroid.
KMeansResult spherical_kmeans(const EmbeddingArray& points, int k, std::uint64_t seed,
                              const KMeansOptions& opts = {});

/// Euclidean counterpart used by the codebook ablation.
KMeansResult balanced_kmeans_euclidean(const EmbeddingArray& points, int k, std::uint64_t seed,
                                       const KMeansOptions& opts = {});

/// Maximum-total-similarity assignment for an s x g matrix (rows = queries,
/// columns = groups, g <= s). Returns the column matched to each row, -1 for
/// unmatched rows. Every column is matched exactly once. Among maximizing
/// assignments, returns the one whose (row0's column, row1's column, ...)
/// vector is lexicographically smallest with "unmatched" ordered last.
std::vector<int> hungarian_max(const Mat& sim);

}  // namespace hymirec
