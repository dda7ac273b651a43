#pragma once

#include <cstdint>
#include <vector>

#include "hymirec/common.hpp"

namespace hymirec {

enum class CodebookMetric { Cosine, Euclidean };

/// Multi-layer residual quantizer. Layer i clusters the residuals left by
/// layers 0..i-1; in the cosine metric each layer stores the projection
/// coefficient onto the chosen centroid and leaves a residual orthogonal to
/// it, so the layers carve out mutually orthogonal directions per item.
struct ResidualCodebook {
    int dim = 0;
    int layers = 0;
    int k = 0;
    CodebookMetric metric = CodebookMetric::Cosine;
    std::vector<double> centroids;  // layers x k x dim, layer-major

    const double* centroid(int layer, int idx) const {
        return centroids.data() +
               (static_cast<std::size_t>(layer) * k + idx) * static_cast<std::size_t>(dim);
    }
    VecView centroid_view(int layer, int idx) const {
        return {centroid(layer, idx), static_cast<std::size_t>(dim)};
    }
};

/// Per-item compressed form: one centroid index and one projection scalar
/// per layer. In the Euclidean ablation projections are fixed at 1, so the
/// same decode path serves both metrics.
struct QuantCode {
    std::vector<std::uint32_t> codes;
    std::vector<double> projections;
};

struct CodebookBuildOptions {
    int layers = 3;
    int k = 256;
    int kmeans_iters = 50;
    double eps_zero = 1e-8;  // residuals below this norm are carried as exact zero
    CodebookMetric metric = CodebookMetric::Cosine;
};

ResidualCodebook build_codebook(const EmbeddingArray& base_pool, const CodebookBuildOptions& opts,
                                std::uint64_t seed);

QuantCode encode(VecView e, const ResidualCodebook& cb, double eps_zero = 1e-8);

std::vector<double> decode(const QuantCode& q, const ResidualCodebook& cb);

/// Reconstruction from the first `layer_count` layers only.
std::vector<double> decode_prefix(const QuantCode& q, const ResidualCodebook& cb, int layer_count);

/// Order-preserving batch encode (parallel over items).
std::vector<QuantCode> encode_all(const EmbeddingArray& items, const ResidualCodebook& cb,
                                  double eps_zero = 1e-8);

/// Raw-bytes-over-code-bytes ratio: (d * float_bytes) / (L * (index_bytes + float_bytes)).
double compression_ratio(int dim, int layers, int index_bytes, int float_bytes);

}  // namespace hymirec
