#include "hymirec/codebook.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "hymirec/kernels.hpp"
#include "hymirec/numerics.hpp"
#include "hymirec/threadpool.hpp"

namespace hymirec {
namespace {

// argmax-cosine centroid for a residual; ties resolved to the lowest index.
// Centroid norms are precomputed by the caller.
int pick_cosine(VecView r, const ResidualCodebook& cb, int layer, const std::vector<double>& cnorms) {
    int best = 0;
    double best_sim = -2.0;
    for (int x = 0; x < cb.k; ++x) {
        const double cn = cnorms[static_cast<std::size_t>(layer) * cb.k + x];
        if (cn == 0.0) continue;
        const double sim = kern::dot(r.data(), cb.centroid(layer, x), r.size()) / cn;  // / ||r|| omitted: constant per r
        if (sim > best_sim) {
            best_sim = sim;
            best = x;
        }
    }
    return best;
}

int pick_euclidean(VecView r, const ResidualCodebook& cb, int layer) {
    int best = 0;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (int x = 0; x < cb.k; ++x) {
        const double* c = cb.centroid(layer, x);
        double d2 = 0.0;
        for (std::size_t t = 0; t < r.size(); ++t) {
            const double d = r[t] - c[t];
            d2 += d * d;
        }
        if (d2 < best_d2) {
            best_d2 = d2;
            best = x;
        }
    }
    return best;
}

std::vector<double> centroid_norms(const ResidualCodebook& cb) {
    std::vector<double> norms(static_cast<std::size_t>(cb.layers) * cb.k);
    for (int l = 0; l < cb.layers; ++l)
        for (int x = 0; x < cb.k; ++x)
            norms[static_cast<std::size_t>(l) * cb.k + x] = norm2(cb.centroid_view(l, x));
    return norms;
}

// Peel one layer off a residual in place; returns (code, projection).
std::pair<int, double> peel(std::vector<double>& r, const ResidualCodebook& cb, int layer,
                            const std::vector<double>& cnorms) {
    if (cb.metric == CodebookMetric::Euclidean) {
        const int code = pick_euclidean(r, cb, layer);
        kern::axpy(-1.0, cb.centroid(layer, code), r.data(), r.size());
        return {code, 1.0};
    }
    const int code = pick_cosine(r, cb, layer, cnorms);
    const double* c = cb.centroid(layer, code);
    const double cn = cnorms[static_cast<std::size_t>(layer) * cb.k + code];
    const double p = cn == 0.0 ? 0.0 : kern::dot(r.data(), c, r.size()) / (cn * cn);
    kern::axpy(-p, c, r.data(), r.size());
    return {code, p};
}

}  // namespace

ResidualCodebook build_codebook(const EmbeddingArray& base_pool, const CodebookBuildOptions& opts,
                                std::uint64_t seed) {
    const std::size_t n = base_pool.size();
    const int dim = base_pool.dim;
    if (opts.layers < 1) throw config_error("build_codebook: layers must be >= 1");
    if (opts.k < 1) throw config_error("build_codebook: k must be >= 1");
    if (n < static_cast<std::size_t>(opts.k))
        throw data_error("build_codebook: base pool smaller than k (" + std::to_string(n) + " < " +
                         std::to_string(opts.k) + ")");
    for (std::size_t i = 0; i < n; ++i)
        if (!all_finite(base_pool[i])) throw data_error("build_codebook: non-finite embedding");

    ResidualCodebook cb;
    cb.dim = dim;
    cb.layers = opts.layers;
    cb.k = opts.k;
    cb.metric = opts.metric;
    cb.centroids.assign(static_cast<std::size_t>(opts.layers) * opts.k * dim, 0.0);

    EmbeddingArray residuals = base_pool;
    Rng layer_rng = Rng::stream(seed, "codebook");

    for (int layer = 0; layer < opts.layers; ++layer) {
        // Near-zero residuals are carried as exact zero and sit out the
        // clustering for this and later layers.
        EmbeddingArray active(dim);
        for (std::size_t i = 0; i < n; ++i)
            if (norm2(residuals[i]) >= opts.eps_zero) active.push_back(residuals[i]);

        const std::size_t n_active = active.size();
        const std::uint64_t lseed = layer_rng.split(layer).u64();
        KMeansOptions kopts;
        kopts.max_iters = opts.kmeans_iters;

        std::size_t filled = 0;
        if (n_active >= static_cast<std::size_t>(opts.k)) {
            const KMeansResult km = opts.metric == CodebookMetric::Cosine
                                        ? balanced_kmeans_cosine(active, opts.k, lseed, kopts)
                                        : balanced_kmeans_euclidean(active, opts.k, lseed, kopts);
            for (int x = 0; x < opts.k; ++x)
                std::copy_n(km.centroids.ptr(x), dim,
                            cb.centroids.data() +
                                (static_cast<std::size_t>(layer) * opts.k + x) * dim);
            filled = static_cast<std::size_t>(opts.k);
        } else if (n_active > 0) {
            const int k_eff = static_cast<int>(n_active);
            const KMeansResult km = opts.metric == CodebookMetric::Cosine
                                        ? balanced_kmeans_cosine(active, k_eff, lseed, kopts)
                                        : balanced_kmeans_euclidean(active, k_eff, lseed, kopts);
            for (int x = 0; x < k_eff; ++x)
                std::copy_n(km.centroids.ptr(x), dim,
                            cb.centroids.data() +
                                (static_cast<std::size_t>(layer) * opts.k + x) * dim);
            filled = n_active;
        }
        // Degenerate layers (everything already reconstructed) still need k
        // nonzero centroids; pad with unit basis vectors. They only receive
        // zero projections.
        for (std::size_t x = filled; x < static_cast<std::size_t>(opts.k); ++x) {
            double* c = cb.centroids.data() + (static_cast<std::size_t>(layer) * opts.k + x) * dim;
            c[x % dim] = 1.0;
        }

        if (layer + 1 == opts.layers) break;

        const std::vector<double> cnorms = centroid_norms(cb);
        parallel_for(n, 512, [&](std::size_t lo, std::size_t hi) {
            std::vector<double> r(dim);
            for (std::size_t i = lo; i < hi; ++i) {
                if (norm2(residuals[i]) < opts.eps_zero) {
                    std::fill_n(residuals.ptr(i), dim, 0.0);
                    continue;
                }
                std::copy_n(residuals.ptr(i), dim, r.begin());
                peel(r, cb, layer, cnorms);
                std::copy_n(r.begin(), dim, residuals.ptr(i));
            }
        });
    }
    return cb;
}

namespace {

QuantCode encode_with_norms(VecView e, const ResidualCodebook& cb, double eps_zero,
                            const std::vector<double>& cnorms) {
    if (static_cast<int>(e.size()) != cb.dim) throw data_error("encode: dimension mismatch");
    QuantCode q;
    q.codes.resize(cb.layers);
    q.projections.resize(cb.layers);
    std::vector<double> r(e.begin(), e.end());
    int last_code = 0;
    for (int layer = 0; layer < cb.layers; ++layer) {
        if (norm2(r) < eps_zero) {
            // Nothing left to explain: repeat the last valid layer's pick
            // with a zero projection (decode ignores it).
            q.codes[layer] = static_cast<std::uint32_t>(last_code);
            q.projections[layer] = 0.0;
            continue;
        }
        const auto [code, p] = peel(r, cb, layer, cnorms);
        q.codes[layer] = static_cast<std::uint32_t>(code);
        q.projections[layer] = p;
        last_code = code;
    }
    return q;
}

}  // namespace

QuantCode encode(VecView e, const ResidualCodebook& cb, double eps_zero) {
    return encode_with_norms(e, cb, eps_zero, centroid_norms(cb));
}

std::vector<double> decode_prefix(const QuantCode& q, const ResidualCodebook& cb, int layer_count) {
    if (static_cast<int>(q.codes.size()) != cb.layers ||
        static_cast<int>(q.projections.size()) != cb.layers)
        throw data_error("decode: code/codebook layer mismatch");
    if (layer_count < 0 || layer_count > cb.layers) throw data_error("decode: bad layer count");
    std::vector<double> out(cb.dim, 0.0);
    for (int layer = 0; layer < layer_count; ++layer) {
        if (q.codes[layer] >= static_cast<std::uint32_t>(cb.k))
            throw data_error("decode: code index out of range");
        kern::axpy(q.projections[layer], cb.centroid(layer, q.codes[layer]), out.data(),
                   out.size());
    }
    return out;
}

std::vector<double> decode(const QuantCode& q, const ResidualCodebook& cb) {
    return decode_prefix(q, cb, cb.layers);
}

std::vector<QuantCode> encode_all(const EmbeddingArray& items, const ResidualCodebook& cb,
                                  double eps_zero) {
    const std::vector<double> cnorms = centroid_norms(cb);
    std::vector<QuantCode> out(items.size());
    parallel_for(items.size(), 256, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) out[i] = encode_with_norms(items[i], cb, eps_zero, cnorms);
    });
    return out;
}

double compression_ratio(int dim, int layers, int index_bytes, int float_bytes) {
    if (dim <= 0 || layers <= 0 || index_bytes <= 0 || float_bytes <= 0)
        throw config_error("compression_ratio: all arguments must be positive");
    return (static_cast<double>(dim) * float_bytes) /
           (static_cast<double>(layers) * (index_bytes + float_bytes));
}

}  // namespace hymirec
