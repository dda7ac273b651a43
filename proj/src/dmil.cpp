#include "hymirec/dmil.hpp"

#include <algorithm>
#include <cmath>

#include "hymirec/kernels.hpp"
#include "hymirec/numerics.hpp"

namespace hymirec {
namespace {

// cos(a, b) plus d(cos)/d(b) accumulated as coeff_a * a + coeff_b * b.
struct CosParts {
    double value;
    double coeff_a;  // multiplies a in the gradient w.r.t. b
    double coeff_b;  // multiplies b
};

CosParts cos_with_grad(VecView a, VecView b) {
    const double na = norm2(a);
    const double nb = norm2(b);
    if (na == 0.0 || nb == 0.0) throw numeric_error("contrastive loss: zero-norm vector");
    const double dot = kern::dot(a.data(), b.data(), a.size());
    const double c = dot / (na * nb);
    return {c, 1.0 / (na * nb), -c / (nb * nb)};
}

int distinct_count(const std::vector<std::uint64_t>& ids) {
    std::vector<std::uint64_t> sorted = ids;
    std::sort(sorted.begin(), sorted.end());
    return static_cast<int>(std::unique(sorted.begin(), sorted.end()) - sorted.begin());
}

}  // namespace

MatchResult cluster_and_match(const WindowTargets& targets, const Mat& r_refined,
                              std::uint64_t seed, int kmeans_iters) {
    const int w = targets.embeddings.rows;
    const int s = r_refined.rows;
    if (w < 1) throw data_error("cluster_and_match: no targets");
    if (s < 1) throw data_error("cluster_and_match: no interest embeddings");
    if (targets.embeddings.cols != r_refined.cols)
        throw data_error("cluster_and_match: dimension mismatch");

    const int g = std::min(s, std::max(1, distinct_count(targets.ids)));

    EmbeddingArray pts(targets.embeddings.cols);
    for (int i = 0; i < w; ++i) pts.push_back(targets.embeddings.row_view(i));
    KMeansOptions kopts;
    kopts.max_iters = kmeans_iters;
    const KMeansResult km = spherical_kmeans(pts, g, seed, kopts);
    const int g_eff = static_cast<int>(km.centroids.size());

    MatchResult match;
    match.group_of_target = km.assignment;
    match.centroids = Mat(g_eff, targets.embeddings.cols);
    for (int c = 0; c < g_eff; ++c)
        std::copy_n(km.centroids.ptr(c), targets.embeddings.cols, match.centroids.row(c));

    // queries x groups cosine matrix; zero-norm centroids (antipodal group
    // members) score neutrally instead of erroring out of a training step.
    Mat sim(s, g_eff);
    for (int q = 0; q < s; ++q)
        for (int c = 0; c < g_eff; ++c) {
            const double cn = norm2(match.centroids.row_view(c));
            sim.at(q, c) =
                cn == 0.0 ? 0.0 : cosine_similarity(r_refined.row_view(q), match.centroids.row_view(c));
        }

    match.group_of_query = hungarian_max(sim);
    match.query_of_group.assign(g_eff, -1);
    for (int q = 0; q < s; ++q)
        if (match.group_of_query[q] >= 0) match.query_of_group[match.group_of_query[q]] = q;
    return match;
}

double contrastive_loss(VecView t, VecView r, const Mat& negatives, double tau) {
    return contrastive_loss_grad(t, r, negatives, tau, nullptr);
}

double contrastive_loss_grad(VecView t, VecView r, const Mat& negatives, double tau, double* dr) {
    if (tau <= 0.0) throw config_error("contrastive loss: tau must be > 0");
    const int m = negatives.rows;
    if (m < 1) throw data_error("contrastive loss: need at least one negative");

    const CosParts pos = cos_with_grad(t, r);
    std::vector<CosParts> neg(m);
    for (int i = 0; i < m; ++i) neg[i] = cos_with_grad(negatives.row_view(i), r);

    // log-sum-exp over [pos, negs] with max subtraction
    double mx = pos.value / tau;
    for (int i = 0; i < m; ++i) mx = std::max(mx, neg[i].value / tau);
    double z = std::exp(pos.value / tau - mx);
    const double e_pos = z;
    std::vector<double> e_neg(m);
    for (int i = 0; i < m; ++i) {
        e_neg[i] = std::exp(neg[i].value / tau - mx);
        z += e_neg[i];
    }
    const double loss = -(pos.value / tau - mx) + std::log(z);

    if (dr) {
        // d(loss)/d(z_pos) = softmax_pos - 1, d/d(z_neg_i) = softmax_i
        const double w_pos = (e_pos / z - 1.0) / tau;
        for (std::size_t k = 0; k < r.size(); ++k)
            dr[k] += w_pos * (pos.coeff_a * t[k] + pos.coeff_b * r[k]);
        for (int i = 0; i < m; ++i) {
            const double w_neg = (e_neg[i] / z) / tau;
            const double* e = negatives.row(i);
            for (std::size_t k = 0; k < r.size(); ++k)
                dr[k] += w_neg * (neg[i].coeff_a * e[k] + neg[i].coeff_b * r[k]);
        }
    }
    return loss;
}

namespace {

LossReport masked_loss(const WindowTargets& targets, const Mat& r_refined,
                       const std::vector<int>& query_of_target, const Mat& negatives, double tau,
                       int w_norm, Mat* d_refined) {
    const int s = r_refined.rows;
    const int w = targets.embeddings.rows;
    if (w_norm < 1) throw config_error("loss: normalization window must be >= 1");

    LossReport rep;
    rep.per_query.assign(s, 0.0);
    rep.per_query_grad_mass.assign(s, 0.0);
    rep.targets_per_query.assign(s, 0);

    Mat grad(s, r_refined.cols);
    const double inv_w = 1.0 / static_cast<double>(w_norm);
    for (int i = 0; i < w; ++i) {
        const int q = query_of_target[i];
        if (q < 0) continue;
        std::vector<double> dr(r_refined.cols, 0.0);
        const double l = contrastive_loss_grad(targets.embeddings.row_view(i),
                                               r_refined.row_view(q), negatives, tau, dr.data());
        rep.per_query[q] += l * inv_w;
        rep.targets_per_query[q] += 1;
        kern::axpy(inv_w, dr.data(), grad.row(q), static_cast<std::size_t>(r_refined.cols));
    }
    for (int q = 0; q < s; ++q) {
        rep.total += rep.per_query[q];
        rep.per_query_grad_mass[q] =
            std::sqrt(kern::dot(grad.row(q), grad.row(q), static_cast<std::size_t>(grad.cols)));
    }
    if (d_refined) *d_refined = std::move(grad);
    return rep;
}

}  // namespace

LossReport dmil_loss(const WindowTargets& targets, const Mat& r_refined, const MatchResult& match,
                     const Mat& negatives, double tau, int w_norm, Mat* d_refined) {
    const int w = targets.embeddings.rows;
    std::vector<int> query_of_target(w, -1);
    for (int i = 0; i < w; ++i) {
        const int group = match.group_of_target[i];
        query_of_target[i] = match.query_of_group[group];
    }
    return masked_loss(targets, r_refined, query_of_target, negatives, tau, w_norm, d_refined);
}

LossVariant loss_variant_from_string(const std::string& name) {
    if (name == "dmil" || name == "full") return LossVariant::Dmil;
    if (name == "no_dmil") return LossVariant::NoDmil;
    if (name == "no_window") return LossVariant::NoWindow;
    if (name == "max_matching") return LossVariant::MaxMatching;
    throw config_error("unknown loss variant: " + name);
}

LossReport interest_loss(LossVariant variant, const WindowTargets& targets, const Mat& r_refined,
                         const Mat& negatives, double tau, int w_norm, std::uint64_t seed,
                         Mat* d_refined, int kmeans_iters) {
    const int w = targets.embeddings.rows;
    const int s = r_refined.rows;
    if (w < 1) throw data_error("interest_loss: no targets");
    std::vector<int> query_of_target(w, -1);

    switch (variant) {
        case LossVariant::Dmil: {
            const MatchResult match = cluster_and_match(targets, r_refined, seed, kmeans_iters);
            return dmil_loss(targets, r_refined, match, negatives, tau, w_norm, d_refined);
        }
        case LossVariant::NoDmil:
            // next item only, single query, no matching machinery
            query_of_target[0] = 0;
            return masked_loss(targets, r_refined, query_of_target, negatives, tau, 1, d_refined);
        case LossVariant::NoWindow: {
            int best = 0;
            double best_sim = -2.0;
            for (int q = 0; q < s; ++q) {
                const double c =
                    cosine_similarity(targets.embeddings.row_view(0), r_refined.row_view(q));
                if (c > best_sim) {
                    best_sim = c;
                    best = q;
                }
            }
            query_of_target[0] = best;
            return masked_loss(targets, r_refined, query_of_target, negatives, tau, 1, d_refined);
        }
        case LossVariant::MaxMatching: {
            for (int i = 0; i < w; ++i) {
                int best = 0;
                double best_sim = -2.0;
                for (int q = 0; q < s; ++q) {
                    const double c =
                        cosine_similarity(targets.embeddings.row_view(i), r_refined.row_view(q));
                    if (c > best_sim) {
                        best_sim = c;
                        best = q;
                    }
                }
                query_of_target[i] = best;
            }
            return masked_loss(targets, r_refined, query_of_target, negatives, tau, w_norm,
                               d_refined);
        }
    }
    throw config_error("interest_loss: bad variant");
}

ItemUniverse::ItemUniverse(const EmbeddingArray& embs, const std::vector<std::uint64_t>& item_ids)
    : items(&embs), ids(&item_ids) {
    if (embs.size() != item_ids.size()) throw data_error("ItemUniverse: id/embedding mismatch");
    index_of.reserve(item_ids.size());
    for (std::size_t i = 0; i < item_ids.size(); ++i) index_of.emplace(item_ids[i], i);
    if (index_of.size() != item_ids.size()) throw data_error("ItemUniverse: duplicate item ids");
}

std::size_t ItemUniverse::require(std::uint64_t id) const {
    const auto it = index_of.find(id);
    if (it == index_of.end()) throw data_error("unknown item id: " + std::to_string(id));
    return it->second;
}

Mat sample_negatives(const ItemUniverse& universe, const std::unordered_set<std::uint64_t>& excluded,
                     int m, Rng& rng) {
    if (m < 1) throw config_error("sample_negatives: m must be >= 1");
    const std::size_t n = universe.ids->size();
    std::size_t excluded_present = 0;
    for (const std::uint64_t id : excluded)
        if (universe.index_of.count(id)) ++excluded_present;
    if (n - excluded_present < static_cast<std::size_t>(m))
        throw data_error("sample_negatives: pool too small after exclusion");

    const int dim = universe.items->dim;
    Mat out(m, dim);
    std::unordered_set<std::uint64_t> picked;
    picked.reserve(m);
    int got = 0;
    while (got < m) {
        const std::size_t idx = rng.below(n);
        const std::uint64_t id = (*universe.ids)[idx];
        if (excluded.count(id) || picked.count(id)) continue;
        picked.insert(id);
        std::copy_n(universe.items->ptr(idx), dim, out.row(got));
        ++got;
    }
    return out;
}

}  // namespace hymirec
