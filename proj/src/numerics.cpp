#include "hymirec/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "hymirec/threadpool.hpp"

namespace hymirec {

double norm2(VecView v) { return std::sqrt(kern::dot(v.data(), v.data(), v.size())); }

double cosine_similarity(VecView a, VecView b) {
    if (a.size() != b.size()) throw data_error("cosine_similarity: dimension mismatch");
    const double na = norm2(a);
    const double nb = norm2(b);
    if (na == 0.0 || nb == 0.0) throw numeric_error("cosine_similarity: zero-norm vector");
    return kern::dot(a.data(), b.data(), a.size()) / (na * nb);
}

namespace {

enum class Metric { Cosine, Euclidean };

double point_norm_or_throw(VecView p) {
    const double n = norm2(p);
    if (n == 0.0) throw numeric_error("k-means: zero-norm point");
    return n;
}

// Similarity of point i to centroid c. Cosine of a zero-norm centroid is
// pinned below -1 so it is only ever picked when capacity forces it.
double sim_to_centroid(Metric m, VecView p, double pnorm, VecView c, double cnorm) {
    if (m == Metric::Cosine) {
        if (cnorm == 0.0) return -2.0;
        return kern::dot(p.data(), c.data(), p.size()) / (pnorm * cnorm);
    }
    double d2 = 0.0;
    for (std::size_t t = 0; t < p.size(); ++t) {
        const double d = p[t] - c[t];
        d2 += d * d;
    }
    return -d2;
}

// k-means++ style seeding; distinct point indices, weights (1 - cos)^2 or
// squared euclidean distance.
EmbeddingArray seed_centroids(const EmbeddingArray& pts, const std::vector<double>& norms, int k,
                              Metric metric, Rng& rng) {
    const std::size_t n = pts.size();
    EmbeddingArray centroids(pts.dim);
    std::vector<char> chosen(n, 0);
    std::vector<double> weight(n, 0.0);

    std::size_t first = rng.below(n);
    centroids.push_back(pts[first]);
    chosen[first] = 1;

    for (std::size_t i = 0; i < n; ++i) {
        const double s = sim_to_centroid(metric, pts[i], norms[i], pts[first],
                                         metric == Metric::Cosine ? norm2(pts[first]) : 0.0);
        const double d = metric == Metric::Cosine ? (1.0 - s) : -s;
        weight[i] = d * d;
    }

    for (int c = 1; c < k; ++c) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            if (!chosen[i]) total += weight[i];
        std::size_t pick = n;
        if (total > 0.0) {
            double r = rng.real() * total;
            for (std::size_t i = 0; i < n; ++i) {
                if (chosen[i]) continue;
                r -= weight[i];
                if (r <= 0.0) {
                    pick = i;
                    break;
                }
            }
        }
        if (pick == n) {  // all remaining weights zero (duplicates): first unchosen
            for (std::size_t i = 0; i < n; ++i)
                if (!chosen[i]) {
                    pick = i;
                    break;
                }
        }
        centroids.push_back(pts[pick]);
        chosen[pick] = 1;
        const double cn = metric == Metric::Cosine ? norm2(pts[pick]) : 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (chosen[i]) continue;
            const double s = sim_to_centroid(metric, pts[i], norms[i], pts[pick], cn);
            const double d = metric == Metric::Cosine ? (1.0 - s) : -s;
            weight[i] = std::min(weight[i], d * d);
        }
    }
    return centroids;
}

// Full point x centroid similarity matrix, float storage (comparisons below
// operate on the stored values, so ordering is exact and reproducible).
void fill_sims(const EmbeddingArray& pts, const std::vector<double>& pnorms,
               const EmbeddingArray& cents, Metric metric, std::vector<float>& sims) {
    const std::size_t n = pts.size();
    const int k = static_cast<int>(cents.size());
    std::vector<double> cnorms(k, 0.0);
    if (metric == Metric::Cosine)
        for (int c = 0; c < k; ++c) cnorms[c] = norm2(cents[c]);
    sims.resize(n * k);
    parallel_for(n, 256, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i)
            for (int c = 0; c < k; ++c)
                sims[i * k + c] =
                    static_cast<float>(sim_to_centroid(metric, pts[i], pnorms[i], cents[c], cnorms[c]));
    });
}

EmbeddingArray means_of(const EmbeddingArray& pts, const std::vector<int>& assign, int k) {
    const int dim = pts.dim;
    EmbeddingArray cents(dim, static_cast<std::size_t>(k));
    std::vector<int> count(k, 0);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        kern::axpy(1.0, pts.ptr(i), cents.ptr(assign[i]), static_cast<std::size_t>(dim));
        ++count[assign[i]];
    }
    for (int c = 0; c < k; ++c)
        if (count[c] > 0) kern::scale(cents.ptr(c), 1.0 / count[c], static_cast<std::size_t>(dim));
    return cents;
}

double objective_of(const EmbeddingArray& pts, const std::vector<double>& pnorms,
                    const EmbeddingArray& cents, const std::vector<int>& assign, Metric metric) {
    std::vector<double> cnorms(cents.size());
    for (std::size_t c = 0; c < cents.size(); ++c)
        cnorms[c] = metric == Metric::Cosine ? norm2(cents[c]) : 0.0;
    double j = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i)
        j += sim_to_centroid(metric, pts[i], pnorms[i], cents[assign[i]], cnorms[assign[i]]);
    return j;
}

// Greedy capacity-constrained assignment: order points by margin (best minus
// second-best similarity, descending), give each its best cluster that can
// still accept. Exactly N%k clusters end at ceil(N/k), the rest at floor.
std::vector<int> balanced_assign(const std::vector<float>& sims, std::size_t n, int k) {
    const std::size_t cap_small = n / static_cast<std::size_t>(k);
    const int extra = static_cast<int>(n % static_cast<std::size_t>(k));

    struct Entry {
        float margin;
        std::uint32_t idx;
    };
    std::vector<Entry> order(n);
    for (std::size_t i = 0; i < n; ++i) {
        float best = -std::numeric_limits<float>::infinity();
        float second = best;
        for (int c = 0; c < k; ++c) {
            const float s = sims[i * k + c];
            if (s > best) {
                second = best;
                best = s;
            } else if (s > second) {
                second = s;
            }
        }
        order[i] = {k == 1 ? 0.0f : best - second, static_cast<std::uint32_t>(i)};
    }
    std::sort(order.begin(), order.end(), [](const Entry& a, const Entry& b) {
        if (a.margin != b.margin) return a.margin > b.margin;
        return a.idx < b.idx;
    });

    std::vector<std::size_t> size(k, 0);
    int big_used = 0;
    std::vector<int> assign(n, -1);
    for (const Entry& e : order) {
        int best_c = -1;
        float best_s = -std::numeric_limits<float>::infinity();
        for (int c = 0; c < k; ++c) {
            const bool open = size[c] < cap_small || (size[c] == cap_small && big_used < extra);
            if (!open) continue;
            const float s = sims[e.idx * static_cast<std::size_t>(k) + c];
            if (s > best_s) {
                best_s = s;
                best_c = c;
            }
        }
        assign[e.idx] = best_c;
        if (++size[best_c] == cap_small + 1) ++big_used;
    }
    return assign;
}

KMeansResult balanced_kmeans(const EmbeddingArray& points, int k, std::uint64_t seed,
                             const KMeansOptions& opts, Metric metric) {
    const std::size_t n = points.size();
    if (k < 1) throw config_error("balanced k-means: k must be >= 1");
    if (n < static_cast<std::size_t>(k))
        throw data_error("balanced k-means: fewer points than clusters (" + std::to_string(n) +
                         " < " + std::to_string(k) + ")");

    std::vector<double> pnorms(n);
    for (std::size_t i = 0; i < n; ++i)
        pnorms[i] = metric == Metric::Cosine ? point_norm_or_throw(points[i]) : norm2(points[i]);

    Rng rng(seed);
    EmbeddingArray cents = seed_centroids(points, pnorms, k, metric, rng);

    KMeansResult best;
    best.objective = -std::numeric_limits<double>::infinity();
    std::vector<int> prev_assign;
    std::vector<float> sims;

    for (int iter = 0; iter < std::max(1, opts.max_iters); ++iter) {
        fill_sims(points, pnorms, cents, metric, sims);
        std::vector<int> assign = balanced_assign(sims, n, k);
        EmbeddingArray new_cents = means_of(points, assign, k);
        const double j = objective_of(points, pnorms, new_cents, assign, metric);

        if (j < best.objective - 1e-12) break;  // keep the best state: objective stays monotone
        best.centroids = std::move(new_cents);
        best.assignment = assign;
        best.objective = j;
        best.iterations = iter + 1;
        if (assign == prev_assign) break;
        prev_assign = std::move(assign);
        cents = best.centroids;
    }
    return best;
}

}  // namespace

KMeansResult balanced_kmeans_cosine(const EmbeddingArray& points, int k, std::uint64_t seed,
                                    const KMeansOptions& opts) {
    return balanced_kmeans(points, k, seed, opts, Metric::Cosine);
}

KMeansResult balanced_kmeans_euclidean(const EmbeddingArray& points, int k, std::uint64_t seed,
                                       const KMeansOptions& opts) {
    return balanced_kmeans(points, k, seed, opts, Metric::Euclidean);
}

KMeansResult spherical_kmeans(const EmbeddingArray& points, int k, std::uint64_t seed,
                              const KMeansOptions& opts) {
    const std::size_t n = points.size();
    if (n == 0) throw data_error("spherical k-means: empty input");
    if (k < 1) throw config_error("spherical k-means: k must be >= 1");
    k = static_cast<int>(std::min<std::size_t>(k, n));  // effective k

    std::vector<double> pnorms(n);
    for (std::size_t i = 0; i < n; ++i) pnorms[i] = point_norm_or_throw(points[i]);

    Rng rng(seed);
    EmbeddingArray cents = seed_centroids(points, pnorms, k, Metric::Cosine, rng);

    KMeansResult res;
    std::vector<int> prev_assign;
    std::vector<float> sims;

    for (int iter = 0; iter < std::max(1, opts.max_iters); ++iter) {
        fill_sims(points, pnorms, cents, Metric::Cosine, sims);
        std::vector<int> assign(n);
        parallel_for(n, 256, [&](std::size_t lo, std::size_t hi) {
            for (std::size_t i = lo; i < hi; ++i) {
                int bc = 0;
                float bs = sims[i * k];
                for (int c = 1; c < k; ++c)
                    if (sims[i * k + c] > bs) {
                        bs = sims[i * k + c];
                        bc = c;
                    }
                assign[i] = bc;
            }
        });

        // Reseed empty clusters from the globally worst-fit point.
        std::vector<int> size(k, 0);
        for (std::size_t i = 0; i < n; ++i) ++size[assign[i]];
        for (int c = 0; c < k; ++c) {
            if (size[c] != 0) continue;
            std::size_t worst = n;
            float worst_sim = std::numeric_limits<float>::infinity();
            for (std::size_t i = 0; i < n; ++i) {
                if (size[assign[i]] < 2) continue;
                const float s = sims[i * k + assign[i]];
                if (s < worst_sim) {
                    worst_sim = s;
                    worst = i;
                }
            }
            if (worst == n) break;
            --size[assign[worst]];
            assign[worst] = c;
            ++size[c];
        }

        res.centroids = means_of(points, assign, k);
        res.iterations = iter + 1;
        const bool converged = assign == prev_assign;
        prev_assign = assign;
        res.assignment = std::move(assign);
        if (converged) break;
    }
    res.objective = objective_of(points, pnorms, res.centroids, res.assignment, Metric::Cosine);
    return res;
}

// ---------------------------------------------------------------------------
// Hungarian assignment
// ---------------------------------------------------------------------------

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Classic O(n^2 m) potential-based assignment, minimizing cost over an
// n x m matrix with n <= m; every row gets a distinct column.
// Returns row -> column.
std::vector<int> assignment_min_cost(const std::vector<std::vector<double>>& cost) {
    const int n = static_cast<int>(cost.size());
    const int m = n == 0 ? 0 : static_cast<int>(cost[0].size());
    std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
    std::vector<int> p(m + 1, 0), way(m + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(m + 1, kInf);
        std::vector<char> used(m + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            double delta = kInf;
            int j1 = -1;
            for (int j = 1; j <= m; ++j) {
                if (used[j]) continue;
                const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= m; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    std::vector<int> row_to_col(n, -1);
    for (int j = 1; j <= m; ++j)
        if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
    return row_to_col;
}

// Canonical total: summed over group (column) index ascending, so equal
// assignments always produce bit-identical sums.
double canonical_total(const Mat& sim, const std::vector<int>& group_of_query) {
    const int g = sim.cols;
    std::vector<int> query_of_group(g, -1);
    for (int q = 0; q < sim.rows; ++q)
        if (group_of_query[q] >= 0) query_of_group[group_of_query[q]] = q;
    double total = 0.0;
    for (int c = 0; c < g; ++c) total += sim.at(query_of_group[c], c);
    return total;
}

// Best assignment subject to fixed query decisions (-2 free, -1 unmatched,
// >=0 that group). Remaining groups are matched among free queries.
std::vector<int> solve_constrained(const Mat& sim, const std::vector<int>& fixed) {
    const int s = sim.rows;
    const int g = sim.cols;
    std::vector<char> group_taken(g, 0);
    std::vector<int> free_queries;
    for (int q = 0; q < s; ++q) {
        if (fixed[q] >= 0)
            group_taken[fixed[q]] = 1;
        else if (fixed[q] == -2)
            free_queries.push_back(q);
    }
    std::vector<int> free_groups;
    for (int c = 0; c < g; ++c)
        if (!group_taken[c]) free_groups.push_back(c);

    std::vector<int> result(fixed);
    for (int& r : result)
        if (r == -2) r = -1;
    if (!free_groups.empty()) {
        std::vector<std::vector<double>> cost(free_groups.size(),
                                              std::vector<double>(free_queries.size()));
        for (std::size_t a = 0; a < free_groups.size(); ++a)
            for (std::size_t b = 0; b < free_queries.size(); ++b)
                cost[a][b] = -sim.at(free_queries[b], free_groups[a]);
        const std::vector<int> sub = assignment_min_cost(cost);
        for (std::size_t a = 0; a < free_groups.size(); ++a)
            result[free_queries[sub[a]]] = free_groups[a];
    }
    return result;
}

}  // namespace

std::vector<int> hungarian_max(const Mat& sim) {
    const int s = sim.rows;
    const int g = sim.cols;
    if (s == 0 || g == 0) throw data_error("hungarian_max: empty similarity matrix");
    if (g > s) throw data_error("hungarian_max: more columns than rows");

    std::vector<int> fixed(s, -2);
    std::vector<int> witness = solve_constrained(sim, fixed);
    const double best_total = canonical_total(sim, witness);

    // Lexicographic tie-break: fix queries in row order to the smallest
    // column (unmatched last) that still admits an optimal completion.
    // Totals are compared exactly in canonical order; if floating-point noise
    // ever breaks every candidate, the current witness stands.
    for (int q = 0; q < s; ++q) {
        std::vector<char> taken(g, 0);
        int fixed_count = 0;
        for (int qq = 0; qq < q; ++qq) {
            if (fixed[qq] >= 0) {
                taken[fixed[qq]] = 1;
                ++fixed_count;
            }
        }
        const int groups_left = g - fixed_count;
        const int queries_left_after = s - q - 1;

        bool accepted = false;
        for (int cand = 0; cand <= g; ++cand) {  // g means "unmatched"
            if (cand < g) {
                if (taken[cand]) continue;
                if (groups_left - 1 > queries_left_after) continue;
            } else {
                if (groups_left > queries_left_after) continue;  // must take a group
            }
            fixed[q] = cand < g ? cand : -1;
            const std::vector<int> sol = solve_constrained(sim, fixed);
            if (canonical_total(sim, sol) == best_total) {
                witness = sol;
                accepted = true;
                break;
            }
        }
        if (!accepted) {  // floating-point pathology: freeze the witness
            for (int qq = q; qq < s; ++qq) fixed[qq] = witness[qq];
            break;
        }
    }
    return witness;
}

}  // namespace hymirec
