#include "hymirec/eval.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "hymirec/kernels.hpp"
#include "hymirec/numerics.hpp"
#include "hymirec/rng.hpp"
#include "hymirec/threadpool.hpp"

namespace hymirec {

void SyntheticSpec::validate() const {
    if (clusters < 1 || items_per_cluster < 1 || users < 1 || dim < 1)
        throw config_error("synthetic: counts must be positive");
    if (interests_min < 1 || interests_max < interests_min || interests_max > clusters)
        throw config_error("synthetic: bad interests_per_user range");
    if (seq_len < 1) throw config_error("synthetic: seq_len must be >= 1");
    if (spread < 0 || taste_spread < 0) throw config_error("synthetic: negative spread");
    if (taste_pool < 1) throw config_error("synthetic: taste_pool must be >= 1");
}

SyntheticData generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng = Rng::stream(seed, "synthetic");
    const int g = spec.clusters;
    const int d = spec.dim;

    SyntheticData data;
    data.cluster_dirs = Mat(g, d);
    auto draw_unit = [&](double* out) {
        double n2 = 0.0;
        do {
            n2 = 0.0;
            for (int t = 0; t < d; ++t) {
                out[t] = rng.normal();
                n2 += out[t] * out[t];
            }
        } while (n2 == 0.0);
        kern::scale(out, 1.0 / std::sqrt(n2), static_cast<std::size_t>(d));
    };

    // Planted directions, rejection-sampled until pairwise cosine < threshold.
    for (int c = 0; c < g; ++c) {
        int tries = 0;
        for (;;) {
            draw_unit(data.cluster_dirs.row(c));
            bool ok = true;
            for (int prev = 0; prev < c; ++prev) {
                const double cs = kern::dot(data.cluster_dirs.row(c), data.cluster_dirs.row(prev),
                                            static_cast<std::size_t>(d));
                if (cs >= spec.max_pairwise_cos) {
                    ok = false;
                    break;
                }
            }
            if (ok) break;
            if (++tries >= 1000)
                throw numeric_error("synthetic: could not separate cluster directions");
        }
    }

    // Items: normalize(direction + spread * gaussian), cluster-major ids.
    const std::size_t n_items = static_cast<std::size_t>(g) * spec.items_per_cluster;
    data.items.vecs = EmbeddingArray(d, n_items);
    data.items.ids.resize(n_items);
    data.item_cluster.resize(n_items);
    for (std::size_t i = 0; i < n_items; ++i) {
        const int c = static_cast<int>(i / spec.items_per_cluster);
        double* v = data.items.vecs.ptr(i);
        double n2 = 0.0;
        do {
            n2 = 0.0;
            for (int t = 0; t < d; ++t) {
                v[t] = data.cluster_dirs.at(c, t) + spec.spread * rng.normal();
                n2 += v[t] * v[t];
            }
        } while (n2 == 0.0);
        kern::scale(v, 1.0 / std::sqrt(n2), static_cast<std::size_t>(d));
        data.items.ids[i] = i;
        data.item_cluster[i] = c;
    }

    // Users: pick distinct interest clusters, a taste direction per interest,
    // and interact with the taste_pool nearest items of that cluster.
    data.sequences.resize(spec.users);
    data.user_interests.resize(spec.users);
    const int pool_size = std::min(spec.taste_pool, spec.items_per_cluster);
    std::vector<double> taste(d);
    for (int u = 0; u < spec.users; ++u) {
        const int n_int = spec.interests_min +
                          static_cast<int>(rng.below(spec.interests_max - spec.interests_min + 1));
        std::vector<int> clusters_left(g);
        for (int c = 0; c < g; ++c) clusters_left[c] = c;
        std::vector<int>& mine = data.user_interests[u];
        for (int i = 0; i < n_int; ++i) {
            const std::size_t pick = rng.below(clusters_left.size());
            mine.push_back(clusters_left[pick]);
            clusters_left.erase(clusters_left.begin() + pick);
        }
        std::sort(mine.begin(), mine.end());

        std::vector<std::vector<std::uint64_t>> pools(mine.size());
        for (std::size_t i = 0; i < mine.size(); ++i) {
            const int c = mine[i];
            double n2 = 0.0;
            do {
                n2 = 0.0;
                for (int t = 0; t < d; ++t) {
                    taste[t] = data.cluster_dirs.at(c, t) + spec.taste_spread * rng.normal();
                    n2 += taste[t] * taste[t];
                }
            } while (n2 == 0.0);

            const std::size_t base = static_cast<std::size_t>(c) * spec.items_per_cluster;
            std::vector<std::pair<double, std::uint64_t>> scored(spec.items_per_cluster);
            for (int j = 0; j < spec.items_per_cluster; ++j) {
                const double sim = kern::dot(taste.data(), data.items.vecs.ptr(base + j),
                                             static_cast<std::size_t>(d));
                scored[j] = {-sim, data.items.ids[base + j]};
            }
            std::partial_sort(scored.begin(), scored.begin() + pool_size, scored.end());
            pools[i].resize(pool_size);
            for (int j = 0; j < pool_size; ++j) pools[i][j] = scored[j].second;
        }

        UserSequence& seq = data.sequences[u];
        seq.user_id = static_cast<std::uint64_t>(u);
        seq.item_ids.resize(spec.seq_len);
        for (int t = 0; t < spec.seq_len; ++t) {
            const std::size_t which = rng.below(pools.size());
            seq.item_ids[t] = pools[which][rng.below(pools[which].size())];
        }
    }
    return data;
}

namespace {

std::unordered_set<std::uint64_t> distinct(const std::vector<std::uint64_t>& ids) {
    return {ids.begin(), ids.end()};
}

}  // namespace

double recall_at_k(const std::vector<std::uint64_t>& ranked, const std::vector<std::uint64_t>& window,
                   int k) {
    if (k < 1) throw config_error("recall_at_k: K must be >= 1");
    if (window.empty()) throw data_error("recall_at_k: empty target window");
    const auto targets = distinct(window);
    const int depth = std::min<std::size_t>(k, ranked.size());
    std::size_t hits = 0;
    for (int r = 0; r < depth; ++r)
        if (targets.count(ranked[r])) ++hits;
    return static_cast<double>(hits) / static_cast<double>(targets.size());
}

double ndcg_at_k(const std::vector<std::uint64_t>& ranked, const std::vector<std::uint64_t>& window,
                 int k) {
    if (k < 1) throw config_error("ndcg_at_k: K must be >= 1");
    if (window.empty()) throw data_error("ndcg_at_k: empty target window");
    const auto targets = distinct(window);
    const int depth = std::min<std::size_t>(k, ranked.size());
    double dcg = 0.0;
    for (int r = 0; r < depth; ++r)
        if (targets.count(ranked[r])) dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
    const int ideal = std::min<std::size_t>(k, targets.size());
    double idcg = 0.0;
    for (int r = 0; r < ideal; ++r) idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
    return dcg / idcg;
}

namespace {

SeqSplit split_at(const UserSequence& seq, std::size_t window_start, int n_last, int l_max, int w) {
    const std::size_t len = seq.item_ids.size();
    const std::size_t w_end = std::min(len, window_start + static_cast<std::size_t>(w));
    const std::size_t last_begin =
        window_start >= static_cast<std::size_t>(n_last) ? window_start - n_last : 0;
    const std::size_t hist_begin =
        last_begin >= static_cast<std::size_t>(l_max) ? last_begin - l_max : 0;
    const std::uint64_t* base = seq.item_ids.data();
    SeqSplit s;
    s.history = {base + hist_begin, last_begin - hist_begin};
    s.last_n = {base + last_begin, window_start - last_begin};
    s.window = {base + window_start, w_end - window_start};
    return s;
}

}  // namespace

SeqSplit eval_split(const UserSequence& seq, int n_last, int l_max, int w) {
    const std::size_t len = seq.item_ids.size();
    if (len < static_cast<std::size_t>(w) + 1)
        throw data_error("eval_split: sequence shorter than window + 1");
    return split_at(seq, len - static_cast<std::size_t>(w), n_last, l_max, w);
}

SeqSplit train_split(const UserSequence& seq, std::size_t cut, int n_last, int l_max, int w) {
    if (cut < 1 || cut >= seq.item_ids.size()) throw data_error("train_split: bad cut");
    return split_at(seq, cut, n_last, l_max, w);
}

}  // namespace hymirec
