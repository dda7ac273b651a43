#include "hymirec/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "hymirec/retrieval.hpp"
#include "hymirec/threadpool.hpp"

namespace hymirec {

bool make_example(const Corpus& corpus, const UserSequence& seq, std::size_t window_start,
                  const RunConfig& cfg, int window_len, UserExample& out) {
    const std::size_t len = seq.item_ids.size();
    if (window_start < 1 || window_start >= len) return false;
    const std::size_t w_end = std::min(len, window_start + static_cast<std::size_t>(window_len));
    if (w_end == window_start) return false;

    const std::size_t last_begin =
        window_start >= static_cast<std::size_t>(cfg.n_last) ? window_start - cfg.n_last : 0;
    const std::size_t hist_begin =
        last_begin >= static_cast<std::size_t>(cfg.l_max) ? last_begin - cfg.l_max : 0;

    const int dim = corpus.universe.items->dim;
    out.history = Mat(static_cast<int>(last_begin - hist_begin), dim);
    for (std::size_t i = hist_begin; i < last_begin; ++i) {
        const std::size_t idx = corpus.universe.require(seq.item_ids[i]);
        std::copy_n(corpus.history->ptr(idx), dim, out.history.row(static_cast<int>(i - hist_begin)));
    }
    out.last_n = Mat(static_cast<int>(window_start - last_begin), dim);
    out.last_n_ids.clear();
    for (std::size_t i = last_begin; i < window_start; ++i) {
        const std::size_t idx = corpus.universe.require(seq.item_ids[i]);
        std::copy_n(corpus.universe.items->ptr(idx), dim,
                    out.last_n.row(static_cast<int>(i - last_begin)));
        out.last_n_ids.push_back(seq.item_ids[i]);
    }
    out.targets.embeddings = Mat(static_cast<int>(w_end - window_start), dim);
    out.targets.ids.clear();
    for (std::size_t i = window_start; i < w_end; ++i) {
        const std::size_t idx = corpus.universe.require(seq.item_ids[i]);
        std::copy_n(corpus.universe.items->ptr(idx), dim,
                    out.targets.embeddings.row(static_cast<int>(i - window_start)));
        out.targets.ids.push_back(seq.item_ids[i]);
    }
    return true;
}

namespace {

// Architecture ablations keep the full objective; only the three loss
// ablations change the supervision rule.
LossVariant training_loss_variant(const std::string& v) {
    if (v == "no_dmil" || v == "no_window" || v == "max_matching")
        return loss_variant_from_string(v);
    return LossVariant::Dmil;
}

}  // namespace

TrainStats train_model(InterestModel& model, Adam& adam, const Corpus& corpus,
                       const RunConfig& cfg, std::ostream* log_jsonl, std::uint64_t start_step) {
    cfg.validate();
    const std::vector<UserSequence>& seqs = *corpus.sequences;
    if (seqs.empty()) throw data_error("train: no user sequences");
    const int s = model.config().s;
    const int w_eval = cfg.effective_eval_window();
    const LossVariant variant = training_loss_variant(cfg.variant);

    TrainStats stats;
    stats.mean_grad_mass.assign(s, 0.0);

    const int batch = cfg.batch;
    std::vector<GradBuffer> user_grads(batch);
    for (auto& g : user_grads) g = model.make_grads();
    GradBuffer total = model.make_grads();

    struct UserOut {
        bool ok = false;
        LossReport report;
    };
    std::vector<UserOut> outs(batch);

    for (std::uint64_t step = start_step; step < start_step + static_cast<std::uint64_t>(cfg.steps);
         ++step) {
        Rng batch_rng = Rng::stream(cfg.seed, "batch").split(step);
        std::vector<std::size_t> users(batch);
        for (int b = 0; b < batch; ++b) users[b] = batch_rng.below(seqs.size());

        // In-batch negatives share the other slots' target embeddings.
        std::vector<UserExample> examples(batch);
        std::vector<bool> have(batch, false);
        for (int b = 0; b < batch; ++b) {
            const UserSequence& seq = seqs[users[b]];
            const std::size_t len = seq.item_ids.size();
            if (len < static_cast<std::size_t>(w_eval) + 2) continue;
            const std::size_t hi = len - static_cast<std::size_t>(w_eval) - 1;  // inclusive
            Rng cut_rng = Rng::stream(cfg.seed, "cuts").split(step).split(b);
            const std::size_t cut = 1 + cut_rng.below(hi);
            const int w_here = static_cast<int>(
                std::min<std::size_t>(cfg.window, len - static_cast<std::size_t>(w_eval) - cut));
            have[b] = make_example(corpus, seq, cut, cfg, w_here, examples[b]);
        }

        parallel_for(batch, 1, [&](std::size_t lo, std::size_t hi_) {
            for (std::size_t b = lo; b < hi_; ++b) {
                outs[b].ok = false;
                InterestModel::zero_grads(user_grads[b]);
                if (!have[b]) continue;
                const UserExample& ex = examples[b];

                const ModelForward fw = model.forward(ex.history, ex.last_n);

                Mat negatives;
                Rng neg_rng = Rng::stream(cfg.seed, "negatives").split(step).split(b);
                if (cfg.negatives == "in_batch") {
                    std::vector<const Mat*> others;
                    for (int o = 0; o < batch; ++o)
                        if (o != static_cast<int>(b) && have[o])
                            others.push_back(&examples[o].targets.embeddings);
                    int avail = 0;
                    for (const Mat* m : others) avail += m->rows;
                    if (avail < cfg.negatives_m)
                        throw data_error("train: not enough in-batch negatives");
                    negatives = Mat(cfg.negatives_m, ex.targets.embeddings.cols);
                    for (int i = 0; i < cfg.negatives_m; ++i) {
                        int pick = static_cast<int>(neg_rng.below(avail));
                        for (const Mat* m : others) {
                            if (pick < m->rows) {
                                std::copy_n(m->row(pick), m->cols, negatives.row(i));
                                break;
                            }
                            pick -= m->rows;
                        }
                    }
                } else {
                    std::unordered_set<std::uint64_t> excluded(ex.targets.ids.begin(),
                                                               ex.targets.ids.end());
                    excluded.insert(ex.last_n_ids.begin(), ex.last_n_ids.end());
                    negatives = sample_negatives(corpus.universe, excluded, cfg.negatives_m, neg_rng);
                }

                const int w_norm =
                    cfg.loss_norm == "count" ? ex.targets.embeddings.rows : cfg.window;
                Mat d_refined;
                const std::uint64_t match_seed =
                    Rng::stream(cfg.seed, "match").split(step).split(b).u64();
                outs[b].report = interest_loss(variant, ex.targets, fw.r_refined, negatives, cfg.tau,
                                               w_norm, match_seed, &d_refined, cfg.kmeans_iters);
                model.backward(fw, d_refined, user_grads[b]);
                outs[b].ok = true;
            }
        });

        // Deterministic slot-order reduction, then mean over contributing users.
        InterestModel::zero_grads(total);
        int contributors = 0;
        for (int b = 0; b < batch; ++b) {
            if (!outs[b].ok) continue;
            ++contributors;
            for (std::size_t tix = 0; tix < total.size(); ++tix)
                kern::axpy(1.0, user_grads[b][tix].data(), total[tix].data(), total[tix].size());
        }
        if (contributors == 0) throw data_error("train: every sampled sequence was too short");
        const double inv_b = 1.0 / contributors;
        for (auto& t : total) kern::scale(t.data(), inv_b, t.size());

        const double factor =
            lr_schedule_factor(step, start_step + cfg.steps, cfg.warmup_ratio,
                               cfg.lr_schedule == "cosine");
        adam.step(model, total, factor);

        double loss_mean = 0.0;
        std::vector<double> pq_mean(s, 0.0), gm_mean(s, 0.0);
        std::vector<int> matched_sum(s, 0);
        for (int b = 0; b < batch; ++b) {
            if (!outs[b].ok) continue;
            loss_mean += outs[b].report.total;
            for (int q = 0; q < s; ++q) {
                pq_mean[q] += outs[b].report.per_query[q];
                gm_mean[q] += outs[b].report.per_query_grad_mass[q];
                matched_sum[q] += outs[b].report.targets_per_query[q];
            }
        }
        loss_mean *= inv_b;
        for (int q = 0; q < s; ++q) {
            pq_mean[q] *= inv_b;
            gm_mean[q] *= inv_b;
            stats.mean_grad_mass[q] += gm_mean[q];
        }
        stats.step_loss.push_back(loss_mean);
        stats.final_step = step + 1;

        if (log_jsonl) {
            nlohmann::json j;
            j["step"] = step;
            j["total"] = loss_mean;
            j["per_query"] = pq_mean;
            j["per_query_grad_mass"] = gm_mean;
            j["matched_groups"] = matched_sum;
            (*log_jsonl) << j.dump() << '\n';
        }
    }
    if (!stats.step_loss.empty())
        for (double& g : stats.mean_grad_mass) g /= static_cast<double>(stats.step_loss.size());
    return stats;
}

MetricsReport evaluate_model(const InterestModel& model, const Corpus& corpus,
                             const RunConfig& cfg) {
    const std::vector<UserSequence>& seqs = *corpus.sequences;
    const std::vector<int> ks = cfg.eval_k_list();
    const int max_k = *std::max_element(ks.begin(), ks.end());
    const int w_eval = cfg.effective_eval_window();

    const RetrievalIndex index =
        RetrievalIndex::build(*corpus.universe.ids, *corpus.universe.items);
    if (static_cast<std::size_t>(max_k) > index.size())
        throw data_error("evaluate: K exceeds the candidate pool");

    struct UserRow {
        bool ok = false;
        std::vector<double> recall, ndcg;
    };
    std::vector<UserRow> rows(seqs.size());

    parallel_for(seqs.size(), 4, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t u = lo; u < hi; ++u) {
            const UserSequence& seq = seqs[u];
            if (seq.item_ids.size() < static_cast<std::size_t>(w_eval) + 2) continue;
            UserExample ex;
            if (!make_example(corpus, seq, seq.item_ids.size() - w_eval, cfg, w_eval, ex)) continue;

            const ModelForward fw = model.forward(ex.history, ex.last_n);
            const InterestSet interests = InterestSet::make(seq.user_id, fw.r_refined, 0);
            const std::vector<ScoredItem> ranked = retrieve_topk(index, interests, max_k);
            std::vector<std::uint64_t> ranked_ids(ranked.size());
            for (std::size_t i = 0; i < ranked.size(); ++i) ranked_ids[i] = ranked[i].id;

            rows[u].ok = true;
            for (const int k : ks) {
                rows[u].recall.push_back(recall_at_k(ranked_ids, ex.targets.ids, k));
                rows[u].ndcg.push_back(ndcg_at_k(ranked_ids, ex.targets.ids, k));
            }
        }
    });

    MetricsReport report;
    for (std::size_t ki = 0; ki < ks.size(); ++ki) {
        double rsum = 0.0, nsum = 0.0;
        std::vector<double>&pr = report.per_user_recall[ks[ki]], &pn = report.per_user_ndcg[ks[ki]];
        for (const UserRow& row : rows) {
            if (!row.ok) continue;
            rsum += row.recall[ki];
            nsum += row.ndcg[ki];
            pr.push_back(row.recall[ki]);
            pn.push_back(row.ndcg[ki]);
        }
        if (pr.empty()) throw data_error("evaluate: no evaluable users");
        report.recall[ks[ki]] = rsum / static_cast<double>(pr.size());
        report.ndcg[ks[ki]] = nsum / static_cast<double>(pr.size());
    }
    return report;
}

ExperimentResult run_experiment(const RunConfig& cfg_in, std::ostream* log_jsonl) {
    RunConfig cfg = cfg_in;
    cfg.validate();
    const std::string variant = cfg.variant;
    const bool known =
        variant == "full" || variant == "no_light" || variant == "no_csrc" ||
        variant == "euclid_csrc" || variant == "no_indicator" || variant == "no_dmil" ||
        variant == "no_window" || variant == "max_matching";
    if (!known) throw config_error("run_experiment: unknown variant " + variant);

    // The single-interest baseline: one query, next-item supervision.
    if (variant == "no_dmil") cfg.s = 1;

    SyntheticSpec spec;
    spec.clusters = cfg.syn_clusters;
    spec.items_per_cluster = cfg.syn_items_per_cluster;
    spec.spread = cfg.syn_spread;
    spec.users = cfg.syn_users;
    spec.interests_min = cfg.syn_interests_min;
    spec.interests_max = cfg.syn_interests_max;
    spec.seq_len = cfg.syn_seq_len;
    spec.dim = cfg.dim;
    spec.taste_spread = cfg.syn_taste_spread;
    spec.taste_pool = cfg.syn_taste_pool;
    const SyntheticData data = generate_synthetic(spec, cfg.seed);

    // Long-history source: reconstructed through the codebook unless ablated.
    EmbeddingArray reconstructed;
    const EmbeddingArray* history = &data.items.vecs;
    if (variant != "no_csrc") {
        CodebookBuildOptions opts;
        opts.layers = cfg.cb_layers;
        opts.k = cfg.cb_k;
        opts.kmeans_iters = cfg.kmeans_iters;
        opts.eps_zero = cfg.cb_eps_zero;
        opts.metric = (variant == "euclid_csrc" || cfg.cb_metric == "euclidean")
                          ? CodebookMetric::Euclidean
                          : CodebookMetric::Cosine;

        const std::size_t n = data.items.vecs.size();
        const std::size_t pool_n = std::min<std::size_t>(n, static_cast<std::size_t>(cfg.cb_basepool));
        EmbeddingArray pool(cfg.dim);
        Rng pool_rng = Rng::stream(cfg.seed, "codebook-pool");
        if (pool_n == n) {
            pool = data.items.vecs;
        } else {  // uniform sample without replacement
            std::vector<std::size_t> idx(n);
            for (std::size_t i = 0; i < n; ++i) idx[i] = i;
            for (std::size_t i = 0; i < pool_n; ++i) {
                const std::size_t j = i + pool_rng.below(n - i);
                std::swap(idx[i], idx[j]);
                pool.push_back(data.items.vecs[idx[i]]);
            }
        }
        const ResidualCodebook cb = build_codebook(pool, opts, cfg.seed);
        const std::vector<QuantCode> codes = encode_all(data.items.vecs, cb, cfg.cb_eps_zero);
        reconstructed = EmbeddingArray(cfg.dim, n);
        parallel_for(n, 256, [&](std::size_t lo, std::size_t hi) {
            for (std::size_t i = lo; i < hi; ++i) {
                const std::vector<double> rec = decode(codes[i], cb);
                std::copy_n(rec.data(), cfg.dim, reconstructed.ptr(i));
            }
        });
        history = &reconstructed;
    }

    Corpus corpus;
    corpus.universe = ItemUniverse(data.items.vecs, data.items.ids);
    corpus.history = history;
    corpus.sequences = &data.sequences;

    ModelConfig mc;
    mc.dim = cfg.dim;
    mc.d_model = cfg.d_model;
    mc.heads = cfg.heads;
    mc.d_ff = cfg.d_ff;
    mc.layers_light = cfg.layers_light;
    mc.layers_refined = cfg.layers_refined;
    mc.s = cfg.s;
    mc.s_c = cfg.s_c;
    mc.n_last = cfg.n_last;
    mc.l_max = cfg.l_max;
    mc.use_indicator = cfg.indicator && variant != "no_indicator";
    mc.use_coarse = variant != "no_light";

    InterestModel model(mc, cfg.seed);
    Adam adam(cfg.lr);

    ExperimentResult result;
    result.train = train_model(model, adam, corpus, cfg, log_jsonl);
    result.metrics = evaluate_model(model, corpus, cfg);
    result.min_mean_grad_mass = result.train.mean_grad_mass.empty()
                                    ? 0.0
                                    : *std::min_element(result.train.mean_grad_mass.begin(),
                                                        result.train.mean_grad_mass.end());
    return result;
}

std::string metrics_csv_header(const std::vector<int>& ks) {
    std::string h = "variant,s,w,seed";
    for (const int k : ks) h += ",recall@" + std::to_string(k);
    for (const int k : ks) h += ",ndcg@" + std::to_string(k);
    return h + "\n";
}

std::string metrics_csv_row(const std::string& variant, int s, int w, std::uint64_t seed,
                            const MetricsReport& m, const std::vector<int>& ks) {
    std::ostringstream os;
    os << variant << ',' << s << ',' << w << ',' << seed;
    os.setf(std::ios::fixed);
    os.precision(6);
    for (const int k : ks) os << ',' << m.recall.at(k);
    for (const int k : ks) os << ',' << m.ndcg.at(k);
    os << '\n';
    return os.str();
}

}  // namespace hymirec
