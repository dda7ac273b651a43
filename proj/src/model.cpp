#include "hymirec/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include <json.hpp>

#include "hymirec/rng.hpp"

namespace hymirec {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kMaskNegative = -1e30;  // exp() underflows to exact 0 after max-subtraction
constexpr double kInvSqrt2Pi = 0.3989422804014326779399461;

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * 0.70710678118654752440)); }
double gelu_grad(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x * 0.70710678118654752440));
    return cdf + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

// y = LN(x) rowwise with gain/bias; caches mean and 1/std per row.
void layer_norm(const Mat& x, const Param& g, const Param& b, Mat& y, std::vector<double>& mu,
                std::vector<double>& rs) {
    const int t = x.rows, d = x.cols;
    y = Mat(t, d);
    mu.resize(t);
    rs.resize(t);
    for (int i = 0; i < t; ++i) {
        const double* xi = x.row(i);
        double m = 0.0;
        for (int j = 0; j < d; ++j) m += xi[j];
        m /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) {
            const double c = xi[j] - m;
            var += c * c;
        }
        var /= d;
        const double r = 1.0 / std::sqrt(var + kLnEps);
        mu[i] = m;
        rs[i] = r;
        double* yi = y.row(i);
        for (int j = 0; j < d; ++j) yi[j] = g.v[j] * ((xi[j] - m) * r) + b.v[j];
    }
}

// Accumulates dx, dg, db from upstream dy.
void layer_norm_backward(const Mat& dy, const Mat& x, const std::vector<double>& mu,
                         const std::vector<double>& rs, const Param& g, Mat& dx,
                         std::vector<double>& dg, std::vector<double>& db) {
    const int t = x.rows, d = x.cols;
    for (int i = 0; i < t; ++i) {
        const double* xi = x.row(i);
        const double* dyi = dy.row(i);
        double* dxi = dx.row(i);
        const double m = mu[i], r = rs[i];
        double mean_dxhat = 0.0, mean_dxhat_h = 0.0;
        for (int j = 0; j < d; ++j) {
            const double hat = (xi[j] - m) * r;
            const double dxhat = dyi[j] * g.v[j];
            mean_dxhat += dxhat;
            mean_dxhat_h += dxhat * hat;
            dg[j] += dyi[j] * hat;
            db[j] += dyi[j];
        }
        mean_dxhat /= d;
        mean_dxhat_h /= d;
        for (int j = 0; j < d; ++j) {
            const double hat = (xi[j] - m) * r;
            const double dxhat = dyi[j] * g.v[j];
            dxi[j] += r * (dxhat - mean_dxhat - hat * mean_dxhat_h);
        }
    }
}

// y = x * W + b (W as Param, rows = in, cols = out)
void linear(const Mat& x, const Param& w, const Param& b, Mat& y) {
    const int t = x.rows, in = w.rows, out = w.cols;
    y = Mat(t, out);
    for (int i = 0; i < t; ++i) {
        double* yi = y.row(i);
        std::memcpy(yi, b.v.data(), sizeof(double) * out);
        const double* xi = x.row(i);
        for (int k = 0; k < in; ++k)
            kern::axpy(xi[k], w.v.data() + static_cast<std::size_t>(k) * out, yi, out);
    }
}

void linear_backward(const Mat& dy, const Mat& x, const Param& w, Mat& dx, std::vector<double>& dw,
                     std::vector<double>& dbias) {
    const int t = x.rows, in = w.rows, out = w.cols;
    for (int i = 0; i < t; ++i) {
        const double* dyi = dy.row(i);
        const double* xi = x.row(i);
        double* dxi = dx.row(i);
        for (int k = 0; k < in; ++k) {
            dxi[k] += kern::dot(dyi, w.v.data() + static_cast<std::size_t>(k) * out,
                                static_cast<std::size_t>(out));
            kern::axpy(xi[k], dyi, dw.data() + static_cast<std::size_t>(k) * out, out);
        }
        for (int j = 0; j < out; ++j) dbias[j] += dyi[j];
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

void ModelConfig::validate() const {
    if (dim < 1 || d_model < 1 || d_ff < 1) throw config_error("model: dims must be positive");
    if (heads < 1 || d_model % heads != 0)
        throw config_error("model: d_model must be divisible by heads");
    if (s < 1) throw config_error("model: s must be >= 1");
    if (s_c < 0) throw config_error("model: s_c must be >= 0");
    if (layers_light < 1 || layers_refined < 1) throw config_error("model: layers must be >= 1");
    if (n_last < 0 || l_max < 0) throw config_error("model: negative sequence bounds");
}

std::string ModelConfig::to_json() const {
    nlohmann::json j;
    j["dim"] = dim;
    j["d_model"] = d_model;
    j["heads"] = heads;
    j["d_ff"] = d_ff;
    j["layers_light"] = layers_light;
    j["layers_refined"] = layers_refined;
    j["s"] = s;
    j["s_c"] = s_c;
    j["n_last"] = n_last;
    j["l_max"] = l_max;
    j["use_indicator"] = use_indicator;
    j["use_coarse"] = use_coarse;
    return j.dump();
}

ModelConfig ModelConfig::from_json(const std::string& json) {
    const nlohmann::json j = nlohmann::json::parse(json);
    ModelConfig c;
    c.dim = j.at("dim");
    c.d_model = j.at("d_model");
    c.heads = j.at("heads");
    c.d_ff = j.at("d_ff");
    c.layers_light = j.at("layers_light");
    c.layers_refined = j.at("layers_refined");
    c.s = j.at("s");
    c.s_c = j.at("s_c");
    c.n_last = j.at("n_last");
    c.l_max = j.at("l_max");
    c.use_indicator = j.at("use_indicator");
    c.use_coarse = j.at("use_coarse");
    return c;
}

// ---------------------------------------------------------------------------
// Model wiring
// ---------------------------------------------------------------------------

struct InterestModel::EncoderDef {
    struct Layer {
        Param *wq, *bq, *wk, *bk, *wv, *bv, *wo, *bo;
        Param *ln1g, *ln1b, *ln2g, *ln2b;
        Param *w1, *b1, *w2, *b2;
    };
    std::vector<Layer> layers;
    Param *in_w, *in_b, *out_w, *out_b, *pos, *lnfg, *lnfb;
    Param* queries;
    bool causal = false;
};

Param* InterestModel::add_param(const std::string& name, int rows, int cols) {
    auto p = std::make_unique<Param>();
    p->name = name;
    p->index = static_cast<int>(store_.size());
    p->rows = rows;
    p->cols = cols;
    p->w.assign(static_cast<std::size_t>(rows) * cols, 0.0f);
    store_.push_back(std::move(p));
    return store_.back().get();
}

InterestModel::InterestModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    const int dm = cfg_.d_model;
    const int d = cfg_.dim;

    auto build_encoder = [&](const std::string& prefix, int layers, int pos_rows, int queries,
                             bool causal) {
        auto enc = std::make_unique<EncoderDef>();
        enc->causal = causal;
        enc->in_w = add_param(prefix + ".in_proj.w", d, dm);
        enc->in_b = add_param(prefix + ".in_proj.b", 1, dm);
        enc->pos = add_param(prefix + ".pos", pos_rows, dm);
        for (int l = 0; l < layers; ++l) {
            const std::string lp = prefix + ".l" + std::to_string(l);
            EncoderDef::Layer lay;
            lay.wq = add_param(lp + ".attn.wq", dm, dm);
            lay.bq = add_param(lp + ".attn.bq", 1, dm);
            lay.wk = add_param(lp + ".attn.wk", dm, dm);
            lay.bk = add_param(lp + ".attn.bk", 1, dm);
            lay.wv = add_param(lp + ".attn.wv", dm, dm);
            lay.bv = add_param(lp + ".attn.bv", 1, dm);
            lay.wo = add_param(lp + ".attn.wo", dm, dm);
            lay.bo = add_param(lp + ".attn.bo", 1, dm);
            lay.ln1g = add_param(lp + ".ln1.g", 1, dm);
            lay.ln1b = add_param(lp + ".ln1.b", 1, dm);
            lay.ln2g = add_param(lp + ".ln2.g", 1, dm);
            lay.ln2b = add_param(lp + ".ln2.b", 1, dm);
            lay.w1 = add_param(lp + ".ffn.w1", dm, cfg_.d_ff);
            lay.b1 = add_param(lp + ".ffn.b1", 1, cfg_.d_ff);
            lay.w2 = add_param(lp + ".ffn.w2", cfg_.d_ff, dm);
            lay.b2 = add_param(lp + ".ffn.b2", 1, dm);
            enc->layers.push_back(lay);
        }
        enc->lnfg = add_param(prefix + ".ln_f.g", 1, dm);
        enc->lnfb = add_param(prefix + ".ln_f.b", 1, dm);
        enc->out_w = add_param(prefix + ".out_proj.w", dm, d);
        enc->out_b = add_param(prefix + ".out_proj.b", 1, d);
        enc->queries = add_param(prefix == "light" ? "q_coarse" : "q_refined", queries, dm);
        return enc;
    };

    const int sc = cfg_.coarse_queries();
    if (cfg_.use_coarse)
        light_ = build_encoder("light", cfg_.layers_light, cfg_.l_max, sc, /*causal=*/false);
    refined_ =
        build_encoder("refined", cfg_.layers_refined, sc + cfg_.n_last, cfg_.s, /*causal=*/true);
    indicator_ = add_param("indicator", 1, d);
    if (light_) q_coarse_ = light_->queries;
    q_refined_ = refined_->queries;

    // Gaussian(0, 0.02) weights, zero biases, unit LayerNorm gains, zero
    // indicator. Draw order is the registration order, fixed by construction.
    Rng rng = Rng::stream(seed, "model");
    for (auto& p : store_) {
        const std::string& n = p->name;
        const bool is_bias = n.ends_with(".b") || n.ends_with(".bq") || n.ends_with(".bk") ||
                             n.ends_with(".bv") || n.ends_with(".bo") || n.ends_with(".b1") ||
                             n.ends_with(".b2");
        const bool is_ln_gain = n.ends_with("ln1.g") || n.ends_with("ln2.g") || n.ends_with("ln_f.g");
        if (n == "indicator" || is_bias) {
            // stays zero
        } else if (is_ln_gain) {
            std::fill(p->w.begin(), p->w.end(), 1.0f);
        } else {
            for (auto& x : p->w) x = static_cast<float>(rng.normal(0.0, 0.02));
        }
        p->sync();
    }
}

InterestModel::~InterestModel() = default;

std::vector<Param*> InterestModel::params() {
    std::vector<Param*> out;
    out.reserve(store_.size());
    for (auto& p : store_) out.push_back(p.get());
    return out;
}

std::vector<const Param*> InterestModel::params() const {
    std::vector<const Param*> out;
    out.reserve(store_.size());
    for (auto& p : store_) out.push_back(p.get());
    return out;
}

Param* InterestModel::find(const std::string& name) {
    for (auto& p : store_)
        if (p->name == name) return p.get();
    return nullptr;
}

GradBuffer InterestModel::make_grads() const {
    GradBuffer g(store_.size());
    for (std::size_t i = 0; i < store_.size(); ++i) g[i].assign(store_[i]->size(), 0.0);
    return g;
}

void InterestModel::zero_grads(GradBuffer& g) {
    for (auto& t : g) std::fill(t.begin(), t.end(), 0.0);
}

// ---------------------------------------------------------------------------
// Encoder forward / backward
// ---------------------------------------------------------------------------

namespace {

using detail::EncoderCache;
using detail::LayerCache;

void encoder_layers_forward(const InterestModel::EncoderDef& enc, EncoderCache& c, int heads) {
    const int t = c.tokens.rows;
    const int dm = c.tokens.cols;
    const int dh = dm / heads;
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

    Mat x = c.tokens;
    c.layers.clear();
    c.layers.resize(enc.layers.size());
    for (std::size_t li = 0; li < enc.layers.size(); ++li) {
        const auto& lp = enc.layers[li];
        LayerCache& lc = c.layers[li];
        lc.x = x;
        layer_norm(lc.x, *lp.ln1g, *lp.ln1b, lc.ln1, lc.mu1, lc.rs1);
        linear(lc.ln1, *lp.wq, *lp.bq, lc.q);
        linear(lc.ln1, *lp.wk, *lp.bk, lc.k);
        linear(lc.ln1, *lp.wv, *lp.bv, lc.v);

        lc.ctx = Mat(t, dm);
        lc.probs.assign(heads, Mat());
        for (int h = 0; h < heads; ++h) {
            Mat& p = lc.probs[h];
            p = Mat(t, t);
            const int off = h * dh;
            for (int i = 0; i < t; ++i) {
                double* pi = p.row(i);
                const double* qi = lc.q.row(i) + off;
                double mx = -std::numeric_limits<double>::infinity();
                for (int j = 0; j < t; ++j) {
                    double sc = kern::dot(qi, lc.k.row(j) + off, dh) * inv_sqrt_dh;
                    if (!c.valid[j] || (enc.causal && j > i)) sc = kMaskNegative;
                    pi[j] = sc;
                    if (sc > mx) mx = sc;
                }
                double z = 0.0;
                for (int j = 0; j < t; ++j) {
                    pi[j] = std::exp(pi[j] - mx);  // masked entries underflow to exactly 0
                    z += pi[j];
                }
                const double inv_z = 1.0 / z;
                for (int j = 0; j < t; ++j) pi[j] *= inv_z;
                double* ci = lc.ctx.row(i) + off;
                for (int j = 0; j < t; ++j)
                    if (pi[j] != 0.0) kern::axpy(pi[j], lc.v.row(j) + off, ci, dh);
            }
        }

        Mat attn_out;
        linear(lc.ctx, *lp.wo, *lp.bo, attn_out);
        lc.h = lc.x;
        add_inplace(lc.h, attn_out);

        layer_norm(lc.h, *lp.ln2g, *lp.ln2b, lc.ln2, lc.mu2, lc.rs2);
        linear(lc.ln2, *lp.w1, *lp.b1, lc.ffn_pre);
        lc.ffn_act = lc.ffn_pre;
        for (double& vv : lc.ffn_act.a) vv = gelu(vv);
        Mat ffn_out;
        linear(lc.ffn_act, *lp.w2, *lp.b2, ffn_out);
        x = lc.h;
        add_inplace(x, ffn_out);
    }
    c.final_in = x;
    layer_norm(c.final_in, *enc.lnfg, *enc.lnfb, c.final_out, c.muf, c.rsf);
}

// d_out: gradient at final_out (zeros outside rows of interest). Produces
// d_tokens and accumulates all layer parameter grads.
void encoder_layers_backward(const InterestModel::EncoderDef& enc, const EncoderCache& c,
                             const Mat& d_out, int heads, GradBuffer& g, Mat& d_tokens) {
    const int t = c.tokens.rows;
    const int dm = c.tokens.cols;
    const int dh = dm / heads;
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

    Mat dx(t, dm);
    layer_norm_backward(d_out, c.final_in, c.muf, c.rsf, *enc.lnfg, dx, g[enc.lnfg->index],
                        g[enc.lnfb->index]);

    for (int li = static_cast<int>(enc.layers.size()) - 1; li >= 0; --li) {
        const auto& lp = enc.layers[li];
        const LayerCache& lc = c.layers[li];

        // FFN block: x_out = h + gelu(LN2(h) W1 + b1) W2 + b2
        Mat d_act(t, lp.w1->cols);
        linear_backward(dx, lc.ffn_act, *lp.w2, d_act, g[lp.w2->index], g[lp.b2->index]);
        for (std::size_t i = 0; i < d_act.a.size(); ++i) d_act.a[i] *= gelu_grad(lc.ffn_pre.a[i]);
        Mat d_ln2(t, dm);
        linear_backward(d_act, lc.ln2, *lp.w1, d_ln2, g[lp.w1->index], g[lp.b1->index]);
        Mat dh_total = dx;  // residual path
        layer_norm_backward(d_ln2, lc.h, lc.mu2, lc.rs2, *lp.ln2g, dh_total, g[lp.ln2g->index],
                            g[lp.ln2b->index]);

        // Attention block: h = x + (ctx Wo + bo)
        Mat d_ctx(t, dm);
        linear_backward(dh_total, lc.ctx, *lp.wo, d_ctx, g[lp.wo->index], g[lp.bo->index]);

        Mat dq(t, dm), dk(t, dm), dv(t, dm);
        for (int h = 0; h < heads; ++h) {
            const Mat& p = lc.probs[h];
            const int off = h * dh;
            for (int i = 0; i < t; ++i) {
                const double* pi = p.row(i);
                const double* dci = d_ctx.row(i) + off;
                // dP and softmax backward folded together
                double dot_dp_p = 0.0;
                std::vector<double> dp(t);
                for (int j = 0; j < t; ++j) {
                    dp[j] = pi[j] == 0.0 ? 0.0 : kern::dot(dci, lc.v.row(j) + off, dh);
                    dot_dp_p += dp[j] * pi[j];
                }
                for (int j = 0; j < t; ++j) {
                    if (pi[j] == 0.0) continue;
                    kern::axpy(pi[j], dci, dv.row(j) + off, dh);
                    const double ds = pi[j] * (dp[j] - dot_dp_p) * inv_sqrt_dh;
                    kern::axpy(ds, lc.k.row(j) + off, dq.row(i) + off, dh);
                    kern::axpy(ds, lc.q.row(i) + off, dk.row(j) + off, dh);
                }
            }
        }

        Mat d_ln1(t, dm);
        linear_backward(dq, lc.ln1, *lp.wq, d_ln1, g[lp.wq->index], g[lp.bq->index]);
        linear_backward(dk, lc.ln1, *lp.wk, d_ln1, g[lp.wk->index], g[lp.bk->index]);
        linear_backward(dv, lc.ln1, *lp.wv, d_ln1, g[lp.wv->index], g[lp.bv->index]);

        Mat dx_next = dh_total;  // residual into x
        layer_norm_backward(d_ln1, lc.x, lc.mu1, lc.rs1, *lp.ln1g, dx_next, g[lp.ln1g->index],
                            g[lp.ln1b->index]);
        dx = std::move(dx_next);
    }
    d_tokens = std::move(dx);
}

}  // namespace

// ---------------------------------------------------------------------------
// Token assembly and the public forward surface
// ---------------------------------------------------------------------------

namespace {

// Runs one encoder over d-dim source rows followed by its query bank.
// pos_idx[i] selects the position-embedding row for source token i.
Mat run_encoder(const InterestModel::EncoderDef& enc, const ModelConfig& cfg, const Mat& sources,
                const std::vector<int>& pos_idx, const std::vector<std::uint8_t>& src_valid,
                EncoderCache& c) {
    const int n_src = sources.rows;
    const int nq = enc.queries->rows;
    const int dm = cfg.d_model;
    const int t = n_src + nq;

    c.sources = sources;
    c.pos_index = pos_idx;
    c.query_count = nq;
    c.valid.assign(t, 1);
    for (int i = 0; i < n_src; ++i) c.valid[i] = src_valid[i];

    c.tokens = Mat(t, dm);
    for (int i = 0; i < n_src; ++i) {
        double* ti = c.tokens.row(i);
        std::memcpy(ti, enc.in_b->v.data(), sizeof(double) * dm);
        const double* si = sources.row(i);
        for (int k = 0; k < cfg.dim; ++k)
            kern::axpy(si[k], enc.in_w->v.data() + static_cast<std::size_t>(k) * dm, ti, dm);
        kern::axpy(1.0, enc.pos->v.data() + static_cast<std::size_t>(pos_idx[i]) * dm, ti, dm);
    }
    for (int j = 0; j < nq; ++j)
        std::memcpy(c.tokens.row(n_src + j),
                    enc.queries->v.data() + static_cast<std::size_t>(j) * dm, sizeof(double) * dm);

    encoder_layers_forward(enc, c, cfg.heads);

    // Read the query rows and project back to item space.
    Mat out(nq, cfg.dim);
    for (int j = 0; j < nq; ++j) {
        double* oj = out.row(j);
        std::memcpy(oj, enc.out_b->v.data(), sizeof(double) * cfg.dim);
        const double* yj = c.final_out.row(n_src + j);
        for (int k = 0; k < dm; ++k)
            kern::axpy(yj[k], enc.out_w->v.data() + static_cast<std::size_t>(k) * cfg.dim, oj,
                       cfg.dim);
    }
    return out;
}

// d_query_out: nq x d upstream gradients at the encoder's projected outputs.
// When d_sources is non-null it receives gradients w.r.t. the d-dim source
// rows (used to chain refined -> coarse).
void run_encoder_backward(const InterestModel::EncoderDef& enc, const ModelConfig& cfg,
                          const EncoderCache& c, const Mat& d_query_out, GradBuffer& g,
                          Mat* d_sources) {
    const int t = c.tokens.rows;
    const int nq = c.query_count;
    const int n_src = t - nq;
    const int dm = cfg.d_model;

    // out_proj backward over the query rows only
    Mat d_final(t, dm);
    {
        std::vector<double>& dw = g[enc.out_w->index];
        std::vector<double>& db = g[enc.out_b->index];
        for (int j = 0; j < nq; ++j) {
            const double* dout = d_query_out.row(j);
            const double* yj = c.final_out.row(n_src + j);
            double* dfin = d_final.row(n_src + j);
            for (int k = 0; k < dm; ++k) {
                dfin[k] += kern::dot(dout, enc.out_w->v.data() + static_cast<std::size_t>(k) * cfg.dim,
                                     static_cast<std::size_t>(cfg.dim));
                kern::axpy(yj[k], dout, dw.data() + static_cast<std::size_t>(k) * cfg.dim, cfg.dim);
            }
            for (int k = 0; k < cfg.dim; ++k) db[k] += dout[k];
        }
    }

    Mat d_tokens;
    encoder_layers_backward(enc, c, d_final, cfg.heads, g, d_tokens);

    // Assembly backward: sources through in_proj (+pos), queries directly.
    if (d_sources) *d_sources = Mat(n_src, cfg.dim);
    std::vector<double>& dwin = g[enc.in_w->index];
    std::vector<double>& dbin = g[enc.in_b->index];
    std::vector<double>& dpos = g[enc.pos->index];
    for (int i = 0; i < n_src; ++i) {
        const double* dt = d_tokens.row(i);
        const double* si = c.sources.row(i);
        for (int k = 0; k < cfg.dim; ++k) {
            const double dsk = kern::dot(dt, enc.in_w->v.data() + static_cast<std::size_t>(k) * dm,
                                         static_cast<std::size_t>(dm));
            if (d_sources) d_sources->at(i, k) = dsk;
            kern::axpy(si[k], dt, dwin.data() + static_cast<std::size_t>(k) * dm, dm);
        }
        for (int k = 0; k < dm; ++k) dbin[k] += dt[k];
        kern::axpy(1.0, dt, dpos.data() + static_cast<std::size_t>(c.pos_index[i]) * dm, dm);
    }
    std::vector<double>& dq = g[enc.queries->index];
    for (int j = 0; j < nq; ++j)
        kern::axpy(1.0, d_tokens.row(n_src + j), dq.data() + static_cast<std::size_t>(j) * dm, dm);
}

}  // namespace

Mat InterestModel::coarse_forward(const Mat& history, const std::vector<std::uint8_t>* mask,
                                  detail::EncoderCache* cache) const {
    if (!cfg_.use_coarse) throw config_error("coarse_forward: coarse path disabled");
    if (history.rows > 0 && history.cols != cfg_.dim)
        throw data_error("coarse_forward: history dimension mismatch");
    if (history.rows > cfg_.l_max) throw data_error("coarse_forward: history longer than l_max");
    if (mask && static_cast<int>(mask->size()) != history.rows)
        throw data_error("coarse_forward: mask size mismatch");

    std::vector<std::uint8_t> valid(history.rows, 1);
    if (mask) valid.assign(mask->begin(), mask->end());
    std::vector<int> pos_idx(history.rows);
    for (int i = 0; i < history.rows; ++i) pos_idx[i] = i;

    detail::EncoderCache local;
    detail::EncoderCache& c = cache ? *cache : local;
    Mat src = history;
    if (src.cols == 0) src = Mat(0, cfg_.dim);
    return run_encoder(*light_, cfg_, src, pos_idx, valid, c);
}

Mat InterestModel::refined_forward(const Mat& r_coarse, const Mat& last_n,
                                   const std::vector<std::uint8_t>* mask,
                                   detail::EncoderCache* cache, Mat* raw,
                                   std::vector<double>* norms) const {
    const int sc = cfg_.use_coarse ? cfg_.coarse_queries() : 0;
    if (cfg_.use_coarse && (r_coarse.rows != cfg_.coarse_queries() || r_coarse.cols != cfg_.dim))
        throw data_error("refined_forward: coarse block shape mismatch");
    if (last_n.rows > 0 && last_n.cols != cfg_.dim)
        throw data_error("refined_forward: last_n dimension mismatch");
    if (last_n.rows > cfg_.n_last) throw data_error("refined_forward: last_n longer than n_last");
    if (mask && static_cast<int>(mask->size()) != last_n.rows)
        throw data_error("refined_forward: mask size mismatch");

    const int n = last_n.rows;
    Mat sources(sc + n, cfg_.dim);
    std::vector<int> pos_idx(sc + n);
    std::vector<std::uint8_t> valid(sc + n, 1);
    for (int i = 0; i < sc; ++i) {
        double* row = sources.row(i);
        std::memcpy(row, r_coarse.row(i), sizeof(double) * cfg_.dim);
        if (cfg_.use_indicator)
            kern::axpy(1.0, indicator_->v.data(), row, static_cast<std::size_t>(cfg_.dim));
        pos_idx[i] = i;
    }
    for (int j = 0; j < n; ++j) {
        std::memcpy(sources.row(sc + j), last_n.row(j), sizeof(double) * cfg_.dim);
        pos_idx[sc + j] = cfg_.coarse_queries() + j;  // fixed table offsets
        if (mask) valid[sc + j] = (*mask)[j];
    }

    detail::EncoderCache local;
    detail::EncoderCache& c = cache ? *cache : local;
    Mat out_raw = run_encoder(*refined_, cfg_, sources, pos_idx, valid, c);

    Mat out = out_raw;
    std::vector<double> local_norms(out.rows);
    for (int j = 0; j < out.rows; ++j) {
        const double nrm =
            std::sqrt(kern::dot(out.row(j), out.row(j), static_cast<std::size_t>(out.cols)));
        if (nrm < 1e-30) throw numeric_error("refined_forward: degenerate interest embedding");
        kern::scale(out.row(j), 1.0 / nrm, static_cast<std::size_t>(out.cols));
        local_norms[j] = nrm;
    }
    if (raw) *raw = std::move(out_raw);
    if (norms) *norms = std::move(local_norms);
    return out;
}

ModelForward InterestModel::forward(const Mat& history, const Mat& last_n) const {
    return forward_masked(history, nullptr, last_n, nullptr);
}

ModelForward InterestModel::forward_masked(const Mat& history,
                                           const std::vector<std::uint8_t>* hist_mask,
                                           const Mat& last_n,
                                           const std::vector<std::uint8_t>* last_mask) const {
    ModelForward fw;
    if (cfg_.use_coarse) {
        fw.r_coarse = coarse_forward(history, hist_mask, &fw.light);
        fw.has_light = true;
    } else {
        fw.r_coarse = Mat(0, cfg_.dim);
    }
    fw.r_refined = refined_forward(fw.r_coarse, last_n, last_mask, &fw.refined, &fw.refined_raw,
                                   &fw.refined_norms);
    fw.valid = true;
    return fw;
}

void InterestModel::backward(const ModelForward& fw, const Mat& d_refined, GradBuffer& grads) const {
    if (!fw.valid) throw numeric_error("backward: no completed forward pass");
    if (d_refined.rows != cfg_.s || d_refined.cols != cfg_.dim)
        throw data_error("backward: upstream gradient shape mismatch");
    if (grads.size() != store_.size()) throw data_error("backward: grad buffer mismatch");

    // L2-normalization backward: y = x/|x|, dx = (dy - (dy.y) y)/|x|
    Mat d_raw(cfg_.s, cfg_.dim);
    for (int j = 0; j < cfg_.s; ++j) {
        const double* dy = d_refined.row(j);
        const double* y = fw.r_refined.row(j);
        const double proj = kern::dot(dy, y, static_cast<std::size_t>(cfg_.dim));
        double* dx = d_raw.row(j);
        for (int k = 0; k < cfg_.dim; ++k) dx[k] = (dy[k] - proj * y[k]) / fw.refined_norms[j];
    }

    Mat d_sources;
    run_encoder_backward(*refined_, cfg_, fw.refined, d_raw, grads, &d_sources);

    if (cfg_.use_coarse) {
        const int sc = cfg_.coarse_queries();
        Mat d_rc(sc, cfg_.dim);
        for (int i = 0; i < sc; ++i)
            std::memcpy(d_rc.row(i), d_sources.row(i), sizeof(double) * cfg_.dim);
        if (cfg_.use_indicator) {
            std::vector<double>& di = grads[indicator_->index];
            for (int i = 0; i < sc; ++i)
                kern::axpy(1.0, d_sources.row(i), di.data(), static_cast<std::size_t>(cfg_.dim));
        }
        run_encoder_backward(*light_, cfg_, fw.light, d_rc, grads, nullptr);
    }
}

// ---------------------------------------------------------------------------
// Checkpointing
// ---------------------------------------------------------------------------

Checkpoint InterestModel::to_checkpoint(std::uint64_t step) const {
    Checkpoint ck;
    ck.step = step;
    ck.config_json = cfg_.to_json();
    for (const auto& p : store_) {
        TensorBlob t;
        t.name = p->name;
        t.rows = p->rows;
        t.cols = p->cols;
        t.data = p->w;
        ck.tensors.push_back(std::move(t));
    }
    return ck;
}

void InterestModel::load_checkpoint(const Checkpoint& ck) {
    const ModelConfig other = ModelConfig::from_json(ck.config_json);
    if (other.to_json() != cfg_.to_json())
        throw data_error("checkpoint geometry does not match the configured model");
    for (const auto& p : store_) {
        const TensorBlob* found = nullptr;
        for (const TensorBlob& t : ck.tensors)
            if (t.name == p->name) {
                found = &t;
                break;
            }
        if (!found) throw data_error("checkpoint missing tensor " + p->name);
        if (found->rows != p->rows || found->cols != p->cols)
            throw data_error("checkpoint tensor shape mismatch for " + p->name);
        p->w = found->data;
        p->sync();
    }
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

Adam::Adam(double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::step(InterestModel& model, const GradBuffer& grads, double lr_scale) {
    auto ps = model.params();
    if (m_.empty()) {
        m_.resize(ps.size());
        v_.resize(ps.size());
        for (std::size_t i = 0; i < ps.size(); ++i) {
            m_[i].assign(ps[i]->size(), 0.0f);
            v_[i].assign(ps[i]->size(), 0.0f);
        }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    const double lr = lr_ * lr_scale;
    for (std::size_t i = 0; i < ps.size(); ++i) {
        Param& p = *ps[i];
        const std::vector<double>& g = grads[i];
        for (std::size_t j = 0; j < p.size(); ++j) {
            // f32 state, f64 arithmetic: every transition starts from the
            // stored f32 values so a checkpoint round-trip is bit-exact.
            const double m = beta1_ * static_cast<double>(m_[i][j]) + (1.0 - beta1_) * g[j];
            const double v = beta2_ * static_cast<double>(v_[i][j]) + (1.0 - beta2_) * g[j] * g[j];
            m_[i][j] = static_cast<float>(m);
            v_[i][j] = static_cast<float>(v);
            const double mh = static_cast<double>(m_[i][j]) / bc1;
            const double vh = static_cast<double>(v_[i][j]) / bc2;
            p.w[j] = static_cast<float>(static_cast<double>(p.w[j]) -
                                        lr * mh / (std::sqrt(vh) + eps_));
        }
        p.sync();
    }
}

void Adam::append_state(Checkpoint& ck, const InterestModel& model) const {
    auto ps = model.params();
    TensorBlob tstep;
    tstep.name = "adam.t";
    tstep.rows = 1;
    tstep.cols = 1;
    tstep.data = {static_cast<float>(t_)};
    ck.tensors.push_back(std::move(tstep));
    if (m_.empty()) return;
    for (std::size_t i = 0; i < ps.size(); ++i) {
        TensorBlob m;
        m.name = "adam.m/" + ps[i]->name;
        m.rows = ps[i]->rows;
        m.cols = ps[i]->cols;
        m.data = m_[i];
        ck.tensors.push_back(std::move(m));
        TensorBlob v;
        v.name = "adam.v/" + ps[i]->name;
        v.rows = ps[i]->rows;
        v.cols = ps[i]->cols;
        v.data = v_[i];
        ck.tensors.push_back(std::move(v));
    }
}

void Adam::load_state(const Checkpoint& ck, const InterestModel& model) {
    auto ps = model.params();
    m_.assign(ps.size(), {});
    v_.assign(ps.size(), {});
    t_ = 0;
    for (const TensorBlob& t : ck.tensors)
        if (t.name == "adam.t") t_ = static_cast<std::uint64_t>(t.data.at(0));
    for (std::size_t i = 0; i < ps.size(); ++i) {
        m_[i].assign(ps[i]->size(), 0.0f);
        v_[i].assign(ps[i]->size(), 0.0f);
        for (const TensorBlob& t : ck.tensors) {
            if (t.name == "adam.m/" + ps[i]->name) m_[i] = t.data;
            if (t.name == "adam.v/" + ps[i]->name) v_[i] = t.data;
        }
    }
}

double lr_schedule_factor(std::uint64_t step, std::uint64_t total_steps, double warmup_ratio,
                          bool cosine) {
    if (total_steps == 0) return 1.0;
    const std::uint64_t warm =
        std::max<std::uint64_t>(1, static_cast<std::uint64_t>(warmup_ratio * total_steps));
    if (step < warm) return static_cast<double>(step + 1) / static_cast<double>(warm);
    if (!cosine) return 1.0;
    const double progress = total_steps > warm
                                ? static_cast<double>(step - warm) /
                                      static_cast<double>(total_steps - warm)
                                : 1.0;
    return 0.5 * (1.0 + std::cos(3.14159265358979323846 * std::min(1.0, progress)));
}

}  // namespace hymirec
