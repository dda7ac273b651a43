#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "hymirec/common.hpp"
#include "hymirec/io.hpp"
#include "hymirec/matrix.hpp"

namespace hymirec {

struct ModelConfig {
    int dim = 64;  // item embedding dimension d
    int d_model = 64;
    int heads = 4;
    int d_ff = 256;
    int layers_light = 2;
    int layers_refined = 4;
    int s = 3;    // refined interest queries
    int s_c = 0;  // coarse queries; 0 means "same as s"
    int n_last = 30;
    int l_max = 300;
    bool use_indicator = true;
    bool use_coarse = true;  // false drops the lightweight path entirely

    int coarse_queries() const { return s_c > 0 ? s_c : s; }
    void validate() const;
    std::string to_json() const;
    static ModelConfig from_json(const std::string& json);
};

/// One learnable tensor: f32 master values (what checkpoints carry) plus a
/// f64 mirror used by all compute. The mirror is refreshed after every
/// optimizer update, so a save/restore round-trip is bit-exact.
struct Param {
    std::string name;
    int index = -1;  // position in the registry / GradBuffer
    int rows = 0;
    int cols = 0;
    std::vector<float> w;
    std::vector<double> v;

    std::size_t size() const { return w.size(); }
    void sync() {
        v.resize(w.size());
        for (std::size_t i = 0; i < w.size(); ++i) v[i] = w[i];
    }
};

/// Gradients in model registry order, one f64 buffer per tensor.
using GradBuffer = std::vector<std::vector<double>>;

namespace detail {
struct LayerCache {
    Mat x;  // layer input
    Mat ln1;
    std::vector<double> mu1, rs1;
    Mat q, k, v;
    std::vector<Mat> probs;  // per head, T x T
    Mat ctx;
    Mat h;  // post-attention residual
    Mat ln2;
    std::vector<double> mu2, rs2;
    Mat ffn_pre, ffn_act;
};

struct EncoderCache {
    Mat sources;  // d-dim token sources (zero rows for query slots)
    std::vector<int> pos_index;  // position-table row per token, -1 for none
    Mat tokens;                  // assembled T x d_model input
    std::vector<std::uint8_t> valid;
    int query_count = 0;
    std::vector<LayerCache> layers;
    Mat final_in;
    std::vector<double> muf, rsf;
    Mat final_out;
};
}  // namespace detail

/// Complete cached forward pass for one user.
struct ModelForward {
    bool valid = false;
    bool has_light = false;
    detail::EncoderCache light;
    Mat r_coarse;  // s_c x d
    detail::EncoderCache refined;
    Mat refined_raw;  // s x d, before normalization
    std::vector<double> refined_norms;
    Mat r_refined;  // s x d, unit rows
};

class InterestModel {
  public:
    struct EncoderDef;  // defined in model.cpp

    InterestModel(const ModelConfig& cfg, std::uint64_t seed);
    ~InterestModel();
    InterestModel(const InterestModel&) = delete;
    InterestModel& operator=(const InterestModel&) = delete;

    const ModelConfig& config() const { return cfg_; }

    /// Coarse interest embeddings from a (possibly empty, possibly masked)
    /// long-history matrix (rows = items, cols = d). mask == nullptr means
    /// all rows valid.
    Mat coarse_forward(const Mat& history, const std::vector<std::uint8_t>* mask,
                       detail::EncoderCache* cache = nullptr) const;

    /// Refined interest embeddings; rows of the result are L2-normalized.
    Mat refined_forward(const Mat& r_coarse, const Mat& last_n,
                        const std::vector<std::uint8_t>* mask, detail::EncoderCache* cache = nullptr,
                        Mat* raw = nullptr, std::vector<double>* norms = nullptr) const;

    /// Full pipeline for one user with all activations cached for backward.
    ModelForward forward(const Mat& history, const Mat& last_n) const;
    ModelForward forward_masked(const Mat& history, const std::vector<std::uint8_t>* hist_mask,
                                const Mat& last_n, const std::vector<std::uint8_t>* last_mask) const;

    /// Exact gradients for every parameter given upstream gradients at the
    /// refined interest embeddings. Flows through the coarse path when it is
    /// enabled. Throws if fw does not hold a completed forward pass.
    void backward(const ModelForward& fw, const Mat& d_refined, GradBuffer& grads) const;

    GradBuffer make_grads() const;
    static void zero_grads(GradBuffer& g);

    std::vector<Param*> params();
    std::vector<const Param*> params() const;
    Param* find(const std::string& name);

    Checkpoint to_checkpoint(std::uint64_t step) const;
    void load_checkpoint(const Checkpoint& ck);  // geometry must match

  private:
    Param* add_param(const std::string& name, int rows, int cols);

    ModelConfig cfg_;
    std::vector<std::unique_ptr<Param>> store_;
    std::unique_ptr<EncoderDef> light_, refined_;
    Param* q_coarse_ = nullptr;
    Param* q_refined_ = nullptr;
    Param* indicator_ = nullptr;
};

/// Adam with cosine schedule + linear warmup (schedule applied by the
/// trainer via lr_scale). Moment state is f32 like the parameters, updated
/// through f64 arithmetic; checkpoints restore it bit-exactly.
class Adam {
  public:
    Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    void step(InterestModel& model, const GradBuffer& grads, double lr_scale = 1.0);

    std::uint64_t steps_taken() const { return t_; }
    void append_state(Checkpoint& ck, const InterestModel& model) const;
    void load_state(const Checkpoint& ck, const InterestModel& model);

  private:
    double lr_, beta1_, beta2_, eps_;
    std::uint64_t t_ = 0;
    std::vector<std::vector<float>> m_, v_;
};

/// Cosine decay with linear warmup; factor multiplies the base lr.
double lr_schedule_factor(std::uint64_t step, std::uint64_t total_steps, double warmup_ratio,
                          bool cosine);

}  // namespace hymirec
