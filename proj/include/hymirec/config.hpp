#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hymirec/common.hpp"

namespace hymirec {

/// Every tunable in one flat struct. Files are `key=value` lines ('#'
/// comments), CLI overrides arrive as the same strings; unknown keys are
/// rejected and every run can echo the fully-resolved set.
struct RunConfig {
    std::uint64_t seed = 2020;
    int threads = 0;  // 0 = hardware default
    int dim = 64;

    // codebook
    int cb_layers = 3;
    int cb_k = 256;
    std::int64_t cb_basepool = 100000;
    std::string cb_metric = "cosine";  // cosine | euclidean
    double cb_eps_zero = 1e-8;
    int kmeans_iters = 50;

    // model
    int layers_light = 2;
    int layers_refined = 4;
    int heads = 4;
    int d_model = 64;
    int d_ff = 256;
    int s = 3;
    int s_c = 0;  // 0 = same as s
    int n_last = 30;
    int l_max = 300;
    bool indicator = true;

    // training
    double lr = 1e-5;
    int batch = 16;
    int steps = 500;
    int negatives_m = 8;
    double tau = 0.1;
    int window = 8;
    std::string loss_norm = "window";    // window | count
    std::string lr_schedule = "cosine";  // cosine | constant
    double warmup_ratio = 0.1;
    std::string negatives = "uniform";  // uniform | in_batch
    std::string variant = "full";

    // retrieval
    int k = 50;
    int refresh_period = 10;

    // synthetic data
    int syn_clusters = 4;
    int syn_items_per_cluster = 5000;
    double syn_spread = 0.1;
    int syn_users = 2000;
    int syn_interests_min = 1;
    int syn_interests_max = 3;
    int syn_seq_len = 80;
    double syn_taste_spread = 0.05;
    int syn_taste_pool = 100;

    // evaluation
    std::string eval_ks = "10,50";
    int eval_window = 0;  // 0 = same as train.window

    void validate() const;
    std::vector<int> eval_k_list() const;
    int effective_eval_window() const { return eval_window > 0 ? eval_window : window; }
};

/// Applies one `key=value` assignment; config_error on unknown key or
/// unparseable value.
void config_set(RunConfig& cfg, const std::string& key, const std::string& value);

/// key=value file; '#' starts a comment.
void config_load_file(RunConfig& cfg, const std::string& path);

/// Fully-resolved config, one `key=value` per line, keys sorted.
std::string config_echo(const RunConfig& cfg);

}  // namespace hymirec
