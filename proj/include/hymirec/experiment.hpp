#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "hymirec/codebook.hpp"
#include "hymirec/config.hpp"
#include "hymirec/dmil.hpp"
#include "hymirec/eval.hpp"
#include "hymirec/model.hpp"

namespace hymirec {

/// Everything a training/eval run reads: the raw catalogue, the (possibly
/// reconstructed) long-history embeddings indexed the same way, and the user
/// sequences.
struct Corpus {
    ItemUniverse universe;                 // raw embeddings + id lookup
    const EmbeddingArray* history = nullptr;  // long-history source (raw or reconstructed)
    const std::vector<UserSequence>* sequences = nullptr;
};

struct TrainStats {
    std::vector<double> step_loss;
    std::vector<double> mean_grad_mass;  // per query, averaged over steps
    std::uint64_t final_step = 0;
};

/// Runs cfg.steps optimizer steps (resuming at start_step). Per-step batch
/// composition, cuts and negatives are derived statelessly from (seed, step,
/// slot), so a resumed run retraces the original trajectory exactly. When
/// log_jsonl is non-null, appends one JSON object per step.
TrainStats train_model(InterestModel& model, Adam& adam, const Corpus& corpus,
                       const RunConfig& cfg, std::ostream* log_jsonl, std::uint64_t start_step = 0);

MetricsReport evaluate_model(const InterestModel& model, const Corpus& corpus,
                             const RunConfig& cfg);

struct ExperimentResult {
    MetricsReport metrics;
    TrainStats train;
    double min_mean_grad_mass = 0.0;  // min over queries; the under-training signal
};

/// Synthetic end-to-end run: generate data, build/apply the codebook
/// (variant-dependent), train, evaluate. Known variants: full, no_light,
/// no_csrc, euclid_csrc, no_indicator, no_dmil, no_window, max_matching.
ExperimentResult run_experiment(const RunConfig& cfg, std::ostream* log_jsonl = nullptr);

/// CSV row schema shared by run_experiment consumers and the evaluate
/// command: variant,s,w,seed,recall@K...,ndcg@K...
std::string metrics_csv_header(const std::vector<int>& ks);
std::string metrics_csv_row(const std::string& variant, int s, int w, std::uint64_t seed,
                            const MetricsReport& m, const std::vector<int>& ks);

/// Builds the inputs for one user example; returns false when the sequence
/// is too short to place the window.
struct UserExample {
    Mat history;  // reconstructed (or raw) long-history embeddings
    Mat last_n;
    WindowTargets targets;
    std::vector<std::uint64_t> last_n_ids;
};
bool make_example(const Corpus& corpus, const UserSequence& seq, std::size_t window_start,
                  const RunConfig& cfg, int window_len, UserExample& out);

}  // namespace hymirec
