#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "s2a/corpus.hpp"
#include "s2a/model.hpp"

namespace s2a {

struct TrainConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9, beta2 = 0.98;
    double adam_eps = 1e-8;
    int64_t batch_size = 8;   // utterances
    int64_t max_epochs = 100;
    int64_t patience = 10;    // epochs without val improvement
    uint64_t seed = 1;
    double grad_clip_norm = 1.0;

    void validate() const;
};

// Mean squared error over the first valid_rows rows (the unpadded cells).
double mse_loss(const Tensor<float>& pred, const Tensor<float>& target, int64_t valid_rows);

// One utterance resampled to the animation rate and normalized.
struct TrainExample {
    std::string id;
    ForwardInput<float> input;
    Tensor<float> target;  // [T2, 32], normalized space
};

// Normalization statistics over a training split (targets, pitch, energy at
// the model rate).
NormStats fit_corpus_stats(const std::vector<LoadedUtterance>& train);

// Resamples the streams to the animation rate and normalizes prosody; the
// dense-features variant takes the 20-dim stream in place of the PPG.
ForwardInput<float> make_forward_input(const FeatureSequence& fs, const Tensor<float>& dense20,
                                       const NormStats& stats, Variant variant);

TrainExample make_example(const LoadedUtterance& u, const NormStats& stats, Variant variant);

struct EpochRecord {
    int64_t epoch = 0;
    double train_loss = 0;  // mean MSE over valid cells
    double val_rmse = 0;    // raw-unit RMSE, mean over val utterances
};

struct TrainResult {
    ModelParams<float> params;  // weights from the best-val epoch
    NormStats stats;
    int64_t best_epoch = 0;
    double best_val_rmse = 0;
    int64_t epochs_run = 0;
    std::vector<EpochRecord> history;
};

// Adam with global-norm gradient clipping on length-bucketed padded batches.
// Emits one JSON line per epoch to `log` when given. Throws DivergenceError
// on a non-finite loss.
TrainResult train(const LoadedCorpus& corpus, const ModelConfig& cfg, Variant variant,
                  const TrainConfig& tc, std::ostream* log = nullptr);

struct OverfitResult {
    ModelParams<float> params;
    NormStats stats;
    double final_rmse = 0;  // normalized space, sqrt of train MSE
    int64_t steps_run = 0;
    std::vector<double> losses;
};

// Single-utterance sanity harness: full-batch Adam on one example until the
// normalized train RMSE drops below `target_rmse` or max_steps is reached.
OverfitResult overfit_single(const LoadedUtterance& utt, const ModelConfig& cfg, Variant variant,
                             const TrainConfig& tc, int64_t max_steps = 500,
                             double target_rmse = 0.02);

}  // namespace s2a
