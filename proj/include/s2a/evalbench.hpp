#pragma once

#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "s2a/corpus.hpp"
#include "s2a/model.hpp"
#include "s2a/tensor.hpp"

namespace s2a {

// jawOpen and mouthClose
const std::vector<int64_t>& crucial_channel_indices();

// sqrt(mean over frames x channels of squared error), raw [0,1] units.
double rmse_frames(const Tensor<float>& pred, const Tensor<float>& ref,
                   const std::vector<int64_t>& channels);
double rmse(const AnimationSequence& pred, const AnimationSequence& ref,
            const std::vector<int64_t>& channels);

struct RmseReport {
    std::string name;
    double entire_mean = 0, entire_std = 0;    // per-utterance RMSE stats, raw units
    double crucial_mean = 0, crucial_std = 0;
    double pooled_entire = 0, pooled_crucial = 0;  // all test frames pooled
    std::vector<double> per_utt_entire, per_utt_crucial;
    std::vector<std::string> crucial_channels{"jawOpen", "mouthClose"};
};

// Builds the report from per-utterance (entire, crucial) values plus pooled
// sums of squares; used by every evaluator below.
RmseReport make_rmse_report(const std::string& name, std::vector<double> per_utt_entire,
                            std::vector<double> per_utt_crucial, double pooled_entire,
                            double pooled_crucial);

RmseReport evaluate_checkpoint(const std::string& name, ModelParams<float>& params,
                               const NormStats& stats, const std::vector<LoadedUtterance>& split);

// Per-channel mean of the training targets, the no-skill baseline.
Tensor<float> channel_means(const std::vector<LoadedUtterance>& split);
RmseReport evaluate_constant(const std::string& name, const Tensor<float>& means,
                             const std::vector<LoadedUtterance>& split);

// Loads each (name, checkpoint path) pair and evaluates it on the split;
// unreadable checkpoints are skipped with a warning.
std::vector<RmseReport> evaluate_suite(
    const std::vector<std::pair<std::string, std::string>>& checkpoints,
    const std::vector<LoadedUtterance>& split, std::ostream* warnings = nullptr);

std::string rmse_table(const std::vector<RmseReport>& rows);  // aligned text, raw + x100
std::string rmse_reports_json(const std::vector<RmseReport>& rows);

struct RtfRow {
    std::string name;
    double mean_seconds = 0, std_seconds = 0;
    double rtf_mean = 0, rtf_std = 0;  // seconds of compute per second of output
    double speedup_vs_baseline = 0;
    double cv = 0;
    bool stable = true;  // cv < 0.3
};

struct RtfReport {
    int64_t frames = 0, runs = 0, warmup = 0;
    int64_t threads = 1;
    double timer_resolution_s = 0;
    std::vector<RtfRow> rows;
};

struct BenchModel {
    std::string name;
    std::function<void()> run;  // one full forward pass, output denormalized
    bool is_baseline = false;   // speedups are measured against this row
};

// Monotonic seconds; injectable so timing logic is testable.
using BenchClock = std::function<double()>;

// Times each model over `runs` passes after `warmup` discarded passes,
// single-threaded. Fails if the clock is too coarse to resolve 1% of the
// measured time.
RtfReport bench_rtf(const std::vector<BenchModel>& models, int64_t frames, int64_t runs,
                    int64_t warmup, BenchClock clock = {});

std::string rtf_table(const RtfReport& report);
std::string rtf_report_json(const RtfReport& report);

// Forward-pass closures over a seeded random input of `frames` frames.
BenchModel make_model_bench(const std::string& name, ModelParams<float>& params,
                            const NormStats& stats, int64_t frames, uint64_t seed);
BenchModel make_blstm_bench(const std::string& name, const BlstmParams& p, const NormStats& stats,
                            int64_t frames, uint64_t seed);

}  // namespace s2a
