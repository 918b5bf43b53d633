#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "s2a/rng.hpp"
#include "s2a/tensor.hpp"

namespace s2a {

struct FrameSpec {
    int sample_rate = 16000;
    int window_ms = 40;
    int hop_ms = 20;

    int window_samples() const { return sample_rate * window_ms / 1000; }
    int hop_samples() const { return sample_rate * hop_ms / 1000; }
};

// Time-aligned model inputs for one utterance at one frame rate.
struct FeatureSequence {
    Tensor<float> ppg;          // [T, ppg_dim] posteriors, rows sum to 1
    std::vector<float> pitch;   // T, Hz; 0 = unvoiced
    std::vector<float> energy;  // T, ln power
    int frame_rate_hz = 50;
    std::string utterance_id;

    int64_t frames() const { return static_cast<int64_t>(energy.size()); }
    void validate() const;
};

// z-score statistics fitted on the training split.
struct NormStats {
    std::vector<float> target_mean;  // per blendshape channel
    std::vector<float> target_std;
    float pitch_mean = 0, pitch_std = 1;    // over voiced frames
    float energy_mean = 0, energy_std = 1;  // over all frames
};

std::vector<float> hamming_window(int n);

// Per frame: ln(sum((w*x)^2) + 1e-10), 640-sample window, 320 hop at 16 kHz.
// A waveform shorter than one window yields an empty vector with a warning.
std::vector<float> frame_energy(const std::vector<float>& samples, const FrameSpec& spec);

// Normalized-autocorrelation pitch, search 60-400 Hz, voicing threshold 0.3,
// parabolic peak refinement; unvoiced frames emit 0. Subharmonic lags are
// rejected by taking the smallest lag among peaks within 15% of the best.
std::vector<float> frame_pitch(const std::vector<float>& samples, const FrameSpec& spec);

// Removes leading and trailing frames more than ln(1000) (30 dB) below the
// utterance's maximum energy; frames at the ln(1e-9) absolute floor count as
// silence too. Interior frames are never removed.
FeatureSequence vad_trim(const FeatureSequence& fs);

// Per-column linear interpolation on the normalized time axis; endpoints are
// copied exactly.
Tensor<float> resample_linear(const Tensor<float>& m, int64_t t2);

// Divides each row by its sum (restores PPG distributions after resampling).
void renorm_rows(Tensor<float>& m);

// Animation frame count for t1 feature frames (50 Hz -> 60 fps by default).
int64_t target_frames(int64_t t1, int feature_rate_hz = 50, int fps = 60);

// Resamples all three streams to t2 frames and renormalizes PPG rows.
FeatureSequence resample_features(const FeatureSequence& fs, int64_t t2, int target_rate_hz);

// Near-one-hot posteriors for (phoneme_id, duration_frames) segments,
// Gaussian-smoothed across boundaries (sigma = 2 frames) and mixed with
// `noise` mass of uniform-simplex Dirichlet noise.
Tensor<float> synth_ppg(const std::vector<std::pair<int, int>>& segments, RngState& rng,
                        float noise = 0.02f, int dim = 64);

NormStats fit_norm_stats(const std::vector<const Tensor<float>*>& train_anims,
                         const std::vector<const FeatureSequence*>& train_feats);

Tensor<float> apply_norm_anim(const Tensor<float>& anim, const NormStats& stats);
Tensor<float> invert_norm_anim(const Tensor<float>& normed, const NormStats& stats,
                               bool clamp01 = true);

// Voiced (>= 60 Hz) frames are z-scored; unvoiced frames map to 0.
std::vector<float> normalize_pitch(const std::vector<float>& pitch, const NormStats& stats);
std::vector<float> normalize_energy(const std::vector<float>& energy, const NormStats& stats);

}  // namespace s2a
