#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "s2a/features.hpp"
#include "s2a/model.hpp"
#include "s2a/rng.hpp"
#include "s2a/tensor.hpp"

namespace s2a {

// One phoneme class: its mouth pose, voicing, and typical loudness.
struct VisemeEntry {
    std::string name;
    bool voiced = false;
    bool vowel = false;
    float energy_base = -3.0f;           // ln power before gain scaling
    std::array<float, 32> target{};      // blendshape pose, values in [0,1]
};

// Phoneme id -> viseme pose. Entry 0 is silence.
struct VisemeTable {
    std::vector<VisemeEntry> entries;

    int64_t size() const { return static_cast<int64_t>(entries.size()); }
    static const VisemeTable& instance();
};

struct SyntheticUtterance {
    FeatureSequence features;     // 50 Hz
    AnimationSequence animation;  // 60 fps, aligned via target_frames
    std::vector<int> phonemes;    // per segment
    std::vector<int> durations;   // frames per segment, 5..25
    float energy_gain = 1.0f;
    std::string id;
};

// Deterministic single utterance. The rng streams for phoneme choice, PPG
// noise, pitch, and energy noise are split independently, so two calls with
// the same seed but different energy_gain produce identical PPGs and pitch
// while energy (and through it jawOpen, when coupled) differs.
SyntheticUtterance gen_utterance(const RngState& rng, int n_phonemes, float energy_gain,
                                 bool coupled_energy = true);

// Fixed 64->20 projection shared by every utterance (the same "front end"
// for the whole corpus).
const Tensor<float>& dense_projection_matrix();

// Speaker-entangled 20-dim replacement for the PPG: fixed projection plus a
// per-utterance speaker offset (scaled by offset_scale) plus Gaussian noise.
// Rows are not distributions; consumers use the values raw.
Tensor<float> gen_dense_feature_variant(const SyntheticUtterance& u, RngState& rng,
                                        float noise_sigma = 0.1f, float offset_scale = 1.0f);

struct CorpusSpec {
    std::string out_dir;
    int64_t n_utts = 200;
    std::array<double, 3> ratios{0.8, 0.1, 0.1};  // train/val/test, sum to 1
    uint64_t seed = 7;
    bool coupled_energy = true;
};

struct CorpusSummary {
    int64_t n_train = 0, n_val = 0, n_test = 0;
    std::string manifest_path;
};

// Writes features/<id>.s2a, anim/<id>.s2a and manifest.json under out_dir.
// Pure function of spec.seed; reruns produce byte-identical files.
CorpusSummary gen_corpus(const CorpusSpec& spec);

// Feature streams of one utterance as stored in features/<id>.s2a.
struct StoredFeatures {
    FeatureSequence features;  // 50 Hz
    Tensor<float> dense20;     // [T1, 20]; empty when absent
    float energy_gain = 1.0f;
};

void write_feature_file(const std::string& path, const FeatureSequence& fs,
                        const Tensor<float>& dense20, float energy_gain);
StoredFeatures read_feature_file(const std::string& path);

void write_animation_file(const std::string& path, const AnimationSequence& anim);
AnimationSequence read_animation_file(const std::string& path);

// One utterance as stored on disk.
struct LoadedUtterance {
    std::string id;
    std::string split;
    float energy_gain = 1.0f;
    FeatureSequence features;   // 50 Hz
    Tensor<float> dense20;      // [T1, 20]
    AnimationSequence animation;  // 60 fps
};

struct LoadedCorpus {
    std::vector<LoadedUtterance> train, val, test;

    const std::vector<LoadedUtterance>& split(const std::string& name) const;
};

LoadedCorpus load_corpus(const std::string& dir);

}  // namespace s2a
