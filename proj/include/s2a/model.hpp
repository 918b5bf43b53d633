#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "s2a/features.hpp"
#include "s2a/rng.hpp"
#include "s2a/tape.hpp"
#include "s2a/tensor.hpp"

namespace s2a {

enum class Variant { Moe, Dense, NoProsody, DenseFeatures };

std::string variant_name(Variant v);
Variant parse_variant(const std::string& name);  // ValueError lists valid names

struct ModelConfig {
    int64_t d_model = 64;
    int64_t n_heads = 4;
    int64_t n_enc_blocks = 2;
    int64_t n_dec_blocks = 2;
    int64_t n_experts = 48;
    int64_t top_k = 16;
    int64_t expert_hidden = 128;
    int64_t expert_kernel = 3;
    float dropout = 0.1f;
    int64_t ppg_dim = 64;
    int64_t prosody_dim = 2;
    int64_t out_dim = 32;

    void validate() const;

    // Desk-scale preset used by trainer tests; dropout off so single-utterance
    // overfitting is exact.
    static ModelConfig tiny();
};

// The 32 output channels; jawOpen and mouthClose are the two evaluated
// separately.
const std::array<std::string, 32>& blendshape_channel_names();
constexpr int64_t kJawOpenIndex = 3;
constexpr int64_t kMouthCloseIndex = 4;

struct AnimationSequence {
    Tensor<float> frames;  // [T, 32], values in [0,1]
    std::vector<std::string> channels;
    int fps = 60;
    std::string utterance_id;
};

template <typename T>
struct LinearP {
    Tensor<T> w;  // [in, out]
    Tensor<T> b;  // [out]
};

template <typename T>
struct LayerNormP {
    Tensor<T> g, b;  // [d]
};

template <typename T>
struct AttnP {
    LinearP<T> q, k, v, o;
};

// conv1d (stride 1, odd kernel) -> ReLU -> fully connected; the expert
// architecture, also used as the dense feed-forward sublayer.
template <typename T>
struct FfnP {
    Tensor<T> conv_w;  // [K, in, hidden]
    Tensor<T> conv_b;  // [hidden]
    LinearP<T> fc;     // [hidden, in]
};

template <typename T>
struct MoeP {
    LinearP<T> gate;              // [d, n]
    std::vector<FfnP<T>> experts;  // n sets, same shapes, separate values
};

template <typename T>
struct EncBlockP {
    LayerNormP<T> ln1, ln2;
    AttnP<T> attn;
    FfnP<T> ffn;
};

template <typename T>
struct DecBlockP {
    LayerNormP<T> ln1, ln2;
    AttnP<T> attn;
    MoeP<T> moe;  // all variants except Dense
    FfnP<T> ffn;  // Dense ablation: one instance, hidden = top_k * expert_hidden
};

template <typename T>
struct ModelParams {
    ModelConfig cfg;
    Variant variant = Variant::Moe;
    LinearP<T> enc_in;
    std::vector<EncBlockP<T>> enc;
    LayerNormP<T> enc_ln;
    LinearP<T> dec_in;
    std::vector<DecBlockP<T>> dec;
    LayerNormP<T> dec_ln;
    LinearP<T> head;

    static ModelParams build(const ModelConfig& cfg, Variant variant);
    void init(RngState& rng);  // Xavier-uniform weights, zero biases
    void for_each(const std::function<void(const std::string&, Tensor<T>&)>& fn);
    int64_t param_count();
    void set_requires_grad(bool on);

    template <typename U>
    ModelParams<U> cast() const {
        ModelParams<U> out;
        out.cfg = cfg;
        out.variant = variant;
        auto* self = const_cast<ModelParams<T>*>(this);
        std::vector<Tensor<T>*> src;
        self->for_each([&](const std::string&, Tensor<T>& t) { src.push_back(&t); });
        out = ModelParams<U>::build(cfg, variant);
        size_t i = 0;
        out.for_each([&](const std::string&, Tensor<U>& t) { t = src[i++]->template cast<U>(); });
        return out;
    }
};

// Model inputs at the animation frame rate, prosody already normalized.
template <typename T>
struct ForwardInput {
    Tensor<T> ppg;     // [T2, ppg_dim]
    Tensor<T> pitch;   // [T2, 1]
    Tensor<T> energy;  // [T2, 1]
};

Tensor<float> positional_encoding(int64_t t, int64_t d_model);

// Entries outside the k largest become -inf; ties keep the lower index.
template <typename T>
std::vector<T> topk_scores(const std::vector<T>& g, int64_t k);

// Self-attention sublayer body on an already-normalized input node; keys at
// positions >= valid_len are masked to -inf.
template <typename T>
NodeId attention_body(Tape<T>& tape, AttnP<T>& p, NodeId h, int64_t n_heads, int64_t valid_len);

// Dense feed-forward body: conv1d_same -> ReLU -> fc.
template <typename T>
NodeId ffn_body(Tape<T>& tape, FfnP<T>& p, NodeId h);

// Sparse MOE body: per-frame top-k routing, experts evaluated only on the
// frames routed to them, outputs mixed by gate probabilities.
template <typename T>
NodeId moe_body(Tape<T>& tape, MoeP<T>& p, NodeId h, int64_t k);

// Full network: PPG projection + positional encoding, encoder blocks,
// prosody concatenation, decoder blocks (self-attention + MOE or dense FFN),
// linear head. Output node is [T2, 32] in normalized target space.
// Frames at index >= valid_len are padding and do not influence the rest.
template <typename T>
NodeId model_forward(Tape<T>& tape, ModelParams<T>& params, const ForwardInput<T>& in,
                     int64_t valid_len, bool training = false, RngState* dropout_rng = nullptr);

// Plain inference wrapper: forward + denormalize + clamp to [0,1].
AnimationSequence infer_animation(ModelParams<float>& params, const ForwardInput<float>& in,
                                  const NormStats& stats, const std::string& utterance_id);

// Bidirectional LSTM timing baseline (forward only).
struct BlstmParams {
    int64_t input_dim = 0, hidden = 0, out_dim = 0;
    Tensor<float> fwd_wx, fwd_wh, fwd_b;  // [I,4H], [H,4H], [4H]; gate order i,f,g,o
    Tensor<float> bwd_wx, bwd_wh, bwd_b;
    LinearP<float> head;  // [2H, out]

    static BlstmParams build(int64_t input_dim, int64_t hidden, int64_t out_dim);
    void init(RngState& rng);
    int64_t param_count() const;
};

Tensor<float> blstm_forward(const BlstmParams& p, const Tensor<float>& x);

// Smallest-error hidden size whose parameter count is closest to the given
// model's (must land within +/-20%).
int64_t matched_blstm_hidden(const ModelConfig& cfg, Variant variant);

struct CheckpointMeta {
    int64_t epoch = 0;
    uint64_t seed = 0;
    double best_val_rmse = 0;
};

void save_checkpoint(const std::string& path, ModelParams<float>& params, const NormStats& stats,
                     const CheckpointMeta& meta);

struct LoadedCheckpoint {
    ModelParams<float> params;
    NormStats stats;
    CheckpointMeta meta;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace s2a
