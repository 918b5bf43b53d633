#include "s2a/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"
#include "s2a/container.hpp"
#include "s2a/errors.hpp"

namespace s2a {

std::string variant_name(Variant v) {
    switch (v) {
        case Variant::Moe: return "moe";
        case Variant::Dense: return "dense";
        case Variant::NoProsody: return "no-prosody";
        case Variant::DenseFeatures: return "dense-features";
    }
    throw ValueError("unknown variant enum value");
}

Variant parse_variant(const std::string& name) {
    if (name == "moe") return Variant::Moe;
    if (name == "dense") return Variant::Dense;
    if (name == "no-prosody") return Variant::NoProsody;
    if (name == "dense-features") return Variant::DenseFeatures;
    throw ValueError("unknown variant '" + name +
                     "' (valid: moe, dense, no-prosody, dense-features)");
}

void ModelConfig::validate() const {
    if (d_model < 1 || n_heads < 1 || n_enc_blocks < 1 || n_dec_blocks < 1 || n_experts < 1 ||
        expert_hidden < 1 || ppg_dim < 1)
        throw ConfigError("model dimensions must be positive");
    if (top_k < 1 || top_k > n_experts)
        throw ConfigError("top_k=" + std::to_string(top_k) + " outside [1," +
                          std::to_string(n_experts) + "]");
    if (d_model % n_heads != 0)
        throw ConfigError("d_model=" + std::to_string(d_model) + " not divisible by n_heads=" +
                          std::to_string(n_heads));
    if (expert_kernel < 1 || expert_kernel % 2 == 0)
        throw ConfigError("expert_kernel must be odd, got " + std::to_string(expert_kernel));
    if (out_dim != 32)
        throw ConfigError("out_dim must be 32, got " + std::to_string(out_dim));
    if (prosody_dim != 2)
        throw ConfigError("prosody_dim must be 2, got " + std::to_string(prosody_dim));
    if (dropout < 0.0f || dropout >= 1.0f)
        throw ConfigError("dropout must be in [0,1), got " + std::to_string(dropout));
}

ModelConfig ModelConfig::tiny() {
    ModelConfig cfg;
    cfg.d_model = 16;
    cfg.n_heads = 2;
    cfg.n_enc_blocks = 1;
    cfg.n_dec_blocks = 1;
    cfg.n_experts = 4;
    cfg.top_k = 2;
    cfg.expert_hidden = 32;
    cfg.dropout = 0.0f;
    return cfg;
}

const std::array<std::string, 32>& blendshape_channel_names() {
    static const std::array<std::string, 32> names = {
        "jawForward",        "jawLeft",           "jawRight",          "jawOpen",
        "mouthClose",        "mouthFunnel",       "mouthPucker",       "mouthLeft",
        "mouthRight",        "mouthSmileLeft",    "mouthSmileRight",   "mouthFrownLeft",
        "mouthFrownRight",   "mouthDimpleLeft",   "mouthDimpleRight",  "mouthStretchLeft",
        "mouthStretchRight", "mouthRollLower",    "mouthRollUpper",    "mouthShrugLower",
        "mouthShrugUpper",   "mouthPressLeft",    "mouthPressRight",   "mouthLowerDownLeft",
        "mouthLowerDownRight", "mouthUpperUpLeft", "mouthUpperUpRight", "cheekPuff",
        "cheekSquintLeft",   "cheekSquintRight",  "noseSneerLeft",     "noseSneerRight"};
    return names;
}

// ---------------------------------------------------------------------------
// parameters
// ---------------------------------------------------------------------------

template <typename T>
static void xavier_init(Tensor<T>& w, int64_t fan_in, int64_t fan_out, RngState& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (auto& v : w.data) v = static_cast<T>(rng.uniform(-limit, limit));
}

template <typename T>
static void init_linear(LinearP<T>& p, RngState& rng) {
    xavier_init(p.w, p.w.shape[0], p.w.shape[1], rng);
    std::fill(p.b.data.begin(), p.b.data.end(), T(0));
}

template <typename T>
static void init_ffn(FfnP<T>& p, RngState& rng) {
    xavier_init(p.conv_w, p.conv_w.shape[0] * p.conv_w.shape[1],
                p.conv_w.shape[0] * p.conv_w.shape[2], rng);
    std::fill(p.conv_b.data.begin(), p.conv_b.data.end(), T(0));
    init_linear(p.fc, rng);
}

template <typename T>
static void init_ln(LayerNormP<T>& p) {
    std::fill(p.g.data.begin(), p.g.data.end(), T(1));
    std::fill(p.b.data.begin(), p.b.data.end(), T(0));
}

template <typename T>
static LinearP<T> make_linear(int64_t in, int64_t out) {
    return {Tensor<T>({in, out}), Tensor<T>({out})};
}

template <typename T>
static FfnP<T> make_ffn(int64_t k, int64_t in, int64_t hidden) {
    return {Tensor<T>({k, in, hidden}), Tensor<T>({hidden}), make_linear<T>(hidden, in)};
}

template <typename T>
static LayerNormP<T> make_ln(int64_t d) {
    return {Tensor<T>({d}), Tensor<T>({d})};
}

template <typename T>
ModelParams<T> ModelParams<T>::build(const ModelConfig& cfg, Variant variant) {
    cfg.validate();
    ModelParams<T> p;
    p.cfg = cfg;
    p.variant = variant;
    const int64_t d = cfg.d_model;
    p.enc_in = make_linear<T>(cfg.ppg_dim, d);
    for (int64_t i = 0; i < cfg.n_enc_blocks; ++i) {
        EncBlockP<T> blk;
        blk.ln1 = make_ln<T>(d);
        blk.attn = {make_linear<T>(d, d), make_linear<T>(d, d), make_linear<T>(d, d),
                    make_linear<T>(d, d)};
        blk.ln2 = make_ln<T>(d);
        blk.ffn = make_ffn<T>(cfg.expert_kernel, d, cfg.expert_hidden);
        p.enc.push_back(std::move(blk));
    }
    p.enc_ln = make_ln<T>(d);
    p.dec_in = make_linear<T>(d + cfg.prosody_dim, d);
    for (int64_t i = 0; i < cfg.n_dec_blocks; ++i) {
        DecBlockP<T> blk;
        blk.ln1 = make_ln<T>(d);
        blk.attn = {make_linear<T>(d, d), make_linear<T>(d, d), make_linear<T>(d, d),
                    make_linear<T>(d, d)};
        blk.ln2 = make_ln<T>(d);
        if (variant == Variant::Dense) {
            blk.ffn = make_ffn<T>(cfg.expert_kernel, d, cfg.top_k * cfg.expert_hidden);
        } else {
            blk.moe.gate = make_linear<T>(d, cfg.n_experts);
            for (int64_t e = 0; e < cfg.n_experts; ++e)
                blk.moe.experts.push_back(make_ffn<T>(cfg.expert_kernel, d, cfg.expert_hidden));
        }
        p.dec.push_back(std::move(blk));
    }
    p.dec_ln = make_ln<T>(d);
    p.head = make_linear<T>(d, cfg.out_dim);
    return p;
}

template <typename T>
void ModelParams<T>::init(RngState& rng) {
    init_linear(enc_in, rng);
    for (auto& blk : enc) {
        init_ln(blk.ln1);
        init_linear(blk.attn.q, rng);
        init_linear(blk.attn.k, rng);
        init_linear(blk.attn.v, rng);
        init_linear(blk.attn.o, rng);
        init_ln(blk.ln2);
        init_ffn(blk.ffn, rng);
    }
    init_ln(enc_ln);
    init_linear(dec_in, rng);
    for (auto& blk : dec) {
        init_ln(blk.ln1);
        init_linear(blk.attn.q, rng);
        init_linear(blk.attn.k, rng);
        init_linear(blk.attn.v, rng);
        init_linear(blk.attn.o, rng);
        init_ln(blk.ln2);
        if (variant == Variant::Dense) {
            init_ffn(blk.ffn, rng);
        } else {
            init_linear(blk.moe.gate, rng);
            for (auto& e : blk.moe.experts) init_ffn(e, rng);
        }
    }
    init_ln(dec_ln);
    init_linear(head, rng);
}

template <typename T>
void ModelParams<T>::for_each(const std::function<void(const std::string&, Tensor<T>&)>& fn) {
    auto lin = [&](const std::string& name, LinearP<T>& p) {
        fn(name + ".w", p.w);
        fn(name + ".b", p.b);
    };
    auto ln = [&](const std::string& name, LayerNormP<T>& p) {
        fn(name + ".g", p.g);
        fn(name + ".b", p.b);
    };
    auto ffn = [&](const std::string& name, FfnP<T>& p) {
        fn(name + ".conv.w", p.conv_w);
        fn(name + ".conv.b", p.conv_b);
        lin(name + ".fc", p.fc);
    };
    auto attn = [&](const std::string& name, AttnP<T>& p) {
        lin(name + ".q", p.q);
        lin(name + ".k", p.k);
        lin(name + ".v", p.v);
        lin(name + ".o", p.o);
    };
    lin("enc_in", enc_in);
    for (size_t i = 0; i < enc.size(); ++i) {
        const std::string b = "enc." + std::to_string(i);
        ln(b + ".ln1", enc[i].ln1);
        attn(b + ".attn", enc[i].attn);
        ln(b + ".ln2", enc[i].ln2);
        ffn(b + ".ffn", enc[i].ffn);
    }
    ln("enc_ln", enc_ln);
    lin("dec_in", dec_in);
    for (size_t i = 0; i < dec.size(); ++i) {
        const std::string b = "dec." + std::to_string(i);
        ln(b + ".ln1", dec[i].ln1);
        attn(b + ".attn", dec[i].attn);
        ln(b + ".ln2", dec[i].ln2);
        if (variant == Variant::Dense) {
            ffn(b + ".ffn", dec[i].ffn);
        } else {
            lin(b + ".moe.gate", dec[i].moe.gate);
            for (size_t e = 0; e < dec[i].moe.experts.size(); ++e)
                ffn(b + ".moe.expert." + std::to_string(e), dec[i].moe.experts[e]);
        }
    }
    ln("dec_ln", dec_ln);
    lin("head", head);
}

template <typename T>
int64_t ModelParams<T>::param_count() {
    int64_t n = 0;
    for_each([&](const std::string&, Tensor<T>& t) { n += t.numel(); });
    return n;
}

template <typename T>
void ModelParams<T>::set_requires_grad(bool on) {
    for_each([&](const std::string&, Tensor<T>& t) { t.requires_grad = on; });
}

// ---------------------------------------------------------------------------
// forward pieces
// ---------------------------------------------------------------------------

Tensor<float> positional_encoding(int64_t t, int64_t d_model) {
    if (t < 1) throw ValueError("positional_encoding: T must be >= 1");
    if (d_model < 2 || d_model % 2 != 0)
        throw ConfigError("positional_encoding: d_model must be even, got " +
                          std::to_string(d_model));
    Tensor<float> pe({t, d_model});
    for (int64_t p = 0; p < t; ++p) {
        for (int64_t i = 0; i < d_model / 2; ++i) {
            const double angle =
                p / std::pow(10000.0, 2.0 * static_cast<double>(i) / static_cast<double>(d_model));
            pe.at(p, 2 * i) = static_cast<float>(std::sin(angle));
            pe.at(p, 2 * i + 1) = static_cast<float>(std::cos(angle));
        }
    }
    return pe;
}

template <typename T>
std::vector<T> topk_scores(const std::vector<T>& g, int64_t k) {
    const int64_t n = static_cast<int64_t>(g.size());
    if (k < 1 || k > n)
        throw ValueError("topk_scores: k=" + std::to_string(k) + " outside [1," +
                         std::to_string(n) + "]");
    std::vector<int64_t> idx(g.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), [&g](int64_t a, int64_t b) {
        return g[static_cast<size_t>(a)] > g[static_cast<size_t>(b)] ||
               (g[static_cast<size_t>(a)] == g[static_cast<size_t>(b)] && a < b);
    });
    std::vector<T> out(g.size(), -std::numeric_limits<T>::infinity());
    for (int64_t i = 0; i < k; ++i)
        out[static_cast<size_t>(idx[static_cast<size_t>(i)])] = g[static_cast<size_t>(idx[static_cast<size_t>(i)])];
    return out;
}

template <typename T>
static NodeId linear_node(Tape<T>& tape, LinearP<T>& p, NodeId x) {
    return tape.add_rowvec(tape.matmul(x, tape.input(p.w)), tape.input(p.b));
}

template <typename T>
NodeId attention_body(Tape<T>& tape, AttnP<T>& p, NodeId h, int64_t n_heads, int64_t valid_len) {
    const int64_t t = tape.value(h).rows();
    const int64_t d = tape.value(h).cols();
    if (d % n_heads != 0)
        throw ConfigError("attention: d=" + std::to_string(d) + " not divisible by " +
                          std::to_string(n_heads) + " heads");
    if (valid_len < 1 || valid_len > t)
        throw ShapeError("attention: valid length " + std::to_string(valid_len) +
                         " outside [1," + std::to_string(t) + "]");
    const int64_t dh = d / n_heads;
    NodeId q = linear_node(tape, p.q, h);
    NodeId k = linear_node(tape, p.k, h);
    NodeId v = linear_node(tape, p.v, h);
    NodeId mask = -1;
    if (valid_len < t) {
        Tensor<T> m({t, t});
        for (int64_t r = 0; r < t; ++r)
            for (int64_t c = valid_len; c < t; ++c)
                m.at(r, c) = -std::numeric_limits<T>::infinity();
        mask = tape.constant(m);
    }
    std::vector<NodeId> heads;
    const T inv_sqrt = T(1) / static_cast<T>(std::sqrt(static_cast<double>(dh)));
    for (int64_t i = 0; i < n_heads; ++i) {
        NodeId qh = tape.slice_cols(q, i * dh, (i + 1) * dh);
        NodeId kh = tape.slice_cols(k, i * dh, (i + 1) * dh);
        NodeId vh = tape.slice_cols(v, i * dh, (i + 1) * dh);
        NodeId scores = tape.scale(tape.matmul_nt(qh, kh), inv_sqrt);
        if (mask >= 0) scores = tape.add(scores, mask);
        NodeId attn = tape.softmax_rows(scores);
        heads.push_back(tape.matmul(attn, vh));
    }
    NodeId cat = n_heads == 1 ? heads[0] : tape.concat_cols(heads);
    return linear_node(tape, p.o, cat);
}

template <typename T>
NodeId ffn_body(Tape<T>& tape, FfnP<T>& p, NodeId h) {
    NodeId conv = tape.conv1d_same(h, tape.input(p.conv_w), tape.input(p.conv_b));
    return linear_node(tape, p.fc, tape.relu(conv));
}

template <typename T>
NodeId moe_body(Tape<T>& tape, MoeP<T>& p, NodeId h, int64_t k) {
    const int64_t t = tape.value(h).rows();
    const int64_t n = static_cast<int64_t>(p.experts.size());
    NodeId gate = linear_node(tape, p.gate, h);
    NodeId probs = tape.softmax_rows(tape.topk_mask_rows(gate, k));
    // Copy: growing the tape below may reallocate the node it lives in.
    const Tensor<T> pv = tape.value(probs);
    NodeId acc = -1;
    for (int64_t e = 0; e < n; ++e) {
        std::vector<int64_t> rows;
        for (int64_t r = 0; r < t; ++r)
            if (pv.at(r, e) > T(0)) rows.push_back(r);
        if (rows.empty()) continue;  // sparse dispatch: unrouted experts cost nothing
        FfnP<T>& ex = p.experts[static_cast<size_t>(e)];
        NodeId conv = tape.conv1d_rows(h, tape.input(ex.conv_w), tape.input(ex.conv_b), rows);
        NodeId y = linear_node(tape, ex.fc, tape.relu(conv));
        NodeId w = tape.gather_col(probs, rows, e);
        NodeId sc = tape.scatter_rows_weighted(y, w, rows, t);
        acc = acc < 0 ? sc : tape.add(acc, sc);
    }
    return acc;
}

template <typename T>
static NodeId dropout_node(Tape<T>& tape, NodeId x, float p, RngState* rng) {
    if (p <= 0.0f || rng == nullptr) return x;
    const Tensor<T>& xv = tape.value(x);
    Tensor<T> mask(xv.shape);
    const T keep_scale = T(1) / static_cast<T>(1.0f - p);
    for (auto& m : mask.data) m = rng->uniform() < p ? T(0) : keep_scale;
    return tape.mul(x, tape.constant(mask));
}

template <typename T>
static NodeId layer_norm_node(Tape<T>& tape, LayerNormP<T>& p, NodeId x) {
    return tape.layer_norm(x, tape.input(p.g), tape.input(p.b), static_cast<T>(1e-5));
}

template <typename T>
NodeId model_forward(Tape<T>& tape, ModelParams<T>& params, const ForwardInput<T>& in,
                     int64_t valid_len, bool training, RngState* dropout_rng) {
    const ModelConfig& cfg = params.cfg;
    cfg.validate();
    const int64_t t = in.ppg.rows();
    if (in.ppg.cols() != cfg.ppg_dim)
        throw ShapeError("forward: ppg " + in.ppg.shape_str() + " vs configured input dim " +
                         std::to_string(cfg.ppg_dim));
    if (in.pitch.rows() != t || in.energy.rows() != t || in.pitch.cols() != 1 ||
        in.energy.cols() != 1)
        throw ShapeError("forward: stream lengths disagree: ppg " + in.ppg.shape_str() +
                         ", pitch " + in.pitch.shape_str() + ", energy " + in.energy.shape_str());
    if (valid_len < 1 || valid_len > t)
        throw ShapeError("forward: valid length " + std::to_string(valid_len) + " outside [1," +
                         std::to_string(t) + "]");
    const bool padded = valid_len < t;
    const float drop = training ? cfg.dropout : 0.0f;

    auto masked = [&](NodeId x) { return padded ? tape.mask_rows(x, valid_len) : x; };

    NodeId x = tape.add(linear_node(tape, params.enc_in, tape.constant(in.ppg)),
                        tape.constant(positional_encoding(t, cfg.d_model).template cast<T>()));
    for (auto& blk : params.enc) {
        NodeId a = attention_body(tape, blk.attn, layer_norm_node(tape, blk.ln1, x), cfg.n_heads,
                                  valid_len);
        x = tape.add(x, dropout_node(tape, a, drop, dropout_rng));
        NodeId f = ffn_body(tape, blk.ffn, masked(layer_norm_node(tape, blk.ln2, x)));
        x = tape.add(x, dropout_node(tape, f, drop, dropout_rng));
    }
    x = layer_norm_node(tape, params.enc_ln, x);

    Tensor<T> pitch = in.pitch, energy = in.energy;
    if (params.variant == Variant::NoProsody) {
        std::fill(pitch.data.begin(), pitch.data.end(), T(0));
        std::fill(energy.data.begin(), energy.data.end(), T(0));
    }
    x = linear_node(tape, params.dec_in,
                    tape.concat_cols({x, tape.constant(pitch), tape.constant(energy)}));
    for (auto& blk : params.dec) {
        NodeId a = attention_body(tape, blk.attn, layer_norm_node(tape, blk.ln1, x), cfg.n_heads,
                                  valid_len);
        x = tape.add(x, dropout_node(tape, a, drop, dropout_rng));
        NodeId h = masked(layer_norm_node(tape, blk.ln2, x));
        NodeId m = params.variant == Variant::Dense ? ffn_body(tape, blk.ffn, h)
                                                    : moe_body(tape, blk.moe, h, cfg.top_k);
        x = tape.add(x, dropout_node(tape, m, drop, dropout_rng));
    }
    x = layer_norm_node(tape, params.dec_ln, x);
    return linear_node(tape, params.head, x);
}

AnimationSequence infer_animation(ModelParams<float>& params, const ForwardInput<float>& in,
                                  const NormStats& stats, const std::string& utterance_id) {
    Tape<float> tape;
    NodeId out = model_forward(tape, params, in, in.ppg.rows());
    AnimationSequence anim;
    anim.frames = invert_norm_anim(tape.value(out), stats, true);
    anim.channels.assign(blendshape_channel_names().begin(), blendshape_channel_names().end());
    anim.fps = 60;
    anim.utterance_id = utterance_id;
    return anim;
}

// ---------------------------------------------------------------------------
// BLSTM baseline
// ---------------------------------------------------------------------------

BlstmParams BlstmParams::build(int64_t input_dim, int64_t hidden, int64_t out_dim) {
    if (input_dim < 1 || hidden < 1 || out_dim < 1)
        throw ConfigError("blstm dimensions must be positive");
    BlstmParams p;
    p.input_dim = input_dim;
    p.hidden = hidden;
    p.out_dim = out_dim;
    p.fwd_wx = Tensor<float>({input_dim, 4 * hidden});
    p.fwd_wh = Tensor<float>({hidden, 4 * hidden});
    p.fwd_b = Tensor<float>({4 * hidden});
    p.bwd_wx = Tensor<float>({input_dim, 4 * hidden});
    p.bwd_wh = Tensor<float>({hidden, 4 * hidden});
    p.bwd_b = Tensor<float>({4 * hidden});
    p.head = make_linear<float>(2 * hidden, out_dim);
    return p;
}

void BlstmParams::init(RngState& rng) {
    xavier_init(fwd_wx, input_dim, 4 * hidden, rng);
    xavier_init(fwd_wh, hidden, 4 * hidden, rng);
    std::fill(fwd_b.data.begin(), fwd_b.data.end(), 0.0f);
    xavier_init(bwd_wx, input_dim, 4 * hidden, rng);
    xavier_init(bwd_wh, hidden, 4 * hidden, rng);
    std::fill(bwd_b.data.begin(), bwd_b.data.end(), 0.0f);
    init_linear(head, rng);
}

int64_t BlstmParams::param_count() const {
    return 2 * (input_dim * 4 * hidden + hidden * 4 * hidden + 4 * hidden) +
           2 * hidden * out_dim + out_dim;
}

static int64_t blstm_count_for(int64_t input_dim, int64_t hidden, int64_t out_dim) {
    return 2 * (input_dim * 4 * hidden + hidden * 4 * hidden + 4 * hidden) +
           2 * hidden * out_dim + out_dim;
}

static inline float sigmoidf(float x) { return 1.0f / (1.0f + std::exp(-x)); }

// One direction of the recurrence; gate layout along 4H is [i|f|g|o].
static void lstm_direction(const Tensor<float>& x, const Tensor<float>& wx,
                           const Tensor<float>& wh, const Tensor<float>& b, bool reverse,
                           Tensor<float>& h_all) {
    const int64_t t = x.rows(), hidden = wh.rows();
    Tensor<float> xproj({t, 4 * hidden});
    kernels::matmul(x.data.data(), wx.data.data(), xproj.data.data(), t, x.cols(), 4 * hidden);
    std::vector<float> h(static_cast<size_t>(hidden), 0.0f);
    std::vector<float> c(static_cast<size_t>(hidden), 0.0f);
    std::vector<float> gates(static_cast<size_t>(4 * hidden));
    for (int64_t step = 0; step < t; ++step) {
        const int64_t tt = reverse ? t - 1 - step : step;
        for (int64_t j = 0; j < 4 * hidden; ++j)
            gates[static_cast<size_t>(j)] = xproj.at(tt, j) + b.data[static_cast<size_t>(j)];
        kernels::matmul(h.data(), wh.data.data(), gates.data(), 1, hidden, 4 * hidden, true);
        for (int64_t j = 0; j < hidden; ++j) {
            const float ig = sigmoidf(gates[static_cast<size_t>(j)]);
            const float fg = sigmoidf(gates[static_cast<size_t>(hidden + j)]);
            const float gg = std::tanh(gates[static_cast<size_t>(2 * hidden + j)]);
            const float og = sigmoidf(gates[static_cast<size_t>(3 * hidden + j)]);
            c[static_cast<size_t>(j)] = fg * c[static_cast<size_t>(j)] + ig * gg;
            h[static_cast<size_t>(j)] = og * std::tanh(c[static_cast<size_t>(j)]);
            h_all.at(tt, j) = h[static_cast<size_t>(j)];
        }
    }
}

Tensor<float> blstm_forward(const BlstmParams& p, const Tensor<float>& x) {
    if (x.rank() != 2 || x.cols() != p.input_dim)
        throw ShapeError("blstm_forward: input " + x.shape_str() + " vs input_dim " +
                         std::to_string(p.input_dim));
    const int64_t t = x.rows(), hidden = p.hidden;
    Tensor<float> hf({t, hidden}), hb({t, hidden});
    lstm_direction(x, p.fwd_wx, p.fwd_wh, p.fwd_b, false, hf);
    lstm_direction(x, p.bwd_wx, p.bwd_wh, p.bwd_b, true, hb);
    Tensor<float> cat({t, 2 * hidden});
    for (int64_t r = 0; r < t; ++r) {
        std::copy(hf.data.begin() + r * hidden, hf.data.begin() + (r + 1) * hidden,
                  cat.data.begin() + r * 2 * hidden);
        std::copy(hb.data.begin() + r * hidden, hb.data.begin() + (r + 1) * hidden,
                  cat.data.begin() + r * 2 * hidden + hidden);
    }
    Tensor<float> out({t, p.out_dim});
    kernels::matmul(cat.data.data(), p.head.w.data.data(), out.data.data(), t, 2 * hidden,
                    p.out_dim);
    kernels::add_rowvec(out.data.data(), p.head.b.data.data(), out.data.data(), t, p.out_dim);
    return out;
}

int64_t matched_blstm_hidden(const ModelConfig& cfg, Variant variant) {
    auto params = ModelParams<float>::build(cfg, variant);
    const int64_t target = params.param_count();
    const int64_t input_dim = cfg.ppg_dim + cfg.prosody_dim;
    int64_t best_h = 1;
    int64_t best_err = std::numeric_limits<int64_t>::max();
    for (int64_t h = 1; h <= 8192; ++h) {
        const int64_t err = std::llabs(blstm_count_for(input_dim, h, cfg.out_dim) - target);
        if (err < best_err) {
            best_err = err;
            best_h = h;
        }
    }
    return best_h;
}

// ---------------------------------------------------------------------------
// checkpoint
// ---------------------------------------------------------------------------

void save_checkpoint(const std::string& path, ModelParams<float>& params, const NormStats& stats,
                     const CheckpointMeta& meta) {
    ContainerFile file;
    params.for_each([&](const std::string& name, Tensor<float>& t) {
        Tensor<float> copy = t;
        copy.requires_grad = false;
        copy.grad.clear();
        file.add(name, std::move(copy));
    });
    file.add("norm.target_mean",
             Tensor<float>({static_cast<int64_t>(stats.target_mean.size())},
                           std::vector<float>(stats.target_mean)));
    file.add("norm.target_std",
             Tensor<float>({static_cast<int64_t>(stats.target_std.size())},
                           std::vector<float>(stats.target_std)));
    file.add("norm.prosody",
             Tensor<float>({4}, {stats.pitch_mean, stats.pitch_std, stats.energy_mean,
                                 stats.energy_std}));
    nlohmann::json j;
    j["schema"] = "checkpoint";
    j["version"] = 1;
    j["variant"] = variant_name(params.variant);
    j["config"] = {{"d_model", params.cfg.d_model},
                   {"n_heads", params.cfg.n_heads},
                   {"n_enc_blocks", params.cfg.n_enc_blocks},
                   {"n_dec_blocks", params.cfg.n_dec_blocks},
                   {"n_experts", params.cfg.n_experts},
                   {"top_k", params.cfg.top_k},
                   {"expert_hidden", params.cfg.expert_hidden},
                   {"expert_kernel", params.cfg.expert_kernel},
                   {"dropout", params.cfg.dropout},
                   {"ppg_dim", params.cfg.ppg_dim},
                   {"prosody_dim", params.cfg.prosody_dim},
                   {"out_dim", params.cfg.out_dim}};
    j["meta"] = {{"epoch", meta.epoch}, {"seed", meta.seed}, {"best_val_rmse", meta.best_val_rmse}};
    file.metadata_json = j.dump();
    write_container(path, file);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    const ContainerFile file = read_container(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(file.metadata_json);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(path + ": bad checkpoint metadata: " + e.what());
    }
    if (!j.contains("schema") || j["schema"] != "checkpoint")
        throw IoError(path + ": not a checkpoint container");
    const auto& c = j.at("config");
    ModelConfig cfg;
    cfg.d_model = c.at("d_model").get<int64_t>();
    cfg.n_heads = c.at("n_heads").get<int64_t>();
    cfg.n_enc_blocks = c.at("n_enc_blocks").get<int64_t>();
    cfg.n_dec_blocks = c.at("n_dec_blocks").get<int64_t>();
    cfg.n_experts = c.at("n_experts").get<int64_t>();
    cfg.top_k = c.at("top_k").get<int64_t>();
    cfg.expert_hidden = c.at("expert_hidden").get<int64_t>();
    cfg.expert_kernel = c.at("expert_kernel").get<int64_t>();
    cfg.dropout = c.at("dropout").get<float>();
    cfg.ppg_dim = c.at("ppg_dim").get<int64_t>();
    cfg.prosody_dim = c.at("prosody_dim").get<int64_t>();
    cfg.out_dim = c.at("out_dim").get<int64_t>();
    LoadedCheckpoint out{ModelParams<float>::build(cfg, parse_variant(j.at("variant"))), {}, {}};
    out.params.for_each([&](const std::string& name, Tensor<float>& t) {
        const Tensor<float>& src = file.require(name);
        if (src.shape != t.shape)
            throw IoError(path + ": tensor '" + name + "' has shape " + src.shape_str() +
                          ", expected " + t.shape_str());
        t.data = src.data;
    });
    const Tensor<float>& tm = file.require("norm.target_mean");
    const Tensor<float>& ts = file.require("norm.target_std");
    const Tensor<float>& pr = file.require("norm.prosody");
    if (pr.numel() != 4) throw IoError(path + ": norm.prosody must hold 4 values");
    out.stats.target_mean = tm.data;
    out.stats.target_std = ts.data;
    out.stats.pitch_mean = pr.data[0];
    out.stats.pitch_std = pr.data[1];
    out.stats.energy_mean = pr.data[2];
    out.stats.energy_std = pr.data[3];
    const auto& m = j.at("meta");
    out.meta.epoch = m.at("epoch").get<int64_t>();
    out.meta.seed = m.at("seed").get<uint64_t>();
    out.meta.best_val_rmse = m.at("best_val_rmse").get<double>();
    return out;
}

template struct ModelParams<float>;
template struct ModelParams<double>;
template std::vector<float> topk_scores<float>(const std::vector<float>&, int64_t);
template std::vector<double> topk_scores<double>(const std::vector<double>&, int64_t);
template NodeId attention_body<float>(Tape<float>&, AttnP<float>&, NodeId, int64_t, int64_t);
template NodeId attention_body<double>(Tape<double>&, AttnP<double>&, NodeId, int64_t, int64_t);
template NodeId ffn_body<float>(Tape<float>&, FfnP<float>&, NodeId);
template NodeId ffn_body<double>(Tape<double>&, FfnP<double>&, NodeId);
template NodeId moe_body<float>(Tape<float>&, MoeP<float>&, NodeId, int64_t);
template NodeId moe_body<double>(Tape<double>&, MoeP<double>&, NodeId, int64_t);
template NodeId model_forward<float>(Tape<float>&, ModelParams<float>&, const ForwardInput<float>&,
                                     int64_t, bool, RngState*);
template NodeId model_forward<double>(Tape<double>&, ModelParams<double>&,
                                      const ForwardInput<double>&, int64_t, bool, RngState*);

}  // namespace s2a
