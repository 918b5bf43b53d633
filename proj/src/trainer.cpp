#include "s2a/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "s2a/errors.hpp"
#include "s2a/evalbench.hpp"

namespace s2a {

void TrainConfig::validate() const {
    if (learning_rate < 0) throw ConfigError("learning_rate must be >= 0");
    if (beta1 <= 0 || beta1 >= 1 || beta2 <= 0 || beta2 >= 1)
        throw ConfigError("adam betas must lie in (0,1)");
    if (adam_eps <= 0) throw ConfigError("adam_eps must be positive");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
    if (patience < 1) throw ConfigError("patience must be >= 1");
    if (patience > max_epochs) throw ConfigError("patience exceeds max_epochs");
    if (grad_clip_norm <= 0) throw ConfigError("grad_clip_norm must be positive");
}

double mse_loss(const Tensor<float>& pred, const Tensor<float>& target, int64_t valid_rows) {
    if (pred.shape != target.shape)
        throw ShapeError("mse_loss: pred " + pred.shape_str() + " vs target " + target.shape_str());
    if (pred.rank() != 2) throw ShapeError("mse_loss: expected matrices, got " + pred.shape_str());
    if (valid_rows < 1 || valid_rows > pred.rows())
        throw ValueError("mse_loss: valid_rows " + std::to_string(valid_rows) + " outside [1," +
                         std::to_string(pred.rows()) + "]");
    const int64_t cols = pred.cols();
    double acc = 0;
    for (int64_t r = 0; r < valid_rows; ++r)
        for (int64_t c = 0; c < cols; ++c) {
            const double d = static_cast<double>(pred.at(r, c)) - static_cast<double>(target.at(r, c));
            acc += d * d;
        }
    return acc / static_cast<double>(valid_rows * cols);
}

NormStats fit_corpus_stats(const std::vector<LoadedUtterance>& train) {
    if (train.empty()) throw ValueError("fit_corpus_stats: empty training split");
    std::vector<FeatureSequence> resampled;
    resampled.reserve(train.size());
    std::vector<const Tensor<float>*> anims;
    std::vector<const FeatureSequence*> feats;
    for (const auto& u : train) {
        const int64_t t2 = u.animation.frames.rows();
        resampled.push_back(resample_features(u.features, t2, 60));
        anims.push_back(&u.animation.frames);
    }
    for (const auto& fs : resampled) feats.push_back(&fs);
    return fit_norm_stats(anims, feats);
}

ForwardInput<float> make_forward_input(const FeatureSequence& raw, const Tensor<float>& dense20,
                                       const NormStats& stats, Variant variant) {
    const int64_t t1 = raw.frames();
    const int64_t t2 = target_frames(t1);
    const FeatureSequence fs = resample_features(raw, t2, 60);

    ForwardInput<float> in;
    if (variant == Variant::DenseFeatures) {
        if (dense20.rank() != 2 || dense20.rows() != t1)
            throw ValueError("make_forward_input: " + raw.utterance_id +
                             " has no dense 20-dim feature stream");
        in.ppg = resample_linear(dense20, t2);
    } else {
        in.ppg = fs.ppg;
    }
    const std::vector<float> pn = normalize_pitch(fs.pitch, stats);
    const std::vector<float> en = normalize_energy(fs.energy, stats);
    in.pitch = Tensor<float>({t2, 1}, std::vector<float>(pn));
    in.energy = Tensor<float>({t2, 1}, std::vector<float>(en));
    return in;
}

TrainExample make_example(const LoadedUtterance& u, const NormStats& stats, Variant variant) {
    const int64_t t1 = u.features.frames();
    const int64_t t2 = u.animation.frames.rows();
    if (t2 != target_frames(t1))
        throw ValueError("make_example: " + u.id + " has " + std::to_string(t2) +
                         " animation frames for " + std::to_string(t1) + " feature frames, expected " +
                         std::to_string(target_frames(t1)));
    TrainExample ex;
    ex.id = u.id;
    ex.input = make_forward_input(u.features, u.dense20, stats, variant);
    ex.target = apply_norm_anim(u.animation.frames, stats);
    return ex;
}

namespace {

struct AdamState {
    std::vector<std::vector<float>> m, v;
    int64_t t = 0;
};

std::vector<Tensor<float>*> param_list(ModelParams<float>& params) {
    std::vector<Tensor<float>*> list;
    params.for_each([&](const std::string&, Tensor<float>& t) { list.push_back(&t); });
    return list;
}

void zero_grads(const std::vector<Tensor<float>*>& params) {
    for (auto* p : params) {
        p->ensure_grad();
        p->zero_grad();
    }
}

// Scales gradients so the global norm is at most clip; returns the pre-clip norm.
double clip_global_norm(const std::vector<Tensor<float>*>& params, double clip) {
    double sq = 0;
    for (const auto* p : params)
        for (float g : p->grad) sq += static_cast<double>(g) * static_cast<double>(g);
    const double norm = std::sqrt(sq);
    if (norm > clip && norm > 0) {
        const float s = static_cast<float>(clip / norm);
        for (auto* p : params)
            for (float& g : p->grad) g *= s;
    }
    return norm;
}

void adam_step(const std::vector<Tensor<float>*>& params, AdamState& state, const TrainConfig& tc) {
    if (state.m.empty()) {
        for (const auto* p : params) {
            state.m.emplace_back(p->data.size(), 0.0f);
            state.v.emplace_back(p->data.size(), 0.0f);
        }
    }
    ++state.t;
    const double bc1 = 1.0 - std::pow(tc.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(tc.beta2, static_cast<double>(state.t));
    for (size_t i = 0; i < params.size(); ++i) {
        auto& p = *params[i];
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (size_t j = 0; j < p.data.size(); ++j) {
            const double g = p.grad[j];
            m[j] = static_cast<float>(tc.beta1 * m[j] + (1.0 - tc.beta1) * g);
            v[j] = static_cast<float>(tc.beta2 * v[j] + (1.0 - tc.beta2) * g * g);
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            p.data[j] -= static_cast<float>(tc.learning_rate * mhat / (std::sqrt(vhat) + tc.adam_eps));
        }
    }
}

// Pads a [t,c] matrix with zero rows up to t_max.
Tensor<float> pad_rows(const Tensor<float>& m, int64_t t_max) {
    if (m.rows() == t_max) return m;
    Tensor<float> out({t_max, m.cols()});
    std::copy(m.data.begin(), m.data.end(), out.data.begin());
    return out;
}

// Forward + squared-error accumulation for one utterance; adds d(sse)/dtheta
// scaled by inv_total_cells to the parameter gradients. Returns the sse.
double example_sse(ModelParams<float>& params, const TrainExample& ex, int64_t pad_to,
                   bool training, RngState* dropout_rng, double inv_total_cells) {
    const int64_t valid = ex.target.rows();
    ForwardInput<float> in;
    in.ppg = pad_rows(ex.input.ppg, pad_to);
    in.pitch = pad_rows(ex.input.pitch, pad_to);
    in.energy = pad_rows(ex.input.energy, pad_to);
    Tape<float> tape;
    NodeId out = model_forward(tape, params, in, valid, training, dropout_rng);
    NodeId diff = tape.sub(out, tape.constant(pad_rows(ex.target, pad_to)));
    if (pad_to > valid) diff = tape.mask_rows(diff, valid);
    NodeId sse = tape.reduce_sum(tape.mul(diff, diff));
    tape.backward(sse, static_cast<float>(inv_total_cells));
    return static_cast<double>(tape.value(sse).data[0]);
}

double validation_rmse(ModelParams<float>& params, const NormStats& stats,
                       const std::vector<LoadedUtterance>& val, Variant variant) {
    double sum = 0;
    for (const auto& u : val) {
        const TrainExample ex = make_example(u, stats, variant);
        Tape<float> tape;
        NodeId out = model_forward(tape, params, ex.input, ex.target.rows());
        const Tensor<float> pred = invert_norm_anim(tape.value(out), stats, true);
        std::vector<int64_t> all(32);
        std::iota(all.begin(), all.end(), 0);
        sum += rmse_frames(pred, u.animation.frames, all);
    }
    return sum / static_cast<double>(val.size());
}

std::string epoch_json(const EpochRecord& r) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "{\"epoch\":%lld,\"train_loss\":%.8f,\"val_rmse\":%.8f}",
                  static_cast<long long>(r.epoch), r.train_loss, r.val_rmse);
    return buf;
}

}  // namespace

TrainResult train(const LoadedCorpus& corpus, const ModelConfig& cfg, Variant variant,
                  const TrainConfig& tc, std::ostream* log) {
    cfg.validate();
    tc.validate();
    if (corpus.train.empty()) throw ValueError("train: empty training split");
    if (corpus.val.empty()) throw ValueError("train: empty validation split");

    const NormStats stats = fit_corpus_stats(corpus.train);
    std::vector<TrainExample> examples;
    examples.reserve(corpus.train.size());
    for (const auto& u : corpus.train) examples.push_back(make_example(u, stats, variant));

    // Length buckets: sort by frame count (id breaks ties), then take
    // consecutive groups of batch_size; short utterances pad the least.
    std::vector<size_t> order(examples.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        const int64_t la = examples[a].target.rows(), lb = examples[b].target.rows();
        return la != lb ? la < lb : examples[a].id < examples[b].id;
    });
    std::vector<std::vector<size_t>> batches;
    for (size_t i = 0; i < order.size(); i += static_cast<size_t>(tc.batch_size)) {
        const size_t end = std::min(order.size(), i + static_cast<size_t>(tc.batch_size));
        batches.emplace_back(order.begin() + static_cast<int64_t>(i),
                             order.begin() + static_cast<int64_t>(end));
    }

    ModelParams<float> params = ModelParams<float>::build(cfg, variant);
    RngState init_rng = RngState(tc.seed).split(1);
    params.init(init_rng);
    params.set_requires_grad(true);
    const auto plist = param_list(params);
    AdamState adam;

    TrainResult result{params, stats, 0, std::numeric_limits<double>::infinity(), 0, {}};
    int64_t since_best = 0;
    const RngState root(tc.seed);

    for (int64_t epoch = 1; epoch <= tc.max_epochs; ++epoch) {
        RngState shuffle_rng = root.split(1000 + static_cast<uint64_t>(epoch));
        RngState dropout_rng = root.split(2000 + static_cast<uint64_t>(epoch));
        std::vector<size_t> batch_order(batches.size());
        std::iota(batch_order.begin(), batch_order.end(), 0);
        for (size_t i = batch_order.size(); i > 1; --i)
            std::swap(batch_order[i - 1], batch_order[shuffle_rng.below(i)]);

        double epoch_sse = 0;
        int64_t epoch_cells = 0;
        for (size_t bi : batch_order) {
            const auto& batch = batches[bi];
            int64_t pad_to = 0, total_cells = 0;
            for (size_t idx : batch) {
                pad_to = std::max(pad_to, examples[idx].target.rows());
                total_cells += examples[idx].target.numel();
            }
            zero_grads(plist);
            double batch_sse = 0;
            for (size_t idx : batch)
                batch_sse += example_sse(params, examples[idx], pad_to, true, &dropout_rng,
                                         1.0 / static_cast<double>(total_cells));
            const double batch_loss = batch_sse / static_cast<double>(total_cells);
            if (!std::isfinite(batch_loss))
                throw DivergenceError("training diverged: non-finite loss at epoch " +
                                      std::to_string(epoch));
            clip_global_norm(plist, tc.grad_clip_norm);
            adam_step(plist, adam, tc);
            epoch_sse += batch_sse;
            epoch_cells += total_cells;
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = epoch_sse / static_cast<double>(epoch_cells);
        rec.val_rmse = validation_rmse(params, stats, corpus.val, variant);
        result.history.push_back(rec);
        result.epochs_run = epoch;
        if (log) (*log) << epoch_json(rec) << "\n";

        if (rec.val_rmse < result.best_val_rmse) {
            result.best_val_rmse = rec.val_rmse;
            result.best_epoch = epoch;
            result.params = params;  // deep copy of the current weights
            since_best = 0;
        } else if (++since_best >= tc.patience) {
            break;
        }
    }
    result.params.set_requires_grad(false);
    result.stats = stats;
    return result;
}

OverfitResult overfit_single(const LoadedUtterance& utt, const ModelConfig& cfg, Variant variant,
                             const TrainConfig& tc, int64_t max_steps, double target_rmse) {
    cfg.validate();
    tc.validate();
    if (max_steps < 1) throw ValueError("overfit_single: max_steps must be >= 1");

    const NormStats stats = fit_corpus_stats({utt});
    const TrainExample ex = make_example(utt, stats, variant);
    const double cells = static_cast<double>(ex.target.numel());

    ModelParams<float> params = ModelParams<float>::build(cfg, variant);
    RngState init_rng = RngState(tc.seed).split(1);
    params.init(init_rng);
    params.set_requires_grad(true);
    const auto plist = param_list(params);
    AdamState adam;

    OverfitResult result{params, stats, std::numeric_limits<double>::infinity(), 0, {}};
    for (int64_t step = 1; step <= max_steps; ++step) {
        zero_grads(plist);
        const double sse = example_sse(params, ex, ex.target.rows(), true, nullptr, 1.0 / cells);
        const double loss = sse / cells;
        if (!std::isfinite(loss))
            throw DivergenceError("overfit_single diverged at step " + std::to_string(step));
        result.losses.push_back(loss);
        result.steps_run = step;
        result.final_rmse = std::sqrt(loss);
        if (result.final_rmse < target_rmse) break;
        clip_global_norm(plist, tc.grad_clip_norm);
        adam_step(plist, adam, tc);
    }
    params.set_requires_grad(false);
    result.params = params;
    result.stats = stats;
    return result;
}

}  // namespace s2a
