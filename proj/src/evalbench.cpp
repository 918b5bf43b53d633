#include "s2a/evalbench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "json.hpp"
#include "s2a/errors.hpp"
#include "s2a/kernels.hpp"
#include "s2a/trainer.hpp"

namespace s2a {

const std::vector<int64_t>& crucial_channel_indices() {
    static const std::vector<int64_t> idx{kJawOpenIndex, kMouthCloseIndex};
    return idx;
}

double rmse_frames(const Tensor<float>& pred, const Tensor<float>& ref,
                   const std::vector<int64_t>& channels) {
    if (pred.shape != ref.shape)
        throw ShapeError("rmse: pred " + pred.shape_str() + " vs ref " + ref.shape_str());
    if (pred.rank() != 2) throw ShapeError("rmse: expected matrices, got " + pred.shape_str());
    if (channels.empty()) throw ValueError("rmse: empty channel set");
    for (int64_t c : channels)
        if (c < 0 || c >= pred.cols())
            throw ValueError("rmse: channel " + std::to_string(c) + " outside [0," +
                             std::to_string(pred.cols()) + ")");
    const int64_t t = pred.rows();
    if (t == 0) throw ValueError("rmse: empty sequences");
    double acc = 0;
    for (int64_t r = 0; r < t; ++r)
        for (int64_t c : channels) {
            const double d = static_cast<double>(pred.at(r, c)) - static_cast<double>(ref.at(r, c));
            acc += d * d;
        }
    return std::sqrt(acc / static_cast<double>(t * static_cast<int64_t>(channels.size())));
}

double rmse(const AnimationSequence& pred, const AnimationSequence& ref,
            const std::vector<int64_t>& channels) {
    if (pred.frames.rows() != ref.frames.rows())
        throw ShapeError("rmse: " + std::to_string(pred.frames.rows()) + " predicted frames vs " +
                         std::to_string(ref.frames.rows()) + " reference frames");
    return rmse_frames(pred.frames, ref.frames, channels);
}

RmseReport make_rmse_report(const std::string& name, std::vector<double> per_utt_entire,
                            std::vector<double> per_utt_crucial, double pooled_entire,
                            double pooled_crucial) {
    if (per_utt_entire.empty() || per_utt_entire.size() != per_utt_crucial.size())
        throw ValueError("make_rmse_report: need matching non-empty per-utterance values");
    auto mean_std = [](const std::vector<double>& v, double& mean, double& sd) {
        double s = 0;
        for (double x : v) s += x;
        mean = s / static_cast<double>(v.size());
        double sq = 0;
        for (double x : v) sq += (x - mean) * (x - mean);
        sd = std::sqrt(sq / static_cast<double>(v.size()));
    };
    RmseReport r;
    r.name = name;
    mean_std(per_utt_entire, r.entire_mean, r.entire_std);
    mean_std(per_utt_crucial, r.crucial_mean, r.crucial_std);
    r.pooled_entire = pooled_entire;
    r.pooled_crucial = pooled_crucial;
    r.per_utt_entire = std::move(per_utt_entire);
    r.per_utt_crucial = std::move(per_utt_crucial);
    return r;
}

namespace {

// Sum of squared errors over a channel subset plus the cell count.
void accumulate_sq(const Tensor<float>& pred, const Tensor<float>& ref,
                   const std::vector<int64_t>& channels, double& sq, int64_t& cells) {
    for (int64_t r = 0; r < pred.rows(); ++r)
        for (int64_t c : channels) {
            const double d = static_cast<double>(pred.at(r, c)) - static_cast<double>(ref.at(r, c));
            sq += d * d;
        }
    cells += pred.rows() * static_cast<int64_t>(channels.size());
}

RmseReport report_over_split(const std::string& name,
                             const std::function<Tensor<float>(const LoadedUtterance&)>& predict,
                             const std::vector<LoadedUtterance>& split) {
    if (split.empty()) throw ValueError("evaluate: empty split");
    std::vector<int64_t> all(32);
    std::iota(all.begin(), all.end(), 0);
    std::vector<double> per_entire, per_crucial;
    double sq_e = 0, sq_c = 0;
    int64_t cells_e = 0, cells_c = 0;
    for (const auto& u : split) {
        const Tensor<float> pred = predict(u);
        per_entire.push_back(rmse_frames(pred, u.animation.frames, all));
        per_crucial.push_back(rmse_frames(pred, u.animation.frames, crucial_channel_indices()));
        accumulate_sq(pred, u.animation.frames, all, sq_e, cells_e);
        accumulate_sq(pred, u.animation.frames, crucial_channel_indices(), sq_c, cells_c);
    }
    return make_rmse_report(name, std::move(per_entire), std::move(per_crucial),
                            std::sqrt(sq_e / static_cast<double>(cells_e)),
                            std::sqrt(sq_c / static_cast<double>(cells_c)));
}

}  // namespace

RmseReport evaluate_checkpoint(const std::string& name, ModelParams<float>& params,
                               const NormStats& stats, const std::vector<LoadedUtterance>& split) {
    return report_over_split(
        name,
        [&](const LoadedUtterance& u) {
            const TrainExample ex = make_example(u, stats, params.variant);
            Tape<float> tape;
            NodeId out = model_forward(tape, params, ex.input, ex.target.rows());
            return invert_norm_anim(tape.value(out), stats, true);
        },
        split);
}

Tensor<float> channel_means(const std::vector<LoadedUtterance>& split) {
    if (split.empty()) throw ValueError("channel_means: empty split");
    Tensor<float> means({32});
    std::vector<double> acc(32, 0.0);
    int64_t frames = 0;
    for (const auto& u : split) {
        const Tensor<float>& a = u.animation.frames;
        for (int64_t r = 0; r < a.rows(); ++r)
            for (int64_t c = 0; c < 32; ++c) acc[static_cast<size_t>(c)] += a.at(r, c);
        frames += a.rows();
    }
    for (int64_t c = 0; c < 32; ++c)
        means.data[static_cast<size_t>(c)] =
            static_cast<float>(acc[static_cast<size_t>(c)] / static_cast<double>(frames));
    return means;
}

RmseReport evaluate_constant(const std::string& name, const Tensor<float>& means,
                             const std::vector<LoadedUtterance>& split) {
    if (means.numel() != 32) throw ShapeError("evaluate_constant: means must hold 32 values");
    return report_over_split(
        name,
        [&](const LoadedUtterance& u) {
            Tensor<float> pred(u.animation.frames.shape);
            for (int64_t r = 0; r < pred.rows(); ++r)
                for (int64_t c = 0; c < 32; ++c) pred.at(r, c) = means.data[static_cast<size_t>(c)];
            return pred;
        },
        split);
}

std::vector<RmseReport> evaluate_suite(
    const std::vector<std::pair<std::string, std::string>>& checkpoints,
    const std::vector<LoadedUtterance>& split, std::ostream* warnings) {
    std::vector<RmseReport> rows;
    for (const auto& [name, path] : checkpoints) {
        LoadedCheckpoint ckpt;
        try {
            ckpt = load_checkpoint(path);
        } catch (const std::exception& e) {
            if (warnings) (*warnings) << "skipping " << name << ": " << e.what() << "\n";
            continue;
        }
        rows.push_back(evaluate_checkpoint(name, ckpt.params, ckpt.stats, split));
    }
    return rows;
}

std::string rmse_table(const std::vector<RmseReport>& rows) {
    char line[256];
    std::string out =
        "variant          entire       entire_sd    crucial      crucial_sd   entire*100  crucial*100\n";
    for (const auto& r : rows) {
        std::snprintf(line, sizeof line, "%-16s %-12.6f %-12.6f %-12.6f %-12.6f %-11.4f %-11.4f\n",
                      r.name.c_str(), r.entire_mean, r.entire_std, r.crucial_mean, r.crucial_std,
                      100.0 * r.entire_mean, 100.0 * r.crucial_mean);
        out += line;
    }
    return out;
}

std::string rmse_reports_json(const std::vector<RmseReport>& rows) {
    nlohmann::json j;
    j["schema"] = "rmse_report";
    j["version"] = 1;
    j["rows"] = nlohmann::json::array();
    for (const auto& r : rows) {
        nlohmann::json row;
        row["name"] = r.name;
        row["entire_mean"] = r.entire_mean;
        row["entire_std"] = r.entire_std;
        row["crucial_mean"] = r.crucial_mean;
        row["crucial_std"] = r.crucial_std;
        row["entire_mean_x100"] = 100.0 * r.entire_mean;
        row["crucial_mean_x100"] = 100.0 * r.crucial_mean;
        row["pooled_entire"] = r.pooled_entire;
        row["pooled_crucial"] = r.pooled_crucial;
        row["per_utterance_entire"] = r.per_utt_entire;
        row["per_utterance_crucial"] = r.per_utt_crucial;
        row["crucial_channels"] = r.crucial_channels;
        j["rows"].push_back(row);
    }
    return j.dump(2);
}

// ---------------------------------------------------------------------------
// RTF benchmark
// ---------------------------------------------------------------------------

namespace {

double steady_seconds() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

// Smallest positive increment the clock can report.
double estimate_resolution(const BenchClock& clock) {
    double best = std::numeric_limits<double>::infinity();
    for (int probe = 0; probe < 5; ++probe) {
        const double t0 = clock();
        double t1 = clock();
        int spins = 0;
        while (t1 <= t0 && spins < 1000000) {
            t1 = clock();
            ++spins;
        }
        if (t1 > t0) best = std::min(best, t1 - t0);
    }
    if (!std::isfinite(best)) throw BenchError("bench: clock never advanced");
    return best;
}

}  // namespace

RtfReport bench_rtf(const std::vector<BenchModel>& models, int64_t frames, int64_t runs,
                    int64_t warmup, BenchClock clock) {
    if (models.empty()) throw ValueError("bench: no models given");
    if (frames < 1) throw ValueError("bench: frames must be >= 1");
    if (runs < 5) throw ValueError("bench: need at least 5 timed runs, got " + std::to_string(runs));
    if (warmup < 2)
        throw ValueError("bench: need at least 2 warmup runs, got " + std::to_string(warmup));
    int baselines = 0;
    for (const auto& m : models) baselines += m.is_baseline ? 1 : 0;
    if (baselines != 1) throw ValueError("bench: exactly one model must be the baseline");

    if (!clock) clock = steady_seconds;
    const int prev_threads = kernels::num_threads();
    kernels::set_num_threads(1);

    RtfReport report;
    report.frames = frames;
    report.runs = runs;
    report.warmup = warmup;
    report.threads = 1;
    report.timer_resolution_s = estimate_resolution(clock);

    const double seconds_out = static_cast<double>(frames) / 60.0;
    double baseline_rtf = 0;
    try {
        for (const auto& m : models) {
            for (int64_t i = 0; i < warmup; ++i) m.run();
            std::vector<double> times;
            times.reserve(static_cast<size_t>(runs));
            for (int64_t i = 0; i < runs; ++i) {
                const double t0 = clock();
                m.run();
                const double t1 = clock();
                times.push_back(t1 - t0);
            }
            double mean = 0;
            for (double t : times) mean += t;
            mean /= static_cast<double>(runs);
            if (mean <= 0) throw BenchError("bench: measured zero time for " + m.name);
            if (report.timer_resolution_s > 0.01 * mean)
                throw BenchError("bench: timer resolution " +
                                 std::to_string(report.timer_resolution_s) + " s exceeds 1% of " +
                                 m.name + " mean time " + std::to_string(mean) + " s");
            double var = 0;
            for (double t : times) var += (t - mean) * (t - mean);
            const double sd = std::sqrt(var / static_cast<double>(runs - 1));

            RtfRow row;
            row.name = m.name;
            row.mean_seconds = mean;
            row.std_seconds = sd;
            row.rtf_mean = mean / seconds_out;
            row.rtf_std = sd / seconds_out;
            row.cv = sd / mean;
            row.stable = row.cv < 0.3;
            if (m.is_baseline) baseline_rtf = row.rtf_mean;
            report.rows.push_back(row);
        }
    } catch (...) {
        kernels::set_num_threads(prev_threads);
        throw;
    }
    kernels::set_num_threads(prev_threads);
    for (auto& row : report.rows) row.speedup_vs_baseline = baseline_rtf / row.rtf_mean;
    return report;
}

std::string rtf_table(const RtfReport& report) {
    std::string out = "model            rtf_mean     rtf_std      speedup    stable\n";
    char line[192];
    for (const auto& r : report.rows) {
        std::snprintf(line, sizeof line, "%-16s %-12.6f %-12.6f %-10.2f %s\n", r.name.c_str(),
                      r.rtf_mean, r.rtf_std, r.speedup_vs_baseline,
                      r.stable ? "yes" : "NO (cv >= 0.3)");
        out += line;
    }
    std::snprintf(line, sizeof line, "frames=%lld runs=%lld warmup=%lld threads=%lld\n",
                  static_cast<long long>(report.frames), static_cast<long long>(report.runs),
                  static_cast<long long>(report.warmup), static_cast<long long>(report.threads));
    out += line;
    return out;
}

std::string rtf_report_json(const RtfReport& report) {
    nlohmann::json j;
    j["schema"] = "rtf_report";
    j["version"] = 1;
    j["frames"] = report.frames;
    j["runs"] = report.runs;
    j["warmup"] = report.warmup;
    j["threads"] = report.threads;
    j["timer_resolution_s"] = report.timer_resolution_s;
    j["rows"] = nlohmann::json::array();
    for (const auto& r : report.rows) {
        j["rows"].push_back({{"name", r.name},
                             {"mean_seconds", r.mean_seconds},
                             {"std_seconds", r.std_seconds},
                             {"rtf_mean", r.rtf_mean},
                             {"rtf_std", r.rtf_std},
                             {"speedup_vs_baseline", r.speedup_vs_baseline},
                             {"cv", r.cv},
                             {"stable", r.stable}});
    }
    return j.dump(2);
}

namespace {

ForwardInput<float> random_input(int64_t frames, int64_t ppg_dim, uint64_t seed) {
    RngState rng(seed);
    ForwardInput<float> in;
    in.ppg = Tensor<float>({frames, ppg_dim});
    for (int64_t r = 0; r < frames; ++r) {
        double sum = 0;
        for (int64_t c = 0; c < ppg_dim; ++c) {
            const double v = -std::log(1.0 - rng.uniform());
            in.ppg.at(r, c) = static_cast<float>(v);
            sum += v;
        }
        for (int64_t c = 0; c < ppg_dim; ++c) in.ppg.at(r, c) /= static_cast<float>(sum);
    }
    in.pitch = Tensor<float>({frames, 1});
    in.energy = Tensor<float>({frames, 1});
    for (auto& v : in.pitch.data) v = static_cast<float>(rng.normal());
    for (auto& v : in.energy.data) v = static_cast<float>(rng.normal());
    return in;
}

}  // namespace

BenchModel make_model_bench(const std::string& name, ModelParams<float>& params,
                            const NormStats& stats, int64_t frames, uint64_t seed) {
    auto input = std::make_shared<ForwardInput<float>>(
        random_input(frames, params.cfg.ppg_dim, seed));
    auto* p = &params;
    auto st = std::make_shared<NormStats>(stats);
    return {name, [p, input, st] {
                Tape<float> tape;
                NodeId out = model_forward(tape, *p, *input, input->ppg.rows());
                volatile float sink = invert_norm_anim(tape.value(out), *st, true).data[0];
                (void)sink;
            },
            false};
}

BenchModel make_blstm_bench(const std::string& name, const BlstmParams& p, const NormStats& stats,
                            int64_t frames, uint64_t seed) {
    RngState rng(seed);
    auto input = std::make_shared<Tensor<float>>(Tensor<float>({frames, p.input_dim}));
    for (auto& v : input->data) v = static_cast<float>(rng.normal(0.0, 0.5));
    auto* bp = &p;
    auto st = std::make_shared<NormStats>(stats);
    return {name, [bp, input, st] {
                const Tensor<float> out = blstm_forward(*bp, *input);
                volatile float sink = invert_norm_anim(out, *st, true).data[0];
                (void)sink;
            },
            true};
}

}  // namespace s2a
