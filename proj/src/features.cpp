#include "s2a/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "s2a/errors.hpp"

namespace s2a {

void FeatureSequence::validate() const {
    const int64_t t = frames();
    if (ppg.rank() != 2 || ppg.rows() != t || static_cast<int64_t>(pitch.size()) != t)
        throw ShapeError("feature streams disagree: ppg " + ppg.shape_str() + ", pitch " +
                         std::to_string(pitch.size()) + ", energy " + std::to_string(t));
    for (int64_t r = 0; r < t; ++r) {
        float sum = 0;
        for (int64_t c = 0; c < ppg.cols(); ++c) {
            const float v = ppg.at(r, c);
            if (v < 0) throw ValueError("negative PPG entry at frame " + std::to_string(r));
            sum += v;
        }
        if (std::fabs(sum - 1.0f) > 1e-4f)
            throw ValueError("PPG row " + std::to_string(r) + " sums to " + std::to_string(sum));
        const float p = pitch[static_cast<size_t>(r)];
        if (p != 0 && (p < 60.0f || p > 400.0f))
            throw ValueError("pitch " + std::to_string(p) + " Hz at frame " + std::to_string(r) +
                             " outside {0} U [60,400]");
    }
}

std::vector<float> hamming_window(int n) {
    std::vector<float> w(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i)
        w[static_cast<size_t>(i)] =
            0.54f - 0.46f * std::cos(2.0 * M_PI * i / static_cast<double>(n - 1));
    return w;
}

static int64_t frame_count(int64_t n, const FrameSpec& spec) {
    const int64_t win = spec.window_samples(), hop = spec.hop_samples();
    if (n < win) return 0;
    return (n - win) / hop + 1;
}

std::vector<float> frame_energy(const std::vector<float>& samples, const FrameSpec& spec) {
    const int64_t t = frame_count(static_cast<int64_t>(samples.size()), spec);
    if (t == 0) {
        std::fprintf(stderr, "warning: waveform of %zu samples is shorter than one %d-sample window, no frames\n",
                     samples.size(), spec.window_samples());
        return {};
    }
    const int win = spec.window_samples(), hop = spec.hop_samples();
    const std::vector<float> w = hamming_window(win);
    std::vector<float> energy(static_cast<size_t>(t));
    for (int64_t f = 0; f < t; ++f) {
        const float* x = samples.data() + f * hop;
        double acc = 0;
        for (int i = 0; i < win; ++i) {
            const double wx = static_cast<double>(w[static_cast<size_t>(i)]) * x[i];
            acc += wx * wx;
        }
        energy[static_cast<size_t>(f)] = static_cast<float>(std::log(acc + 1e-10));
    }
    return energy;
}

std::vector<float> frame_pitch(const std::vector<float>& samples, const FrameSpec& spec) {
    const int64_t t = frame_count(static_cast<int64_t>(samples.size()), spec);
    if (t == 0) {
        std::fprintf(stderr, "warning: waveform of %zu samples is shorter than one %d-sample window, no frames\n",
                     samples.size(), spec.window_samples());
        return {};
    }
    const int win = spec.window_samples(), hop = spec.hop_samples();
    const int lag_min = spec.sample_rate / 400;  // 400 Hz
    const int lag_max = spec.sample_rate / 60;   // 60 Hz
    std::vector<float> pitch(static_cast<size_t>(t), 0.0f);
    std::vector<double> x(static_cast<size_t>(win));
    std::vector<double> nr(static_cast<size_t>(lag_max + 1), 0.0);
    for (int64_t f = 0; f < t; ++f) {
        const float* src = samples.data() + f * hop;
        double mean = 0;
        for (int i = 0; i < win; ++i) mean += src[i];
        mean /= win;
        double r0 = 0;
        for (int i = 0; i < win; ++i) {
            x[static_cast<size_t>(i)] = src[i] - mean;
            r0 += x[static_cast<size_t>(i)] * x[static_cast<size_t>(i)];
        }
        if (r0 < 1e-9) continue;  // silence, unvoiced
        double tail = r0;
        for (int lag = 1; lag <= lag_max; ++lag) {
            // tail = sum of x[i]^2 for i >= lag
            tail -= x[static_cast<size_t>(lag - 1)] * x[static_cast<size_t>(lag - 1)];
            if (lag < lag_min) continue;
            double dot = 0, head = 0;
            for (int i = 0; i + lag < win; ++i) {
                dot += x[static_cast<size_t>(i)] * x[static_cast<size_t>(i + lag)];
                head += x[static_cast<size_t>(i)] * x[static_cast<size_t>(i)];
            }
            const double denom = std::sqrt(head * tail);
            nr[static_cast<size_t>(lag)] = denom > 1e-12 ? dot / denom : 0.0;
        }
        double best = 0;
        for (int lag = lag_min; lag <= lag_max; ++lag)
            best = std::max(best, nr[static_cast<size_t>(lag)]);
        if (best < 0.3) continue;
        // smallest-lag local peak within 15% of the best rejects subharmonics
        int peak = -1;
        for (int lag = lag_min; lag <= lag_max; ++lag) {
            const double v = nr[static_cast<size_t>(lag)];
            const double prev = lag > lag_min ? nr[static_cast<size_t>(lag - 1)] : -2.0;
            const double next = lag < lag_max ? nr[static_cast<size_t>(lag + 1)] : -2.0;
            if (v >= prev && v >= next && v >= 0.85 * best) {
                peak = lag;
                break;
            }
        }
        if (peak < 0) continue;
        double refined = peak;
        if (peak > lag_min && peak < lag_max) {
            const double a = nr[static_cast<size_t>(peak - 1)];
            const double b = nr[static_cast<size_t>(peak)];
            const double c = nr[static_cast<size_t>(peak + 1)];
            const double denom = a - 2 * b + c;
            if (std::fabs(denom) > 1e-12) refined += 0.5 * (a - c) / denom;
        }
        const double hz = spec.sample_rate / refined;
        pitch[static_cast<size_t>(f)] = static_cast<float>(std::clamp(hz, 60.0, 400.0));
    }
    return pitch;
}

FeatureSequence vad_trim(const FeatureSequence& fs) {
    const int64_t t = fs.frames();
    if (t == 0) throw ValueError("vad_trim: empty sequence");
    float max_e = fs.energy[0];
    for (float e : fs.energy) max_e = std::max(max_e, e);
    const float rel = max_e - static_cast<float>(std::log(1000.0));
    const float abs_floor = static_cast<float>(std::log(1e-9));
    const float thresh = std::max(rel, abs_floor);
    int64_t lo = 0, hi = t - 1;
    while (lo < t && fs.energy[static_cast<size_t>(lo)] < thresh) ++lo;
    while (hi >= lo && fs.energy[static_cast<size_t>(hi)] < thresh) --hi;
    if (lo > hi) throw ValueError("vad_trim: every frame is below the silence threshold");
    const int64_t n = hi - lo + 1;
    FeatureSequence out;
    out.frame_rate_hz = fs.frame_rate_hz;
    out.utterance_id = fs.utterance_id;
    out.ppg = Tensor<float>({n, fs.ppg.cols()});
    std::copy(fs.ppg.data.begin() + lo * fs.ppg.cols(),
              fs.ppg.data.begin() + (hi + 1) * fs.ppg.cols(), out.ppg.data.begin());
    out.pitch.assign(fs.pitch.begin() + lo, fs.pitch.begin() + hi + 1);
    out.energy.assign(fs.energy.begin() + lo, fs.energy.begin() + hi + 1);
    return out;
}

Tensor<float> resample_linear(const Tensor<float>& m, int64_t t2) {
    if (m.rank() != 2 || m.rows() < 2)
        throw ValueError("resample_linear: need at least 2 source rows, got " + m.shape_str());
    if (t2 < 1) throw ValueError("resample_linear: target length must be >= 1");
    const int64_t t1 = m.rows(), d = m.cols();
    Tensor<float> out({t2, d});
    for (int64_t r = 0; r < t2; ++r) {
        const double pos =
            t2 == 1 ? 0.0
                    : static_cast<double>(r) * static_cast<double>(t1 - 1) / static_cast<double>(t2 - 1);
        int64_t i0 = static_cast<int64_t>(pos);
        if (i0 >= t1 - 1) i0 = t1 - 2;
        const double frac = pos - static_cast<double>(i0);
        for (int64_t c = 0; c < d; ++c) {
            const double a = m.at(i0, c), b = m.at(i0 + 1, c);
            out.at(r, c) = static_cast<float>(a + frac * (b - a));
        }
    }
    return out;
}

void renorm_rows(Tensor<float>& m) {
    for (int64_t r = 0; r < m.rows(); ++r) {
        float sum = 0;
        for (int64_t c = 0; c < m.cols(); ++c) sum += m.at(r, c);
        if (sum <= 0) throw ValueError("renorm_rows: row " + std::to_string(r) + " sums to " +
                                       std::to_string(sum));
        for (int64_t c = 0; c < m.cols(); ++c) m.at(r, c) /= sum;
    }
}

int64_t target_frames(int64_t t1, int feature_rate_hz, int fps) {
    return (t1 * fps + feature_rate_hz / 2) / feature_rate_hz;
}

static std::vector<float> resample_vec(const std::vector<float>& v, int64_t t2) {
    Tensor<float> m({static_cast<int64_t>(v.size()), 1}, std::vector<float>(v));
    Tensor<float> r = resample_linear(m, t2);
    return r.data;
}

FeatureSequence resample_features(const FeatureSequence& fs, int64_t t2, int target_rate_hz) {
    FeatureSequence out;
    out.utterance_id = fs.utterance_id;
    out.frame_rate_hz = target_rate_hz;
    out.ppg = resample_linear(fs.ppg, t2);
    renorm_rows(out.ppg);
    out.pitch = resample_vec(fs.pitch, t2);
    out.energy = resample_vec(fs.energy, t2);
    // interpolation between voiced and unvoiced frames can land below the
    // voiced range; such frames are unvoiced
    for (float& p : out.pitch)
        if (p < 60.0f) p = 0.0f;
    return out;
}

Tensor<float> synth_ppg(const std::vector<std::pair<int, int>>& segments, RngState& rng,
                        float noise, int dim) {
    if (segments.empty()) throw ValueError("synth_ppg: no segments");
    int64_t t1 = 0;
    for (const auto& [id, dur] : segments) {
        if (id < 0 || id >= dim)
            throw ValueError("synth_ppg: phoneme id " + std::to_string(id) + " outside [0," +
                             std::to_string(dim) + ")");
        if (dur < 1) throw ValueError("synth_ppg: duration must be >= 1 frame");
        t1 += dur;
    }
    std::vector<int> label(static_cast<size_t>(t1));
    int64_t pos = 0;
    for (const auto& [id, dur] : segments)
        for (int i = 0; i < dur; ++i) label[static_cast<size_t>(pos++)] = id;

    // Gaussian smoothing kernel, sigma 2 frames, truncated at 3 sigma.
    const int radius = 6;
    double kern[2 * radius + 1];
    for (int i = -radius; i <= radius; ++i)
        kern[i + radius] = std::exp(-0.5 * (i / 2.0) * (i / 2.0));

    Tensor<float> out({t1, static_cast<int64_t>(dim)});
    for (int64_t f = 0; f < t1; ++f) {
        double total = 0;
        double row[64] = {0};
        std::vector<double> wide;
        double* acc = row;
        if (dim > 64) {
            wide.assign(static_cast<size_t>(dim), 0.0);
            acc = wide.data();
        }
        for (int off = -radius; off <= radius; ++off) {
            const int64_t src = f + off;
            if (src < 0 || src >= t1) continue;
            const double w = kern[off + radius];
            acc[label[static_cast<size_t>(src)]] += w;
            total += w;
        }
        for (int c = 0; c < dim; ++c)
            out.at(f, c) = static_cast<float>(acc[c] / total);
        if (noise > 0) {
            // Dirichlet(1) noise: normalized exponential draws
            std::vector<double> d(static_cast<size_t>(dim));
            double dsum = 0;
            for (int c = 0; c < dim; ++c) {
                d[static_cast<size_t>(c)] = -std::log(1.0 - rng.uniform());
                dsum += d[static_cast<size_t>(c)];
            }
            for (int c = 0; c < dim; ++c)
                out.at(f, c) = (1.0f - noise) * out.at(f, c) +
                               noise * static_cast<float>(d[static_cast<size_t>(c)] / dsum);
        }
    }
    return out;
}

static void mean_std(const std::vector<double>& sums, const std::vector<double>& sq_sums,
                     int64_t count, std::vector<float>& mean, std::vector<float>& stdev,
                     const char* what) {
    mean.resize(sums.size());
    stdev.resize(sums.size());
    for (size_t i = 0; i < sums.size(); ++i) {
        const double m = sums[i] / static_cast<double>(count);
        const double var = sq_sums[i] / static_cast<double>(count) - m * m;
        double s = std::sqrt(std::max(var, 0.0));
        if (s < 1e-6) {
            std::fprintf(stderr, "warning: %s dimension %zu has zero variance, std floored at 1e-6\n",
                         what, i);
            s = 1e-6;
        }
        mean[i] = static_cast<float>(m);
        stdev[i] = static_cast<float>(s);
    }
}

NormStats fit_norm_stats(const std::vector<const Tensor<float>*>& train_anims,
                         const std::vector<const FeatureSequence*>& train_feats) {
    if (train_anims.empty() || train_feats.empty())
        throw ValueError("fit_norm_stats: empty training split");
    NormStats stats;
    const int64_t ch = train_anims[0]->cols();
    std::vector<double> sums(static_cast<size_t>(ch), 0.0), sqs(static_cast<size_t>(ch), 0.0);
    int64_t frames = 0;
    for (const Tensor<float>* a : train_anims) {
        if (a->cols() != ch)
            throw ShapeError("fit_norm_stats: channel count mismatch " + a->shape_str());
        for (int64_t r = 0; r < a->rows(); ++r)
            for (int64_t c = 0; c < ch; ++c) {
                const double v = a->at(r, c);
                sums[static_cast<size_t>(c)] += v;
                sqs[static_cast<size_t>(c)] += v * v;
            }
        frames += a->rows();
    }
    mean_std(sums, sqs, frames, stats.target_mean, stats.target_std, "animation");

    std::vector<double> ps(1, 0.0), pq(1, 0.0), es(1, 0.0), eq(1, 0.0);
    int64_t voiced = 0, total = 0;
    for (const FeatureSequence* fs : train_feats) {
        for (float p : fs->pitch)
            if (p > 0) {
                ps[0] += p;
                pq[0] += static_cast<double>(p) * p;
                ++voiced;
            }
        for (float e : fs->energy) {
            es[0] += e;
            eq[0] += static_cast<double>(e) * e;
            ++total;
        }
    }
    std::vector<float> m, s;
    if (voiced > 0) {
        mean_std(ps, pq, voiced, m, s, "pitch");
        stats.pitch_mean = m[0];
        stats.pitch_std = s[0];
    } else {
        std::fprintf(stderr, "warning: no voiced frames in training split, pitch stats default to 0/1\n");
    }
    if (total == 0) throw ValueError("fit_norm_stats: no frames in training split");
    mean_std(es, eq, total, m, s, "energy");
    stats.energy_mean = m[0];
    stats.energy_std = s[0];
    return stats;
}

Tensor<float> apply_norm_anim(const Tensor<float>& anim, const NormStats& stats) {
    if (anim.cols() != static_cast<int64_t>(stats.target_mean.size()))
        throw ShapeError("apply_norm_anim: " + std::to_string(stats.target_mean.size()) +
                         " stats channels vs animation " + anim.shape_str());
    Tensor<float> out(anim.shape);
    for (int64_t r = 0; r < anim.rows(); ++r)
        for (int64_t c = 0; c < anim.cols(); ++c)
            out.at(r, c) = (anim.at(r, c) - stats.target_mean[static_cast<size_t>(c)]) /
                           stats.target_std[static_cast<size_t>(c)];
    return out;
}

Tensor<float> invert_norm_anim(const Tensor<float>& normed, const NormStats& stats,
                               bool clamp01) {
    if (normed.cols() != static_cast<int64_t>(stats.target_mean.size()))
        throw ShapeError("invert_norm_anim: " + std::to_string(stats.target_mean.size()) +
                         " stats channels vs animation " + normed.shape_str());
    Tensor<float> out(normed.shape);
    for (int64_t r = 0; r < normed.rows(); ++r)
        for (int64_t c = 0; c < normed.cols(); ++c) {
            float v = normed.at(r, c) * stats.target_std[static_cast<size_t>(c)] +
                      stats.target_mean[static_cast<size_t>(c)];
            if (clamp01) v = std::clamp(v, 0.0f, 1.0f);
            out.at(r, c) = v;
        }
    return out;
}

std::vector<float> normalize_pitch(const std::vector<float>& pitch, const NormStats& stats) {
    std::vector<float> out(pitch.size());
    for (size_t i = 0; i < pitch.size(); ++i)
        out[i] = pitch[i] >= 60.0f ? (pitch[i] - stats.pitch_mean) / stats.pitch_std : 0.0f;
    return out;
}

std::vector<float> normalize_energy(const std::vector<float>& energy, const NormStats& stats) {
    std::vector<float> out(energy.size());
    for (size_t i = 0; i < energy.size(); ++i)
        out[i] = (energy[i] - stats.energy_mean) / stats.energy_std;
    return out;
}

}  // namespace s2a
