// Acceptance battery: nine go/no-go checks covering gating, mixture
// equivalence, gradients, learning, ablation orderings, benchmark protocol,
// pipeline properties and determinism. One PASS/FAIL line per criterion;
// exit status is nonzero if any criterion fails.
#include <sys/wait.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "s2a/container.hpp"
#include "s2a/corpus.hpp"
#include "s2a/errors.hpp"
#include "s2a/evalbench.hpp"
#include "s2a/features.hpp"
#include "s2a/gradcheck.hpp"
#include "s2a/kernels.hpp"
#include "s2a/model.hpp"
#include "s2a/rng.hpp"
#include "s2a/tape.hpp"
#include "s2a/trainer.hpp"

using namespace s2a;
namespace fs = std::filesystem;

namespace {

struct Fail : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void need(bool ok, const std::string& msg) {
    if (!ok) throw Fail(msg);
}

std::string fmt(const char* f, ...) {
    char buf[1024];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

double now_s() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

Tensor<float> rand_f(RngState& rng, std::vector<int64_t> shape, double lo = -0.5,
                     double hi = 0.5) {
    Tensor<float> t(std::move(shape));
    for (auto& v : t.data) v = static_cast<float>(rng.uniform(lo, hi));
    return t;
}

Tensor<double> rand_d(RngState& rng, std::vector<int64_t> shape, double lo = -1, double hi = 1) {
    Tensor<double> t(std::move(shape));
    for (auto& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

// Independent top-k index set; ties keep the lower index.
std::vector<int64_t> topk_oracle(const std::vector<float>& g, int64_t k) {
    std::vector<int64_t> idx(g.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int64_t a, int64_t b) {
        return g[static_cast<size_t>(a)] > g[static_cast<size_t>(b)];
    });
    idx.resize(static_cast<size_t>(k));
    std::sort(idx.begin(), idx.end());
    return idx;
}

MoeP<float> rand_moe(RngState& rng, int64_t d, int64_t n, int64_t hid, int64_t kw) {
    MoeP<float> p;
    p.gate = {rand_f(rng, {d, n}), rand_f(rng, {n})};
    for (int64_t e = 0; e < n; ++e)
        p.experts.push_back(
            {rand_f(rng, {kw, d, hid}), rand_f(rng, {hid}), {rand_f(rng, {hid, d}),
                                                             rand_f(rng, {d})}});
    return p;
}

// Dense reference: every expert runs on every frame through the plain
// feed-forward body; routing and mixing use an independent double-precision
// gate (own logit loop, own sort, own softmax).
Tensor<double> moe_dense_oracle(const Tensor<float>& h, MoeP<float>& p, int64_t k) {
    const int64_t t = h.rows(), d = h.cols();
    const int64_t n = static_cast<int64_t>(p.experts.size());

    std::vector<Tensor<float>> ys;
    Tape<float> tape;
    const NodeId hn = tape.constant(h);
    for (int64_t e = 0; e < n; ++e)
        ys.push_back(tape.value(ffn_body(tape, p.experts[static_cast<size_t>(e)], hn)));

    Tensor<double> out({t, d});
    for (int64_t r = 0; r < t; ++r) {
        std::vector<double> logits(static_cast<size_t>(n));
        for (int64_t e = 0; e < n; ++e) {
            double acc = p.gate.b.data[static_cast<size_t>(e)];
            for (int64_t i = 0; i < d; ++i)
                acc += static_cast<double>(h.at(r, i)) * p.gate.w.at(i, e);
            logits[static_cast<size_t>(e)] = acc;
        }
        std::vector<int64_t> sel(static_cast<size_t>(n));
        std::iota(sel.begin(), sel.end(), 0);
        std::stable_sort(sel.begin(), sel.end(), [&](int64_t a, int64_t b) {
            return logits[static_cast<size_t>(a)] > logits[static_cast<size_t>(b)];
        });
        sel.resize(static_cast<size_t>(k));
        double mx = -std::numeric_limits<double>::infinity();
        for (int64_t e : sel) mx = std::max(mx, logits[static_cast<size_t>(e)]);
        double z = 0;
        for (int64_t e : sel) z += std::exp(logits[static_cast<size_t>(e)] - mx);
        for (int64_t e : sel) {
            const double prob = std::exp(logits[static_cast<size_t>(e)] - mx) / z;
            for (int64_t j = 0; j < d; ++j)
                out.at(r, j) += prob * static_cast<double>(ys[static_cast<size_t>(e)].at(r, j));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Gradient-check plumbing (criterion 3)

NodeId weighted_sum(Tape<double>& tape, NodeId out, const Tensor<double>& weight) {
    return tape.reduce_sum(tape.mul(out, tape.constant(weight)));
}

Tensor<double> away_from_zero(RngState& rng, std::vector<int64_t> shape) {
    Tensor<double> t = rand_d(rng, std::move(shape));
    for (auto& v : t.data)
        if (std::fabs(v) < 0.05) v += v < 0 ? -0.1 : 0.1;
    return t;
}

Tensor<double> separated_rows(RngState& rng, int64_t rows, int64_t cols) {
    Tensor<double> t({rows, cols});
    std::vector<double> vals(static_cast<size_t>(cols));
    for (int64_t r = 0; r < rows; ++r) {
        for (int64_t c = 0; c < cols; ++c)
            vals[static_cast<size_t>(c)] = 0.2 * static_cast<double>(c) + rng.uniform(0.0, 0.05);
        for (int64_t c = cols - 1; c > 0; --c)
            std::swap(vals[static_cast<size_t>(c)],
                      vals[static_cast<size_t>(rng.below(static_cast<uint64_t>(c + 1)))]);
        for (int64_t c = 0; c < cols; ++c) t.at(r, c) = vals[static_cast<size_t>(c)];
    }
    return t;
}

struct OpBattery {
    double max_rel = 0;
    int64_t ops = 0, elements = 0;

    void check(const char* what, std::vector<Tensor<double>*> params,
               const std::function<NodeId(Tape<double>&)>& build) {
        const auto run = [&](bool want_grad) {
            Tape<double> tape;
            const NodeId loss = build(tape);
            const double value = tape.value(loss).data[0];
            if (want_grad) tape.backward(loss);
            return value;
        };
        const GradCheckReport rep = grad_check(params, run);
        need(rep.ok(1e-4),
             fmt("%s gradients off: rel %.3e (%s)", what, rep.max_rel_err, rep.worst.c_str()));
        max_rel = std::max(max_rel, rep.max_rel_err);
        ++ops;
        elements += rep.checked;
    }
};

// ---------------------------------------------------------------------------
// Container helpers (criterion 8)

ContainerFile random_container(RngState& rng) {
    ContainerFile f;
    const int n = 1 + static_cast<int>(rng.below(4));
    for (int i = 0; i < n; ++i) {
        const int rank = 1 + static_cast<int>(rng.below(3));
        std::vector<int64_t> shape;
        for (int d = 0; d < rank; ++d) shape.push_back(1 + static_cast<int64_t>(rng.below(6)));
        Tensor<float> t(shape);
        for (auto& v : t.data) v = static_cast<float>(rng.normal());
        f.add("t" + std::to_string(i) + std::string(static_cast<size_t>(rng.below(5)), 'x'),
              std::move(t));
    }
    f.metadata_json = "{\"case\":" + std::to_string(rng.below(1000)) + "}";
    return f;
}

bool same_container(const ContainerFile& a, const ContainerFile& b) {
    if (a.metadata_json != b.metadata_json || a.tensors.size() != b.tensors.size()) return false;
    for (size_t i = 0; i < a.tensors.size(); ++i) {
        if (a.tensors[i].first != b.tensors[i].first) return false;
        const auto& x = a.tensors[i].second;
        const auto& y = b.tensors[i].second;
        if (x.shape != y.shape) return false;
        if (std::memcmp(x.data.data(), y.data.data(), x.data.size() * sizeof(float)) != 0)
            return false;
    }
    return true;
}

std::vector<float> sine(double hz, double seconds, double amp = 0.5, int rate = 16000) {
    std::vector<float> s(static_cast<size_t>(seconds * rate));
    for (size_t i = 0; i < s.size(); ++i)
        s[i] = static_cast<float>(amp * std::sin(2.0 * M_PI * hz * static_cast<double>(i) / rate));
    return s;
}

double median(std::vector<float> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
}

// ---------------------------------------------------------------------------
// Subprocess helpers (criterion 9)

int run_cli(const std::string& args, std::string* output = nullptr) {
    const std::string cmd = std::string(S2A_BIN) + " " + args + " 2>&1";
    FILE* pipe = popen(cmd.c_str(), "r");
    need(pipe != nullptr, "popen failed for: " + cmd);
    std::string out;
    char buf[4096];
    size_t n;
    while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) out.append(buf, n);
    const int status = pclose(pipe);
    if (output != nullptr) *output = out;
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    need(in.good(), "cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::map<std::string, std::string> tree_bytes(const fs::path& root) {
    std::map<std::string, std::string> files;
    for (const auto& entry : fs::recursive_directory_iterator(root))
        if (entry.is_regular_file())
            files[fs::relative(entry.path(), root).string()] = slurp(entry.path());
    return files;
}

}  // namespace

int main() {
    kernels::set_num_threads(1);
    const fs::path work = fs::temp_directory_path() / "s2a_acceptance";
    fs::remove_all(work);
    fs::create_directories(work);

    std::optional<LoadedCorpus> corpus;            // 200 utterances, energy-coupled
    std::optional<TrainResult> proposed;           // criterion 4's trained model
    std::array<double, 3> moe_crucial{};           // criterion 5's per-seed results
    bool have_moe_crucial = false;

    bool all_ok = true;
    const auto criterion = [&](int id, const char* title,
                               const std::function<std::string()>& fn) {
        try {
            const std::string detail = fn();
            std::printf("PASS criterion %d (%s): %s\n", id, title, detail.c_str());
        } catch (const std::exception& e) {
            all_ok = false;
            std::printf("FAIL criterion %d (%s): %s\n", id, title, e.what());
        }
        std::fflush(stdout);
    };

    // -----------------------------------------------------------------------
    criterion(1, "gating correctness", [&] {
        const double t0 = now_s();
        RngState rng(201);
        double worst_sum = 0;
        for (int it = 0; it < 1000; ++it) {
            const int64_t n = 2 + static_cast<int64_t>(rng.below(63));  // <= 64
            const int64_t k = 1 + static_cast<int64_t>(rng.below(static_cast<uint64_t>(n)));
            std::vector<float> g(static_cast<size_t>(n));
            for (auto& v : g) v = static_cast<float>(rng.uniform(-4, 4));

            const std::vector<float> scores = topk_scores(g, k);
            std::vector<float> probs(static_cast<size_t>(n));
            kernels::softmax_rows(scores.data(), probs.data(), 1, n);

            const std::vector<int64_t> sel = topk_oracle(g, k);
            int64_t nonzeros = 0;
            double sum = 0;
            for (int64_t e = 0; e < n; ++e) {
                const float pv = probs[static_cast<size_t>(e)];
                if (std::binary_search(sel.begin(), sel.end(), e)) {
                    need(pv > 0.0f, fmt("case %d: selected expert %lld got probability %g", it,
                                        static_cast<long long>(e), pv));
                    ++nonzeros;
                } else {
                    need(pv == 0.0f, fmt("case %d: non-selected expert %lld got %g, expected "
                                         "exactly 0",
                                         it, static_cast<long long>(e), pv));
                }
                sum += pv;
            }
            need(nonzeros == k, fmt("case %d: %lld nonzeros, expected k=%lld", it,
                                    static_cast<long long>(nonzeros), static_cast<long long>(k)));
            worst_sum = std::max(worst_sum, std::fabs(sum - 1.0));
            need(worst_sum <= 1e-6, fmt("case %d: probabilities sum to 1%+.3e", it, sum - 1.0));
        }
        const double dt = now_s() - t0;
        need(dt < 5.0, fmt("took %.2f s, budget 5 s", dt));
        return fmt("1000 cases (n<=64, k<=n): exactly k nonzeros, zeros elsewhere, "
                   "max |sum-1| %.2e, %.2f s",
                   worst_sum, dt);
    });

    // -----------------------------------------------------------------------
    criterion(2, "sparse/dense mixture equivalence", [&] {
        RngState rng(107);
        int64_t checked = 0;
        double max_abs = 0;
        for (int it = 0; it < 24; ++it) {
            const int64_t t = 2 + static_cast<int64_t>(rng.below(15));  // <= 16
            const int64_t d = 2 + static_cast<int64_t>(rng.below(15));  // <= 16
            const int64_t n = 1 + static_cast<int64_t>(rng.below(8));   // <= 8
            const int64_t k = 1 + static_cast<int64_t>(rng.below(static_cast<uint64_t>(n)));
            const int64_t hid = 2 + static_cast<int64_t>(rng.below(7));
            const int64_t kw = (it % 2 == 0) ? 3 : 1;

            MoeP<float> p = rand_moe(rng, d, n, hid, kw);
            const Tensor<float> h = rand_f(rng, {t, d});

            Tape<float> tape;
            const Tensor<float> sparse = tape.value(moe_body(tape, p, tape.constant(h), k));
            const Tensor<double> dense = moe_dense_oracle(h, p, k);

            for (int64_t r = 0; r < t; ++r)
                for (int64_t c = 0; c < d; ++c) {
                    const double a = sparse.at(r, c), b = dense.at(r, c);
                    // rtol for meaningful magnitudes; atol absorbs float32
                    // rounding where cancellation drives the output toward 0.
                    need(std::fabs(a - b) <= 5e-7 + 1e-5 * std::max(std::fabs(a), std::fabs(b)),
                         fmt("instance %d (t=%lld d=%lld n=%lld k=%lld): sparse %.9g vs dense "
                             "%.9g at (%lld,%lld)",
                             it, static_cast<long long>(t), static_cast<long long>(d),
                             static_cast<long long>(n), static_cast<long long>(k), a, b,
                             static_cast<long long>(r), static_cast<long long>(c)));
                    max_abs = std::max(max_abs, std::fabs(a - b));
                }
            ++checked;
        }
        need(checked >= 20, fmt("only %lld instances checked", static_cast<long long>(checked)));

        // k = n must reduce to a plain softmax bit for bit.
        RngState rng2(103);
        for (int it = 0; it < 10; ++it) {
            const int64_t n = 1 + static_cast<int64_t>(rng2.below(12));
            const Tensor<float> g = rand_f(rng2, {4, n}, -2, 2);
            Tape<float> tape;
            const NodeId gn = tape.constant(g);
            const auto masked = tape.value(tape.softmax_rows(tape.topk_mask_rows(gn, n))).data;
            const auto plain = tape.value(tape.softmax_rows(gn)).data;
            need(masked == plain, fmt("k=n case %d: masked softmax differs from plain", it));
        }
        return fmt("%lld random instances (T<=16, d<=16, n<=8) within rel 1e-5 "
                   "(+5e-7 float-rounding floor, max |diff| %.2e); k=n gating bitwise equal to "
                   "plain softmax",
                   static_cast<long long>(checked), max_abs);
    });

    // -----------------------------------------------------------------------
    criterion(3, "gradient integrity", [&] {
        const double t0 = now_s();
        RngState rng(53);
        OpBattery ops;

        {
            Tensor<double> a = rand_d(rng, {3, 4}), b = rand_d(rng, {4, 2});
            const Tensor<double> lw = rand_d(rng, {3, 2});
            ops.check("matmul", {&a, &b}, [&](Tape<double>& t) {
                return weighted_sum(t, t.matmul(t.input(a), t.input(b)), lw);
            });
        }
        {
            Tensor<double> a = rand_d(rng, {3, 4}), b = rand_d(rng, {2, 4});
            const Tensor<double> lw = rand_d(rng, {3, 2});
            ops.check("matmul_nt", {&a, &b}, [&](Tape<double>& t) {
                return weighted_sum(t, t.matmul_nt(t.input(a), t.input(b)), lw);
            });
        }
        {
            Tensor<double> a = rand_d(rng, {3, 4}), b = rand_d(rng, {3, 4});
            const Tensor<double> lw = rand_d(rng, {3, 4});
            ops.check("add", {&a, &b}, [&](Tape<double>& t) {
                return weighted_sum(t, t.add(t.input(a), t.input(b)), lw);
            });
            ops.check("sub", {&a, &b}, [&](Tape<double>& t) {
                return weighted_sum(t, t.sub(t.input(a), t.input(b)), lw);
            });
            ops.check("mul", {&a, &b}, [&](Tape<double>& t) {
                return weighted_sum(t, t.mul(t.input(a), t.input(b)), lw);
            });
            ops.check("scale", {&a}, [&](Tape<double>& t) {
                return weighted_sum(t, t.scale(t.input(a), 1.7), lw);
            });
        }
        {
            Tensor<double> x = rand_d(rng, {3, 4}), v = rand_d(rng, {4});
            const Tensor<double> lw = rand_d(rng, {3, 4});
            ops.check("add_rowvec", {&x, &v}, [&](Tape<double>& t) {
                return weighted_sum(t, t.add_rowvec(t.input(x), t.input(v)), lw);
            });
        }
        {
            Tensor<double> x = away_from_zero(rng, {3, 5});
            const Tensor<double> lw = rand_d(rng, {3, 5});
            ops.check("relu", {&x}, [&](Tape<double>& t) {
                return weighted_sum(t, t.relu(t.input(x)), lw);
            });
        }
        {
            Tensor<double> x = rand_d(rng, {3, 5});
            const Tensor<double> lw = rand_d(rng, {3, 5});
            ops.check("softmax_rows", {&x}, [&](Tape<double>& t) {
                return weighted_sum(t, t.softmax_rows(t.input(x)), lw);
            });
        }
        {
            Tensor<double> x = rand_d(rng, {3, 6});
            Tensor<double> gain = rand_d(rng, {6}, 0.5, 1.5), bias = rand_d(rng, {6});
            const Tensor<double> lw = rand_d(rng, {3, 6});
            ops.check("layer_norm", {&x, &gain, &bias}, [&](Tape<double>& t) {
                return weighted_sum(
                    t, t.layer_norm(t.input(x), t.input(gain), t.input(bias), 1e-5), lw);
            });
        }
        {
            Tensor<double> x = rand_d(rng, {5, 3}), w = rand_d(rng, {3, 3, 4});
            Tensor<double> b = rand_d(rng, {4});
            const Tensor<double> lw = rand_d(rng, {5, 4});
            ops.check("conv1d_same", {&x, &w, &b}, [&](Tape<double>& t) {
                return weighted_sum(t, t.conv1d_same(t.input(x), t.input(w), t.input(b)), lw);
            });
        }
        {
            Tensor<double> x = rand_d(rng, {6, 3}), w = rand_d(rng, {3, 3, 4});
            Tensor<double> b = rand_d(rng, {4});
            const std::vector<int64_t> rows{0, 2, 5};
            const Tensor<double> lw = rand_d(rng, {3, 4});
            ops.check("conv1d_rows", {&x, &w, &b}, [&](Tape<double>& t) {
                return weighted_sum(t, t.conv1d_rows(t.input(x), t.input(w), t.input(b), rows),
                                    lw);
            });
        }
        {
            Tensor<double> x = rand_d(rng, {4, 3});
            const Tensor<double> lw = rand_d(rng, {3, 1});
            ops.check("gather_col", {&x}, [&](Tape<double>& t) {
                return weighted_sum(t, t.gather_col(t.input(x), {0, 3, 1}, 2), lw);
            });
        }
        {
            Tensor<double> y = rand_d(rng, {2, 3}), wv = rand_d(rng, {2, 1});
            const Tensor<double> lw = rand_d(rng, {4, 3});
            ops.check("scatter_rows_weighted", {&y, &wv}, [&](Tape<double>& t) {
                return weighted_sum(
                    t, t.scatter_rows_weighted(t.input(y), t.input(wv), {0, 2}, 4), lw);
            });
        }
        {
            Tensor<double> x = separated_rows(rng, 3, 6);
            const Tensor<double> lw = rand_d(rng, {3, 6});
            ops.check("topk_mask_rows+softmax", {&x}, [&](Tape<double>& t) {
                return weighted_sum(t, t.softmax_rows(t.topk_mask_rows(t.input(x), 3)), lw);
            });
        }
        {
            Tensor<double> x = rand_d(rng, {5, 3});
            const Tensor<double> lw = rand_d(rng, {5, 3});
            ops.check("mask_rows", {&x}, [&](Tape<double>& t) {
                return weighted_sum(t, t.mask_rows(t.input(x), 3), lw);
            });
        }
        {
            Tensor<double> a = rand_d(rng, {3, 2}), b = rand_d(rng, {3, 3});
            const Tensor<double> lw = rand_d(rng, {3, 5});
            ops.check("concat_cols", {&a, &b}, [&](Tape<double>& t) {
                return weighted_sum(t, t.concat_cols({t.input(a), t.input(b)}), lw);
            });
            Tensor<double> x = rand_d(rng, {3, 6});
            const Tensor<double> lw2 = rand_d(rng, {3, 3});
            ops.check("slice_cols", {&x}, [&](Tape<double>& t) {
                return weighted_sum(t, t.slice_cols(t.input(x), 1, 4), lw2);
            });
        }
        {
            Tensor<double> x = rand_d(rng, {3, 4});
            ops.check("reduce_sum", {&x},
                      [&](Tape<double>& t) { return t.reduce_sum(t.input(x)); });
            ops.check("reduce_mean", {&x},
                      [&](Tape<double>& t) { return t.reduce_mean(t.input(x)); });
        }

        // End-to-end tiny model in double precision: d=8, n=4, k=2, T=5.
        ModelConfig cfg;
        cfg.d_model = 8;
        cfg.n_heads = 2;
        cfg.n_enc_blocks = 1;
        cfg.n_dec_blocks = 1;
        cfg.n_experts = 4;
        cfg.top_k = 2;
        cfg.expert_hidden = 8;
        cfg.dropout = 0.0f;
        cfg.ppg_dim = 6;
        auto mp = ModelParams<double>::build(cfg, Variant::Moe);
        RngState ir(59);
        mp.init(ir);

        const int64_t t_len = 5;
        ForwardInput<double> in;
        in.ppg = Tensor<double>({t_len, cfg.ppg_dim});
        RngState xr(61);
        for (int64_t r = 0; r < t_len; ++r) {
            double sum = 0;
            for (int64_t c = 0; c < cfg.ppg_dim; ++c) {
                const double v = -std::log(1.0 - xr.uniform());
                in.ppg.at(r, c) = v;
                sum += v;
            }
            for (int64_t c = 0; c < cfg.ppg_dim; ++c) in.ppg.at(r, c) /= sum;
        }
        in.pitch = rand_d(xr, {t_len, 1});
        in.energy = rand_d(xr, {t_len, 1});
        const Tensor<double> target = rand_d(xr, {t_len, 32}, 0, 1);

        std::vector<Tensor<double>*> plist;
        mp.for_each([&](const std::string&, Tensor<double>& t) { plist.push_back(&t); });
        int64_t n_params = 0;
        for (auto* p : plist) n_params += static_cast<int64_t>(p->data.size());

        const auto run = [&](bool want_grad) {
            Tape<double> tape;
            const NodeId pred = model_forward(tape, mp, in, t_len);
            const NodeId diff = tape.sub(pred, tape.constant(target));
            const NodeId loss = tape.reduce_mean(tape.mul(diff, diff));
            const double value = tape.value(loss).data[0];
            if (want_grad) tape.backward(loss);
            return value;
        };
        const GradCheckReport e2e = grad_check(plist, run);
        need(e2e.ok(1e-4),
             fmt("end-to-end gradients off: rel %.3e (%s)", e2e.max_rel_err, e2e.worst.c_str()));

        const double dt = now_s() - t0;
        need(dt < 60.0, fmt("took %.1f s, budget 60 s", dt));
        return fmt("%lld op checks (%lld elements) max rel %.2e; end-to-end d=8 n=4 k=2 T=5 "
                   "(%lld params) max rel %.2e; %.1f s",
                   static_cast<long long>(ops.ops), static_cast<long long>(ops.elements),
                   ops.max_rel, static_cast<long long>(n_params), e2e.max_rel_err, dt);
    });

    // -----------------------------------------------------------------------
    criterion(4, "learning sanity", [&] {
        CorpusSpec spec;
        spec.out_dir = (work / "corpus").string();
        spec.n_utts = 200;
        gen_corpus(spec);
        corpus = load_corpus(spec.out_dir);
        std::fprintf(stderr, "[acceptance] corpus ready: %zu train / %zu val / %zu test\n",
                     corpus->train.size(), corpus->val.size(), corpus->test.size());

        TrainConfig tc;
        tc.learning_rate = 3e-3;
        tc.max_epochs = 100;
        tc.patience = 10;
        tc.seed = 1;
        const double t0 = now_s();
        TrainResult r = train(*corpus, ModelConfig::tiny(), Variant::Moe, tc, nullptr);
        const double train_s = now_s() - t0;
        need(train_s < 600.0, fmt("training took %.0f s, budget 600 s", train_s));

        const RmseReport model_rep =
            evaluate_checkpoint("proposed", r.params, r.stats, corpus->test);
        const RmseReport base_rep = evaluate_constant(
            "mean-predictor", channel_means(corpus->train), corpus->test);
        const double ratio = model_rep.pooled_entire / base_rep.pooled_entire;
        need(ratio < 0.5, fmt("held-out entire RMSE %.4f vs mean-predictor %.4f: ratio %.3f, "
                              "needs < 0.5",
                              model_rep.pooled_entire, base_rep.pooled_entire, ratio));
        proposed = std::move(r);

        const OverfitResult o =
            overfit_single(corpus->train[0], ModelConfig::tiny(), Variant::Moe, tc, 500, 0.02);
        need(o.final_rmse < 0.02 && o.steps_run <= 500,
             fmt("overfit RMSE %.4f after %lld steps, needs < 0.02 within 500", o.final_rmse,
                 static_cast<long long>(o.steps_run)));
        return fmt("held-out entire RMSE %.4f vs mean-predictor %.4f (ratio %.3f < 0.5) after "
                   "%.0f s single-threaded (epochs %lld); overfit RMSE %.4f in %lld steps",
                   model_rep.pooled_entire, base_rep.pooled_entire, ratio, train_s,
                   static_cast<long long>(proposed->epochs_run), o.final_rmse,
                   static_cast<long long>(o.steps_run));
    });

    // Shared ablation protocol for criteria 5 and 6.
    const auto train_crucial = [&](Variant variant, uint64_t seed, const char* tag) {
        TrainConfig tc;
        tc.learning_rate = 3e-3;
        tc.max_epochs = 50;
        tc.patience = 8;
        tc.seed = seed;
        const double t0 = now_s();
        TrainResult r = train(*corpus, ModelConfig::tiny(), variant, tc, nullptr);
        const RmseReport rep = evaluate_checkpoint(tag, r.params, r.stats, corpus->test);
        std::fprintf(stderr, "[acceptance] %s seed %llu: crucial RMSE %.4f (%.0f s)\n", tag,
                     static_cast<unsigned long long>(seed), rep.pooled_crucial, now_s() - t0);
        return rep.pooled_crucial;
    };

    // -----------------------------------------------------------------------
    criterion(5, "prosody ablation ordering", [&] {
        need(corpus.has_value(), "needs the corpus from criterion 4");
        std::array<double, 3> nop{};
        int wins = 0;
        for (uint64_t s = 1; s <= 3; ++s) {
            moe_crucial[s - 1] = train_crucial(Variant::Moe, s, "moe");
            nop[s - 1] = train_crucial(Variant::NoProsody, s, "no-prosody");
            wins += moe_crucial[s - 1] < nop[s - 1] ? 1 : 0;
        }
        have_moe_crucial = true;
        const std::string table =
            fmt("crucial RMSE by seed, proposed vs no-prosody: %.4f/%.4f, %.4f/%.4f, %.4f/%.4f",
                moe_crucial[0], nop[0], moe_crucial[1], nop[1], moe_crucial[2], nop[2]);
        need(wins >= 2, fmt("proposed beat no-prosody in only %d/3 seeds (%s)", wins,
                            table.c_str()));

        need(proposed.has_value(), "needs the trained model from criterion 4");
        const SyntheticUtterance lo = gen_utterance(RngState(8383), 6, 0.5f);
        const SyntheticUtterance hi = gen_utterance(RngState(8383), 6, 2.0f);
        need(lo.features.ppg.data == hi.features.ppg.data,
             "probe utterances should share the PPG");
        const ForwardInput<float> in_lo =
            make_forward_input(lo.features, Tensor<float>(), proposed->stats, Variant::Moe);
        const ForwardInput<float> in_hi =
            make_forward_input(hi.features, Tensor<float>(), proposed->stats, Variant::Moe);
        const AnimationSequence a_lo =
            infer_animation(proposed->params, in_lo, proposed->stats, "gain-half");
        const AnimationSequence a_hi =
            infer_animation(proposed->params, in_hi, proposed->stats, "gain-double");
        double jaw_diff = 0;
        for (int64_t r = 0; r < a_lo.frames.rows(); ++r)
            jaw_diff = std::max(jaw_diff, std::fabs(static_cast<double>(
                                              a_lo.frames.at(r, kJawOpenIndex)) -
                                          a_hi.frames.at(r, kJawOpenIndex)));
        need(jaw_diff > 0.05,
             fmt("jawOpen max |diff| %.4f for energy gains 0.5 vs 2.0, needs > 0.05", jaw_diff));
        return fmt("%s; %d/3 seeds ordered; jawOpen max |diff| %.3f > 0.05 for gains 0.5 vs 2.0 "
                   "on identical PPGs",
                   table.c_str(), wins, jaw_diff);
    });

    // -----------------------------------------------------------------------
    criterion(6, "mixture-of-experts ablation ordering", [&] {
        need(corpus.has_value(), "needs the corpus from criterion 4");
        need(have_moe_crucial, "needs the per-seed MOE results from criterion 5");
        std::array<double, 3> dense{};
        int wins = 0;
        for (uint64_t s = 1; s <= 3; ++s) {
            dense[s - 1] = train_crucial(Variant::Dense, s, "dense");
            wins += moe_crucial[s - 1] <= dense[s - 1] ? 1 : 0;
        }
        const std::string table =
            fmt("crucial RMSE by seed, moe vs dense at matched per-frame FLOPs (dense hidden = "
                "top_k x expert_hidden): %.4f/%.4f, %.4f/%.4f, %.4f/%.4f",
                moe_crucial[0], dense[0], moe_crucial[1], dense[1], moe_crucial[2], dense[2]);
        need(wins >= 2, fmt("moe <= dense in only %d/3 seeds, no tuning applied (%s)", wins,
                            table.c_str()));
        return fmt("%s; moe <= dense in %d/3 seeds, no tuning applied", table.c_str(), wins);
    });

    // -----------------------------------------------------------------------
    criterion(7, "real-time-factor protocol", [&] {
        ModelConfig cfg;  // full-size defaults
        auto params = ModelParams<float>::build(cfg, Variant::Moe);
        RngState ir(5);
        params.init(ir);
        NormStats st;
        st.target_mean.assign(32, 0.5f);
        st.target_std.assign(32, 0.15f);
        const int64_t hidden = matched_blstm_hidden(cfg, Variant::Moe);
        BlstmParams blstm = BlstmParams::build(cfg.ppg_dim + cfg.prosody_dim, hidden, 32);
        RngState br(6);
        blstm.init(br);

        std::vector<BenchModel> models;
        models.push_back(make_blstm_bench("blstm", blstm, st, 720, 9));
        models.push_back(make_model_bench("moe", params, st, 720, 9));
        const RtfReport rep = bench_rtf(models, 720, 10, 2);
        for (const auto& row : rep.rows)
            need(row.stable, fmt("%s timing unstable: cv %.3f, needs < 0.3", row.name.c_str(),
                                 row.cv));
        const double speedup = rep.rows[1].speedup_vs_baseline;

        const RtfReport rep2x =
            bench_rtf({make_blstm_bench("blstm", blstm, st, 1440, 9)}, 1440, 10, 2);
        const double factor = rep2x.rows[0].mean_seconds / rep.rows[0].mean_seconds;
        need(factor >= 1.6 && factor <= 2.4,
             fmt("BLSTM 2x-frames scaling factor %.2f outside [1.6, 2.4]", factor));
        return fmt("T=720, 10 runs, 1 thread: rtf moe %.4f (cv %.2f) vs blstm %.4f (cv %.2f), "
                   "speedup %.2fx on this host (the published 17.76x is GPU-specific, not a "
                   "bound); blstm 2x-frames factor %.2f in [1.6, 2.4]",
                   rep.rows[1].rtf_mean, rep.rows[1].cv, rep.rows[0].rtf_mean, rep.rows[0].cv,
                   speedup, factor);
    });

    // -----------------------------------------------------------------------
    criterion(8, "pipeline correctness", [&] {
        // Container round-trips, bit-exact.
        const fs::path cdir = work / "containers";
        fs::create_directories(cdir);
        RngState rng(7);
        for (int c = 0; c < 100; ++c) {
            const ContainerFile f = random_container(rng);
            const std::vector<uint8_t> bytes = serialize_container(f);
            need(same_container(f, parse_container(bytes, "mem")),
                 fmt("container case %d: memory round-trip not bit-exact", c));
            const std::string path = (cdir / ("c" + std::to_string(c) + ".bin")).string();
            write_container(path, f);
            need(same_container(f, read_container(path)),
                 fmt("container case %d: file round-trip not bit-exact", c));
            need(serialize_container(f) == bytes,
                 fmt("container case %d: second serialization differs", c));
        }

        // Resampling: identity is bitwise, endpoints are preserved exactly.
        RngState rr(41);
        const Tensor<float> m = rand_f(rr, {7, 3}, -1, 1);
        need(resample_linear(m, 7).data == m.data, "resample identity changed the data");
        for (int64_t t2 : {2L, 5L, 13L, 40L}) {
            const Tensor<float> r = resample_linear(m, t2);
            for (int64_t c = 0; c < 3; ++c) {
                need(r.at(0, c) == m.at(0, c), "resample moved the first row");
                need(r.at(t2 - 1, c) == m.at(6, c), "resample moved the last row");
            }
        }

        // Pitch on pure sines.
        double worst_hz = 0;
        for (double hz : {80.0, 120.0, 220.0, 330.0}) {
            const auto p = frame_pitch(sine(hz, 1.0), FrameSpec{});
            std::vector<float> vp;
            for (float v : p)
                if (v > 0) vp.push_back(v);
            need(!vp.empty(), fmt("%g Hz sine detected as fully unvoiced", hz));
            const double got = median(vp);
            need(std::fabs(got - hz) <= 2.0,
                 fmt("%g Hz sine tracked at %.2f Hz, needs +-2 Hz", hz, got));
            worst_hz = std::max(worst_hz, std::fabs(got - hz));
        }

        // VAD removes only the contiguous quiet head and tail.
        FeatureSequence fsq;
        std::vector<float> e(20, 0.0f);
        for (int i = 0; i < 4; ++i) e[i] = -20.0f;
        for (int i = 17; i < 20; ++i) e[i] = -20.0f;
        e[9] = -20.0f;  // interior dip must survive
        fsq.ppg = Tensor<float>({20, 4});
        for (int64_t r = 0; r < 20; ++r) fsq.ppg.at(r, 0) = 1.0f;
        fsq.pitch.assign(20, 120.0f);
        fsq.energy = e;
        const FeatureSequence trimmed = vad_trim(fsq);
        need(trimmed.frames() == 13,
             fmt("VAD kept %lld frames, expected 13", static_cast<long long>(trimmed.frames())));
        need(trimmed.energy.front() == 0.0f && trimmed.energy.back() == 0.0f,
             "VAD trimmed into the loud region");
        need(std::count(trimmed.energy.begin(), trimmed.energy.end(), -20.0f) == 1,
             "VAD removed the interior dip");
        return fmt("100 container round-trips bit-exact; resample identity/endpoints exact; "
                   "sine pitch within %.2f Hz of truth (budget 2); VAD trimmed head+tail only",
                   worst_hz);
    });

    // -----------------------------------------------------------------------
    criterion(9, "rerun determinism", [&] {
        const fs::path d1 = work / "det_corpus_a";
        const fs::path d2 = work / "det_corpus_b";
        for (const auto& d : {d1, d2})
            need(run_cli("gen-corpus --out " + d.string() + " --utterances 12 --seed 11") == 0,
                 "gen-corpus failed");
        const auto t1 = tree_bytes(d1);
        need(t1.size() == 25, fmt("expected 25 corpus files, saw %zu", t1.size()));
        need(t1 == tree_bytes(d2), "gen-corpus reruns differ");

        const std::string train_args = "--preset tiny --corpus " + d1.string() +
                                       " --epochs 2 --patience 2 --batch-size 4 --seed 3";
        const fs::path c1 = work / "det_a.s2a";
        const fs::path c2 = work / "det_b.s2a";
        for (const auto& c : {c1, c2})
            need(run_cli("train " + train_args + " --out " + c.string()) == 0, "train failed");
        need(slurp(c1) == slurp(c2), "train rerun checkpoints differ");
        need(slurp(fs::path(c1.string() + ".log")) == slurp(fs::path(c2.string() + ".log")),
             "train rerun logs differ");
        return "gen-corpus twice (25 files) and train twice (checkpoint + epoch log) are "
               "byte-identical with a fixed seed, single-threaded";
    });

    std::printf("ACCEPTANCE: %s\n",
                all_ok ? "all 9 criteria passed" : "at least one criterion failed");
    if (all_ok) fs::remove_all(work);
    return all_ok ? 0 : 1;
}
