#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "s2a/kernels.hpp"
#include "s2a/rng.hpp"

using s2a::RngState;
namespace k = s2a::kernels;

namespace {

std::vector<float> random_vec(RngState& rng, int64_t n) {
    std::vector<float> v(static_cast<size_t>(n));
    for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
    return v;
}

double time_best(const std::function<void()>& fn, int reps) {
    fn();  // warmup
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        const auto t1 = std::chrono::steady_clock::now();
        best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
    }
    return best;
}

struct Row {
    std::string kernel, size;
    double serial_ms = 0, parallel_ms = 0;
    bool bit_equal = false;
};

void print_rows(const std::vector<Row>& rows, int threads) {
    std::printf("%-18s %-22s %11s %13s %9s %10s\n", "kernel", "size", "serial_ms", "parallel_ms",
                "speedup", "bit_equal");
    for (const auto& r : rows)
        std::printf("%-18s %-22s %11.3f %13.3f %9.2f %10s\n", r.kernel.c_str(), r.size.c_str(),
                    r.serial_ms, r.parallel_ms, r.serial_ms / r.parallel_ms,
                    r.bit_equal ? "yes" : "NO");
    std::printf("threads=%d\n", threads);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Serial vs OpenMP kernel backend comparison"};
    int threads = static_cast<int>(std::thread::hardware_concurrency());
    int reps = 5;
    int64_t dim = 256;
    app.add_option("--threads", threads, "Workers for the parallel backend")
        ->capture_default_str();
    app.add_option("--reps", reps, "Timed repetitions, best-of")->capture_default_str();
    app.add_option("--dim", dim, "Base matrix dimension")->capture_default_str();
    CLI11_PARSE(app, argc, argv);
    if (threads < 1) threads = 1;
    k::set_num_threads(threads);

    RngState rng(42);
    std::vector<Row> rows;
    auto bench = [&](const std::string& name, const std::string& size, std::vector<float>& ys,
                     std::vector<float>& yp, const std::function<void()>& fs,
                     const std::function<void()>& fp) {
        Row r;
        r.kernel = name;
        r.size = size;
        r.serial_ms = time_best(fs, reps) * 1e3;
        r.parallel_ms = time_best(fp, reps) * 1e3;
        r.bit_equal = std::memcmp(ys.data(), yp.data(), ys.size() * sizeof(float)) == 0;
        rows.push_back(r);
    };

    const int64_t m = dim, kk = dim, n = dim;
    {
        auto a = random_vec(rng, m * kk), b = random_vec(rng, kk * n);
        std::vector<float> cs(static_cast<size_t>(m * n)), cp(cs);
        const std::string size = std::to_string(m) + "x" + std::to_string(kk) + "x" +
                                 std::to_string(n);
        bench("matmul", size, cs, cp,
              [&] { k::serial::matmul(a.data(), b.data(), cs.data(), m, kk, n, false); },
              [&] { k::par::matmul(a.data(), b.data(), cp.data(), m, kk, n, false); });
        bench("matmul_nt", size, cs, cp,
              [&] { k::serial::matmul_nt(a.data(), b.data(), cs.data(), m, kk, n, false); },
              [&] { k::par::matmul_nt(a.data(), b.data(), cp.data(), m, kk, n, false); });
        bench("matmul_tn", size, cs, cp,
              [&] { k::serial::matmul_tn(a.data(), b.data(), cs.data(), m, kk, n, false); },
              [&] { k::par::matmul_tn(a.data(), b.data(), cp.data(), m, kk, n, false); });
    }
    {
        const int64_t t = 4096, cin = 64, cout = 128, kw = 3;
        auto x = random_vec(rng, t * cin), w = random_vec(rng, kw * cin * cout);
        auto b = random_vec(rng, cout);
        std::vector<float> ys(static_cast<size_t>(t * cout)), yp(ys);
        bench("conv1d_same", "4096x64->128 k3", ys, yp,
              [&] { k::serial::conv1d_same(x.data(), w.data(), b.data(), ys.data(), t, cin, cout, kw); },
              [&] { k::par::conv1d_same(x.data(), w.data(), b.data(), yp.data(), t, cin, cout, kw); });
    }
    {
        const int64_t rows_n = 8192, cols = 256;
        auto x = random_vec(rng, rows_n * cols);
        auto g = random_vec(rng, cols), b = random_vec(rng, cols);
        std::vector<float> ys(static_cast<size_t>(rows_n * cols)), yp(ys);
        std::vector<float> mean(static_cast<size_t>(rows_n)), rstd(mean);
        bench("layer_norm_rows", "8192x256", ys, yp,
              [&] {
                  k::serial::layer_norm_rows(x.data(), g.data(), b.data(), ys.data(), mean.data(),
                                             rstd.data(), rows_n, cols, 1e-5f);
              },
              [&] {
                  k::par::layer_norm_rows(x.data(), g.data(), b.data(), yp.data(), mean.data(),
                                          rstd.data(), rows_n, cols, 1e-5f);
              });
        bench("softmax_rows", "8192x256", ys, yp,
              [&] { k::serial::softmax_rows(x.data(), ys.data(), rows_n, cols); },
              [&] { k::par::softmax_rows(x.data(), yp.data(), rows_n, cols); });
    }
    {
        const int64_t big = int64_t(1) << 22;
        auto a = random_vec(rng, big), b = random_vec(rng, big);
        std::vector<float> ys(static_cast<size_t>(big)), yp(ys);
        bench("add", "4194304", ys, yp,
              [&] { k::serial::add(a.data(), b.data(), ys.data(), big); },
              [&] { k::par::add(a.data(), b.data(), yp.data(), big); });
        bench("relu", "4194304", ys, yp,
              [&] { k::serial::relu(a.data(), ys.data(), big); },
              [&] { k::par::relu(a.data(), yp.data(), big); });
    }

    print_rows(rows, threads);
    for (const auto& r : rows)
        if (!r.bit_equal) return 1;
    return 0;
}
