#include "s2a/kernels.hpp"

#include <atomic>
#include <cmath>
#include <limits>

// Serial and OpenMP backends live in one translation unit and share the
// per-output-element accumulation order, so a serial run and a parallel run
// of the same kernel produce bit-identical results (the project builds with
// -ffp-contract=off to keep that property across optimization levels).

namespace s2a::kernels {

namespace {
std::atomic<Backend> g_backend{Backend::Parallel};
std::atomic<int> g_threads{1};
}  // namespace

void set_backend(Backend b) { g_backend.store(b); }
Backend backend() { return g_backend.load(); }

void set_num_threads(int n) { g_threads.store(n < 1 ? 1 : n); }
int num_threads() { return g_threads.load(); }

static bool use_parallel() { return g_backend.load() == Backend::Parallel && g_threads.load() > 1; }

// ---------------------------------------------------------------------------
// serial reference
// ---------------------------------------------------------------------------

namespace serial {

template <typename T>
void matmul(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n, bool accumulate) {
    for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < n; ++j) {
            T acc = accumulate ? c[i * n + j] : T(0);
            for (int64_t l = 0; l < k; ++l) acc += a[i * k + l] * b[l * n + j];
            c[i * n + j] = acc;
        }
    }
}

template <typename T>
void matmul_nt(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n, bool accumulate) {
    // c[m,n] = a[m,k] * b[n,k]^T
    for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < n; ++j) {
            T acc = accumulate ? c[i * n + j] : T(0);
            for (int64_t l = 0; l < k; ++l) acc += a[i * k + l] * b[j * k + l];
            c[i * n + j] = acc;
        }
    }
}

template <typename T>
void matmul_tn(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n, bool accumulate) {
    // c[m,n] = a[k,m]^T * b[k,n]
    for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < n; ++j) {
            T acc = accumulate ? c[i * n + j] : T(0);
            for (int64_t l = 0; l < k; ++l) acc += a[l * m + i] * b[l * n + j];
            c[i * n + j] = acc;
        }
    }
}

template <typename T>
void add(const T* a, const T* b, T* out, int64_t n) {
    for (int64_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

template <typename T>
void sub(const T* a, const T* b, T* out, int64_t n) {
    for (int64_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

template <typename T>
void mul(const T* a, const T* b, T* out, int64_t n) {
    for (int64_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

template <typename T>
void mul_acc(const T* a, const T* b, T* out, int64_t n) {
    for (int64_t i = 0; i < n; ++i) out[i] += a[i] * b[i];
}

template <typename T>
void scale(const T* x, T* out, T c, int64_t n) {
    for (int64_t i = 0; i < n; ++i) out[i] = x[i] * c;
}

template <typename T>
void axpy(T alpha, const T* x, T* y, int64_t n) {
    for (int64_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
void relu(const T* x, T* y, int64_t n) {
    for (int64_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename T>
void relu_bwd(const T* x, const T* dy, T* dx, int64_t n) {
    for (int64_t i = 0; i < n; ++i)
        if (x[i] > T(0)) dx[i] += dy[i];
}

template <typename T>
void add_rowvec(const T* x, const T* v, T* y, int64_t rows, int64_t cols) {
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < cols; ++c) y[r * cols + c] = x[r * cols + c] + v[c];
}

template <typename T>
void softmax_row_one(const T* x, T* y, int64_t cols) {
    T mx = -std::numeric_limits<T>::infinity();
    for (int64_t c = 0; c < cols; ++c)
        if (x[c] > mx) mx = x[c];
    T z = T(0);
    for (int64_t c = 0; c < cols; ++c) {
        // exp(-inf - mx) is exactly 0, masked entries contribute nothing
        y[c] = std::exp(x[c] - mx);
        z += y[c];
    }
    const T inv = T(1) / z;
    for (int64_t c = 0; c < cols; ++c) y[c] *= inv;
}

template <typename T>
void softmax_rows(const T* x, T* y, int64_t rows, int64_t cols) {
    for (int64_t r = 0; r < rows; ++r) softmax_row_one(x + r * cols, y + r * cols, cols);
}

template <typename T>
void softmax_row_bwd_one(const T* y, const T* dy, T* dx, int64_t cols) {
    T s = T(0);
    for (int64_t c = 0; c < cols; ++c) s += y[c] * dy[c];
    for (int64_t c = 0; c < cols; ++c) dx[c] += y[c] * (dy[c] - s);
}

template <typename T>
void softmax_rows_bwd(const T* y, const T* dy, T* dx, int64_t rows, int64_t cols) {
    for (int64_t r = 0; r < rows; ++r)
        softmax_row_bwd_one(y + r * cols, dy + r * cols, dx + r * cols, cols);
}

template <typename T>
void layer_norm_row_one(const T* x, const T* gain, const T* bias, T* y, T* mean, T* rstd,
                        int64_t cols, T eps) {
    T mu = T(0);
    for (int64_t c = 0; c < cols; ++c) mu += x[c];
    mu /= T(cols);
    T var = T(0);
    for (int64_t c = 0; c < cols; ++c) var += (x[c] - mu) * (x[c] - mu);
    var /= T(cols);
    const T r = T(1) / std::sqrt(var + eps);
    for (int64_t c = 0; c < cols; ++c) y[c] = (x[c] - mu) * r * gain[c] + bias[c];
    *mean = mu;
    *rstd = r;
}

template <typename T>
void layer_norm_rows(const T* x, const T* gain, const T* bias, T* y, T* mean, T* rstd,
                     int64_t rows, int64_t cols, T eps) {
    for (int64_t r = 0; r < rows; ++r)
        layer_norm_row_one(x + r * cols, gain, bias, y + r * cols, mean + r, rstd + r, cols, eps);
}

template <typename T>
void layer_norm_row_bwd_one(const T* x, const T* gain, T mu, T r, const T* dy, T* dx,
                            int64_t cols) {
    T a = T(0), b = T(0);
    for (int64_t c = 0; c < cols; ++c) {
        const T xh = (x[c] - mu) * r;
        const T dyg = dy[c] * gain[c];
        a += dyg;
        b += dyg * xh;
    }
    a /= T(cols);
    b /= T(cols);
    for (int64_t c = 0; c < cols; ++c) {
        const T xh = (x[c] - mu) * r;
        dx[c] += r * (dy[c] * gain[c] - a - xh * b);
    }
}

template <typename T>
void layer_norm_rows_bwd(const T* x, const T* gain, const T* mean, const T* rstd, const T* dy,
                         T* dx, T* dgain, T* dbias, int64_t rows, int64_t cols) {
    for (int64_t r = 0; r < rows; ++r)
        layer_norm_row_bwd_one(x + r * cols, gain, mean[r], rstd[r], dy + r * cols, dx + r * cols,
                               cols);
    for (int64_t c = 0; c < cols; ++c) {
        T dg = T(0), db = T(0);
        for (int64_t r = 0; r < rows; ++r) {
            const T xh = (x[r * cols + c] - mean[r]) * rstd[r];
            dg += dy[r * cols + c] * xh;
            db += dy[r * cols + c];
        }
        dgain[c] += dg;
        dbias[c] += db;
    }
}

template <typename T>
void conv_out_one(const T* x, const T* w, const T* b, T* y, int64_t t0, int64_t t, int64_t cin,
                  int64_t cout, int64_t k, int64_t co) {
    const int64_t pad = (k - 1) / 2;
    T acc = b[co];
    for (int64_t kk = 0; kk < k; ++kk) {
        const int64_t src = t0 + kk - pad;
        if (src < 0 || src >= t) continue;
        for (int64_t ci = 0; ci < cin; ++ci) acc += x[src * cin + ci] * w[(kk * cin + ci) * cout + co];
    }
    y[co] = acc;
}

template <typename T>
void conv1d_same(const T* x, const T* w, const T* b, T* y, int64_t t, int64_t cin, int64_t cout,
                 int64_t k) {
    for (int64_t t0 = 0; t0 < t; ++t0)
        for (int64_t co = 0; co < cout; ++co)
            conv_out_one(x, w, b, y + t0 * cout, t0, t, cin, cout, k, co);
}

template <typename T>
void conv1d_same_bwd(const T* x, const T* w, const T* dy, T* dx, T* dw, T* db, int64_t t,
                     int64_t cin, int64_t cout, int64_t k) {
    const int64_t pad = (k - 1) / 2;
    // dx gathered per input cell so each cell is written exactly once
    for (int64_t s = 0; s < t; ++s) {
        for (int64_t ci = 0; ci < cin; ++ci) {
            T acc = T(0);
            for (int64_t kk = 0; kk < k; ++kk) {
                const int64_t t0 = s - kk + pad;
                if (t0 < 0 || t0 >= t) continue;
                for (int64_t co = 0; co < cout; ++co)
                    acc += w[(kk * cin + ci) * cout + co] * dy[t0 * cout + co];
            }
            dx[s * cin + ci] += acc;
        }
    }
    for (int64_t kk = 0; kk < k; ++kk) {
        for (int64_t ci = 0; ci < cin; ++ci) {
            for (int64_t co = 0; co < cout; ++co) {
                T acc = T(0);
                for (int64_t t0 = 0; t0 < t; ++t0) {
                    const int64_t src = t0 + kk - pad;
                    if (src < 0 || src >= t) continue;
                    acc += x[src * cin + ci] * dy[t0 * cout + co];
                }
                dw[(kk * cin + ci) * cout + co] += acc;
            }
        }
    }
    for (int64_t co = 0; co < cout; ++co) {
        T acc = T(0);
        for (int64_t t0 = 0; t0 < t; ++t0) acc += dy[t0 * cout + co];
        db[co] += acc;
    }
}

template <typename T>
void conv1d_rows(const T* x, const T* w, const T* b, const int64_t* rows, int64_t nrows, T* y,
                 int64_t t, int64_t cin, int64_t cout, int64_t k) {
    for (int64_t r = 0; r < nrows; ++r)
        for (int64_t co = 0; co < cout; ++co)
            conv_out_one(x, w, b, y + r * cout, rows[r], t, cin, cout, k, co);
}

template <typename T>
void conv1d_rows_bwd(const T* x, const T* w, const int64_t* rows, int64_t nrows, const T* dy,
                     T* dx, T* dw, T* db, int64_t t, int64_t cin, int64_t cout, int64_t k) {
    const int64_t pad = (k - 1) / 2;
    // column-wise so concurrent row windows never collide on dx
    for (int64_t ci = 0; ci < cin; ++ci) {
        for (int64_t r = 0; r < nrows; ++r) {
            for (int64_t kk = 0; kk < k; ++kk) {
                const int64_t src = rows[r] + kk - pad;
                if (src < 0 || src >= t) continue;
                T acc = T(0);
                for (int64_t co = 0; co < cout; ++co)
                    acc += w[(kk * cin + ci) * cout + co] * dy[r * cout + co];
                dx[src * cin + ci] += acc;
            }
        }
    }
    for (int64_t kk = 0; kk < k; ++kk) {
        for (int64_t ci = 0; ci < cin; ++ci) {
            for (int64_t co = 0; co < cout; ++co) {
                T acc = T(0);
                for (int64_t r = 0; r < nrows; ++r) {
                    const int64_t src = rows[r] + kk - pad;
                    if (src < 0 || src >= t) continue;
                    acc += x[src * cin + ci] * dy[r * cout + co];
                }
                dw[(kk * cin + ci) * cout + co] += acc;
            }
        }
    }
    for (int64_t co = 0; co < cout; ++co) {
        T acc = T(0);
        for (int64_t r = 0; r < nrows; ++r) acc += dy[r * cout + co];
        db[co] += acc;
    }
}

}  // namespace serial

// ---------------------------------------------------------------------------
// OpenMP backend: same element-wise accumulation order, outer loops threaded
// ---------------------------------------------------------------------------

namespace par {

template <typename T>
void matmul(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n, bool accumulate) {
    const int nt = g_threads.load();
#pragma omp parallel for num_threads(nt) schedule(static)
    for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < n; ++j) {
            T acc = accumulate ? c[i * n + j] : T(0);
            for (int64_t l = 0; l < k; ++l) acc += a[i * k + l] * b[l * n + j];
            c[i * n + j] = acc;
        }
    }
}

template <typename T>
void matmul_nt(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n, bool accumulate) {
    const int nt = g_threads.load();
#pragma omp parallel for num_threads(nt) schedule(static)
    for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < n; ++j) {
            T acc = accumulate ? c[i * n + j] : T(0);
            for (int64_t l = 0; l < k; ++l) acc += a[i * k + l] * b[j * k + l];
            c[i * n + j] = acc;
        }
    }
}

template <typename T>
void matmul_tn(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n, bool accumulate) {
    const int nt = g_threads.load();
#pragma omp parallel for num_threads(nt) schedule(static)
    for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < n; ++j) {
            T acc = accumulate ? c[i * n + j] : T(0);
            for (int64_t l = 0; l < k; ++l) acc += a[l * m + i] * b[l * n + j];
            c[i * n + j] = acc;
        }
    }
}

template <typename T>
void add(const T* a, const T* b, T* out, int64_t n) {
    const int nt = g_threads.load();
#pragma omp parallel for num_threads(nt) schedule(static)
    for (int64_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

template <typename T>
void sub(const T* a, const T* b, T* out, int64_t n) {
    const int nt = g_threads.load();
#pragma omp parallel for num_threads(nt) schedule(static)
    for (int64_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

template <typename T>
void mul(const T* a, const T* b, T* out, int64_t n) {
    const int nt = g_threads.load();
#pragma omp parallel for num_threads(nt) schedule(static)
    for (int64_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

template <typename T>
void mul_acc(const T* a, const T* b, T* out, int64_t n) {
    const int nt = g_threads.load();
#pragma omp parallel for num_threads(nt) schedule(static)
    for (int64_t i = 0; i < n; ++i) out[i] += a[i] * b[i];
}

template <typename T>
void scale(const T* x, T* out, T c, int64_t n) {
    const int nt = g_threads.load();
#pragma omp parallel for num_threads(nt) schedule(static)
    for (int64_t i = 0; i < n; ++i) out[i] = x[i] * c;
}

template <typename T>
void axpy(T alpha, const T* x, T* y, int64_t n) {
    const int nt = g_threads.load();
#pragma omp parallel for num_threads(nt) schedule(static)
    for (int64_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
void relu(const T* x, T* y, int64_t n) {
    const int nt = g_threads.load();
#pragma omp parallel for num_threads(nt) schedule(static)
    for (int64_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename T>
void relu_bwd(const T* x, const T* dy, T* dx, int64_t n) {
    const int nt = g_threads.load();
#pragma omp parallel for num_threads(nt) schedule(static)
    for (int64_t i = 0; i < n; ++i)
        if (x[i] > T(0)) dx[i] += dy[i];
}

template <typename T>
void add_rowvec(const T* x, const T* v, T* y, int64_t rows, int64_t cols) {
    const int nt = g_threads.load();
#pragma omp parallel for num_threads(nt) schedule(static)
    for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < cols; ++c) y[r * cols + c] = x[r * cols + c] + v[c];
}

template <typename T>
void softmax_rows(const T* x, T* y, int64_t rows, int64_t cols) {
    const int nt = g_threads.load();
#pragma omp parallel for num_threads(nt) schedule(static)
    for (int64_t r = 0; r < rows; ++r) serial::softmax_row_one(x + r * cols, y + r * cols, cols);
}

template <typename T>
void softmax_rows_bwd(const T* y, const T* dy, T* dx, int64_t rows, int64_t cols) {
    const int nt = g_threads.load();
#pragma omp parallel for num_threads(nt) schedule(static)
    for (int64_t r = 0; r < rows; ++r)
        serial::softmax_row_bwd_one(y + r * cols, dy + r * cols, dx + r * cols, cols);
}

template <typename T>
void layer_norm_rows(const T* x, const T* gain, const T* bias, T* y, T* mean, T* rstd,
                     int64_t rows, int64_t cols, T eps) {
    const int nt = g_threads.load();
#pragma omp parallel for num_threads(nt) schedule(static)
    for (int64_t r = 0; r < rows; ++r)
        serial::layer_norm_row_one(x + r * cols, gain, bias, y + r * cols, mean + r, rstd + r,
                                   cols, eps);
}

template <typename T>
void layer_norm_rows_bwd(const T* x, const T* gain, const T* mean, const T* rstd, const T* dy,
                         T* dx, T* dgain, T* dbias, int64_t rows, int64_t cols) {
    const int nt = g_threads.load();
#pragma omp parallel for num_threads(nt) schedule(static)
    for (int64_t r = 0; r < rows; ++r)
        serial::layer_norm_row_bwd_one(x + r * cols, gain, mean[r], rstd[r], dy + r * cols,
                                       dx + r * cols, cols);
#pragma omp parallel for num_threads(nt) schedule(static)
    for (int64_t c = 0; c < cols; ++c) {
        T dg = T(0), db = T(0);
        for (int64_t r = 0; r < rows; ++r) {
            const T xh = (x[r * cols + c] - mean[r]) * rstd[r];
            dg += dy[r * cols + c] * xh;
            db += dy[r * cols + c];
        }
        dgain[c] += dg;
        dbias[c] += db;
    }
}

template <typename T>
void conv1d_same(const T* x, const T* w, const T* b, T* y, int64_t t, int64_t cin, int64_t cout,
                 int64_t k) {
    const int nt = g_threads.load();
#pragma omp parallel for num_threads(nt) schedule(static)
    for (int64_t t0 = 0; t0 < t; ++t0)
        for (int64_t co = 0; co < cout; ++co)
            serial::conv_out_one(x, w, b, y + t0 * cout, t0, t, cin, cout, k, co);
}

template <typename T>
void conv1d_same_bwd(const T* x, const T* w, const T* dy, T* dx, T* dw, T* db, int64_t t,
                     int64_t cin, int64_t cout, int64_t k) {
    const int nt = g_threads.load();
    const int64_t pad = (k - 1) / 2;
#pragma omp parallel for num_threads(nt) schedule(static)
    for (int64_t s = 0; s < t; ++s) {
        for (int64_t ci = 0; ci < cin; ++ci) {
            T acc = T(0);
            for (int64_t kk = 0; kk < k; ++kk) {
                const int64_t t0 = s - kk + pad;
                if (t0 < 0 || t0 >= t) continue;
                for (int64_t co = 0; co < cout; ++co)
                    acc += w[(kk * cin + ci) * cout + co] * dy[t0 * cout + co];
            }
            dx[s * cin + ci] += acc;
        }
    }
#pragma omp parallel for num_threads(nt) schedule(static) collapse(2)
    for (int64_t kk = 0; kk < k; ++kk) {
        for (int64_t ci = 0; ci < cin; ++ci) {
            for (int64_t co = 0; co < cout; ++co) {
                T acc = T(0);
                for (int64_t t0 = 0; t0 < t; ++t0) {
                    const int64_t src = t0 + kk - pad;
                    if (src < 0 || src >= t) continue;
                    acc += x[src * cin + ci] * dy[t0 * cout + co];
                }
                dw[(kk * cin + ci) * cout + co] += acc;
            }
        }
    }
#pragma omp parallel for num_threads(nt) schedule(static)
    for (int64_t co = 0; co < cout; ++co) {
        T acc = T(0);
        for (int64_t t0 = 0; t0 < t; ++t0) acc += dy[t0 * cout + co];
        db[co] += acc;
    }
}

template <typename T>
void conv1d_rows(const T* x, const T* w, const T* b, const int64_t* rows, int64_t nrows, T* y,
                 int64_t t, int64_t cin, int64_t cout, int64_t k) {
    const int nt = g_threads.load();
#pragma omp parallel for num_threads(nt) schedule(static)
    for (int64_t r = 0; r < nrows; ++r)
        for (int64_t co = 0; co < cout; ++co)
            serial::conv_out_one(x, w, b, y + r * cout, rows[r], t, cin, cout, k, co);
}

template <typename T>
void conv1d_rows_bwd(const T* x, const T* w, const int64_t* rows, int64_t nrows, const T* dy,
                     T* dx, T* dw, T* db, int64_t t, int64_t cin, int64_t cout, int64_t k) {
    const int nt = g_threads.load();
    const int64_t pad = (k - 1) / 2;
#pragma omp parallel for num_threads(nt) schedule(static)
    for (int64_t ci = 0; ci < cin; ++ci) {
        for (int64_t r = 0; r < nrows; ++r) {
            for (int64_t kk = 0; kk < k; ++kk) {
                const int64_t src = rows[r] + kk - pad;
                if (src < 0 || src >= t) continue;
                T acc = T(0);
                for (int64_t co = 0; co < cout; ++co)
                    acc += w[(kk * cin + ci) * cout + co] * dy[r * cout + co];
                dx[src * cin + ci] += acc;
            }
        }
    }
#pragma omp parallel for num_threads(nt) schedule(static) collapse(2)
    for (int64_t kk = 0; kk < k; ++kk) {
        for (int64_t ci = 0; ci < cin; ++ci) {
            for (int64_t co = 0; co < cout; ++co) {
                T acc = T(0);
                for (int64_t r = 0; r < nrows; ++r) {
                    const int64_t src = rows[r] + kk - pad;
                    if (src < 0 || src >= t) continue;
                    acc += x[src * cin + ci] * dy[r * cout + co];
                }
                dw[(kk * cin + ci) * cout + co] += acc;
            }
        }
    }
#pragma omp parallel for num_threads(nt) schedule(static)
    for (int64_t co = 0; co < cout; ++co) {
        T acc = T(0);
        for (int64_t r = 0; r < nrows; ++r) acc += dy[r * cout + co];
        db[co] += acc;
    }
}

}  // namespace par

// ---------------------------------------------------------------------------
// dispatch
// ---------------------------------------------------------------------------

template <typename T>
void matmul(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n, bool accumulate) {
    use_parallel() ? par::matmul(a, b, c, m, k, n, accumulate)
                   : serial::matmul(a, b, c, m, k, n, accumulate);
}
template <typename T>
void matmul_nt(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n, bool accumulate) {
    use_parallel() ? par::matmul_nt(a, b, c, m, k, n, accumulate)
                   : serial::matmul_nt(a, b, c, m, k, n, accumulate);
}
template <typename T>
void matmul_tn(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n, bool accumulate) {
    use_parallel() ? par::matmul_tn(a, b, c, m, k, n, accumulate)
                   : serial::matmul_tn(a, b, c, m, k, n, accumulate);
}
template <typename T>
void add(const T* a, const T* b, T* out, int64_t n) {
    use_parallel() ? par::add(a, b, out, n) : serial::add(a, b, out, n);
}
template <typename T>
void sub(const T* a, const T* b, T* out, int64_t n) {
    use_parallel() ? par::sub(a, b, out, n) : serial::sub(a, b, out, n);
}
template <typename T>
void mul(const T* a, const T* b, T* out, int64_t n) {
    use_parallel() ? par::mul(a, b, out, n) : serial::mul(a, b, out, n);
}
template <typename T>
void mul_acc(const T* a, const T* b, T* out, int64_t n) {
    use_parallel() ? par::mul_acc(a, b, out, n) : serial::mul_acc(a, b, out, n);
}
template <typename T>
void scale(const T* x, T* out, T c, int64_t n) {
    use_parallel() ? par::scale(x, out, c, n) : serial::scale(x, out, c, n);
}
template <typename T>
void axpy(T alpha, const T* x, T* y, int64_t n) {
    use_parallel() ? par::axpy(alpha, x, y, n) : serial::axpy(alpha, x, y, n);
}
template <typename T>
void relu(const T* x, T* y, int64_t n) {
    use_parallel() ? par::relu(x, y, n) : serial::relu(x, y, n);
}
template <typename T>
void relu_bwd(const T* x, const T* dy, T* dx, int64_t n) {
    use_parallel() ? par::relu_bwd(x, dy, dx, n) : serial::relu_bwd(x, dy, dx, n);
}
template <typename T>
void add_rowvec(const T* x, const T* v, T* y, int64_t rows, int64_t cols) {
    use_parallel() ? par::add_rowvec(x, v, y, rows, cols) : serial::add_rowvec(x, v, y, rows, cols);
}
template <typename T>
void softmax_rows(const T* x, T* y, int64_t rows, int64_t cols) {
    use_parallel() ? par::softmax_rows(x, y, rows, cols) : serial::softmax_rows(x, y, rows, cols);
}
template <typename T>
void softmax_rows_bwd(const T* y, const T* dy, T* dx, int64_t rows, int64_t cols) {
    use_parallel() ? par::softmax_rows_bwd(y, dy, dx, rows, cols)
                   : serial::softmax_rows_bwd(y, dy, dx, rows, cols);
}
template <typename T>
void layer_norm_rows(const T* x, const T* gain, const T* bias, T* y, T* mean, T* rstd,
                     int64_t rows, int64_t cols, T eps) {
    use_parallel() ? par::layer_norm_rows(x, gain, bias, y, mean, rstd, rows, cols, eps)
                   : serial::layer_norm_rows(x, gain, bias, y, mean, rstd, rows, cols, eps);
}
template <typename T>
void layer_norm_rows_bwd(const T* x, const T* gain, const T* mean, const T* rstd, const T* dy,
                         T* dx, T* dgain, T* dbias, int64_t rows, int64_t cols) {
    use_parallel()
        ? par::layer_norm_rows_bwd(x, gain, mean, rstd, dy, dx, dgain, dbias, rows, cols)
        : serial::layer_norm_rows_bwd(x, gain, mean, rstd, dy, dx, dgain, dbias, rows, cols);
}
template <typename T>
void conv1d_same(const T* x, const T* w, const T* b, T* y, int64_t t, int64_t cin, int64_t cout,
                 int64_t k) {
    use_parallel() ? par::conv1d_same(x, w, b, y, t, cin, cout, k)
                   : serial::conv1d_same(x, w, b, y, t, cin, cout, k);
}
template <typename T>
void conv1d_same_bwd(const T* x, const T* w, const T* dy, T* dx, T* dw, T* db, int64_t t,
                     int64_t cin, int64_t cout, int64_t k) {
    use_parallel() ? par::conv1d_same_bwd(x, w, dy, dx, dw, db, t, cin, cout, k)
                   : serial::conv1d_same_bwd(x, w, dy, dx, dw, db, t, cin, cout, k);
}
template <typename T>
void conv1d_rows(const T* x, const T* w, const T* b, const int64_t* rows, int64_t nrows, T* y,
                 int64_t t, int64_t cin, int64_t cout, int64_t k) {
    use_parallel() ? par::conv1d_rows(x, w, b, rows, nrows, y, t, cin, cout, k)
                   : serial::conv1d_rows(x, w, b, rows, nrows, y, t, cin, cout, k);
}
template <typename T>
void conv1d_rows_bwd(const T* x, const T* w, const int64_t* rows, int64_t nrows, const T* dy,
                     T* dx, T* dw, T* db, int64_t t, int64_t cin, int64_t cout, int64_t k) {
    use_parallel() ? par::conv1d_rows_bwd(x, w, rows, nrows, dy, dx, dw, db, t, cin, cout, k)
                   : serial::conv1d_rows_bwd(x, w, rows, nrows, dy, dx, dw, db, t, cin, cout, k);
}

template <typename T>
T reduce_sum(const T* x, int64_t n) {
    T acc = T(0);
    for (int64_t i = 0; i < n; ++i) acc += x[i];
    return acc;
}
template <typename T>
T sq_norm(const T* x, int64_t n) {
    T acc = T(0);
    for (int64_t i = 0; i < n; ++i) acc += x[i] * x[i];
    return acc;
}

// explicit instantiations: float for training/inference, double for checks
#define S2A_INSTANTIATE_KERNELS(T)                                                               \
    template void serial::matmul<T>(const T*, const T*, T*, int64_t, int64_t, int64_t, bool);    \
    template void serial::matmul_nt<T>(const T*, const T*, T*, int64_t, int64_t, int64_t, bool); \
    template void serial::matmul_tn<T>(const T*, const T*, T*, int64_t, int64_t, int64_t, bool); \
    template void serial::add<T>(const T*, const T*, T*, int64_t);                               \
    template void serial::sub<T>(const T*, const T*, T*, int64_t);                               \
    template void serial::mul<T>(const T*, const T*, T*, int64_t);                               \
    template void serial::mul_acc<T>(const T*, const T*, T*, int64_t);                           \
    template void serial::scale<T>(const T*, T*, T, int64_t);                                    \
    template void serial::axpy<T>(T, const T*, T*, int64_t);                                     \
    template void serial::relu<T>(const T*, T*, int64_t);                                        \
    template void serial::relu_bwd<T>(const T*, const T*, T*, int64_t);                          \
    template void serial::add_rowvec<T>(const T*, const T*, T*, int64_t, int64_t);               \
    template void serial::softmax_rows<T>(const T*, T*, int64_t, int64_t);                       \
    template void serial::softmax_rows_bwd<T>(const T*, const T*, T*, int64_t, int64_t);         \
    template void serial::layer_norm_rows<T>(const T*, const T*, const T*, T*, T*, T*, int64_t,  \
                                             int64_t, T);                                        \
    template void serial::layer_norm_rows_bwd<T>(const T*, const T*, const T*, const T*,         \
                                                 const T*, T*, T*, T*, int64_t, int64_t);        \
    template void serial::conv1d_same<T>(const T*, const T*, const T*, T*, int64_t, int64_t,     \
                                         int64_t, int64_t);                                      \
    template void serial::conv1d_same_bwd<T>(const T*, const T*, const T*, T*, T*, T*, int64_t,  \
                                             int64_t, int64_t, int64_t);                         \
    template void serial::conv1d_rows<T>(const T*, const T*, const T*, const int64_t*, int64_t,  \
                                         T*, int64_t, int64_t, int64_t, int64_t);                \
    template void serial::conv1d_rows_bwd<T>(const T*, const T*, const int64_t*, int64_t,        \
                                             const T*, T*, T*, T*, int64_t, int64_t, int64_t,    \
                                             int64_t);                                           \
    template void par::matmul<T>(const T*, const T*, T*, int64_t, int64_t, int64_t, bool);       \
    template void par::matmul_nt<T>(const T*, const T*, T*, int64_t, int64_t, int64_t, bool);    \
    template void par::matmul_tn<T>(const T*, const T*, T*, int64_t, int64_t, int64_t, bool);    \
    template void par::add<T>(const T*, const T*, T*, int64_t);                                  \
    template void par::sub<T>(const T*, const T*, T*, int64_t);                                  \
    template void par::mul<T>(const T*, const T*, T*, int64_t);                                  \
    template void par::mul_acc<T>(const T*, const T*, T*, int64_t);                              \
    template void par::scale<T>(const T*, T*, T, int64_t);                                       \
    template void par::axpy<T>(T, const T*, T*, int64_t);                                        \
    template void par::relu<T>(const T*, T*, int64_t);                                           \
    template void par::relu_bwd<T>(const T*, const T*, T*, int64_t);                             \
    template void par::add_rowvec<T>(const T*, const T*, T*, int64_t, int64_t);                  \
    template void par::softmax_rows<T>(const T*, T*, int64_t, int64_t);                          \
    template void par::softmax_rows_bwd<T>(const T*, const T*, T*, int64_t, int64_t);            \
    template void par::layer_norm_rows<T>(const T*, const T*, const T*, T*, T*, T*, int64_t,     \
                                          int64_t, T);                                           \
    template void par::layer_norm_rows_bwd<T>(const T*, const T*, const T*, const T*, const T*,  \
                                              T*, T*, T*, int64_t, int64_t);                     \
    template void par::conv1d_same<T>(const T*, const T*, const T*, T*, int64_t, int64_t,        \
                                      int64_t, int64_t);                                         \
    template void par::conv1d_same_bwd<T>(const T*, const T*, const T*, T*, T*, T*, int64_t,     \
                                          int64_t, int64_t, int64_t);                            \
    template void par::conv1d_rows<T>(const T*, const T*, const T*, const int64_t*, int64_t, T*, \
                                      int64_t, int64_t, int64_t, int64_t);                       \
    template void par::conv1d_rows_bwd<T>(const T*, const T*, const int64_t*, int64_t, const T*, \
                                          T*, T*, T*, int64_t, int64_t, int64_t, int64_t);       \
    template void matmul<T>(const T*, const T*, T*, int64_t, int64_t, int64_t, bool);            \
    template void matmul_nt<T>(const T*, const T*, T*, int64_t, int64_t, int64_t, bool);         \
    template void matmul_tn<T>(const T*, const T*, T*, int64_t, int64_t, int64_t, bool);         \
    template void add<T>(const T*, const T*, T*, int64_t);                                       \
    template void sub<T>(const T*, const T*, T*, int64_t);                                       \
    template void mul<T>(const T*, const T*, T*, int64_t);                                       \
    template void mul_acc<T>(const T*, const T*, T*, int64_t);                                   \
    template void scale<T>(const T*, T*, T, int64_t);                                            \
    template void axpy<T>(T, const T*, T*, int64_t);                                             \
    template void relu<T>(const T*, T*, int64_t);                                                \
    template void relu_bwd<T>(const T*, const T*, T*, int64_t);                                  \
    template void add_rowvec<T>(const T*, const T*, T*, int64_t, int64_t);                       \
    template void softmax_rows<T>(const T*, T*, int64_t, int64_t);                               \
    template void softmax_rows_bwd<T>(const T*, const T*, T*, int64_t, int64_t);                 \
    template void layer_norm_rows<T>(const T*, const T*, const T*, T*, T*, T*, int64_t, int64_t, \
                                     T);                                                         \
    template void layer_norm_rows_bwd<T>(const T*, const T*, const T*, const T*, const T*, T*,   \
                                         T*, T*, int64_t, int64_t);                              \
    template void conv1d_same<T>(const T*, const T*, const T*, T*, int64_t, int64_t, int64_t,    \
                                 int64_t);                                                       \
    template void conv1d_same_bwd<T>(const T*, const T*, const T*, T*, T*, T*, int64_t, int64_t, \
                                     int64_t, int64_t);                                          \
    template void conv1d_rows<T>(const T*, const T*, const T*, const int64_t*, int64_t, T*,      \
                                 int64_t, int64_t, int64_t, int64_t);                            \
    template void conv1d_rows_bwd<T>(const T*, const T*, const int64_t*, int64_t, const T*, T*,  \
                                     T*, T*, int64_t, int64_t, int64_t, int64_t);                \
    template T reduce_sum<T>(const T*, int64_t);                                                 \
    template T sq_norm<T>(const T*, int64_t);

S2A_INSTANTIATE_KERNELS(float)
S2A_INSTANTIATE_KERNELS(double)

#undef S2A_INSTANTIATE_KERNELS

}  // namespace s2a::kernels
