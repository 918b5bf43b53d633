#pragma once

#include <cstdint>

namespace s2a::kernels {

// Two implementations of every compute kernel: a plain serial reference and
// an OpenMP version parallelized over independent output elements. Both
// accumulate per output element in the same order, so results are expected
// to match bit for bit; tests assert that. The dispatch functions below
// route through the process-global backend selection.
enum class Backend { Serial, Parallel };

void set_backend(Backend b);
Backend backend();

// Worker count used by the Parallel backend. Defaults to 1: runs are
// reproducible unless threads are raised explicitly.
void set_num_threads(int n);
int num_threads();

namespace serial {

template <typename T>
void matmul(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n, bool accumulate);
template <typename T>
void matmul_nt(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n, bool accumulate);
template <typename T>
void matmul_tn(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n, bool accumulate);

template <typename T>
void add(const T* a, const T* b, T* out, int64_t n);
template <typename T>
void sub(const T* a, const T* b, T* out, int64_t n);
template <typename T>
void mul(const T* a, const T* b, T* out, int64_t n);
template <typename T>
void mul_acc(const T* a, const T* b, T* out, int64_t n);  // out += a*b
template <typename T>
void scale(const T* x, T* out, T c, int64_t n);
template <typename T>
void axpy(T alpha, const T* x, T* y, int64_t n);  // y += alpha*x
template <typename T>
void relu(const T* x, T* y, int64_t n);
template <typename T>
void relu_bwd(const T* x, const T* dy, T* dx, int64_t n);  // dx += dy * (x>0)
template <typename T>
void add_rowvec(const T* x, const T* v, T* y, int64_t rows, int64_t cols);

template <typename T>
void softmax_rows(const T* x, T* y, int64_t rows, int64_t cols);
template <typename T>
void softmax_rows_bwd(const T* y, const T* dy, T* dx, int64_t rows, int64_t cols);

template <typename T>
void layer_norm_rows(const T* x, const T* gain, const T* bias, T* y, T* mean, T* rstd,
                     int64_t rows, int64_t cols, T eps);
template <typename T>
void layer_norm_rows_bwd(const T* x, const T* gain, const T* mean, const T* rstd, const T* dy,
                         T* dx, T* dgain, T* dbias, int64_t rows, int64_t cols);

template <typename T>
void conv1d_same(const T* x, const T* w, const T* b, T* y, int64_t t, int64_t cin, int64_t cout,
                 int64_t k);
template <typename T>
void conv1d_same_bwd(const T* x, const T* w, const T* dy, T* dx, T* dw, T* db, int64_t t,
                     int64_t cin, int64_t cout, int64_t k);
// Convolution output restricted to the given output frames (sorted, unique).
template <typename T>
void conv1d_rows(const T* x, const T* w, const T* b, const int64_t* rows, int64_t nrows, T* y,
                 int64_t t, int64_t cin, int64_t cout, int64_t k);
template <typename T>
void conv1d_rows_bwd(const T* x, const T* w, const int64_t* rows, int64_t nrows, const T* dy,
                     T* dx, T* dw, T* db, int64_t t, int64_t cin, int64_t cout, int64_t k);

}  // namespace serial

namespace par {

template <typename T>
void matmul(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n, bool accumulate);
template <typename T>
void matmul_nt(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n, bool accumulate);
template <typename T>
void matmul_tn(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n, bool accumulate);

template <typename T>
void add(const T* a, const T* b, T* out, int64_t n);
template <typename T>
void sub(const T* a, const T* b, T* out, int64_t n);
template <typename T>
void mul(const T* a, const T* b, T* out, int64_t n);
template <typename T>
void mul_acc(const T* a, const T* b, T* out, int64_t n);
template <typename T>
void scale(const T* x, T* out, T c, int64_t n);
template <typename T>
void axpy(T alpha, const T* x, T* y, int64_t n);
template <typename T>
void relu(const T* x, T* y, int64_t n);
template <typename T>
void relu_bwd(const T* x, const T* dy, T* dx, int64_t n);
template <typename T>
void add_rowvec(const T* x, const T* v, T* y, int64_t rows, int64_t cols);

template <typename T>
void softmax_rows(const T* x, T* y, int64_t rows, int64_t cols);
template <typename T>
void softmax_rows_bwd(const T* y, const T* dy, T* dx, int64_t rows, int64_t cols);

template <typename T>
void layer_norm_rows(const T* x, const T* gain, const T* bias, T* y, T* mean, T* rstd,
                     int64_t rows, int64_t cols, T eps);
template <typename T>
void layer_norm_rows_bwd(const T* x, const T* gain, const T* mean, const T* rstd, const T* dy,
                         T* dx, T* dgain, T* dbias, int64_t rows, int64_t cols);

template <typename T>
void conv1d_same(const T* x, const T* w, const T* b, T* y, int64_t t, int64_t cin, int64_t cout,
                 int64_t k);
template <typename T>
void conv1d_same_bwd(const T* x, const T* w, const T* dy, T* dx, T* dw, T* db, int64_t t,
                     int64_t cin, int64_t cout, int64_t k);
template <typename T>
void conv1d_rows(const T* x, const T* w, const T* b, const int64_t* rows, int64_t nrows, T* y,
                 int64_t t, int64_t cin, int64_t cout, int64_t k);
template <typename T>
void conv1d_rows_bwd(const T* x, const T* w, const int64_t* rows, int64_t nrows, const T* dy,
                     T* dx, T* dw, T* db, int64_t t, int64_t cin, int64_t cout, int64_t k);

}  // namespace par

// Dispatch through the selected backend.
template <typename T>
void matmul(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n, bool accumulate = false);
template <typename T>
void matmul_nt(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n,
               bool accumulate = false);
template <typename T>
void matmul_tn(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n,
               bool accumulate = false);
template <typename T>
void add(const T* a, const T* b, T* out, int64_t n);
template <typename T>
void sub(const T* a, const T* b, T* out, int64_t n);
template <typename T>
void mul(const T* a, const T* b, T* out, int64_t n);
template <typename T>
void mul_acc(const T* a, const T* b, T* out, int64_t n);
template <typename T>
void scale(const T* x, T* out, T c, int64_t n);
template <typename T>
void axpy(T alpha, const T* x, T* y, int64_t n);
template <typename T>
void relu(const T* x, T* y, int64_t n);
template <typename T>
void relu_bwd(const T* x, const T* dy, T* dx, int64_t n);
template <typename T>
void add_rowvec(const T* x, const T* v, T* y, int64_t rows, int64_t cols);
template <typename T>
void softmax_rows(const T* x, T* y, int64_t rows, int64_t cols);
template <typename T>
void softmax_rows_bwd(const T* y, const T* dy, T* dx, int64_t rows, int64_t cols);
template <typename T>
void layer_norm_rows(const T* x, const T* gain, const T* bias, T* y, T* mean, T* rstd,
                     int64_t rows, int64_t cols, T eps);
template <typename T>
void layer_norm_rows_bwd(const T* x, const T* gain, const T* mean, const T* rstd, const T* dy,
                         T* dx, T* dgain, T* dbias, int64_t rows, int64_t cols);
template <typename T>
void conv1d_same(const T* x, const T* w, const T* b, T* y, int64_t t, int64_t cin, int64_t cout,
                 int64_t k);
template <typename T>
void conv1d_same_bwd(const T* x, const T* w, const T* dy, T* dx, T* dw, T* db, int64_t t,
                     int64_t cin, int64_t cout, int64_t k);
template <typename T>
void conv1d_rows(const T* x, const T* w, const T* b, const int64_t* rows, int64_t nrows, T* y,
                 int64_t t, int64_t cin, int64_t cout, int64_t k);
template <typename T>
void conv1d_rows_bwd(const T* x, const T* w, const int64_t* rows, int64_t nrows, const T* dy,
                     T* dx, T* dw, T* db, int64_t t, int64_t cin, int64_t cout, int64_t k);

// Serial reductions. Kept off the parallel backend so accumulation order
// never depends on the thread count.
template <typename T>
T reduce_sum(const T* x, int64_t n);
template <typename T>
T sq_norm(const T* x, int64_t n);

}  // namespace s2a::kernels
