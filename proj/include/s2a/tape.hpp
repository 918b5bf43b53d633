#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "s2a/errors.hpp"
#include "s2a/kernels.hpp"
#include "s2a/tensor.hpp"

namespace s2a {

using NodeId = int64_t;

// Reverse-mode autodiff over a fixed op vocabulary. Each op records a
// backward closure; backward() seeds the scalar loss node and walks the
// recorded nodes in reverse creation order, then adds leaf gradients into
// the external tensors registered through input(). Values are copied in at
// record time, so later edits to an external tensor do not change the tape.
template <typename T>
class Tape {
  public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Leaf whose gradient is written back to `t.grad` when t.requires_grad.
    NodeId input(Tensor<T>& t) {
        NodeId id = push(t);
        nodes_[id].external = &t;
        return id;
    }

    // Leaf that never receives a gradient (features, masks, targets).
    NodeId constant(const Tensor<T>& t) { return push(t); }

    const Tensor<T>& value(NodeId id) const { return nodes_.at(static_cast<size_t>(id)).value; }
    const Tensor<T>& grad(NodeId id) const { return nodes_.at(static_cast<size_t>(id)).grad; }
    int64_t size() const { return static_cast<int64_t>(nodes_.size()); }

    // c[m,n] = a[m,k] b[k,n]
    NodeId matmul(NodeId a, NodeId b) {
        const auto& av = val(a);
        const auto& bv = val(b);
        require(av.rank() == 2 && bv.rank() == 2 && av.cols() == bv.rows(),
                "matmul", av, bv);
        const int64_t m = av.rows(), k = av.cols(), n = bv.cols();
        Tensor<T> out({m, n});
        kernels::matmul(av.data.data(), bv.data.data(), out.data.data(), m, k, n);
        NodeId id = push(std::move(out));
        record(id, [this, a, b, id, m, k, n] {
            kernels::matmul_nt(g(id).data.data(), val(b).data.data(), g(a).data.data(), m, n, k,
                               true);
            kernels::matmul_tn(val(a).data.data(), g(id).data.data(), g(b).data.data(), k, m, n,
                               true);
        });
        return id;
    }

    // c[m,n] = a[m,k] b[n,k]^T
    NodeId matmul_nt(NodeId a, NodeId b) {
        const auto& av = val(a);
        const auto& bv = val(b);
        require(av.rank() == 2 && bv.rank() == 2 && av.cols() == bv.cols(),
                "matmul_nt", av, bv);
        const int64_t m = av.rows(), k = av.cols(), n = bv.rows();
        Tensor<T> out({m, n});
        kernels::matmul_nt(av.data.data(), bv.data.data(), out.data.data(), m, k, n);
        NodeId id = push(std::move(out));
        record(id, [this, a, b, id, m, k, n] {
            kernels::matmul(g(id).data.data(), val(b).data.data(), g(a).data.data(), m, n, k,
                            true);
            kernels::matmul_tn(g(id).data.data(), val(a).data.data(), g(b).data.data(), n, m, k,
                               true);
        });
        return id;
    }

    NodeId add(NodeId a, NodeId b) {
        const auto& av = val(a);
        const auto& bv = val(b);
        require(av.shape == bv.shape, "add", av, bv);
        Tensor<T> out(av.shape);
        kernels::add(av.data.data(), bv.data.data(), out.data.data(), av.numel());
        NodeId id = push(std::move(out));
        record(id, [this, a, b, id] {
            kernels::axpy(T(1), g(id).data.data(), g(a).data.data(), g(id).numel());
            kernels::axpy(T(1), g(id).data.data(), g(b).data.data(), g(id).numel());
        });
        return id;
    }

    NodeId sub(NodeId a, NodeId b) {
        const auto& av = val(a);
        const auto& bv = val(b);
        require(av.shape == bv.shape, "sub", av, bv);
        Tensor<T> out(av.shape);
        kernels::sub(av.data.data(), bv.data.data(), out.data.data(), av.numel());
        NodeId id = push(std::move(out));
        record(id, [this, a, b, id] {
            kernels::axpy(T(1), g(id).data.data(), g(a).data.data(), g(id).numel());
            kernels::axpy(T(-1), g(id).data.data(), g(b).data.data(), g(id).numel());
        });
        return id;
    }

    NodeId mul(NodeId a, NodeId b) {
        const auto& av = val(a);
        const auto& bv = val(b);
        require(av.shape == bv.shape, "mul", av, bv);
        Tensor<T> out(av.shape);
        kernels::mul(av.data.data(), bv.data.data(), out.data.data(), av.numel());
        NodeId id = push(std::move(out));
        record(id, [this, a, b, id] {
            kernels::mul_acc(g(id).data.data(), val(b).data.data(), g(a).data.data(),
                             g(id).numel());
            kernels::mul_acc(g(id).data.data(), val(a).data.data(), g(b).data.data(),
                             g(id).numel());
        });
        return id;
    }

    NodeId scale(NodeId x, T c) {
        const auto& xv = val(x);
        Tensor<T> out(xv.shape);
        kernels::scale(xv.data.data(), out.data.data(), c, xv.numel());
        NodeId id = push(std::move(out));
        record(id, [this, x, id, c] {
            kernels::axpy(c, g(id).data.data(), g(x).data.data(), g(id).numel());
        });
        return id;
    }

    // y[r,c] = x[r,c] + v[c]
    NodeId add_rowvec(NodeId x, NodeId v) {
        const auto& xv = val(x);
        const auto& vv = val(v);
        require(xv.rank() == 2 && vv.rank() == 1 && vv.shape[0] == xv.cols(),
                "add_rowvec", xv, vv);
        const int64_t rows = xv.rows(), cols = xv.cols();
        Tensor<T> out(xv.shape);
        kernels::add_rowvec(xv.data.data(), vv.data.data(), out.data.data(), rows, cols);
        NodeId id = push(std::move(out));
        record(id, [this, x, v, id, rows, cols] {
            kernels::axpy(T(1), g(id).data.data(), g(x).data.data(), rows * cols);
            const T* dy = g(id).data.data();
            T* dv = g(v).data.data();
            for (int64_t c = 0; c < cols; ++c) {
                T acc = T(0);
                for (int64_t r = 0; r < rows; ++r) acc += dy[r * cols + c];
                dv[c] += acc;
            }
        });
        return id;
    }

    NodeId relu(NodeId x) {
        const auto& xv = val(x);
        Tensor<T> out(xv.shape);
        kernels::relu(xv.data.data(), out.data.data(), xv.numel());
        NodeId id = push(std::move(out));
        record(id, [this, x, id] {
            kernels::relu_bwd(val(x).data.data(), g(id).data.data(), g(x).data.data(),
                              g(id).numel());
        });
        return id;
    }

    // Row-wise softmax. -inf entries come out exactly 0 and pass no gradient;
    // a row must keep at least one finite entry.
    NodeId softmax_rows(NodeId x) {
        const auto& xv = val(x);
        require(xv.rank() == 2, "softmax_rows", xv, xv);
        const int64_t rows = xv.rows(), cols = xv.cols();
        Tensor<T> out(xv.shape);
        kernels::softmax_rows(xv.data.data(), out.data.data(), rows, cols);
        NodeId id = push(std::move(out));
        record(id, [this, x, id, rows, cols] {
            kernels::softmax_rows_bwd(val(id).data.data(), g(id).data.data(), g(x).data.data(),
                                      rows, cols);
        });
        return id;
    }

    NodeId layer_norm(NodeId x, NodeId gain, NodeId bias, T eps) {
        const auto& xv = val(x);
        const auto& gv = val(gain);
        const auto& bv = val(bias);
        require(xv.rank() == 2 && gv.rank() == 1 && bv.rank() == 1 &&
                    gv.shape[0] == xv.cols() && bv.shape[0] == xv.cols(),
                "layer_norm", xv, gv);
        const int64_t rows = xv.rows(), cols = xv.cols();
        Tensor<T> out(xv.shape);
        auto mean = std::make_shared<std::vector<T>>(static_cast<size_t>(rows));
        auto rstd = std::make_shared<std::vector<T>>(static_cast<size_t>(rows));
        kernels::layer_norm_rows(xv.data.data(), gv.data.data(), bv.data.data(), out.data.data(),
                                 mean->data(), rstd->data(), rows, cols, eps);
        NodeId id = push(std::move(out));
        record(id, [this, x, gain, bias, id, rows, cols, mean, rstd] {
            kernels::layer_norm_rows_bwd(val(x).data.data(), val(gain).data.data(), mean->data(),
                                         rstd->data(), g(id).data.data(), g(x).data.data(),
                                         g(gain).data.data(), g(bias).data.data(), rows, cols);
        });
        return id;
    }

    // x [t,cin], w [k,cin,cout], b [cout] -> y [t,cout]; zero padding, stride 1.
    NodeId conv1d_same(NodeId x, NodeId w, NodeId b) {
        const auto& xv = val(x);
        const auto& wv = val(w);
        const auto& bv = val(b);
        require(xv.rank() == 2 && wv.rank() == 3 && bv.rank() == 1 &&
                    wv.shape[1] == xv.cols() && bv.shape[0] == wv.shape[2] &&
                    wv.shape[0] % 2 == 1,
                "conv1d_same", xv, wv);
        const int64_t t = xv.rows(), cin = xv.cols(), k = wv.shape[0], cout = wv.shape[2];
        Tensor<T> out({t, cout});
        kernels::conv1d_same(xv.data.data(), wv.data.data(), bv.data.data(), out.data.data(), t,
                             cin, cout, k);
        NodeId id = push(std::move(out));
        record(id, [this, x, w, b, id, t, cin, cout, k] {
            kernels::conv1d_same_bwd(val(x).data.data(), val(w).data.data(), g(id).data.data(),
                                     g(x).data.data(), g(w).data.data(), g(b).data.data(), t, cin,
                                     cout, k);
        });
        return id;
    }

    // Convolution evaluated only at the given output frames (sorted, unique),
    // reading input context from anywhere in x. y [nrows,cout].
    NodeId conv1d_rows(NodeId x, NodeId w, NodeId b, std::vector<int64_t> rows) {
        const auto& xv = val(x);
        const auto& wv = val(w);
        const auto& bv = val(b);
        require(xv.rank() == 2 && wv.rank() == 3 && bv.rank() == 1 &&
                    wv.shape[1] == xv.cols() && bv.shape[0] == wv.shape[2] &&
                    wv.shape[0] % 2 == 1,
                "conv1d_rows", xv, wv);
        const int64_t t = xv.rows(), cin = xv.cols(), k = wv.shape[0], cout = wv.shape[2];
        const int64_t nrows = static_cast<int64_t>(rows.size());
        for (int64_t r = 0; r < nrows; ++r) {
            if (rows[static_cast<size_t>(r)] < 0 || rows[static_cast<size_t>(r)] >= t ||
                (r > 0 && rows[static_cast<size_t>(r)] <= rows[static_cast<size_t>(r - 1)]))
                throw ValueError("conv1d_rows: rows must be sorted, unique and within [0," +
                                 std::to_string(t) + ")");
        }
        if (nrows == 0) throw ValueError("conv1d_rows: empty row set");
        Tensor<T> out({nrows, cout});
        kernels::conv1d_rows(xv.data.data(), wv.data.data(), bv.data.data(), rows.data(), nrows,
                             out.data.data(), t, cin, cout, k);
        NodeId id = push(std::move(out));
        auto rows_sp = std::make_shared<std::vector<int64_t>>(std::move(rows));
        record(id, [this, x, w, b, id, t, cin, cout, k, nrows, rows_sp] {
            kernels::conv1d_rows_bwd(val(x).data.data(), val(w).data.data(), rows_sp->data(),
                                     nrows, g(id).data.data(), g(x).data.data(),
                                     g(w).data.data(), g(b).data.data(), t, cin, cout, k);
        });
        return id;
    }

    // out[r,0] = x[rows[r], col]
    NodeId gather_col(NodeId x, const std::vector<int64_t>& rows, int64_t col) {
        const auto& xv = val(x);
        require(xv.rank() == 2 && col >= 0 && col < xv.cols(), "gather_col", xv, xv);
        const int64_t nrows = static_cast<int64_t>(rows.size());
        if (nrows == 0) throw ValueError("gather_col: empty row set");
        const int64_t cols = xv.cols();
        Tensor<T> out({nrows, 1});
        for (int64_t r = 0; r < nrows; ++r) {
            const int64_t src = rows[static_cast<size_t>(r)];
            if (src < 0 || src >= xv.rows()) throw ValueError("gather_col: row out of range");
            out.data[static_cast<size_t>(r)] = xv.data[static_cast<size_t>(src * cols + col)];
        }
        NodeId id = push(std::move(out));
        auto rows_sp = std::make_shared<std::vector<int64_t>>(rows);
        record(id, [this, x, id, col, cols, nrows, rows_sp] {
            const T* dy = g(id).data.data();
            T* dx = g(x).data.data();
            for (int64_t r = 0; r < nrows; ++r)
                dx[(*rows_sp)[static_cast<size_t>(r)] * cols + col] += dy[r];
        });
        return id;
    }

    // out [total_rows, d]: out[rows[r], :] = wvec[r,0] * y[r, :], zero elsewhere.
    NodeId scatter_rows_weighted(NodeId y, NodeId wvec, const std::vector<int64_t>& rows,
                                 int64_t total_rows) {
        const auto& yv = val(y);
        const auto& wv = val(wvec);
        const int64_t nrows = static_cast<int64_t>(rows.size());
        require(yv.rank() == 2 && wv.rank() == 2 && wv.cols() == 1 && wv.rows() == yv.rows() &&
                    yv.rows() == nrows,
                "scatter_rows_weighted", yv, wv);
        const int64_t d = yv.cols();
        Tensor<T> out({total_rows, d});
        for (int64_t r = 0; r < nrows; ++r) {
            const int64_t dst = rows[static_cast<size_t>(r)];
            if (dst < 0 || dst >= total_rows)
                throw ValueError("scatter_rows_weighted: row out of range");
            if (r > 0 && dst <= rows[static_cast<size_t>(r - 1)])
                throw ValueError("scatter_rows_weighted: rows must be sorted and unique");
            const T wr = wv.data[static_cast<size_t>(r)];
            for (int64_t c = 0; c < d; ++c)
                out.data[static_cast<size_t>(dst * d + c)] =
                    wr * yv.data[static_cast<size_t>(r * d + c)];
        }
        NodeId id = push(std::move(out));
        auto rows_sp = std::make_shared<std::vector<int64_t>>(rows);
        record(id, [this, y, wvec, id, d, nrows, rows_sp] {
            const T* do_ = g(id).data.data();
            const T* yb = val(y).data.data();
            const T* wb = val(wvec).data.data();
            T* dy = g(y).data.data();
            T* dw = g(wvec).data.data();
            for (int64_t r = 0; r < nrows; ++r) {
                const int64_t dst = (*rows_sp)[static_cast<size_t>(r)];
                T acc = T(0);
                for (int64_t c = 0; c < d; ++c) {
                    dy[r * d + c] += wb[r] * do_[dst * d + c];
                    acc += yb[r * d + c] * do_[dst * d + c];
                }
                dw[r] += acc;
            }
        });
        return id;
    }

    // Keeps the k largest entries of each row, ties broken toward the lower
    // index, and sets the rest to -inf. Gradient passes only through the
    // kept entries.
    NodeId topk_mask_rows(NodeId x, int64_t k) {
        const auto& xv = val(x);
        require(xv.rank() == 2, "topk_mask_rows", xv, xv);
        const int64_t rows = xv.rows(), cols = xv.cols();
        if (k < 1 || k > cols)
            throw ValueError("topk_mask_rows: k=" + std::to_string(k) + " outside [1," +
                             std::to_string(cols) + "]");
        Tensor<T> out(xv.shape);
        auto keep = std::make_shared<std::vector<uint8_t>>(static_cast<size_t>(rows * cols), 0);
        std::vector<int64_t> idx(static_cast<size_t>(cols));
        for (int64_t r = 0; r < rows; ++r) {
            const T* row = xv.data.data() + r * cols;
            for (int64_t c = 0; c < cols; ++c) idx[static_cast<size_t>(c)] = c;
            std::partial_sort(idx.begin(), idx.begin() + k, idx.end(),
                              [row](int64_t i, int64_t j) {
                                  return row[i] > row[j] || (row[i] == row[j] && i < j);
                              });
            T* orow = out.data.data() + r * cols;
            for (int64_t c = 0; c < cols; ++c) orow[c] = -std::numeric_limits<T>::infinity();
            for (int64_t s = 0; s < k; ++s) {
                const int64_t c = idx[static_cast<size_t>(s)];
                orow[c] = row[c];
                (*keep)[static_cast<size_t>(r * cols + c)] = 1;
            }
        }
        NodeId id = push(std::move(out));
        record(id, [this, x, id, keep] {
            const T* dy = g(id).data.data();
            T* dx = g(x).data.data();
            const int64_t n = g(id).numel();
            for (int64_t i = 0; i < n; ++i)
                if ((*keep)[static_cast<size_t>(i)]) dx[i] += dy[i];
        });
        return id;
    }

    // Zeroes rows at index >= valid_rows.
    NodeId mask_rows(NodeId x, int64_t valid_rows) {
        const auto& xv = val(x);
        require(xv.rank() == 2, "mask_rows", xv, xv);
        const int64_t rows = xv.rows(), cols = xv.cols();
        if (valid_rows < 0 || valid_rows > rows)
            throw ValueError("mask_rows: valid_rows=" + std::to_string(valid_rows) +
                             " outside [0," + std::to_string(rows) + "]");
        Tensor<T> out(xv.shape);
        std::copy(xv.data.begin(), xv.data.begin() + valid_rows * cols, out.data.begin());
        std::fill(out.data.begin() + valid_rows * cols, out.data.end(), T(0));
        NodeId id = push(std::move(out));
        record(id, [this, x, id, valid_rows, cols] {
            kernels::axpy(T(1), g(id).data.data(), g(x).data.data(), valid_rows * cols);
        });
        return id;
    }

    NodeId concat_cols(const std::vector<NodeId>& parts) {
        if (parts.empty()) throw ValueError("concat_cols: no inputs");
        const int64_t rows = val(parts[0]).rows();
        int64_t cols = 0;
        for (NodeId p : parts) {
            const auto& pv = val(p);
            require(pv.rank() == 2 && pv.rows() == rows, "concat_cols", val(parts[0]), pv);
            cols += pv.cols();
        }
        Tensor<T> out({rows, cols});
        int64_t off = 0;
        for (NodeId p : parts) {
            const auto& pv = val(p);
            const int64_t pc = pv.cols();
            for (int64_t r = 0; r < rows; ++r)
                std::copy(pv.data.begin() + r * pc, pv.data.begin() + (r + 1) * pc,
                          out.data.begin() + r * cols + off);
            off += pc;
        }
        NodeId id = push(std::move(out));
        auto parts_sp = std::make_shared<std::vector<NodeId>>(parts);
        record(id, [this, id, rows, cols, parts_sp] {
            const T* dy = g(id).data.data();
            int64_t off2 = 0;
            for (NodeId p : *parts_sp) {
                const int64_t pc = val(p).cols();
                T* dp = g(p).data.data();
                for (int64_t r = 0; r < rows; ++r)
                    for (int64_t c = 0; c < pc; ++c) dp[r * pc + c] += dy[r * cols + off2 + c];
                off2 += pc;
            }
        });
        return id;
    }

    // Columns [c0, c1).
    NodeId slice_cols(NodeId x, int64_t c0, int64_t c1) {
        const auto& xv = val(x);
        require(xv.rank() == 2, "slice_cols", xv, xv);
        const int64_t rows = xv.rows(), cols = xv.cols();
        if (c0 < 0 || c1 <= c0 || c1 > cols)
            throw ValueError("slice_cols: [" + std::to_string(c0) + "," + std::to_string(c1) +
                             ") outside [0," + std::to_string(cols) + ")");
        const int64_t w = c1 - c0;
        Tensor<T> out({rows, w});
        for (int64_t r = 0; r < rows; ++r)
            std::copy(xv.data.begin() + r * cols + c0, xv.data.begin() + r * cols + c1,
                      out.data.begin() + r * w);
        NodeId id = push(std::move(out));
        record(id, [this, x, id, c0, w, rows, cols] {
            const T* dy = g(id).data.data();
            T* dx = g(x).data.data();
            for (int64_t r = 0; r < rows; ++r)
                for (int64_t c = 0; c < w; ++c) dx[r * cols + c0 + c] += dy[r * w + c];
        });
        return id;
    }

    NodeId reduce_sum(NodeId x) {
        const auto& xv = val(x);
        Tensor<T> out({1});
        out.data[0] = kernels::reduce_sum(xv.data.data(), xv.numel());
        NodeId id = push(std::move(out));
        record(id, [this, x, id] {
            const T dy = g(id).data[0];
            T* dx = g(x).data.data();
            const int64_t n = val(x).numel();
            for (int64_t i = 0; i < n; ++i) dx[i] += dy;
        });
        return id;
    }

    NodeId reduce_mean(NodeId x) { return scale(reduce_sum(x), T(1) / T(val(x).numel())); }

    // Seeds d(loss)/d(loss) = seed and accumulates leaf gradients into the
    // tensors registered through input() whose requires_grad is set.
    void backward(NodeId loss, T seed = T(1)) {
        if (val(loss).numel() != 1)
            throw UsageError("backward: loss must be scalar, got shape " + val(loss).shape_str());
        for (auto& n : nodes_) {
            n.grad.shape = n.value.shape;
            n.grad.data.assign(n.value.data.size(), T(0));
        }
        nodes_[static_cast<size_t>(loss)].grad.data[0] = seed;
        for (size_t i = nodes_.size(); i-- > 0;)
            if (nodes_[i].backward) nodes_[i].backward();
        for (auto& n : nodes_) {
            if (n.external == nullptr || !n.external->requires_grad) continue;
            n.external->ensure_grad();
            kernels::axpy(T(1), n.grad.data.data(), n.external->grad.data(), n.value.numel());
        }
    }

  private:
    struct Node {
        Tensor<T> value;
        Tensor<T> grad;
        Tensor<T>* external = nullptr;
        std::function<void()> backward;
        Node(Tensor<T> v) : value(std::move(v)), grad(std::vector<int64_t>{1}) {}
    };

    std::vector<Node> nodes_;

    NodeId push(Tensor<T> t) {
        nodes_.emplace_back(std::move(t));
        return static_cast<NodeId>(nodes_.size() - 1);
    }
    void record(NodeId id, std::function<void()> fn) {
        nodes_[static_cast<size_t>(id)].backward = std::move(fn);
    }
    const Tensor<T>& val(NodeId id) const { return nodes_[static_cast<size_t>(id)].value; }
    Tensor<T>& g(NodeId id) { return nodes_[static_cast<size_t>(id)].grad; }
    static void require(bool ok, const char* op, const Tensor<T>& a, const Tensor<T>& b) {
        if (!ok)
            throw ShapeError(std::string(op) + ": incompatible shapes " + a.shape_str() + " and " +
                             b.shape_str());
    }
};

}  // namespace s2a
