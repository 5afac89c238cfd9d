#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "flupre/errors.hpp"
#include "flupre/tensor.hpp"

namespace flupre::nn {

// ---------------------------------------------------------------------------
// Raw GEMM kernels. Loop orders keep the innermost loop contiguous so the
// compiler can vectorize them; all matrices are dense row-major.
// ---------------------------------------------------------------------------

// C(m x n) = A(m x k) * B(k x n), optionally accumulating into C.
template <typename T>
inline void gemm(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
                 bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
        T* crow = c + i * n;
        if (!accumulate) std::fill(crow, crow + n, T(0));
        const T* arow = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const T av = arow[p];
            if (av == T(0)) continue;
            const T* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C(m x n) += A^T * B with A(k x m), B(k x n). Weight-gradient shape.
template <typename T>
inline void gemm_at_b(const T* a, const T* b, T* c, std::size_t k, std::size_t m,
                      std::size_t n) {
    for (std::size_t p = 0; p < k; ++p) {
        const T* arow = a + p * m;
        const T* brow = b + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            const T av = arow[i];
            if (av == T(0)) continue;
            T* crow = c + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C(m x k) += A * B^T with A(m x n), B(k x n). Input-gradient shape.
template <typename T>
inline void gemm_a_bt(const T* a, const T* b, T* c, std::size_t m, std::size_t n,
                      std::size_t k) {
    for (std::size_t i = 0; i < m; ++i) {
        const T* arow = a + i * n;
        T* crow = c + i * k;
        for (std::size_t l = 0; l < k; ++l) {
            const T* brow = b + l * n;
            T acc = T(0);
            for (std::size_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
            crow[l] += acc;
        }
    }
}

// ---------------------------------------------------------------------------
// Linear layer
// ---------------------------------------------------------------------------

// y = x * w + b, x: N x F, w: F x G, b: G.
template <typename T>
inline Tensor<T> linear_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    if (x.rank() != 2 || w.rank() != 2 || x.cols() != w.rows())
        throw ShapeError("linear: input " + x.shape_str() + " vs weight " + w.shape_str());
    const std::size_t n = x.rows(), f = x.cols(), g = w.cols();
    require_shape(b, {g}, "linear bias");
    Tensor<T> y({n, g});
    for (std::size_t i = 0; i < n; ++i) std::copy(b.data.begin(), b.data.end(), y.row(i));
    gemm(x.data.data(), w.data.data(), y.data.data(), n, f, g, /*accumulate=*/true);
    return y;
}

// Accumulates dw, db; adds x-gradient into dx when given.
template <typename T>
inline void linear_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy,
                            Tensor<T>& dw, Tensor<T>& db, Tensor<T>* dx = nullptr) {
    const std::size_t n = x.rows(), f = x.cols(), g = w.cols();
    if (dy.rows() != n || dy.cols() != g)
        throw ShapeError("linear backward: dy " + dy.shape_str() + " vs output (" +
                         std::to_string(n) + "x" + std::to_string(g) + ")");
    gemm_at_b(x.data.data(), dy.data.data(), dw.data.data(), n, f, g);
    for (std::size_t i = 0; i < n; ++i) {
        const T* dr = dy.row(i);
        for (std::size_t j = 0; j < g; ++j) db[j] += dr[j];
    }
    if (dx) gemm_a_bt(dy.data.data(), w.data.data(), dx->data.data(), n, g, f);
}

// ---------------------------------------------------------------------------
// Embedding lookup
// ---------------------------------------------------------------------------

template <typename T>
inline Tensor<T> embedding_forward(const std::vector<int>& ids, const Tensor<T>& table) {
    Tensor<T> rows({ids.size(), table.cols()});
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= table.rows())
            throw IndexError("embedding: id " + std::to_string(ids[i]) + " outside table of " +
                             std::to_string(table.rows()) + " rows");
        std::copy(table.row(static_cast<std::size_t>(ids[i])),
                  table.row(static_cast<std::size_t>(ids[i])) + table.cols(), rows.row(i));
    }
    return rows;
}

template <typename T>
inline void embedding_backward(const std::vector<int>& ids, const Tensor<T>& d_rows,
                               Tensor<T>& d_table) {
    for (std::size_t i = 0; i < ids.size(); ++i) {
        T* dst = d_table.row(static_cast<std::size_t>(ids[i]));
        const T* src = d_rows.row(i);
        for (std::size_t j = 0; j < d_rows.cols(); ++j) dst[j] += src[j];
    }
}

// ---------------------------------------------------------------------------
// Softmax and losses
// ---------------------------------------------------------------------------

// In-place stable softmax over a contiguous row.
template <typename T>
inline void softmax_row(T* x, std::size_t k) {
    T mx = x[0];
    for (std::size_t i = 1; i < k; ++i) mx = std::max(mx, x[i]);
    T sum = T(0);
    for (std::size_t i = 0; i < k; ++i) {
        x[i] = std::exp(x[i] - mx);
        sum += x[i];
    }
    const T inv = T(1) / sum;
    for (std::size_t i = 0; i < k; ++i) x[i] *= inv;
}

// loss = -log softmax(logits)[target]; grad = softmax(logits) - onehot(target).
// grad may be null when only the value is needed.
template <typename T>
inline T softmax_cross_entropy(std::span<const T> logits, std::size_t target, T* grad) {
    const std::size_t k = logits.size();
    if (k == 0) throw DomainError("cross entropy: empty logits");
    if (target >= k)
        throw DomainError("cross entropy: target " + std::to_string(target) +
                          " out of range for " + std::to_string(k) + " classes");
    T mx = logits[0];
    for (std::size_t i = 1; i < k; ++i) mx = std::max(mx, logits[i]);
    T sum = T(0);
    for (std::size_t i = 0; i < k; ++i) sum += std::exp(logits[i] - mx);
    const T lse = mx + std::log(sum);
    const T loss = lse - logits[target];
    if (grad) {
        for (std::size_t i = 0; i < k; ++i) grad[i] = std::exp(logits[i] - lse);
        grad[target] -= T(1);
    }
    return loss;
}

// Squared error for one prediction; d/dpred = 2 (pred - ref).
template <typename T>
inline T mse(T pred, T ref, T* d_pred = nullptr) {
    if (!std::isfinite(static_cast<double>(pred)) || !std::isfinite(static_cast<double>(ref)))
        throw NumericError("mse: non-finite input");
    const T diff = pred - ref;
    if (d_pred) *d_pred = T(2) * diff;
    return diff * diff;
}

// ---------------------------------------------------------------------------
// Layer normalization (per row), post-norm convention.
// ---------------------------------------------------------------------------

template <typename T>
struct LayerNormCache {
    Tensor<T> xhat;              // N x d
    std::vector<T> inv_std;      // per row
};

template <typename T>
inline Tensor<T> layer_norm_forward(const Tensor<T>& x, const Tensor<T>& gamma,
                                    const Tensor<T>& beta, LayerNormCache<T>& cache,
                                    T eps = T(1e-5)) {
    const std::size_t n = x.rows(), d = x.cols();
    require_shape(gamma, {d}, "layer norm gamma");
    require_shape(beta, {d}, "layer norm beta");
    Tensor<T> y({n, d});
    cache.xhat = Tensor<T>({n, d});
    cache.inv_std.assign(n, T(0));
    for (std::size_t i = 0; i < n; ++i) {
        const T* xi = x.row(i);
        T mean = T(0);
        for (std::size_t j = 0; j < d; ++j) mean += xi[j];
        mean /= static_cast<T>(d);
        T var = T(0);
        for (std::size_t j = 0; j < d; ++j) {
            const T c = xi[j] - mean;
            var += c * c;
        }
        var /= static_cast<T>(d);
        const T inv = T(1) / std::sqrt(var + eps);
        cache.inv_std[i] = inv;
        T* xh = cache.xhat.row(i);
        T* yi = y.row(i);
        for (std::size_t j = 0; j < d; ++j) {
            xh[j] = (xi[j] - mean) * inv;
            yi[j] = gamma[j] * xh[j] + beta[j];
        }
    }
    return y;
}

template <typename T>
inline Tensor<T> layer_norm_backward(const Tensor<T>& dy, const LayerNormCache<T>& cache,
                                     const Tensor<T>& gamma, Tensor<T>& d_gamma,
                                     Tensor<T>& d_beta) {
    const std::size_t n = dy.rows(), d = dy.cols();
    Tensor<T> dx({n, d});
    for (std::size_t i = 0; i < n; ++i) {
        const T* dyi = dy.row(i);
        const T* xh = cache.xhat.row(i);
        T sum_dxhat = T(0), sum_dxhat_xhat = T(0);
        for (std::size_t j = 0; j < d; ++j) {
            d_gamma[j] += dyi[j] * xh[j];
            d_beta[j] += dyi[j];
            const T dxh = dyi[j] * gamma[j];
            sum_dxhat += dxh;
            sum_dxhat_xhat += dxh * xh[j];
        }
        const T inv_n = T(1) / static_cast<T>(d);
        T* dxi = dx.row(i);
        for (std::size_t j = 0; j < d; ++j) {
            const T dxh = dyi[j] * gamma[j];
            dxi[j] = cache.inv_std[i] * (dxh - inv_n * sum_dxhat - xh[j] * inv_n * sum_dxhat_xhat);
        }
    }
    return dx;
}

} // namespace flupre::nn
