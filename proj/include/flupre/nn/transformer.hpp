#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "flupre/errors.hpp"
#include "flupre/nn/ops.hpp"
#include "flupre/nn/param.hpp"
#include "flupre/tensor.hpp"

namespace flupre::nn {

// Post-norm Transformer encoder layer: multi-head scaled-dot-product
// attention followed by a position-wise feed-forward block (d_model ->
// 4*d_model -> d_model, ReLU). The first layer of a stack projects the
// d_in-wide input up to d_model, so its attention residual is dropped (the
// shapes do not match); the FFN residual stays. Deeper layers keep both.
struct TfLayerSpec {
    std::size_t d_in = 0;
    std::size_t d_model = 0;
    std::size_t heads = 0;
    bool first_layer = false;

    std::size_t head_dim() const { return d_model / heads; }
    std::size_t ffn_dim() const { return 4 * d_model; }
};

inline void validate_tf_layer_spec(const TfLayerSpec& spec) {
    if (spec.heads == 0 || spec.d_model == 0)
        throw ConfigError("transformer layer needs heads >= 1 and d_model >= 1");
    if (spec.d_model % spec.heads != 0)
        throw ConfigError("d_model " + std::to_string(spec.d_model) +
                          " not divisible by heads " + std::to_string(spec.heads));
}

template <typename T>
inline void register_tf_layer(ParameterStore<T>& ps, const std::string& prefix,
                              const TfLayerSpec& spec) {
    validate_tf_layer_spec(spec);
    const std::size_t d = spec.d_model;
    for (const char* w : {"wq", "wk", "wv"}) ps.add(prefix + ".attn." + w, {spec.d_in, d});
    for (const char* b : {"bq", "bk", "bv"}) ps.add(prefix + ".attn." + b, {d});
    ps.add(prefix + ".attn.wo", {d, d});
    ps.add(prefix + ".attn.bo", {d});
    ps.add(prefix + ".ln1.g", {d});
    ps.add(prefix + ".ln1.b", {d});
    ps.add(prefix + ".ffn.w1", {d, spec.ffn_dim()});
    ps.add(prefix + ".ffn.b1", {spec.ffn_dim()});
    ps.add(prefix + ".ffn.w2", {spec.ffn_dim(), d});
    ps.add(prefix + ".ffn.b2", {d});
    ps.add(prefix + ".ln2.g", {d});
    ps.add(prefix + ".ln2.b", {d});
}

template <typename T>
struct TfLayerCache {
    Tensor<T> input;                 // N x d_in
    Tensor<T> q, k, v;               // N x d_model
    std::vector<Tensor<T>> probs;    // per head, N x N attention rows
    Tensor<T> attn_concat;           // N x d_model (pre output-projection)
    Tensor<T> attn_out;              // N x d_model
    LayerNormCache<T> ln1;
    Tensor<T> ln1_out;               // N x d_model
    Tensor<T> ffn_pre;               // N x 4d, pre-ReLU
    Tensor<T> ffn_act;               // N x 4d, post-ReLU
    LayerNormCache<T> ln2;
};

namespace detail {

// Contiguous copy of one head's slice.
template <typename T>
inline Tensor<T> head_slice(const Tensor<T>& m, std::size_t head, std::size_t dh) {
    Tensor<T> s({m.rows(), dh});
    for (std::size_t i = 0; i < m.rows(); ++i)
        std::copy(m.row(i) + head * dh, m.row(i) + (head + 1) * dh, s.row(i));
    return s;
}

template <typename T>
inline void add_head_slice(Tensor<T>& m, const Tensor<T>& s, std::size_t head, std::size_t dh) {
    for (std::size_t i = 0; i < m.rows(); ++i) {
        T* dst = m.row(i) + head * dh;
        const T* src = s.row(i);
        for (std::size_t j = 0; j < dh; ++j) dst[j] += src[j];
    }
}

} // namespace detail

template <typename T>
inline Tensor<T> tf_layer_forward(ParameterStore<T>& ps, const std::string& prefix,
                                  const TfLayerSpec& spec, const Tensor<T>& x,
                                  TfLayerCache<T>& cache) {
    validate_tf_layer_spec(spec);
    if (x.rank() != 2 || x.cols() != spec.d_in)
        throw ShapeError("transformer layer: input " + x.shape_str() + " vs expected width " +
                         std::to_string(spec.d_in));
    const std::size_t n = x.rows();
    const std::size_t d = spec.d_model;
    const std::size_t dh = spec.head_dim();
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));

    cache.input = x;
    cache.q = linear_forward(x, ps.value(prefix + ".attn.wq"), ps.value(prefix + ".attn.bq"));
    cache.k = linear_forward(x, ps.value(prefix + ".attn.wk"), ps.value(prefix + ".attn.bk"));
    cache.v = linear_forward(x, ps.value(prefix + ".attn.wv"), ps.value(prefix + ".attn.bv"));

    cache.probs.assign(spec.heads, Tensor<T>());
    cache.attn_concat = Tensor<T>({n, d});
    for (std::size_t hd = 0; hd < spec.heads; ++hd) {
        const Tensor<T> qh = detail::head_slice(cache.q, hd, dh);
        const Tensor<T> kh = detail::head_slice(cache.k, hd, dh);
        const Tensor<T> vh = detail::head_slice(cache.v, hd, dh);
        Tensor<T>& p = cache.probs[hd];
        p = Tensor<T>({n, n});
        gemm_a_bt(qh.data.data(), kh.data.data(), p.data.data(), n, dh, n);
        for (T& s : p.data) s *= scale;
        for (std::size_t i = 0; i < n; ++i) softmax_row(p.row(i), n);
        Tensor<T> ah({n, dh});
        gemm(p.data.data(), vh.data.data(), ah.data.data(), n, n, dh, false);
        detail::add_head_slice(cache.attn_concat, ah, hd, dh);
    }
    cache.attn_out = linear_forward(cache.attn_concat, ps.value(prefix + ".attn.wo"),
                                    ps.value(prefix + ".attn.bo"));

    Tensor<T> sub1 = cache.attn_out;
    if (!spec.first_layer) {
        for (std::size_t i = 0; i < sub1.numel(); ++i) sub1[i] += x[i];
    }
    cache.ln1_out = layer_norm_forward(sub1, ps.value(prefix + ".ln1.g"),
                                       ps.value(prefix + ".ln1.b"), cache.ln1);

    cache.ffn_pre = linear_forward(cache.ln1_out, ps.value(prefix + ".ffn.w1"),
                                   ps.value(prefix + ".ffn.b1"));
    cache.ffn_act = cache.ffn_pre;
    for (T& u : cache.ffn_act.data) u = u > T(0) ? u : T(0);
    Tensor<T> ffn_out = linear_forward(cache.ffn_act, ps.value(prefix + ".ffn.w2"),
                                       ps.value(prefix + ".ffn.b2"));

    Tensor<T> sub2 = ffn_out;
    for (std::size_t i = 0; i < sub2.numel(); ++i) sub2[i] += cache.ln1_out[i];
    return layer_norm_forward(sub2, ps.value(prefix + ".ln2.g"), ps.value(prefix + ".ln2.b"),
                              cache.ln2);
}

// Accumulates parameter grads; returns the grad w.r.t. the layer input.
template <typename T>
inline Tensor<T> tf_layer_backward(ParameterStore<T>& ps, const std::string& prefix,
                                   const TfLayerSpec& spec, const TfLayerCache<T>& cache,
                                   const Tensor<T>& dy) {
    const std::size_t n = cache.input.rows();
    const std::size_t d = spec.d_model;
    const std::size_t dh = spec.head_dim();
    const T scale = T(1) / std::sqrt(static_cast<T>(dh));

    Tensor<T> d_sub2 = layer_norm_backward(dy, cache.ln2, ps.value(prefix + ".ln2.g"),
                                           ps.grad(prefix + ".ln2.g"),
                                           ps.grad(prefix + ".ln2.b"));

    // FFN path plus its residual.
    Tensor<T> d_ln1_out = d_sub2;
    Tensor<T> d_ffn_act({n, spec.ffn_dim()});
    linear_backward(cache.ffn_act, ps.value(prefix + ".ffn.w2"), d_sub2,
                    ps.grad(prefix + ".ffn.w2"), ps.grad(prefix + ".ffn.b2"), &d_ffn_act);
    for (std::size_t i = 0; i < d_ffn_act.numel(); ++i)
        if (cache.ffn_pre[i] <= T(0)) d_ffn_act[i] = T(0);
    {
        Tensor<T> d_ln1_from_ffn({n, d});
        linear_backward(cache.ln1_out, ps.value(prefix + ".ffn.w1"), d_ffn_act,
                        ps.grad(prefix + ".ffn.w1"), ps.grad(prefix + ".ffn.b1"),
                        &d_ln1_from_ffn);
        for (std::size_t i = 0; i < d_ln1_out.numel(); ++i) d_ln1_out[i] += d_ln1_from_ffn[i];
    }

    Tensor<T> d_sub1 = layer_norm_backward(d_ln1_out, cache.ln1, ps.value(prefix + ".ln1.g"),
                                           ps.grad(prefix + ".ln1.g"),
                                           ps.grad(prefix + ".ln1.b"));

    Tensor<T> dx({n, spec.d_in});
    if (!spec.first_layer) {
        for (std::size_t i = 0; i < dx.numel(); ++i) dx[i] = d_sub1[i];
    }

    // Attention output projection.
    Tensor<T> d_concat({n, d});
    linear_backward(cache.attn_concat, ps.value(prefix + ".attn.wo"), d_sub1,
                    ps.grad(prefix + ".attn.wo"), ps.grad(prefix + ".attn.bo"), &d_concat);

    Tensor<T> dq({n, d}), dk({n, d}), dv({n, d});
    for (std::size_t hd = 0; hd < spec.heads; ++hd) {
        const Tensor<T> qh = detail::head_slice(cache.q, hd, dh);
        const Tensor<T> kh = detail::head_slice(cache.k, hd, dh);
        const Tensor<T> vh = detail::head_slice(cache.v, hd, dh);
        const Tensor<T> dah = detail::head_slice(d_concat, hd, dh);
        const Tensor<T>& p = cache.probs[hd];

        Tensor<T> dp({n, n});
        gemm_a_bt(dah.data.data(), vh.data.data(), dp.data.data(), n, dh, n);
        Tensor<T> dvh({n, dh});
        gemm_at_b(p.data.data(), dah.data.data(), dvh.data.data(), n, n, dh);

        // Softmax backward per row, then the 1/sqrt(dh) scale.
        Tensor<T> ds({n, n});
        for (std::size_t i = 0; i < n; ++i) {
            const T* pi = p.row(i);
            const T* dpi = dp.row(i);
            T dot = T(0);
            for (std::size_t j = 0; j < n; ++j) dot += pi[j] * dpi[j];
            T* dsi = ds.row(i);
            for (std::size_t j = 0; j < n; ++j) dsi[j] = pi[j] * (dpi[j] - dot) * scale;
        }

        Tensor<T> dqh({n, dh});
        gemm(ds.data.data(), kh.data.data(), dqh.data.data(), n, n, dh, false);
        Tensor<T> dkh({n, dh});
        gemm_at_b(ds.data.data(), qh.data.data(), dkh.data.data(), n, n, dh);

        detail::add_head_slice(dq, dqh, hd, dh);
        detail::add_head_slice(dk, dkh, hd, dh);
        detail::add_head_slice(dv, dvh, hd, dh);
    }

    linear_backward(cache.input, ps.value(prefix + ".attn.wq"), dq,
                    ps.grad(prefix + ".attn.wq"), ps.grad(prefix + ".attn.bq"), &dx);
    linear_backward(cache.input, ps.value(prefix + ".attn.wk"), dk,
                    ps.grad(prefix + ".attn.wk"), ps.grad(prefix + ".attn.bk"), &dx);
    linear_backward(cache.input, ps.value(prefix + ".attn.wv"), dv,
                    ps.grad(prefix + ".attn.wv"), ps.grad(prefix + ".attn.bv"), &dx);
    return dx;
}

} // namespace flupre::nn
