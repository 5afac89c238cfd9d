#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "flupre/errors.hpp"
#include "flupre/nn/ops.hpp"
#include "flupre/nn/param.hpp"
#include "flupre/tensor.hpp"

namespace flupre::nn {

// Stacked bidirectional LSTM. Layer 0 consumes input_dim-wide rows; every
// deeper layer consumes the 2*hidden-wide concatenation of the previous
// layer's two directions. Combined weights use gate order [i f g o] along
// the 4h axis.
struct BlstmSpec {
    std::size_t layers = 1;
    std::size_t input_dim = 0;
    std::size_t hidden = 0;

    std::size_t layer_input_dim(std::size_t layer) const {
        return layer == 0 ? input_dim : 2 * hidden;
    }
    std::size_t output_dim() const { return 2 * hidden; }
};

inline std::string blstm_param_name(const std::string& prefix, std::size_t layer, int dir,
                                    const char* which) {
    return prefix + ".l" + std::to_string(layer) + (dir == 0 ? ".fw." : ".bw.") + which;
}

template <typename T>
inline void register_blstm(ParameterStore<T>& ps, const std::string& prefix,
                           const BlstmSpec& spec) {
    if (spec.layers < 1 || spec.hidden < 1)
        throw ConfigError("blstm needs layers >= 1 and hidden >= 1");
    for (std::size_t l = 0; l < spec.layers; ++l) {
        const std::size_t f = spec.layer_input_dim(l);
        for (int dir = 0; dir < 2; ++dir) {
            ps.add(blstm_param_name(prefix, l, dir, "wx"), {f, 4 * spec.hidden});
            ps.add(blstm_param_name(prefix, l, dir, "wh"), {spec.hidden, 4 * spec.hidden});
            ps.add(blstm_param_name(prefix, l, dir, "b"), {4 * spec.hidden});
        }
    }
}

template <typename T>
struct LstmDirCache {
    Tensor<T> gates;   // N x 4h, post-activation
    Tensor<T> c;       // N x h
    Tensor<T> tanh_c;  // N x h
    Tensor<T> h;       // N x h
};

template <typename T>
struct BlstmCache {
    std::vector<Tensor<T>> inputs;                       // per layer, N x F_l
    std::vector<std::array<LstmDirCache<T>, 2>> dirs;    // per layer
};

namespace detail {

template <typename T>
inline T sigmoid(T x) {
    return T(1) / (T(1) + std::exp(-x));
}

// One direction over the sequence. dir 0 walks 0..N-1, dir 1 walks N-1..0;
// states are stored by absolute position.
template <typename T>
inline void lstm_dir_forward(const Tensor<T>& x, const Tensor<T>& wx, const Tensor<T>& wh,
                             const Tensor<T>& b, int dir, LstmDirCache<T>& cache) {
    const std::size_t n = x.rows();
    const std::size_t h = wh.rows();
    const std::size_t g4 = 4 * h;

    // Input contribution for all steps at once.
    Tensor<T> zpre({n, g4});
    for (std::size_t t = 0; t < n; ++t) std::copy(b.data.begin(), b.data.end(), zpre.row(t));
    gemm(x.data.data(), wx.data.data(), zpre.data.data(), n, x.cols(), g4, true);

    cache.gates = Tensor<T>({n, g4});
    cache.c = Tensor<T>({n, h});
    cache.tanh_c = Tensor<T>({n, h});
    cache.h = Tensor<T>({n, h});

    std::vector<T> z(g4);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t t = dir == 0 ? k : n - 1 - k;
        std::copy(zpre.row(t), zpre.row(t) + g4, z.data());
        if (k > 0) {
            const std::size_t tp = dir == 0 ? t - 1 : t + 1;
            const T* hp = cache.h.row(tp);
            for (std::size_t a = 0; a < h; ++a) {
                const T hv = hp[a];
                if (hv == T(0)) continue;
                const T* whrow = wh.row(a);
                for (std::size_t j = 0; j < g4; ++j) z[j] += hv * whrow[j];
            }
        }
        T* gates = cache.gates.row(t);
        for (std::size_t a = 0; a < h; ++a) gates[a] = sigmoid(z[a]);                    // i
        for (std::size_t a = 0; a < h; ++a) gates[h + a] = sigmoid(z[h + a]);            // f
        for (std::size_t a = 0; a < h; ++a) gates[2 * h + a] = std::tanh(z[2 * h + a]);  // g
        for (std::size_t a = 0; a < h; ++a) gates[3 * h + a] = sigmoid(z[3 * h + a]);    // o

        T* c = cache.c.row(t);
        const T* cp = k > 0 ? cache.c.row(dir == 0 ? t - 1 : t + 1) : nullptr;
        T* tc = cache.tanh_c.row(t);
        T* ho = cache.h.row(t);
        for (std::size_t a = 0; a < h; ++a) {
            const T prev = cp ? cp[a] : T(0);
            c[a] = gates[h + a] * prev + gates[a] * gates[2 * h + a];
            tc[a] = std::tanh(c[a]);
            ho[a] = gates[3 * h + a] * tc[a];
        }
    }
}

// BPTT for one direction. d_h is the grad of this direction's hidden output
// by absolute position. Accumulates parameter grads and adds the input grad
// into dx.
template <typename T>
inline void lstm_dir_backward(const Tensor<T>& x, const Tensor<T>& wx, const Tensor<T>& wh,
                              int dir, const LstmDirCache<T>& cache, const Tensor<T>& d_h,
                              Tensor<T>& d_wx, Tensor<T>& d_wh, Tensor<T>& d_b,
                              Tensor<T>& dx) {
    const std::size_t n = x.rows();
    const std::size_t h = wh.rows();
    const std::size_t g4 = 4 * h;

    Tensor<T> dz_all({n, g4});
    std::vector<T> dh(h), dc_next(h, T(0)), dh_next(h, T(0));

    for (std::size_t k = n; k-- > 0;) {
        const std::size_t t = dir == 0 ? k : n - 1 - k;
        const T* gates = cache.gates.row(t);
        const T* tc = cache.tanh_c.row(t);
        const T* cp = k > 0 ? cache.c.row(dir == 0 ? t - 1 : t + 1) : nullptr;
        const T* dht = d_h.row(t);
        T* dz = dz_all.row(t);

        for (std::size_t a = 0; a < h; ++a) {
            const T gi = gates[a], gf = gates[h + a], gg = gates[2 * h + a],
                    go = gates[3 * h + a];
            const T dha = dht[a] + dh_next[a];
            const T do_ = dha * tc[a];
            const T dc = dc_next[a] + dha * go * (T(1) - tc[a] * tc[a]);
            const T di = dc * gg;
            const T dg = dc * gi;
            const T df = dc * (cp ? cp[a] : T(0));
            dc_next[a] = dc * gf;
            dz[a] = di * gi * (T(1) - gi);
            dz[h + a] = df * gf * (T(1) - gf);
            dz[2 * h + a] = dg * (T(1) - gg * gg);
            dz[3 * h + a] = do_ * go * (T(1) - go);
        }
        if (k > 0) {
            // dh for the previous processing step: dz_t * Wh^T.
            for (std::size_t a = 0; a < h; ++a) {
                const T* whrow = wh.row(a);
                T acc = T(0);
                for (std::size_t j = 0; j < g4; ++j) acc += dz[j] * whrow[j];
                dh_next[a] = acc;
            }
        }
    }

    gemm_at_b(x.data.data(), dz_all.data.data(), d_wx.data.data(), n, x.cols(), g4);
    for (std::size_t t = 0; t < n; ++t) {
        const T* dz = dz_all.row(t);
        for (std::size_t j = 0; j < g4; ++j) d_b[j] += dz[j];
    }
    // dWh uses the hidden state of the previous processing step per row.
    Tensor<T> h_prev({n, h});
    for (std::size_t k = 1; k < n; ++k) {
        const std::size_t t = dir == 0 ? k : n - 1 - k;
        const std::size_t tp = dir == 0 ? t - 1 : t + 1;
        std::copy(cache.h.row(tp), cache.h.row(tp) + h, h_prev.row(t));
    }
    gemm_at_b(h_prev.data.data(), dz_all.data.data(), d_wh.data.data(), n, h, g4);
    gemm_a_bt(dz_all.data.data(), wx.data.data(), dx.data.data(), n, g4, x.cols());
}

} // namespace detail

template <typename T>
inline Tensor<T> blstm_forward(ParameterStore<T>& ps, const std::string& prefix,
                               const BlstmSpec& spec, const Tensor<T>& x,
                               BlstmCache<T>& cache) {
    if (x.rank() != 2 || x.cols() != spec.input_dim)
        throw ShapeError("blstm: input " + x.shape_str() + " vs expected width " +
                         std::to_string(spec.input_dim));
    const std::size_t n = x.rows();
    cache.inputs.clear();
    cache.dirs.assign(spec.layers, {});

    Tensor<T> layer_in = x;
    for (std::size_t l = 0; l < spec.layers; ++l) {
        cache.inputs.push_back(layer_in);
        for (int dir = 0; dir < 2; ++dir) {
            detail::lstm_dir_forward(layer_in, ps.value(blstm_param_name(prefix, l, dir, "wx")),
                                     ps.value(blstm_param_name(prefix, l, dir, "wh")),
                                     ps.value(blstm_param_name(prefix, l, dir, "b")), dir,
                                     cache.dirs[l][dir]);
        }
        Tensor<T> out({n, 2 * spec.hidden});
        for (std::size_t t = 0; t < n; ++t) {
            std::copy(cache.dirs[l][0].h.row(t), cache.dirs[l][0].h.row(t) + spec.hidden,
                      out.row(t));
            std::copy(cache.dirs[l][1].h.row(t), cache.dirs[l][1].h.row(t) + spec.hidden,
                      out.row(t) + spec.hidden);
        }
        layer_in = std::move(out);
    }
    return layer_in;
}

// Accumulates all parameter grads; returns the grad w.r.t. the stack input.
template <typename T>
inline Tensor<T> blstm_backward(ParameterStore<T>& ps, const std::string& prefix,
                                const BlstmSpec& spec, const BlstmCache<T>& cache,
                                const Tensor<T>& d_out) {
    const std::size_t n = d_out.rows();
    if (d_out.cols() != spec.output_dim())
        throw ShapeError("blstm backward: d_out " + d_out.shape_str() + " vs width " +
                         std::to_string(spec.output_dim()));
    Tensor<T> d_layer_out = d_out;
    for (std::size_t l = spec.layers; l-- > 0;) {
        Tensor<T> dx({n, spec.layer_input_dim(l)});
        for (int dir = 0; dir < 2; ++dir) {
            Tensor<T> d_h({n, spec.hidden});
            for (std::size_t t = 0; t < n; ++t)
                std::copy(d_layer_out.row(t) + (dir == 0 ? 0 : spec.hidden),
                          d_layer_out.row(t) + (dir == 0 ? spec.hidden : 2 * spec.hidden),
                          d_h.row(t));
            detail::lstm_dir_backward(
                cache.inputs[l], ps.value(blstm_param_name(prefix, l, dir, "wx")),
                ps.value(blstm_param_name(prefix, l, dir, "wh")), dir, cache.dirs[l][dir], d_h,
                ps.grad(blstm_param_name(prefix, l, dir, "wx")),
                ps.grad(blstm_param_name(prefix, l, dir, "wh")),
                ps.grad(blstm_param_name(prefix, l, dir, "b")), dx);
        }
        d_layer_out = std::move(dx);
    }
    return d_layer_out;
}

} // namespace flupre::nn
