#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "flupre/nn/param.hpp"
#include "flupre/tensor.hpp"

namespace flupre::nn {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// First/second moment estimates, one pair per parameter in store order.
template <typename T>
struct AdamState {
    std::vector<Tensor<T>> m;
    std::vector<Tensor<T>> v;
    std::int64_t step = 0;

    static AdamState init(const ParameterStore<T>& ps) {
        AdamState s;
        s.m.reserve(ps.size());
        s.v.reserve(ps.size());
        for (std::size_t i = 0; i < ps.size(); ++i) {
            s.m.emplace_back(ps.entry(i).value.shape);
            s.v.emplace_back(ps.entry(i).value.shape);
        }
        return s;
    }
};

// Standard Adam with bias correction, applied to the gradients currently in
// the store.
template <typename T>
inline void adam_step(ParameterStore<T>& ps, AdamState<T>& state, T lr,
                      const AdamConfig& cfg = {}) {
    if (state.m.size() != ps.size())
        throw ShapeError("adam state has " + std::to_string(state.m.size()) +
                         " slots for " + std::to_string(ps.size()) + " parameters");
    state.step += 1;
    const T b1 = static_cast<T>(cfg.beta1);
    const T b2 = static_cast<T>(cfg.beta2);
    const T eps = static_cast<T>(cfg.eps);
    const T bc1 = T(1) - static_cast<T>(std::pow(cfg.beta1, static_cast<double>(state.step)));
    const T bc2 = T(1) - static_cast<T>(std::pow(cfg.beta2, static_cast<double>(state.step)));
    for (std::size_t i = 0; i < ps.size(); ++i) {
        auto& e = ps.entry(i);
        if (!e.grad.same_shape(e.value))
            throw ShapeError("adam: grad " + e.grad.shape_str() + " vs value " +
                             e.value.shape_str() + " for '" + e.name + "'");
        T* m = state.m[i].data.data();
        T* v = state.v[i].data.data();
        T* w = e.value.data.data();
        const T* g = e.grad.data.data();
        const std::size_t n = e.value.numel();
        for (std::size_t j = 0; j < n; ++j) {
            m[j] = b1 * m[j] + (T(1) - b1) * g[j];
            v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
            const T mhat = m[j] / bc1;
            const T vhat = v[j] / bc2;
            w[j] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

} // namespace flupre::nn
