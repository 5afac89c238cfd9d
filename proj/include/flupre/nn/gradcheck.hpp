#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>

#include "flupre/errors.hpp"
#include "flupre/nn/param.hpp"
#include "flupre/rng.hpp"

namespace flupre::nn {

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_param;
    std::size_t worst_coord = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

// Central-difference verification of the gradients currently stored in `ps`.
// `loss_fn` must deterministically recompute the loss from the parameter
// values without touching the grad slots. Up to `max_coords_per_tensor`
// coordinates are probed per tensor (all of them when the tensor is small).
// Relative error uses max(|analytic|, |numeric|, 1e-5) in the denominator so
// near-zero gradient pairs do not blow up on finite-difference noise.
//
// Known limitation: a loss with a hard discontinuity (or a kink closer than h
// to the evaluation point) can produce arbitrarily large reported error.
template <typename T, typename LossFn>
inline GradCheckReport grad_check(ParameterStore<T>& ps, LossFn&& loss_fn, double h = 1e-5,
                                  std::size_t max_coords_per_tensor =
                                      std::numeric_limits<std::size_t>::max(),
                                  std::uint64_t seed = 0) {
    GradCheckReport report;
    Rng rng(mix_seed(seed, 0x9cadc0));
    for (std::size_t t = 0; t < ps.size(); ++t) {
        auto& e = ps.entry(t);
        const std::size_t n = e.value.numel();
        const std::size_t probes = std::min(n, max_coords_per_tensor);
        for (std::size_t p = 0; p < probes; ++p) {
            const std::size_t j =
                (probes == n) ? p : static_cast<std::size_t>(rng.below(n));
            const T saved = e.value[j];
            e.value[j] = saved + static_cast<T>(h);
            const double f_plus = static_cast<double>(loss_fn());
            e.value[j] = saved - static_cast<T>(h);
            const double f_minus = static_cast<double>(loss_fn());
            e.value[j] = saved;
            if (!std::isfinite(f_plus) || !std::isfinite(f_minus))
                throw NumericError("grad check: non-finite loss at '" + e.name + "'[" +
                                   std::to_string(j) + "]");
            const double numeric = (f_plus - f_minus) / (2.0 * h);
            const double analytic = static_cast<double>(e.grad[j]);
            const double denom =
                std::max({std::fabs(analytic), std::fabs(numeric), 1e-5});
            const double rel = std::fabs(analytic - numeric) / denom;
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst_param = e.name;
                report.worst_coord = j;
                report.worst_analytic = analytic;
                report.worst_numeric = numeric;
            }
        }
    }
    return report;
}

} // namespace flupre::nn
