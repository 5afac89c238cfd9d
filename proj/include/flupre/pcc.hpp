#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "flupre/errors.hpp"

namespace flupre {

// Pearson correlation, two-pass in 64-bit: means first, then centered sums.
// A constant series has no defined correlation; that is an error, never NaN.
inline double pcc(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size())
        throw ShapeError("pcc: series lengths " + std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
    const std::size_t n = a.size();
    if (n < 2) throw DomainError("pcc: need at least 2 points");
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(a[i]) || !std::isfinite(b[i]))
            throw NumericError("pcc: non-finite input at index " + std::to_string(i));
        ma += a[i];
        mb += b[i];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double da = a[i] - ma;
        const double db = b[i] - mb;
        cov += da * db;
        va += da * da;
        vb += db * db;
    }
    if (va == 0.0 || vb == 0.0) throw DomainError("pcc: zero-variance series");
    return cov / std::sqrt(va * vb);
}

} // namespace flupre
