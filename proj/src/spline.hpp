#pragma once

#include <vector>

namespace nbody::detail {

// Derivative at the knots of the natural cubic spline through (t_i, v_i).
inline std::vector<double> spline_derivative(const std::vector<double>& t,
                                             const std::vector<double>& v) {
    const size_t n = t.size();
    std::vector<double> out(n, 0.0);
    if (n < 3) {
        if (n == 2) out[0] = out[1] = (v[1] - v[0]) / (t[1] - t[0]);
        return out;
    }
    // second derivatives M_i from the tridiagonal system, M_0 = M_{n-1} = 0
    std::vector<double> diag(n, 1.0), upper(n, 0.0), lower(n, 0.0), rhs(n, 0.0), M(n, 0.0);
    for (size_t i = 1; i + 1 < n; ++i) {
        const double h0 = t[i] - t[i - 1], h1 = t[i + 1] - t[i];
        lower[i] = h0 / 6;
        diag[i] = (h0 + h1) / 3;
        upper[i] = h1 / 6;
        rhs[i] = (v[i + 1] - v[i]) / h1 - (v[i] - v[i - 1]) / h0;
    }
    for (size_t i = 1; i < n; ++i) {
        const double w = lower[i] / diag[i - 1];
        diag[i] -= w * upper[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    M[n - 1] = rhs[n - 1] / diag[n - 1];
    for (size_t i = n - 1; i-- > 0;) M[i] = (rhs[i] - upper[i] * M[i + 1]) / diag[i];
    for (size_t i = 0; i + 1 < n; ++i) {
        const double h = t[i + 1] - t[i];
        out[i] = (v[i + 1] - v[i]) / h - h * (2 * M[i] + M[i + 1]) / 6;
    }
    const double h = t[n - 1] - t[n - 2];
    out[n - 1] = (v[n - 1] - v[n - 2]) / h + h * (M[n - 2] + 2 * M[n - 1]) / 6;
    return out;
}

}  // namespace nbody::detail
