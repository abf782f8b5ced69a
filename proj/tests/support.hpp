#pragma once

#include <cmath>
#include <random>

#include "nbody/geometry.hpp"

namespace testing {

using nbody::Mat;
using nbody::Vec;

inline Mat gaussian(std::mt19937_64& rng, int rows, int cols, double sd = 1.0) {
    std::normal_distribution<double> g(0.0, sd);
    Mat a(rows, cols);
    for (int j = 0; j < cols; ++j)
        for (int i = 0; i < rows; ++i) a(i, j) = g(rng);
    return a;
}

inline Vec random_masses(std::mt19937_64& rng, int n) {
    std::uniform_real_distribution<double> u(0.5, 2.0);
    Vec m(n);
    for (int i = 0; i < n; ++i) m[i] = u(rng);
    return m;
}

// Random orthogonal matrix with determinant +1.
inline Mat rotation(std::mt19937_64& rng, int d) {
    Eigen::HouseholderQR<Mat> qr(gaussian(rng, d, d));
    Mat q = qr.householderQ();
    if (q.determinant() < 0) q.col(0) *= -1;
    return q;
}

// Pairwise Newton-type accelerations for Phi(s) = G s^kappa, summed body by body.
inline Mat pairwise_accelerations(const Mat& x, const nbody::MassSystem& sys) {
    Mat a = Mat::Zero(x.rows(), x.cols());
    for (int i = 0; i < x.cols(); ++i)
        for (int j = 0; j < x.cols(); ++j) {
            if (i == j) continue;
            Vec r = x.col(j) - x.col(i);
            const double s = r.squaredNorm();
            // d/dx_i of m_i m_j Phi(|x_i - x_j|^2), divided by m_i
            a.col(i) += -2.0 * sys.m[j] * sys.G * sys.kappa * std::pow(s, sys.kappa - 1) * r;
        }
    return a;
}

inline double pairwise_potential(const Mat& x, const nbody::MassSystem& sys) {
    double u = 0;
    for (int i = 0; i < x.cols(); ++i)
        for (int j = i + 1; j < x.cols(); ++j)
            u += sys.m[i] * sys.m[j] * sys.G * std::pow((x.col(i) - x.col(j)).squaredNorm(), sys.kappa);
    return u;
}

inline double max_abs(const Mat& a) { return a.size() ? a.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace testing
