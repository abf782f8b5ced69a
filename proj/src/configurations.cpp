#include "nbody/configurations.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <random>

namespace nbody {

const char* to_string(ConfigKind k) {
    switch (k) {
        case ConfigKind::Central: return "central";
        case ConfigKind::Balanced: return "balanced";
        default: return "neither";
    }
}

namespace {

double mass_norm(const Mat& a, const Vec& m) { return std::sqrt(mass_dot(a, a, m)); }

void normalise_inertia(Mat& x, const Vec& m) { x /= mass_norm(x, m); }

// Euclidean Hessian of U with respect to the flattened d x n coordinates (column-major).
Mat potential_hessian(const Mat& x, const MassSystem& sys) {
    const int d = static_cast<int>(x.rows()), n = static_cast<int>(x.cols());
    Mat h = Mat::Zero(d * n, d * n);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            Vec dv = x.col(i) - x.col(j);
            const double s = dv.squaredNorm();
            const double w = sys.m[i] * sys.m[j];
            Mat blk = w * (2 * sys.dphi(s) * Mat::Identity(d, d) + 4 * sys.ddphi(s) * dv * dv.transpose());
            h.block(i * d, i * d, d, d) += blk;
            h.block(j * d, j * d, d, d) += blk;
            h.block(i * d, j * d, d, d) -= blk;
            h.block(j * d, i * d, d, d) -= blk;
        }
    return h;
}

// F(x) = grad U - lambda x and its Jacobian, both in flattened coordinates.
void central_system(const Mat& x, const MassSystem& sys, Vec& F, Mat& Jac) {
    const int d = static_cast<int>(x.rows()), n = static_cast<int>(x.cols()), dn = d * n;
    auto pg = potential_and_gradient(x, sys);
    const double I = mass_dot(x, x, sys.m);
    const double lambda = 2 * sys.kappa * pg.U / I;
    Mat f = pg.grad - lambda * x;
    F = Eigen::Map<const Vec>(f.data(), dn);

    Mat h = potential_hessian(x, sys);
    for (int i = 0; i < n; ++i) h.middleRows(i * d, d) /= sys.m[i];
    // d lambda / dx (Euclidean partials)
    Mat dl = 2 * sys.kappa * (pg.grad * sys.m.asDiagonal() * I - pg.U * 2 * x * sys.m.asDiagonal()) / (I * I);
    Vec dlv = Eigen::Map<const Vec>(dl.data(), dn);
    Vec xv = Eigen::Map<const Vec>(x.data(), dn);
    Jac = h - lambda * Mat::Identity(dn, dn) - xv * dlv.transpose();
}

// Orthonormal basis (Euclidean, flattened) of the complement of the translation, rotation
// and scaling directions at x.
Mat symmetry_complement(const Mat& x) {
    const int d = static_cast<int>(x.rows()), n = static_cast<int>(x.cols()), dn = d * n;
    std::vector<Vec> gens;
    for (int a = 0; a < d; ++a) {
        Mat t = Mat::Zero(d, n);
        t.row(a).setOnes();
        gens.emplace_back(Eigen::Map<const Vec>(t.data(), dn));
    }
    gens.emplace_back(Eigen::Map<const Vec>(x.data(), dn));
    for (int a = 0; a < d; ++a)
        for (int b = a + 1; b < d; ++b) {
            Mat e = Mat::Zero(d, d);
            e(a, b) = 1;
            e(b, a) = -1;
            Mat r = e * x;
            gens.emplace_back(Eigen::Map<const Vec>(r.data(), dn));
        }
    Mat Z(dn, gens.size());
    for (size_t c = 0; c < gens.size(); ++c) Z.col(c) = gens[c];
    Eigen::JacobiSVD<Mat> svd(Z, Eigen::ComputeFullU);
    const Vec& sv = svd.singularValues();
    int rank = 0;
    for (int i = 0; i < sv.size(); ++i)
        if (sv[i] > 1e-10 * sv[0]) ++rank;
    return svd.matrixU().rightCols(dn - rank);
}

}  // namespace

double central_residual(const Mat& x0, const MassSystem& sys) {
    const Mat x = centred(x0, sys.m);
    auto pg = potential_and_gradient(x, sys);
    const double I = mass_dot(x, x, sys.m);
    const double lambda = 2 * sys.kappa * pg.U / I;
    return mass_norm(pg.grad - lambda * x, sys.m) / mass_norm(pg.grad, sys.m);
}

double balanced_residual(const Mat& x0, const MassSystem& sys) {
    const Mat x = centred(x0, sys.m);
    Mat a = wintner_conley(x, sys);
    Mat b = sys.m.asDiagonal() * gram_form(x);
    return (a * b - b * a).norm() / (a.norm() * b.norm());
}

ConfigClass classify(const Mat& x0, const MassSystem& sys, double tol) {
    const Mat x = centred(x0, sys.m);
    ConfigClass c;
    auto pg = potential_and_gradient(x, sys);
    c.multiplier = 2 * sys.kappa * pg.U / mass_dot(x, x, sys.m);
    c.central_residual = central_residual(x, sys);
    c.balanced_residual = balanced_residual(x, sys);
    if (c.central_residual <= tol)
        c.kind = ConfigKind::Central;
    else if (c.balanced_residual <= tol)
        c.kind = ConfigKind::Balanced;
    else
        c.kind = ConfigKind::Neither;
    return c;
}

Mat find_central_from(const Mat& x0, const MassSystem& sys, const SolverOptions& opts) {
    sys.validate();
    Mat x = centred(x0, sys.m);
    if (mass_norm(x, sys.m) == 0) throw DegenerateConfiguration("seed is a total collision");
    normalise_inertia(x, sys.m);
    const int d = static_cast<int>(x.rows()), n = sys.n();

    // Descent of U on I = 1 until the residual is small enough for Newton.
    double step = 1e-2;
    double res = central_residual(x, sys);
    int it = 0;
    for (; it < opts.max_iter && res > 1e-4; ++it) {
        auto pg = potential_and_gradient(x, sys);
        Mat g = pg.grad - mass_dot(pg.grad, x, sys.m) * x;
        const double gg = mass_dot(g, g, sys.m);
        bool accepted = false;
        for (int k = 0; k < 60; ++k) {
            Mat xn = x - step * g;
            normalise_inertia(xn, sys.m);
            if (min_distance(xn) > sys.collision_floor * 1e3) {
                double un = potential(xn, sys);
                if (un <= pg.U - 1e-4 * step * gg) {
                    x = xn;
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if (!accepted) break;
        step *= 2;
        res = central_residual(x, sys);
    }
    spdlog::debug("find_central: descent {} iterations, residual {:.3e}", it, res);

    // Gauss-Newton on F = grad U - lambda x in a slice transverse to translations,
    // rotations and scaling, with a damped step.
    for (int k = 0; k < 60 && res > opts.tol; ++k) {
        Vec F;
        Mat Jac;
        central_system(x, sys, F, Jac);
        Mat T = symmetry_complement(x);
        Eigen::JacobiSVD<Mat> svd(Jac * T, Eigen::ComputeThinU | Eigen::ComputeThinV);
        svd.setThreshold(1e-12);
        Vec dxv = -(T * svd.solve(F));
        Mat dx = Eigen::Map<const Mat>(dxv.data(), d, n);
        bool improved = false;
        for (double t = 1.0; t > 1e-4; t *= 0.5) {
            Mat xn = centred(x + t * dx, sys.m);
            normalise_inertia(xn, sys.m);
            if (min_distance(xn) <= sys.collision_floor * 1e3) continue;
            double rn = central_residual(xn, sys);
            if (rn < res) {
                x = xn;
                res = rn;
                improved = true;
                break;
            }
        }
        if (!improved) break;
    }
    spdlog::debug("find_central: final residual {:.3e}", res);
    if (!(res < 1e-10)) {
        throw NoConvergence(fmt::format("central configuration search stalled at residual {:.3e}", res));
    }
    return x;
}

Mat find_central(const MassSystem& sys, int d, std::uint64_t seed, const SolverOptions& opts) {
    if (d < 1) throw ValidationError("dimension d >= 1 required");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> N(0.0, 1.0);
    Mat x(d, sys.n());
    for (int i = 0; i < x.size(); ++i) x.data()[i] = N(rng);
    return find_central_from(x, sys, opts);
}

std::vector<double> intrinsic_spectrum(const Mat& x, const MassSystem& sys, double rel_zero) {
    Vec sq = sys.m.cwiseSqrt();
    Mat bh = sq.asDiagonal() * gram_form(x) * sq.asDiagonal();
    Vec ev = Eigen::SelfAdjointEigenSolver<Mat>(0.5 * (bh + bh.transpose())).eigenvalues();
    std::vector<double> out;
    const double top = ev.maxCoeff();
    for (int i = static_cast<int>(ev.size()) - 1; i >= 0; --i)
        if (ev[i] > rel_zero * top) out.push_back(ev[i]);
    return out;
}

namespace {

// Orthonormal basis of the complement of sqrt(m), n x (n-1).
Mat complement_basis(const Vec& m) {
    Vec sq = m.cwiseSqrt().normalized();
    Eigen::HouseholderQR<Mat> qr(sq);
    Mat q = qr.householderQ() * Mat::Identity(m.size(), m.size());
    return q.rightCols(m.size() - 1);
}

Mat qf(const Mat& a) {
    Eigen::HouseholderQR<Mat> qr(a);
    Mat q = qr.householderQ() * Mat::Identity(a.rows(), a.cols());
    Mat r = qr.matrixQR().topRows(a.cols()).triangularView<Eigen::Upper>();
    for (int j = 0; j < a.cols(); ++j)
        if (r(j, j) < 0) q.col(j) *= -1;
    return q;
}

struct BalancedProblem {
    const MassSystem& sys;
    Mat P;        // basis of the mass complement
    Vec root;     // sqrt of the prescribed spectrum
    Vec inv_sqm;  // m^{-1/2}

    Mat positions(const Mat& q) const {
        return root.asDiagonal() * (P * q).transpose() * inv_sqm.asDiagonal();
    }
    // U and its Riemannian gradient on the Stiefel manifold.
    double value_grad(const Mat& q, Mat& rgrad) const {
        Mat x = positions(q);
        auto pg = potential_and_gradient(x, sys);
        Mat dUdx = pg.grad * sys.m.asDiagonal();
        Mat g = P.transpose() * (inv_sqm.asDiagonal() * dUdx.transpose() * root.asDiagonal());
        Mat qg = q.transpose() * g;
        rgrad = g - q * (0.5 * (qg + qg.transpose()));
        return pg.U;
    }
};

Mat balanced_descent(Mat q, const BalancedProblem& pb, const SolverOptions& opts) {
    Mat rg;
    double u = pb.value_grad(q, rg);
    double step = 1e-2;
    Mat prev_q, prev_rg;
    double res = balanced_residual(pb.positions(q), pb.sys);
    int it = 0;
    int stall = 0;
    for (; it < opts.max_iter && res > 1e-12; ++it) {
        // Barzilai-Borwein guess, safeguarded by Armijo backtracking
        if (prev_q.size()) {
            Mat sdiff = q - prev_q, ydiff = rg - prev_rg;
            const double sy = (sdiff.cwiseProduct(ydiff)).sum();
            // nonpositive curvature (e.g. leaving a maximum): expand instead
            step = sy > 0 ? std::clamp(sdiff.squaredNorm() / sy, 1e-8, 1e4) : std::min(4 * step, 1e4);
        }
        const double gg = rg.squaredNorm();
        if (gg == 0) break;
        bool accepted = false;
        for (int k = 0; k < 50; ++k) {
            Mat qn = qf(q - step * rg);
            Mat xn = pb.positions(qn);
            if (min_distance(xn) > pb.sys.collision_floor * 1e3) {
                Mat rgn;
                double un = pb.value_grad(qn, rgn);
                // near the optimum U is flat to rounding; then the gradient has to shrink
                const bool flat = std::abs(un - u) <= 1e-13 * std::abs(u) && rgn.squaredNorm() < gg;
                if (un <= u - 1e-4 * step * gg || (k > 30 && un <= u) || flat) {
                    prev_q = q;
                    prev_rg = rg;
                    q = qn;
                    rg = rgn;
                    u = un;
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        res = balanced_residual(pb.positions(q), pb.sys);
        if (!accepted) {
            // restart from a plain gradient step; give up after repeated failures
            if (++stall > 3) break;
            prev_q.resize(0, 0);
            step = 1e-2;
        } else {
            stall = 0;
        }
    }
    spdlog::debug("find_balanced: {} iterations, residual {:.3e}", it, res);
    return q;
}

}  // namespace

Mat find_balanced(const MassSystem& sys, const std::vector<double>& spectrum, std::uint64_t seed,
                  const SolverOptions& opts) {
    sys.validate();
    std::vector<double> lam;
    for (double v : spectrum) {
        if (!(v >= 0) || !std::isfinite(v))
            throw InfeasibleSpectrum("spectrum entries must be nonnegative and finite");
        if (v > 0) lam.push_back(v);
    }
    std::sort(lam.rbegin(), lam.rend());
    const int n = sys.n();
    if (static_cast<int>(lam.size()) > n - 1)
        throw InfeasibleSpectrum("rank " + std::to_string(lam.size()) + " exceeds n - 1 = " +
                                 std::to_string(n - 1));
    if (lam.empty()) throw InfeasibleSpectrum("spectrum has no positive entry");
    const int p = static_cast<int>(lam.size());

    BalancedProblem pb{sys, complement_basis(sys.m), Vec(p), sys.m.cwiseSqrt().cwiseInverse()};
    for (int a = 0; a < p; ++a) pb.root[a] = std::sqrt(lam[a]);

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> N(0.0, 1.0);
    Mat q0(n - 1, p);
    for (int i = 0; i < q0.size(); ++i) q0.data()[i] = N(rng);
    Mat q = balanced_descent(qf(q0), pb, opts);
    Mat x = pb.positions(q);
    const double res = balanced_residual(x, sys);
    if (!(res < 1e-8))
        throw NoConvergence(fmt::format("balanced configuration search stalled at residual {:.3e}", res));
    return x;
}

Mat find_balanced_from(const Mat& x0, const MassSystem& sys, const SolverOptions& opts) {
    sys.validate();
    Mat x = centred(x0, sys.m);
    Vec sq = sys.m.cwiseSqrt();
    Mat bh = sq.asDiagonal() * gram_form(x) * sq.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (bh + bh.transpose()));
    const double top = es.eigenvalues().maxCoeff();
    if (!(top > 0)) throw DegenerateConfiguration("seed is a total collision");
    std::vector<int> keep;
    for (int i = static_cast<int>(es.eigenvalues().size()) - 1; i >= 0; --i)
        if (es.eigenvalues()[i] > 1e-12 * top) keep.push_back(i);
    const int p = static_cast<int>(keep.size());
    BalancedProblem pb{sys, complement_basis(sys.m), Vec(p), sq.cwiseInverse()};
    Mat q0(sys.n() - 1, p);
    for (int a = 0; a < p; ++a) {
        pb.root[a] = std::sqrt(es.eigenvalues()[keep[a]]);
        q0.col(a) = pb.P.transpose() * es.eigenvectors().col(keep[a]);
    }
    Mat q = balanced_descent(qf(q0), pb, opts);
    Mat xb = pb.positions(q);
    const double res = balanced_residual(xb, sys);
    if (!(res < 1e-8))
        throw NoConvergence(fmt::format("balanced configuration search stalled at residual {:.3e}", res));
    return xb;
}

Mat gram_from_distances(const Mat& s, const Vec& m) {
    const int n = static_cast<int>(m.size());
    Mat c = Mat::Identity(n, n) - Vec::Ones(n) * m.transpose() / m.sum();
    Mat b = -0.5 * c * s * c.transpose();
    return 0.5 * (b + b.transpose());
}

Mat embed_distances(const Mat& s, const MassSystem& sys, double neg_tol) {
    Mat beta = gram_from_distances(s, sys.m);
    Eigen::SelfAdjointEigenSolver<Mat> es(beta);
    const Vec& ev = es.eigenvalues();
    const double top = std::max(ev.maxCoeff(), 0.0);
    if (ev.minCoeff() < -neg_tol * std::max(1.0, top))
        throw NotEmbeddable("reconstructed Gram form has eigenvalue " + std::to_string(ev.minCoeff()));
    std::vector<int> keep;
    for (int i = static_cast<int>(ev.size()) - 1; i >= 0; --i)
        if (ev[i] > 1e-12 * top) keep.push_back(i);
    Mat x(keep.size(), sys.n());
    for (size_t a = 0; a < keep.size(); ++a)
        x.row(a) = std::sqrt(ev[keep[a]]) * es.eigenvectors().col(keep[a]).transpose();
    return centred(x, sys.m);
}

BalancedResiduals balanced_residuals_pijk(const Mat& s, const MassSystem& sys) {
    const int n = sys.n();
    const Vec& m = sys.m;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (!(s(i, j) > 0)) throw ValidationError("squared distances must be positive");
    auto dU = [&](int i, int j) { return m[i] * m[j] * sys.dphi(s(i, j)); };

    BalancedResiduals r;
    r.Pij = Mat::Zero(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double acc = 0;
            for (int l = 0; l < n; ++l)
                if (l != j) acc += (s(i, l) - s(i, j)) * dU(l, j);
            r.Pij(i, j) = acc / (2 * m[j]);
        }
    Mat W = r.Pij - r.Pij.transpose();

    Mat x = embed_distances(s, sys);
    Mat beta_a = gram_form(x) * wintner_conley(x, sys);
    Mat Wc = beta_a - beta_a.transpose();

    std::map<Triple, double> ycor;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            for (int k = j + 1; k < n; ++k) {
                Triple t{i, j, k};
                r.P[t] = W(i, j) + W(j, k) + W(k, i);
                r.commutator[t] = Wc(i, j) + Wc(j, k) + Wc(k, i);
                Eigen::Matrix3d nb;
                nb << 1 / m[i], 1 / m[j], 1 / m[k],
                    s(j, k) - s(k, i) - s(i, j), s(k, i) - s(i, j) - s(j, k), s(i, j) - s(j, k) - s(k, i),
                    dU(j, k), dU(k, i), dU(i, j);
                r.nabla[t] = nb.determinant();
                double ylit = 0, yc = 0;
                for (int l = 0; l < n; ++l) {
                    if (l == i || l == j || l == k) continue;
                    Eigen::Matrix3d y;
                    y << 1, 1, 1,
                        s(j, k) + s(i, l), s(k, i) + s(j, l), s(i, j) + s(k, l),
                        dU(i, l), dU(j, l) / m[j], dU(k, l) / m[k];
                    ylit += y.determinant();
                    y(2, 0) = dU(i, l) / m[i];
                    yc += y.determinant();
                }
                r.Y_literal[t] = ylit;
                ycor[t] = yc;
                const double ref = r.commutator[t];
                r.literal_defect = std::max(r.literal_defect, std::abs(-0.5 * r.nabla[t] + 0.5 * ylit - ref));
                r.corrected_defect = std::max(r.corrected_defect, std::abs(-0.5 * r.nabla[t] + 0.5 * yc - ref));
            }
    r.corrected_selected = r.corrected_defect <= r.literal_defect;
    r.Y = r.corrected_selected ? ycor : r.Y_literal;
    return r;
}

ShapePoint shape_sphere(const Mat& x, const MassSystem& sys) {
    if (sys.n() != 3 || x.rows() != 2 || x.cols() != 3)
        throw ValidationError("shape sphere needs a planar 3-body configuration");
    const Vec& m = sys.m;
    Mat xc = centred(x, m);
    const double mu1 = m[0] * m[1] / (m[0] + m[1]);
    const double mu2 = (m[0] + m[1]) * m[2] / m.sum();
    Eigen::Vector2d c12 = (m[0] * xc.col(0) + m[1] * xc.col(1)) / (m[0] + m[1]);
    Eigen::Vector2d xi1 = std::sqrt(mu1) * (xc.col(1) - xc.col(0));
    Eigen::Vector2d xi2 = std::sqrt(mu2) * (xc.col(2) - c12);
    std::complex<double> z1(xi1[0], xi1[1]), z2(xi2[0], xi2[1]);
    const double I = std::norm(z1) + std::norm(z2);
    if (I < 1e-300) throw DegenerateConfiguration("triple collision");
    ShapePoint p;
    p.I = I;
    p.point = Eigen::Vector3d((std::norm(z1) - std::norm(z2)) / I, 2 * (z1 * std::conj(z2)).real() / I,
                              2 * (std::conj(z1) * z2).imag() / I);
    p.longitude = std::atan2(p.point[1], p.point[0]);
    p.latitude = std::asin(std::clamp(p.point[2], -1.0, 1.0));
    return p;
}

}  // namespace nbody
