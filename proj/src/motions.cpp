#include "nbody/motions.hpp"

#include <spdlog/fmt/fmt.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "nbody/configurations.hpp"

namespace nbody {

double kepler_anomaly(double e, double l) {
    if (!(e >= 0 && e < 1)) throw ValidationError("eccentricity must lie in [0, 1)");
    const double two_pi = 2 * std::numbers::pi;
    const double lr = std::remainder(l, two_pi);
    const double off = l - lr;
    if (e == 0) return l;

    auto f = [&](double u) { return u - e * std::sin(u) - lr; };
    double lo = lr - e, hi = lr + e;  // |u - l| <= e
    double u = lr + e * std::sin(lr) / (1 - std::sin(lr + e) + std::sin(lr));
    if (!(u > lo && u < hi)) u = lr;
    for (int it = 0; it < 200; ++it) {
        const double fu = f(u);
        if (fu == 0) break;
        if (fu > 0) hi = std::min(hi, u);
        else lo = std::max(lo, u);
        const double dfu = 1 - e * std::cos(u);
        double next;
        if (dfu < 1e-3) {
            next = 0.5 * (lo + hi);
        } else {
            next = u - fu / dfu;
            if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        }
        if (next == u || hi - lo < 1e-16 * std::max(1.0, std::abs(u))) {
            u = next;
            break;
        }
        u = next;
        if (std::abs(f(u)) < 1e-16 * std::max(1.0, std::abs(lr))) break;
    }
    return off + u;
}

KeplerOrbit KeplerOrbit::make(double k, double a, double e, double t0) {
    if (!(k > 0)) throw ValidationError("Kepler attraction k must be positive");
    if (!(a > 0)) throw ValidationError("Kepler parameter a must be positive");
    if (!(e >= 0 && e < 1)) throw ValidationError("eccentricity must lie in [0, 1)");
    KeplerOrbit o;
    o.k = k;
    o.a = a;
    o.e = e;
    o.t0 = t0;
    o.c = k * std::sqrt(a * (1 - e * e));
    return o;
}

double KeplerOrbit::mean_motion() const { return 1.0 / (k * std::pow(a, 1.5)); }
double KeplerOrbit::period() const { return 2 * std::numbers::pi / mean_motion(); }

KeplerState kepler_state(const KeplerOrbit& o, double t) {
    KeplerState s;
    const double n = o.mean_motion();
    s.l = n * (t - o.t0);
    s.u = kepler_anomaly(o.e, s.l);
    const double A = o.k * o.a, root = std::sqrt(1 - o.e * o.e);
    const double cu = std::cos(s.u), su = std::sin(s.u);
    const double du = n / (1 - o.e * cu);
    s.position = {A * (cu - o.e), A * root * su};
    s.velocity = {-A * su * du, A * root * cu * du};
    s.r = A * (1 - o.e * cu);
    s.v = std::atan2(s.position[1], s.position[0]);
    return s;
}

namespace {

// Orthonormal basis of the span of the columns of x, d x r.
Mat column_span(const Mat& x, double rel = 1e-10) {
    Eigen::JacobiSVD<Mat> svd(x, Eigen::ComputeThinU);
    const Vec& sv = svd.singularValues();
    int r = 0;
    for (int i = 0; i < sv.size(); ++i)
        if (sv[i] > rel * sv[0]) ++r;
    return svd.matrixU().leftCols(r);
}

}  // namespace

HomographicMotion::HomographicMotion(const Mat& x0, const MassSystem& sys, double e, double scale,
                                     StructureChoice choice, double tol)
    : sys_(sys) {
    sys.validate();
    if (std::abs(sys.kappa + 0.5) > 1e-14)
        throw ValidationError("homographic motions are built for the Newtonian potential only");
    if (!(scale > 0)) throw ValidationError("scale (semi-major axis) must be positive");
    Mat x = centred(x0, sys.m);
    const double I = mass_dot(x, x, sys.m);
    if (!(I > 0)) throw DegenerateConfiguration("total collision");
    x /= std::sqrt(I);
    const double res = central_residual(x, sys);
    if (!(res <= tol)) throw NotCentral(fmt::format("central residual {:.3e} exceeds tolerance", res));

    Mat basis = column_span(x);
    const int r = static_cast<int>(basis.cols());
    Mat coords = basis.transpose() * x;  // r x n
    if (choice == StructureChoice::Auto)
        choice = r <= 2 ? StructureChoice::PlaneQuarterTurn : StructureChoice::Complexified;

    if (choice == StructureChoice::PlaneQuarterTurn) {
        if (r > 2) throw InvalidStructure("quarter-turn structure needs a planar configuration");
        x0_ = Mat::Zero(2, sys.n());
        x0_.topRows(r) = coords;
        Mat rot(2, 2);
        rot << 0, -1, 1, 0;
        Jx0_ = rot * x0_;
    } else {
        x0_ = Mat::Zero(2 * r, sys.n());
        Jx0_ = Mat::Zero(2 * r, sys.n());
        x0_.topRows(r) = coords;
        Jx0_.bottomRows(r) = coords;
    }
    const double k = potential(x0_, sys);
    orbit_ = KeplerOrbit::make(k, scale / k, e);
}

State HomographicMotion::at(double t) const {
    KeplerState ks = kepler_state(orbit_, t);
    State z;
    z.x = ks.position[0] * x0_ + ks.position[1] * Jx0_;
    z.y = ks.velocity[0] * x0_ + ks.velocity[1] * Jx0_;
    return z;
}

State homographic_motion(const Mat& x0, const MassSystem& sys, double e, double scale, double t) {
    return HomographicMotion(x0, sys, e, scale).at(t);
}

State RelativeEquilibrium::at(double t) const {
    const int p = rank;
    State z;
    z.x = Mat::Zero(x0.rows(), x0.cols());
    z.y = Mat::Zero(x0.rows(), x0.cols());
    for (int i = 0; i < p; ++i) {
        const double w = frequencies[i], c = std::cos(w * t), s = std::sin(w * t);
        z.x.row(i) = c * x0.row(i) - s * x0.row(p + i);
        z.x.row(p + i) = s * x0.row(i) + c * x0.row(p + i);
    }
    z.y = Omega * z.x;
    return z;
}

State RelativeEquilibrium::initial_state() const { return at(0.0); }

double RelativeEquilibrium::slowest_period() const {
    return 2 * std::numbers::pi / frequencies.back();
}

RelativeEquilibrium relative_equilibrium(const Mat& x0, const MassSystem& sys, double tol) {
    sys.validate();
    Mat x = centred(x0, sys.m);
    const double res = balanced_residual(x, sys);
    if (!(res <= tol)) throw NotBalanced(fmt::format("commutator residual {:.3e} exceeds tolerance", res));

    const int n = sys.n();
    Vec sq = sys.m.cwiseSqrt(), isq = sq.cwiseInverse();
    Mat a = wintner_conley(x, sys);
    Mat ah = isq.asDiagonal() * a * sq.asDiagonal();
    ah = 0.5 * (ah + ah.transpose());
    Mat bh = sq.asDiagonal() * gram_form(x) * sq.asDiagonal();
    bh = 0.5 * (bh + bh.transpose());

    Eigen::SelfAdjointEigenSolver<Mat> eb(bh);
    const Vec& bv = eb.eigenvalues();
    const double top = bv.maxCoeff();
    struct Mode {
        double a, b;
        Vec v;
    };
    std::vector<Mode> modes;
    // group equal eigenvalues of B, then diagonalize A inside each group
    int i = n - 1;
    while (i >= 0) {
        if (bv[i] <= 1e-12 * top) break;
        int j = i;
        while (j - 1 >= 0 && std::abs(bv[j - 1] - bv[i]) <= 1e-8 * top) --j;
        Mat V = eb.eigenvectors().middleCols(j, i - j + 1);
        Eigen::SelfAdjointEigenSolver<Mat> ea(V.transpose() * ah * V);
        for (int c = 0; c < V.cols(); ++c) {
            Vec v = V * ea.eigenvectors().col(c);
            modes.push_back({ea.eigenvalues()[c], v.dot(bh * v), v});
        }
        i = j - 1;
    }
    for (const auto& md : modes)
        if (md.a >= 0) throw NotAttractive(fmt::format("Wintner-Conley eigenvalue {:.3e} >= 0 on the image", md.a));
    std::stable_sort(modes.begin(), modes.end(), [](const Mode& p, const Mode& q) { return p.a < q.a; });

    RelativeEquilibrium re;
    re.rank = static_cast<int>(modes.size());
    const int p = re.rank;
    re.x0 = Mat::Zero(2 * p, n);
    re.Omega = Mat::Zero(2 * p, 2 * p);
    for (int k = 0; k < p; ++k) {
        const double w = std::sqrt(-2 * modes[k].a);
        re.frequencies.push_back(w);
        re.x0.row(k) = std::sqrt(std::max(0.0, modes[k].b)) * (isq.asDiagonal() * modes[k].v).transpose();
        re.Omega(p + k, k) = w;
        re.Omega(k, p + k) = -w;
    }
    return re;
}

std::vector<double> sundman_profile(const std::vector<State>& samples, const MassSystem& sys) {
    std::vector<double> out;
    out.reserve(samples.size());
    for (const auto& z : samples) out.push_back(sundman_gap(z, sys));
    return out;
}

}  // namespace nbody
