#include "nbody/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace nbody {

MassSystem::MassSystem(Vec masses, double G_, double kappa_)
    : m(std::move(masses)), G(G_), kappa(kappa_) {
    validate();
}

void MassSystem::validate() const {
    if (m.size() < 2) throw ValidationError("n >= 2 required, got " + std::to_string(m.size()));
    for (int i = 0; i < m.size(); ++i) {
        if (!(m[i] > 0) || !std::isfinite(m[i])) {
            std::ostringstream os;
            os << "mass m[" << i << "] = " << m[i] << " violates m_i > 0";
            throw ValidationError(os.str());
        }
    }
    if (!(kappa < 0)) throw ValidationError("kappa < 0 required (attractive potential)");
    if (!(G > 0) || !std::isfinite(G)) throw ValidationError("G > 0 required");
}

double MassSystem::phi(double s) const { return G * std::pow(s, kappa); }
double MassSystem::dphi(double s) const { return G * kappa * std::pow(s, kappa - 1); }
double MassSystem::ddphi(double s) const {
    return G * kappa * (kappa - 1) * std::pow(s, kappa - 2);
}

Mat centred(const Mat& x, const Vec& m) {
    if (x.cols() != m.size())
        throw ValidationError("configuration has " + std::to_string(x.cols()) +
                              " columns but there are " + std::to_string(m.size()) + " masses");
    Vec c = x * m / m.sum();
    return x.colwise() - c;
}

State::State(const Mat& x_, const Mat& y_, const MassSystem& sys) {
    if (x_.rows() != y_.rows() || x_.cols() != y_.cols())
        throw ValidationError("positions and velocities differ in shape");
    if (!x_.allFinite() || !y_.allFinite()) throw ValidationError("non-finite coordinates");
    x = centred(x_, sys.m);
    y = centred(y_, sys.m);
}

Bivector::Bivector(const Mat& c) : d_(static_cast<int>(c.rows())) {
    upper_.resize(d_ * (d_ - 1) / 2);
    int k = 0;
    for (int i = 0; i < d_; ++i)
        for (int j = i + 1; j < d_; ++j) upper_[k++] = 0.5 * (c(i, j) - c(j, i));
}

double Bivector::operator()(int i, int j) const {
    if (i == j) return 0.0;
    if (i > j) return -(*this)(j, i);
    // row-major offset of (i, j) in the strict upper triangle
    int k = i * d_ - i * (i + 1) / 2 + (j - i - 1);
    return upper_[k];
}

Mat Bivector::matrix() const {
    Mat c = Mat::Zero(d_, d_);
    int k = 0;
    for (int i = 0; i < d_; ++i)
        for (int j = i + 1; j < d_; ++j) {
            c(i, j) = upper_[k];
            c(j, i) = -upper_[k];
            ++k;
        }
    return c;
}

RelativeState RelativeState::from_state(const State& z) {
    RelativeState r;
    Mat xty = z.x.transpose() * z.y;
    r.beta = z.x.transpose() * z.x;
    r.gamma = 0.5 * (xty + xty.transpose());
    r.rho = 0.5 * (xty.transpose() - xty);
    r.delta = z.y.transpose() * z.y;
    return r;
}

Mat RelativeState::energy_form() const {
    const int n = size();
    Mat e(2 * n, 2 * n);
    e << beta, gamma - rho, gamma + rho, delta;
    return e;
}

double mass_dot(const Mat& a, const Mat& b, const Vec& m) {
    return ((a.array() * b.array()).colwise().sum().transpose() * m.array()).sum();
}

Mat gram_form(const Mat& x) { return x.transpose() * x; }

Mat beta_to_distances(const Mat& beta, double tol) {
    const int n = static_cast<int>(beta.rows());
    Mat s = Mat::Zero(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            double v = beta(i, i) + beta(j, j) - 2 * beta(i, j);
            if (v < 0) {
                if (v < -tol) {
                    std::ostringstream os;
                    os << "s_" << i << j << " = " << v << " < 0: not a Gram form";
                    throw NegativeSquaredDistance(os.str());
                }
                v = 0;
            }
            s(i, j) = s(j, i) = v;
        }
    return s;
}

Inertia inertia(const Mat& x, const MassSystem& sys) {
    Inertia r;
    r.B = sys.m.asDiagonal() * gram_form(x);
    r.S = x * sys.m.asDiagonal() * x.transpose();
    r.I = mass_dot(x, x, sys.m);
    return r;
}

double inertia_from_distances(const Mat& s, const Vec& m) {
    double acc = 0;
    for (int i = 0; i < m.size(); ++i)
        for (int j = i + 1; j < m.size(); ++j) acc += m[i] * m[j] * s(i, j);
    return acc / m.sum();
}

Vec elementary_symmetric(const Vec& values, int k) {
    Vec e = Vec::Zero(k + 1);
    e[0] = 1;
    for (int i = 0; i < values.size(); ++i)
        for (int j = std::min<int>(k, i + 1); j >= 1; --j) e[j] += values[i] * e[j - 1];
    return e.tail(k);
}

Vec characteristic_coefficients(const Mat& x, const MassSystem& sys, InertiaSide side) {
    const int n = sys.n();
    Vec eig;
    if (side == InertiaSide::Intrinsic) {
        // mu^{1/2} beta mu^{1/2} is symmetric and similar to B = mu beta
        Vec sq = sys.m.cwiseSqrt();
        Mat bh = sq.asDiagonal() * gram_form(x) * sq.asDiagonal();
        eig = Eigen::SelfAdjointEigenSolver<Mat>(0.5 * (bh + bh.transpose()), Eigen::EigenvaluesOnly)
                  .eigenvalues();
    } else {
        Mat s = inertia(x, sys).S;
        eig = Eigen::SelfAdjointEigenSolver<Mat>(0.5 * (s + s.transpose()), Eigen::EigenvaluesOnly)
                  .eigenvalues();
    }
    return elementary_symmetric(eig, n - 1);
}

Mat wintner_conley_from_distances(const Mat& s, const MassSystem& sys) {
    const int n = sys.n();
    const double floor2 = sys.collision_floor * sys.collision_floor;
    Mat a = Mat::Zero(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            if (!(s(i, j) >= floor2)) {
                std::ostringstream os;
                os << "bodies " << i << " and " << j << " at distance " << std::sqrt(std::max(0.0, s(i, j)))
                   << " below collision floor";
                throw CollisionError(os.str());
            }
            const double dp = sys.dphi(s(i, j));
            a(i, j) = -sys.m[i] * dp;
            a(j, i) = -sys.m[j] * dp;
        }
    for (int j = 0; j < n; ++j) a(j, j) = -a.col(j).sum();
    return a;
}

namespace {
Mat pair_distances(const Mat& x) {
    const int n = static_cast<int>(x.cols());
    Mat s = Mat::Zero(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) s(i, j) = s(j, i) = (x.col(i) - x.col(j)).squaredNorm();
    return s;
}
}  // namespace

Mat wintner_conley(const Mat& x, const MassSystem& sys) {
    return wintner_conley_from_distances(pair_distances(x), sys);
}

double potential_from_distances(const Mat& s, const MassSystem& sys) {
    double u = 0;
    for (int i = 0; i < sys.n(); ++i)
        for (int j = i + 1; j < sys.n(); ++j) u += sys.m[i] * sys.m[j] * sys.phi(s(i, j));
    return u;
}

double potential(const Mat& x, const MassSystem& sys) {
    Mat s = pair_distances(x);
    const double floor2 = sys.collision_floor * sys.collision_floor;
    for (int i = 0; i < sys.n(); ++i)
        for (int j = i + 1; j < sys.n(); ++j)
            if (!(s(i, j) >= floor2)) throw CollisionError("collision in potential evaluation");
    return potential_from_distances(s, sys);
}

PotentialGradient potential_and_gradient(const Mat& x, const MassSystem& sys) {
    Mat s = pair_distances(x);
    Mat a = wintner_conley_from_distances(s, sys);
    return {potential_from_distances(s, sys), 2.0 * x * a};
}

double min_distance(const Mat& x) {
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < x.cols(); ++i)
        for (int j = i + 1; j < x.cols(); ++j) best = std::min(best, (x.col(i) - x.col(j)).norm());
    return best;
}

Bivector angular_momentum(const Mat& x, const Mat& y, const Vec& m) {
    return Bivector(y * m.asDiagonal() * x.transpose() - x * m.asDiagonal() * y.transpose());
}

Bivector angular_momentum(const State& z, const MassSystem& sys) {
    return angular_momentum(z.x, z.y, sys.m);
}

NormFrequencies bivector_norm_and_frequencies(const Bivector& c, double rel_zero) {
    NormFrequencies r{0.0, {}};
    if (c.dim() < 2) return r;
    Vec sv = Eigen::JacobiSVD<Mat>(c.matrix()).singularValues();
    // singular values of an antisymmetric matrix come in equal pairs
    const double top = sv.size() ? sv[0] : 0.0;
    for (int i = 0; i + 1 < sv.size(); i += 2) {
        double w = 0.5 * (sv[i] + sv[i + 1]);
        if (w > rel_zero * top && w > 0) r.omega.push_back(w);
    }
    r.norm = 0.5 * sv.sum();
    return r;
}

HermitianStructure hermitian_from_bivector(const Bivector& c, double rel_zero) {
    const int d = c.dim();
    HermitianStructure h{Mat::Zero(d, d), Mat::Zero(d, d), Mat(d, 0)};
    if (d < 2) return h;
    Mat cm = c.matrix();
    Mat sq = cm * cm.transpose();  // = -(C eps)^2
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (sq + sq.transpose()));
    Vec ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    const double top = ev.maxCoeff();
    if (top <= 0) return h;
    Vec inv = Vec::Zero(d);
    std::vector<int> keep;
    for (int i = 0; i < d; ++i)
        if (ev[i] > rel_zero * top) {
            inv[i] = 1.0 / ev[i];
            keep.push_back(i);
        }
    Mat root_pinv = es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
    Mat j = root_pinv * cm;
    j = 0.5 * (j - j.transpose());
    h.J = j;
    h.Omega = j;
    h.F.resize(d, static_cast<int>(keep.size()));
    for (size_t k = 0; k < keep.size(); ++k) h.F.col(k) = es.eigenvectors().col(keep[k]);
    return h;
}

Bivector inertia_operator_apply(const Bivector& omega, const Mat& x, const MassSystem& sys) {
    Mat s = inertia(x, sys).S;
    Mat w = omega.matrix();
    return Bivector(s * w + w * s);
}

double bivector_component(const Bivector& c, const Bivector& omega) {
    return 0.5 * (c.matrix().cwiseProduct(omega.matrix())).sum();
}

int numerical_rank(const Mat& a, double rel) {
    if (a.size() == 0) return 0;
    Vec sv = Eigen::JacobiSVD<Mat>(a).singularValues();
    if (sv.size() == 0 || sv[0] <= 0) return 0;
    int r = 0;
    for (int i = 0; i < sv.size(); ++i)
        if (sv[i] > rel * sv[0]) ++r;
    return r;
}

}  // namespace nbody
