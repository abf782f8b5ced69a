#include "nbody/dynamics.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "dop853.hpp"
#include "spline.hpp"

namespace nbody {

namespace {

std::vector<double> sample_grid(double T, int samples) {
    if (!(T > 0)) throw ValidationError("horizon T must be positive");
    if (samples < 2) throw ValidationError("at least 2 samples required");
    std::vector<double> t(samples);
    for (int i = 0; i < samples; ++i) t[i] = T * i / (samples - 1);
    t.back() = T;
    return t;
}

Vec pack(const Mat& a, const Mat& b) {
    Vec v(a.size() + b.size());
    v << Eigen::Map<const Vec>(a.data(), a.size()), Eigen::Map<const Vec>(b.data(), b.size());
    return v;
}

void recentre(Mat& x, const Vec& m) {
    Vec c = x * m / m.sum();
    x.colwise() -= c;
}

Trajectory leapfrog(const State& z0, const MassSystem& sys, double T,
                    const IntegratorOptions& opts) {
    auto grid = sample_grid(T, opts.samples);
    const double span = grid[1] - grid[0];
    const long sub = std::max<long>(1, static_cast<long>(std::ceil(span / opts.leapfrog_dt - 1e-9)));
    const double h = span / sub;
    if (sub * (opts.samples - 1) > opts.max_steps)
        throw StepFailure("leapfrog step budget exceeded");

    Trajectory tr;
    tr.integrator = "leapfrog";
    tr.tol = h;
    Mat x = z0.x, y = z0.y;
    Mat acc = potential_and_gradient(x, sys).grad;
    tr.times.push_back(0);
    tr.states.push_back(z0);
    for (int k = 1; k < opts.samples; ++k) {
        for (long s = 0; s < sub; ++s) {
            y += 0.5 * h * acc;
            x += h * y;
            acc = potential_and_gradient(x, sys).grad;
            y += 0.5 * h * acc;
            ++tr.steps;
        }
        recentre(x, sys.m);
        recentre(y, sys.m);
        tr.times.push_back(grid[k]);
        State z;
        z.x = x;
        z.y = y;
        tr.states.push_back(std::move(z));
    }
    return tr;
}

}  // namespace

Trajectory integrate_absolute(const State& z0, const MassSystem& sys, double T,
                              const IntegratorOptions& opts) {
    sys.validate();
    if (z0.size() != sys.n()) throw ValidationError("state and mass system disagree on n");
    wintner_conley(z0.x, sys);  // throws on an initial collision
    if (opts.kind == IntegratorKind::Leapfrog) return leapfrog(z0, sys, T, opts);

    const int d = z0.dim(), n = z0.size(), dn = d * n;
    auto rhs = [&](double, const Vec& u, Vec& du) {
        Eigen::Map<const Mat> x(u.data(), d, n);
        Mat a = wintner_conley(x, sys);
        du.resize(2 * dn);
        du.head(dn) = u.tail(dn);
        Mat acc = 2.0 * x * a;
        du.tail(dn) = Eigen::Map<const Vec>(acc.data(), dn);
    };
    auto hook = [&](Vec& u) {
        Eigen::Map<Mat> x(u.data(), d, n), y(u.data() + dn, d, n);
        Vec cx = x * sys.m / sys.m.sum(), cy = y * sys.m / sys.m.sum();
        x.colwise() -= cx;
        y.colwise() -= cy;
    };

    detail::Dop853Options o;
    o.rtol = o.atol = opts.tol * opts.safety;
    o.max_steps = opts.max_steps;
    detail::Dop853Stats stats;
    auto grid = sample_grid(T, opts.samples);
    auto out = detail::dop853(rhs, 0.0, pack(z0.x, z0.y), grid, o, &stats, hook);

    Trajectory tr;
    tr.integrator = "rk853";
    tr.tol = opts.tol;
    tr.steps = stats.accepted;
    tr.rejected = stats.rejected;
    tr.times = grid;
    for (auto& u : out) {
        State z;
        z.x = Eigen::Map<const Mat>(u.data(), d, n);
        z.y = Eigen::Map<const Mat>(u.data() + dn, d, n);
        tr.states.push_back(std::move(z));
    }
    spdlog::debug("integrate_absolute: {} steps, {} rejected", stats.accepted, stats.rejected);
    return tr;
}

RelativeState reduced_rhs(const RelativeState& rel, const MassSystem& sys) {
    const double scale = std::max(1.0, rel.beta.diagonal().cwiseAbs().maxCoeff());
    Mat s = beta_to_distances(rel.beta, 1e-12 * scale);
    Mat a = wintner_conley_from_distances(s, sys);
    Mat m1 = a.transpose() * rel.beta;
    Mat m2 = a.transpose() * (rel.gamma - rel.rho);
    RelativeState d;
    d.beta = 2.0 * rel.gamma;
    d.gamma = m1 + m1.transpose() + rel.delta;
    d.delta = 2.0 * (m2 + m2.transpose());
    d.rho = m1 - m1.transpose();
    return d;
}

ReducedTrajectory integrate_reduced(const RelativeState& rel0, const MassSystem& sys, double T,
                                    const IntegratorOptions& opts) {
    sys.validate();
    const int n = rel0.size(), nn = n * n;
    if (n != sys.n()) throw ValidationError("relative state and mass system disagree on n");
    auto unpack = [&](const Vec& u) {
        RelativeState r;
        r.beta = Eigen::Map<const Mat>(u.data(), n, n);
        r.gamma = Eigen::Map<const Mat>(u.data() + nn, n, n);
        r.delta = Eigen::Map<const Mat>(u.data() + 2 * nn, n, n);
        r.rho = Eigen::Map<const Mat>(u.data() + 3 * nn, n, n);
        return r;
    };
    auto pack4 = [&](const RelativeState& r) {
        Vec u(4 * nn);
        u << pack(r.beta, r.gamma), pack(r.delta, r.rho);
        return u;
    };
    auto rhs = [&](double, const Vec& u, Vec& du) { du = pack4(reduced_rhs(unpack(u), sys)); };
    reduced_rhs(rel0, sys);

    detail::Dop853Options o;
    o.rtol = o.atol = opts.tol * opts.safety;
    o.max_steps = opts.max_steps;
    detail::Dop853Stats stats;
    auto grid = sample_grid(T, opts.samples);
    auto out = detail::dop853(rhs, 0.0, pack4(rel0), grid, o, &stats);

    ReducedTrajectory tr;
    tr.integrator = "rk853";
    tr.tol = opts.tol;
    tr.steps = stats.accepted;
    tr.rejected = stats.rejected;
    tr.times = grid;
    for (auto& u : out) tr.states.push_back(unpack(u));
    return tr;
}

Scalars scalars(const State& z, const MassSystem& sys) {
    Scalars s;
    s.I = mass_dot(z.x, z.x, sys.m);
    s.J = mass_dot(z.x, z.y, sys.m);
    s.K = mass_dot(z.y, z.y, sys.m);
    s.U = potential(z.x, sys);
    s.H = 0.5 * s.K - s.U;
    return s;
}

double sundman_gap(const State& z, const MassSystem& sys) {
    const double I = mass_dot(z.x, z.x, sys.m), J = mass_dot(z.x, z.y, sys.m),
                 K = mass_dot(z.y, z.y, sys.m);
    const double c = bivector_norm_and_frequencies(angular_momentum(z, sys)).norm;
    return I * K - J * J - c * c;
}

double sundman_function(const State& z, const MassSystem& sys) {
    Scalars s = scalars(z, sys);
    const double c = bivector_norm_and_frequencies(angular_momentum(z, sys)).norm;
    return (s.J * s.J + c * c) / std::sqrt(s.I) - 2 * std::sqrt(s.I) * s.H;
}

InvariantReport audit_invariants(const Trajectory& traj, const MassSystem& sys) {
    InvariantReport rep;
    const size_t N = traj.states.size();
    if (N == 0) return rep;
    rep.has_g = std::abs(sys.kappa + 1) < 1e-14;

    std::vector<Mat> cs;
    for (size_t k = 0; k < N; ++k) {
        const State& z = traj.states[k];
        Scalars s = scalars(z, sys);
        Bivector c = angular_momentum(z, sys);
        const double cn = bivector_norm_and_frequencies(c).norm;
        cs.push_back(c.matrix());
        rep.series.push_back({traj.times[k], s.H, s.I, s.J, s.K, s.U, cn,
                              s.I * s.K - s.J * s.J - cn * cn, 2 * s.I * s.H - s.J * s.J});
    }

    const InvariantSample& s0 = rep.series.front();
    const double e_nat = 0.5 * s0.K + s0.U;
    const double e_scale = std::abs(s0.H) > 1e-6 * e_nat ? std::abs(s0.H) : e_nat;
    const double c_nat = std::sqrt(s0.I * s0.K);
    const double c_max = cs[0].cwiseAbs().maxCoeff();
    const double c_scale = c_max > 1e-6 * c_nat ? c_max : c_nat;
    const double g_nat = s0.I * (s0.K + 2 * s0.U) + s0.J * s0.J;
    const double g_scale = std::abs(s0.G) > 1e-6 * g_nat ? std::abs(s0.G) : g_nat;

    rep.sundman_min_gap = std::numeric_limits<double>::infinity();
    for (size_t k = 0; k < N; ++k) {
        const auto& s = rep.series[k];
        rep.energy_drift = std::max(rep.energy_drift, std::abs(s.H - s0.H) / e_scale);
        if (c_scale > 0)
            rep.momentum_drift =
                std::max(rep.momentum_drift, (cs[k] - cs[0]).cwiseAbs().maxCoeff() / c_scale);
        rep.g_drift = std::max(rep.g_drift, std::abs(s.G - s0.G) / g_scale);
        const double ik = s.I * s.K;
        rep.sundman_min_gap = std::min(rep.sundman_min_gap, ik > 0 ? s.sundman_gap / ik : 0.0);
    }

    if (N >= 5) {
        std::vector<double> t(N), J(N);
        for (size_t k = 0; k < N; ++k) {
            t[k] = rep.series[k].t;
            J[k] = rep.series[k].J;
        }
        auto dJ = detail::spline_derivative(t, J);
        const size_t margin = std::max<size_t>(2, N / 20);
        for (size_t k = margin; k + margin < N; ++k) {
            const auto& s = rep.series[k];
            const double rhs = 2 * s.H + 2 * (sys.kappa + 1) * s.U;
            rep.lagrange_jacobi_residual = std::max(rep.lagrange_jacobi_residual, std::abs(dJ[k] - rhs));
        }
    }
    if (!rep.has_g) rep.g_drift = 0;
    return rep;
}

SchwarzResult complex_schwarz_gap(const State& z, const Bivector& omega, const MassSystem& sys,
                                  double tol) {
    const Mat w = omega.matrix();
    const int d = omega.dim();
    if (d != z.dim()) throw ValidationError("bivector dimension differs from state dimension");
    if (d > 0) {
        const double op = Eigen::JacobiSVD<Mat>(w).singularValues()[0];
        if (op > 1 + 1e-10)
            throw InvalidStructure("structure is not contracting: operator norm " + std::to_string(op));
        const double cube = (w * w * w + w).norm();
        if (cube > 1e-10)
            throw InvalidStructure("J^2 is not -Id on the image of J (defect " + std::to_string(cube) + ")");
    }
    const double I = mass_dot(z.x, z.x, sys.m), J = mass_dot(z.x, z.y, sys.m),
                 K = mass_dot(z.y, z.y, sys.m);
    const double comp = mass_dot(w * z.x, z.y, sys.m);
    SchwarzResult r;
    r.gap = I * K - J * J - comp * comp;
    r.equality = r.gap <= tol * I * K;
    r.structure_defect = 0;
    if (r.equality) {
        HermitianStructure h = hermitian_from_bivector(angular_momentum(z, sys));
        if (h.F.cols() > 0) {
            Mat P = h.F * h.F.transpose();
            const double sign = comp >= 0 ? 1.0 : -1.0;
            r.structure_defect = ((w - sign * h.Omega) * P).norm();
        }
    }
    return r;
}

Mat solve_inertia_operator(const Mat& S, const Mat& C) {
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (S + S.transpose()));
    const Vec& s = es.eigenvalues();
    const Mat& V = es.eigenvectors();
    Mat ct = V.transpose() * C * V;
    const double floor = 1e-14 * std::max(s.cwiseAbs().maxCoeff(), 1e-300);
    Mat wt = Mat::Zero(C.rows(), C.cols());
    for (int a = 0; a < ct.rows(); ++a)
        for (int b = 0; b < ct.cols(); ++b) {
            const double den = s[a] + s[b];
            if (den > floor) wt(a, b) = ct(a, b) / den;
        }
    Mat w = V * wt * V.transpose();
    return 0.5 * (w - w.transpose());
}

SaariParts saari_decomposition(const State& z, const MassSystem& sys) {
    Inertia in = inertia(z.x, sys);
    if (in.I < 1e-300) throw DegenerateConfiguration("I = 0: total collision");
    const double J = mass_dot(z.x, z.y, sys.m);
    SaariParts p;
    p.yh = (J / in.I) * z.x;
    p.omega = solve_inertia_operator(in.S, angular_momentum(z, sys).matrix());
    p.yr = p.omega * z.x;
    p.yd = z.y - p.yh - p.yr;
    return p;
}

DziobekRanks dziobek_ranks(const State& z, const MassSystem& sys, double rel) {
    DziobekRanks r;
    r.n = sys.n();
    r.rank_C = numerical_rank(angular_momentum(z, sys).matrix(), rel);
    r.rank_E = numerical_rank(RelativeState::from_state(z).energy_form(), rel);
    return r;
}

State remove_angular_momentum(const State& z, const MassSystem& sys) {
    Mat w = solve_inertia_operator(inertia(z.x, sys).S, angular_momentum(z, sys).matrix());
    State out = z;
    out.y = z.y - w * z.x;
    return out;
}

}  // namespace nbody
