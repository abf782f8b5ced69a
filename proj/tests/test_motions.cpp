#include <doctest.h>

#include <numbers>

#include "nbody/configurations.hpp"
#include "nbody/motions.hpp"
#include "support.hpp"

using namespace nbody;
using testing::max_abs;

namespace {

constexpr double pi = std::numbers::pi;

double bisect_anomaly(double e, double l) {
    double lo = l - 1.0, hi = l + 1.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (mid - e * std::sin(mid) < l ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

Mat equilateral() {
    Mat x(2, 3);
    x << -1, 1, 0, 0, 0, std::sqrt(3.0);
    return x;
}

// Eccentricity of the conic through the points, with the algebraic fit residual.
std::pair<double, double> conic_fit(const std::vector<Eigen::Vector2d>& pts) {
    Mat a(pts.size(), 6);
    for (size_t i = 0; i < pts.size(); ++i) {
        const double x = pts[i][0], y = pts[i][1];
        a.row(i) << x * x, x * y, y * y, x, y, 1;
    }
    Eigen::JacobiSVD<Mat> svd(a, Eigen::ComputeFullV);
    Vec c = svd.matrixV().col(5);
    Eigen::Matrix2d q;
    q << c[0], c[1] / 2, c[1] / 2, c[2];
    Eigen::Vector2d ev = Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d>(q).eigenvalues().cwiseAbs();
    const double e = std::sqrt(1 - ev.minCoeff() / ev.maxCoeff());
    return {e, svd.singularValues()[5] / svd.singularValues()[0]};
}

// Accelerations from a five-point difference of the velocities.
template <class F>
double eom_defect(F&& at, const MassSystem& sys, double t, double h = 1e-4) {
    State z = at(t);
    Mat acc = (at(t - 2 * h).y - 8 * at(t - h).y + 8 * at(t + h).y - at(t + 2 * h).y) / (12 * h);
    Mat grad = potential_and_gradient(z.x, sys).grad;
    return max_abs(acc - grad) / max_abs(grad);
}

}  // namespace

TEST_CASE("Kepler equation") {
    CHECK(kepler_anomaly(0.0, 1.234) == doctest::Approx(1.234).epsilon(1e-15));
    for (double e : {0.0, 0.3, 0.9, 0.999}) CHECK(std::abs(kepler_anomaly(e, pi) - pi) < 1e-14);
    CHECK(std::abs(kepler_anomaly(0.5, pi / 2) - bisect_anomaly(0.5, pi / 2)) < 1e-14);
    CHECK(std::abs(kepler_anomaly(0.5, pi / 2) - 2.0209799380897703) < 1e-13);

    for (double e : {0.0, 0.1, 0.5, 0.9, 0.99}) {
        double prev = -1;
        for (int k = 0; k <= 2000; ++k) {
            const double l = -3 * pi + 6 * pi * k / 2000.0;
            const double u = kepler_anomaly(e, l);
            CHECK(std::abs(u - e * std::sin(u) - l) < 1e-13);
            if (k) CHECK(u > prev);
            prev = u;
        }
        for (int k = 0; k < 100; ++k) {
            const double u = 2 * pi * k / 100.0;
            CHECK(std::abs(kepler_anomaly(e, u - e * std::sin(u)) - u) < 1e-13);
        }
    }
    CHECK_THROWS_AS(kepler_anomaly(1.0, 0.3), ValidationError);
}

TEST_CASE("Kepler orbits") {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(0.2, 3.0), ue(0.0, 0.95);
    for (int trial = 0; trial < 10; ++trial) {
        const double k = u(rng), a = u(rng), e = ue(rng);
        KeplerOrbit o = KeplerOrbit::make(k, a, e, 0.4);
        CHECK(std::abs(k * k - o.c * o.c / a - k * k * e * e) < 1e-12 * k * k);

        for (int s = 0; s < 20; ++s) {
            const double t = 10 * u(rng);
            KeplerState ks = kepler_state(o, t);
            const Eigen::Vector2d z = ks.position, v = ks.velocity;
            const double r = z.norm();
            CHECK(ks.r == doctest::Approx(r).epsilon(1e-12));
            CHECK(std::abs(o.c * o.c / (k * (1 + e * std::cos(ks.v))) - r) < 1e-10 * r);
            CHECK(0.5 * v.squaredNorm() - k / r == doctest::Approx(o.energy()).epsilon(1e-11));

            // step scaled to the local time scale r / |v|
            const double h = 3e-5 * r / v.norm();
            Eigen::Vector2d acc = (kepler_state(o, t + h).velocity - kepler_state(o, t - h).velocity) / (2 * h);
            Eigen::Vector2d newton = -k * z / (r * r * r);
            CHECK((acc - newton).norm() < 1e-8 * newton.norm());
            CHECK((kepler_state(o, t + h).position - kepler_state(o, t - h).position - 2 * h * v).norm() <
                  1e-7 * h * v.norm());

            // Sundman equality for a single Kepler body
            const double I = z.squaredNorm(), K = v.squaredNorm(), J = z.dot(v);
            const double C = z[0] * v[1] - z[1] * v[0];
            CHECK(std::abs(I * K - J * J - C * C) < 1e-10 * I * K);
            CHECK(C == doctest::Approx(o.c).epsilon(1e-10));
        }
        KeplerState s0 = kepler_state(o, 1.1), s1 = kepler_state(o, 1.1 + o.period());
        CHECK((s0.position - s1.position).norm() < 1e-10 * s0.r);
    }

    KeplerOrbit circ = KeplerOrbit::make(2.0, 0.75, 0.0);
    for (double t : {0.0, 0.7, 3.1, 12.0}) CHECK(kepler_state(circ, t).r == doctest::Approx(1.5).epsilon(1e-14));
    CHECK(circ.period() == doctest::Approx(2 * pi * 2.0 * std::pow(0.75, 1.5)));
}

TEST_CASE("circular homographic motion is rigid") {
    MassSystem sys(Vec::Ones(3));
    HomographicMotion hm(equilateral(), sys, 0.0, 2.0);
    CHECK(hm.dimension() == 2);
    Mat beta0 = gram_form(hm.at(0).x);
    for (double t : {0.3, 1.7, 5.0}) {
        CHECK(max_abs(gram_form(hm.at(t).x) - beta0) < 1e-12 * max_abs(beta0));
        CHECK(eom_defect([&](double s) { return hm.at(s); }, sys, t) < 1e-8);
    }
}

TEST_CASE("elliptic homographic motion of the Lagrange triangle") {
    MassSystem sys(Vec::Ones(3));
    HomographicMotion hm(equilateral(), sys, 0.5, 1.0);
    const double T = hm.period();
    std::vector<std::vector<Eigen::Vector2d>> paths(3);
    std::vector<double> hmin(3, 1e300), hmax(3, -1e300);
    const double k = hm.orbit().k;
    for (int s = 0; s < 200; ++s) {
        const double t = T * s / 200.0;
        State z = hm.at(t);
        const Scalars sc = scalars(z, sys);
        CHECK(std::abs(sundman_gap(z, sys)) < 1e-10 * sc.I * sc.K);
        if (s % 10 == 0) CHECK(eom_defect([&](double q) { return hm.at(q); }, sys, t) < 1e-8);
        for (int i = 0; i < 3; ++i) {
            paths[i].push_back(z.x.col(i));
            // body i feels -k |x0_i|^3 x_i / |x_i|^3
            const double ki = k * std::pow(hm.base().col(i).norm(), 3);
            const double Hi = 0.5 * z.y.col(i).squaredNorm() - ki / z.x.col(i).norm();
            hmin[i] = std::min(hmin[i], Hi);
            hmax[i] = std::max(hmax[i], Hi);
        }
    }
    for (int i = 0; i < 3; ++i) {
        auto [e, resid] = conic_fit(paths[i]);
        CHECK(e == doctest::Approx(0.5).epsilon(1e-8));
        CHECK(resid < 1e-8);
        CHECK(hmax[i] - hmin[i] < 1e-8 * std::abs(hmin[i]));
    }
    State z0 = hm.at(0.3), z1 = hm.at(0.3 + T);
    CHECK(max_abs(z0.x - z1.x) < 1e-10);
}

TEST_CASE("homographic Euler motion agrees with integration") {
    MassSystem sys(Vec{{1.0, 2.0, 3.5}});
    Mat seed(1, 3);
    seed << 0, 1.1, 2.3;
    Mat x0 = find_central_from(seed, sys);
    HomographicMotion hm(x0, sys, 0.9, 1.0);
    const double T = hm.period();
    IntegratorOptions o;
    o.tol = 1e-13;
    o.samples = 11;
    Trajectory tr = integrate_absolute(hm.at(0.5 * T), sys, T, o);
    double worst = 0;
    for (size_t s = 0; s < tr.times.size(); ++s) {
        State ref = hm.at(0.5 * T + tr.times[s]);
        worst = std::max(worst, max_abs(tr.states[s].x - ref.x) / max_abs(ref.x));
    }
    CHECK(worst < 1e-8);
    for (double t : {0.0, 0.01 * T, 0.3 * T}) CHECK(eom_defect([&](double q) { return hm.at(q); }, sys, t, 1e-5) < 1e-8);
}

TEST_CASE("homographic input checks") {
    MassSystem sys(Vec::Ones(3));
    Mat scalene(2, 3);
    scalene << 0, 1, 0.3, 0, 0, 0.7;
    CHECK_THROWS_AS(HomographicMotion(scalene, sys, 0.2, 1.0), NotCentral);
    CHECK_THROWS_AS(HomographicMotion(equilateral(), sys, 1.2, 1.0), ValidationError);
    CHECK_THROWS_AS(HomographicMotion(equilateral(), sys, 0.2, -1.0), ValidationError);
    Mat x3 = find_central(MassSystem(Vec::Ones(4)), 3, 1);
    CHECK_THROWS_AS(HomographicMotion(x3, MassSystem(Vec::Ones(4)), 0.2, 1.0, StructureChoice::PlaneQuarterTurn),
                    InvalidStructure);
}

TEST_CASE("spatial central configuration uses the complexified structure") {
    MassSystem sys(Vec::Ones(4));
    Mat x0 = find_central(sys, 3, 1);
    HomographicMotion hm(x0, sys, 0.4, 1.0);
    CHECK(hm.dimension() == 6);
    for (double t : {0.0, 0.9, 2.5}) {
        State z = hm.at(t);
        const Scalars sc = scalars(z, sys);
        CHECK(std::abs(sundman_gap(z, sys)) < 1e-10 * sc.I * sc.K);
        CHECK(eom_defect([&](double q) { return hm.at(q); }, sys, t) < 1e-8);
    }
}

TEST_CASE("relative equilibrium of an isosceles triangle") {
    MassSystem sys(Vec::Ones(3));
    Mat x = find_balanced(sys, {0.55, 0.45}, 1);
    CHECK(classify(x, sys).kind == ConfigKind::Balanced);
    RelativeEquilibrium re = relative_equilibrium(x, sys);
    CHECK(re.rank == 2);
    CHECK(re.dimension() == 4);
    REQUIRE(re.frequencies.size() == 2);
    CHECK(re.frequencies[0] - re.frequencies[1] > 1e-2);
    CHECK(max_abs(re.Omega + re.Omega.transpose()) == 0);

    // Omega^2 x0 = grad U: the force is balanced by a fixed rotation
    Mat lhs = re.Omega * re.Omega * re.x0;
    Mat grad = potential_and_gradient(re.x0, sys).grad;
    CHECK(max_abs(lhs - grad) < 1e-10 * max_abs(grad));
    // the embedded configuration has the same shape
    CHECK(max_abs(gram_form(re.x0) - gram_form(centred(x, sys.m))) < 1e-10);

    const double T = 10 * re.slowest_period();
    IntegratorOptions o;
    o.tol = 1e-12;
    o.samples = 401;
    Trajectory tr = integrate_absolute(re.initial_state(), sys, T, o);
    Mat beta0 = gram_form(re.x0);
    double drift = 0, state_err = 0;
    std::vector<double> gap = sundman_profile(tr.states, sys);
    for (size_t s = 0; s < tr.states.size(); ++s) {
        drift = std::max(drift, max_abs(gram_form(tr.states[s].x) - beta0));
        state_err = std::max(state_err, max_abs(tr.states[s].x - re.at(tr.times[s]).x));
    }
    CHECK(drift < 1e-7 * max_abs(beta0));
    CHECK(state_err < 1e-8);
    const auto [lo, hi] = std::minmax_element(gap.begin(), gap.end());
    CHECK(*lo > 0);
    CHECK(*hi - *lo < 1e-8 * *hi);
}

TEST_CASE("elongated isosceles relative equilibria are unstable") {
    // the deviation grows by the same factor whatever the integration tolerance
    MassSystem sys(Vec::Ones(3));
    RelativeEquilibrium re = relative_equilibrium(find_balanced(sys, {0.7, 0.3}, 1), sys);
    CHECK(max_abs(re.Omega * re.Omega * re.x0 - potential_and_gradient(re.x0, sys).grad) < 1e-13);
    const double T = 10 * re.slowest_period();
    std::vector<double> drift;
    for (double tol : {1e-10, 1e-13}) {
        IntegratorOptions o;
        o.tol = tol;
        o.samples = 2;
        Trajectory tr = integrate_absolute(re.initial_state(), sys, T, o);
        drift.push_back(max_abs(gram_form(tr.states.back().x) - gram_form(re.x0)));
    }
    CHECK(drift[0] > 1e-6);
    CHECK(drift[1] > 1e-6);
    CHECK(drift[0] / drift[1] == doctest::Approx(1.0).epsilon(0.5));
}

TEST_CASE("relative equilibrium of a central configuration has one frequency") {
    MassSystem sys(Vec{{1.0, 2.0, 3.0}});
    RelativeEquilibrium re = relative_equilibrium(equilateral(), sys);
    REQUIRE(re.frequencies.size() == 2);
    CHECK(re.frequencies[0] == doctest::Approx(re.frequencies[1]).epsilon(1e-10));
    CHECK(std::abs(sundman_gap(re.initial_state(), sys)) < 1e-10 * scalars(re.initial_state(), sys).I *
                                                            scalars(re.initial_state(), sys).K);

    // circular homographic motions of the same configuration: the complexified structure gives
    // the same motion; the planar quarter turn gives the same shape dynamics but a different rho
    Mat x = centred(equilateral(), sys.m);
    const double r = std::sqrt(mass_dot(x, x, sys.m));
    HomographicMotion cx(x, sys, 0.0, r, StructureChoice::Complexified);
    HomographicMotion pl(x, sys, 0.0, r, StructureChoice::PlaneQuarterTurn);
    CHECK(cx.period() == doctest::Approx(2 * pi / re.frequencies[0]).epsilon(1e-12));
    for (double t : {0.0, 0.8, 2.2}) {
        RelativeState a = RelativeState::from_state(cx.at(t));
        RelativeState b = RelativeState::from_state(re.at(t));
        RelativeState c = RelativeState::from_state(pl.at(t));
        CHECK(max_abs(a.beta - b.beta) < 1e-9);
        CHECK(max_abs(a.delta - b.delta) < 1e-9);
        CHECK(max_abs(a.gamma - b.gamma) < 1e-9);
        CHECK(max_abs(a.rho - b.rho) < 1e-9);
        CHECK(max_abs(c.beta - b.beta) < 1e-9);
        CHECK(max_abs(c.delta - b.delta) < 1e-9);
        CHECK(max_abs(c.gamma - b.gamma) < 1e-9);
    }
}

TEST_CASE("two-body relative equilibrium is the circular Kepler orbit") {
    MassSystem sys(Vec{{1.0, 3.0}}, 1.7);
    Mat x(2, 2);
    x << 0, 2.0, 0, 0;
    RelativeEquilibrium re = relative_equilibrium(x, sys);
    REQUIRE(re.frequencies.size() == 1);
    CHECK(re.frequencies[0] == doctest::Approx(std::sqrt(1.7 * 4.0 / 8.0)).epsilon(1e-12));
    CHECK(re.dimension() == 2);
}

TEST_CASE("relative equilibrium input checks") {
    MassSystem sys(Vec::Ones(3));
    Mat scalene(2, 3);
    scalene << 0, 1, 0.3, 0, 0, 0.7;
    CHECK_THROWS_AS(relative_equilibrium(scalene, sys), NotBalanced);
}

TEST_CASE("homothetic collapse has zero Sundman gap") {
    MassSystem sys(Vec{{1.0, 2.0, 0.5, 1.5}});
    std::mt19937_64 rng(5);
    Mat x = testing::gaussian(rng, 3, 4);
    std::vector<State> samples;
    for (double c : {-0.5, 0.0, 0.3}) samples.emplace_back(x, c * x, sys);
    for (double g : sundman_profile(samples, sys)) CHECK(std::abs(g) < 1e-12);
    for (const auto& z : samples) CHECK(max_abs(angular_momentum(z.x, z.y, sys.m).matrix()) < 1e-14);
}
