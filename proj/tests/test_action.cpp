#include <doctest.h>

#include <numbers>

#include "nbody/action.hpp"
#include "support.hpp"

using namespace nbody;
using testing::max_abs;

namespace {

constexpr double pi = std::numbers::pi;

Loop random_loop(std::mt19937_64& rng, int n, int d, int modes, double T = 2 * pi) {
    MassSystem sys(testing::random_masses(rng, n));
    Loop loop = Loop::zeros(sys, T, d, modes);
    loop.a(0) = testing::gaussian(rng, d, n, 2.0);
    for (int j = 1; j <= modes; ++j) {
        loop.a(j) = testing::gaussian(rng, d, n, 0.3 / j);
        loop.b(j) = testing::gaussian(rng, d, n, 0.3 / j);
    }
    return loop;
}

double min_node_distance(const Loop& loop, int nodes) {
    double m = 1e300;
    for (int k = 0; k < nodes; ++k) m = std::min(m, min_distance(loop.position(loop.T * k / nodes)));
    return m;
}

Mat regular_tetrahedron() {
    Mat x(3, 4);
    x << 1, 1, -1, -1,
         1, -1, 1, -1,
         1, -1, -1, 1;
    return x;
}

// Square of half-diagonal rho in the horizontal plane, diagonals raised by +h and -h.
Mat d2d(double rho, double h) {
    Mat x(3, 4);
    x << rho, 0, -rho, 0,
         0, rho, 0, -rho,
         h, -h, h, -h;
    return x;
}

}  // namespace

TEST_CASE("action gradient matches finite differences") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 2 + trial % 3, d = 2 + trial % 2, modes = 3 + trial % 4;
        Loop loop = random_loop(rng, n, d, modes, 1.0 + trial * 0.2);
        if (min_node_distance(loop, 256) < 0.2) continue;
        ActionValue av = action_value_and_gradient(loop);
        CHECK(av.value == doctest::Approx(av.kinetic + av.potential).epsilon(1e-14));
        Vec fd(loop.coeffs.size());
        const double h = 1e-5;
        for (int i = 0; i < fd.size(); ++i) {
            Loop p = loop, m = loop;
            p.coeffs[i] += h;
            m.coeffs[i] -= h;
            fd[i] = (action_value_and_gradient(p).value - action_value_and_gradient(m).value) / (2 * h);
        }
        CHECK((fd - av.gradient).norm() < 1e-6 * av.gradient.norm());
    }
}

TEST_CASE("action scaling identity") {
    std::mt19937_64 rng(32);
    Loop loop = random_loop(rng, 3, 3, 5);
    ActionValue base = action_value_and_gradient(loop);
    for (double lam : {0.5, 1.7, 3.0}) {
        Loop s = loop;
        s.coeffs *= lam;
        ActionValue v = action_value_and_gradient(s);
        CHECK(v.kinetic == doctest::Approx(lam * lam * base.kinetic).epsilon(1e-12));
        CHECK(v.potential == doctest::Approx(base.potential / lam).epsilon(1e-12));
        CHECK(v.value == doctest::Approx(lam * lam * base.kinetic + base.potential / lam).epsilon(1e-12));
    }
}

TEST_CASE("circular loops are critical") {
    for (int n : {2, 3, 4}) {
        Loop loop = polygon_loop(n, 2, 2 * pi, 8);
        ActionValue av = action_value_and_gradient(loop);
        CHECK(av.gradient.norm() < 1e-8);
        LoopReport rep = verify_loop(loop, SymmetryAction::italian(n, 2));
        CHECK(rep.eom_residual < 1e-8);
        CHECK(rep.planar);
        CHECK(rep.symmetry_defect < 1e-14);
    }
}

TEST_CASE("collision at a node") {
    Loop loop = Loop::zeros(MassSystem(Vec::Ones(3)), 1.0, 2, 2);
    loop.a(1)(0, 0) = 1;
    CHECK_THROWS_AS(action_value_and_gradient(loop), CollisionAtNode);
}

TEST_CASE("symmetry groups") {
    CHECK(SymmetryAction::trivial(3, 2).elements().size() == 1);
    CHECK(SymmetryAction::italian(3, 2).elements().size() == 2);
    CHECK(SymmetryAction::hiphop_z2z4().elements().size() == 8);
    CHECK(SymmetryAction::hiphop_z3().elements().size() == 6);
    CHECK(SymmetryAction::from_label("hiphop_Z2xZ4", 4, 3).elements().size() == 8);
    CHECK(SymmetryAction::from_label("z3", 4, 3).elements().size() == 6);
    CHECK_THROWS_AS(SymmetryAction::from_label("z5", 4, 3), ValidationError);

    // closure: every product of elements is an element, and each element is orthogonal
    auto els = SymmetryAction::hiphop_z2z4().elements();
    for (const auto& g : els) {
        CHECK(max_abs(g.R * g.R.transpose() - Mat::Identity(3, 3)) < 1e-15);
        for (const auto& h : els) {
            SymmetryElement gh = g.compose(h);
            bool found = false;
            for (const auto& k : els) found = found || gh.same(k);
            CHECK(found);
        }
    }
}

TEST_CASE("italian projection keeps odd harmonics") {
    std::mt19937_64 rng(33);
    Loop loop = random_loop(rng, 3, 2, 6);
    Loop p = project_symmetry(loop, SymmetryAction::italian(3, 2));
    for (int j = 0; j <= 6; ++j) {
        if (j % 2 == 0) {
            CHECK(max_abs(p.a(j)) == 0);
            if (j) CHECK(max_abs(p.b(j)) == 0);
        } else {
            CHECK(max_abs(p.a(j) - loop.a(j)) < 1e-15);
            CHECK(max_abs(p.b(j) - loop.b(j)) < 1e-15);
        }
    }
    CHECK(max_abs(project_symmetry(p, SymmetryAction::italian(3, 2)).coeffs - p.coeffs) < 1e-15);
}

TEST_CASE("Hip-Hop projection keeps a square horizontal projection") {
    std::mt19937_64 rng(34);
    SymmetryAction sym = SymmetryAction::hiphop_z2z4();
    Loop seed = hiphop_seed(2 * pi, 8, 0.1);
    Loop noisy = seed;
    for (int i = 0; i < noisy.coeffs.size(); ++i) noisy.coeffs[i] += 0.01 * std::normal_distribution<double>()(rng);
    Loop p = project_symmetry(noisy, sym);
    CHECK(symmetry_defect(p, sym) < 1e-14);
    CHECK(symmetry_defect(noisy, sym) > 1e-3);
    CHECK(max_abs(project_symmetry(p, sym).coeffs - p.coeffs) < 1e-14);
    for (int k = 0; k < 16; ++k) {
        Mat x = p.position(p.T * k / 16.0);
        // horizontal projection: equal sides, equal diagonals
        Mat hx = x.topRows(2);
        const double side = (hx.col(0) - hx.col(1)).norm();
        for (int i = 0; i < 4; ++i) CHECK(std::abs((hx.col(i) - hx.col((i + 1) % 4)).norm() - side) < 1e-12);
        CHECK(std::abs((hx.col(0) - hx.col(2)).norm() - (hx.col(1) - hx.col(3)).norm()) < 1e-12);
        CHECK(std::abs(x(2, 0) + x(2, 1)) < 1e-12);
        CHECK(std::abs(x(2, 0) - x(2, 2)) < 1e-12);
    }
}

TEST_CASE("averaging over the group does not increase the kinetic part") {
    // U is not convex, so the full action can rise: the italian average drops static offsets
    std::mt19937_64 rng(35);
    Loop seed = hiphop_seed(2 * pi, 8, 0.2);
    const std::vector<SymmetryAction> groups = {SymmetryAction::italian(4, 3), SymmetryAction::hiphop_z2z4(),
                                                SymmetryAction::hiphop_z3()};
    for (int trial = 0; trial < 10; ++trial) {
        Loop loop = random_loop(rng, 4, 3, 8);
        loop.sys = seed.sys;
        for (const auto& sym : groups) {
            Loop p = project_symmetry(loop, sym);
            if (min_node_distance(loop, 256) < 1e-3 || min_node_distance(p, 256) < 1e-3) continue;
            CHECK(action_value_and_gradient(p).kinetic <= action_value_and_gradient(loop).kinetic * (1 + 1e-14));
        }
    }
}

TEST_CASE("shape distances") {
    Mat sq(3, 4);
    sq << 1, 0, -1, 0, 0, 1, 0, -1, 0, 0, 0, 0;
    CHECK(shape_distance_square(sq) < 1e-15);
    CHECK(shape_distance_square(2.5 * sq) < 1e-15);
    CHECK(shape_distance_tetrahedron(regular_tetrahedron()) < 1e-15);
    CHECK(shape_distance_tetrahedron(d2d(1.0, 1 / std::sqrt(2.0))) < 1e-15);
    CHECK(shape_distance_tetrahedron(sq) > 0.1);
    CHECK(shape_distance_square(regular_tetrahedron()) > 0.1);
    // relabelling does not matter
    Mat perm(3, 4);
    perm << sq.col(2), sq.col(0), sq.col(3), sq.col(1);
    CHECK(shape_distance_square(perm) < 1e-15);
}

TEST_CASE("Hip-Hop minimizer") {
    SymmetryAction sym = SymmetryAction::hiphop_z2z4();
    const double T = 2 * pi;
    MinimizeResult res = minimize_action(hiphop_seed(T, 16, 0.2), sym);
    CHECK(res.grad_norm < 1e-7);

    LoopReport rep = verify_loop(res.loop, sym);
    CHECK_FALSE(rep.planar);
    CHECK(rep.symmetry_defect < 1e-12);
    CHECK(rep.eom_residual < 1e-3);
    CHECK(rep.min_distance > 0.1);
    CHECK(rep.square_events.size() == 2);
    CHECK(rep.square_min < 1e-2);
    // the shape passes the regular tetrahedron on both sides of each D2d extremum
    CHECK(rep.tetrahedron_events.size() % 2 == 0);
    CHECK(rep.tetrahedron_events.size() >= 2);
    CHECK(rep.tetrahedron_min < 1e-2);

    const double square = action_value_and_gradient(polygon_loop(4, 3, T, 16)).value;
    CHECK(rep.action < square - 0.1);

    // vertical antiphase of the diagonals
    for (int k = 0; k < 64; ++k) {
        Mat x = res.loop.position(T * k / 64.0);
        CHECK(std::abs(x(2, 0) - x(2, 2)) < 1e-8);
        CHECK(std::abs(x(2, 1) - x(2, 3)) < 1e-8);
        CHECK(std::abs(x(2, 0) + x(2, 1)) < 1e-8);
    }

    // truncation study: doubling the modes moves the action by less than 1e-6 relative
    MinimizeResult fine = minimize_action(res.loop.with_modes(32), sym);
    CHECK(std::abs(fine.action - res.action) < 1e-6 * res.action);

    // deterministic
    MinimizeResult again = minimize_action(hiphop_seed(T, 16, 0.2), sym);
    CHECK(again.loop.coeffs == res.loop.coeffs);
}

TEST_CASE("planar italian minimizer selects the square") {
    std::mt19937_64 rng(36);
    const double T = 2 * pi;
    SymmetryAction sym = SymmetryAction::italian(4, 2);
    Loop seed = polygon_loop(4, 2, T, 8);
    for (int i = 0; i < seed.coeffs.size(); ++i) seed.coeffs[i] += 0.02 * std::normal_distribution<double>()(rng);
    MinimizeResult res = minimize_action(project_symmetry(seed, sym), sym);
    const double square = action_value_and_gradient(polygon_loop(4, 2, T, 8)).value;
    CHECK(res.action == doctest::Approx(square).epsilon(1e-10));
    for (int k = 0; k < 8; ++k) {
        Mat x = res.loop.position(T * k / 8.0);
        Mat x3 = Mat::Zero(3, 4);
        x3.topRows(2) = x;
        CHECK(shape_distance_square(x3) < 1e-6);
    }
}

TEST_CASE("two-body italian minimizer is the circular Kepler orbit") {
    std::mt19937_64 rng(37);
    const double T = 3.0;
    SymmetryAction sym = SymmetryAction::italian(2, 2);
    Loop seed = polygon_loop(2, 2, T, 6);
    for (int i = 0; i < seed.coeffs.size(); ++i) seed.coeffs[i] += 0.05 * std::normal_distribution<double>()(rng);
    MinimizeResult res = minimize_action(project_symmetry(seed, sym), sym);
    // unit masses: separation r with (2 pi / T)^2 = 2 / r^3, action = 3 (pi^2 / T)^(2/3) ... closed form
    const double w = 2 * pi / T;
    const double r = std::cbrt(2.0 / (w * w));
    const double action = T * (0.25 * w * w * r * r + 1.0 / r);
    CHECK(res.action == doctest::Approx(action).epsilon(1e-10));
    for (int k = 0; k < 16; ++k) {
        Mat x = res.loop.position(T * k / 16.0);
        CHECK((x.col(0) - x.col(1)).norm() == doctest::Approx(r).epsilon(1e-7));
    }
}

TEST_CASE("Z3 Hip-Hop class") {
    SymmetryAction sym = SymmetryAction::hiphop_z3();
    MinimizeResult res = minimize_action(symmetric_seed("z3", 4, 2 * pi, 16, 0.2), sym);
    CHECK(res.grad_norm < 1e-7);
    LoopReport rep = verify_loop(res.loop, sym);
    CHECK(rep.symmetry_defect < 1e-12);
    CHECK(rep.eom_residual < 1e-3);
}

TEST_CASE("minimizer failures") {
    MinimizeOptions o;
    o.max_iter = 2;
    CHECK_THROWS_AS(minimize_action(hiphop_seed(2 * pi, 8, 0.2), SymmetryAction::hiphop_z2z4(), o), NoConvergence);
    // unequal masses do not admit the body permutation
    Loop bad = hiphop_seed(2 * pi, 8, 0.2);
    bad.sys = MassSystem(Vec{{1.0, 2.0, 1.0, 1.0}});
    CHECK_THROWS_AS(minimize_action(bad, SymmetryAction::hiphop_z2z4()), ValidationError);
}

TEST_CASE("EOM residual grows with the perturbation") {
    std::mt19937_64 rng(38);
    Loop exact = polygon_loop(3, 2, 2 * pi, 8);
    Vec dir(exact.coeffs.size());
    for (int i = 0; i < dir.size(); ++i) dir[i] = std::normal_distribution<double>()(rng);
    dir /= dir.norm();
    double prev = verify_loop(exact, SymmetryAction::trivial(3, 2)).eom_residual;
    for (double eps : {1e-6, 1e-5, 1e-4, 1e-3, 1e-2}) {
        Loop p = exact;
        p.coeffs += eps * dir;
        const double r = verify_loop(p, SymmetryAction::trivial(3, 2)).eom_residual;
        CHECK(r > prev);
        prev = r;
    }
}
