#include "nbody/action.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <deque>
#include <numbers>
#include <numeric>

namespace nbody {

namespace {
constexpr double kPi = std::numbers::pi;

int default_nodes(int modes, int nodes) { return nodes > 0 ? nodes : std::max(256, 8 * modes); }
}  // namespace

Loop Loop::zeros(const MassSystem& sys, double T, int d, int modes) {
    if (!(T > 0)) throw ValidationError("period must be positive");
    if (d < 1 || modes < 1) throw ValidationError("need d >= 1 and at least one mode");
    Loop l;
    l.sys = sys;
    l.T = T;
    l.d = d;
    l.modes = modes;
    l.coeffs = Vec::Zero(static_cast<Eigen::Index>(2 * modes + 1) * d * sys.n());
    return l;
}

double Loop::omega() const { return 2 * kPi / T; }

Eigen::Map<Mat> Loop::a(int j) { return Eigen::Map<Mat>(coeffs.data() + j * block(), d, n()); }
Eigen::Map<Mat> Loop::b(int j) {
    return Eigen::Map<Mat>(coeffs.data() + (modes + j) * block(), d, n());
}
Eigen::Map<const Mat> Loop::a(int j) const {
    return Eigen::Map<const Mat>(coeffs.data() + j * block(), d, n());
}
Eigen::Map<const Mat> Loop::b(int j) const {
    return Eigen::Map<const Mat>(coeffs.data() + (modes + j) * block(), d, n());
}

Mat Loop::position(double t) const {
    Mat x = a(0);
    for (int j = 1; j <= modes; ++j) x += std::cos(j * omega() * t) * a(j) + std::sin(j * omega() * t) * b(j);
    return x;
}

Mat Loop::velocity(double t) const {
    Mat v = Mat::Zero(d, n());
    for (int j = 1; j <= modes; ++j) {
        const double f = j * omega();
        v += f * (-std::sin(f * t) * a(j) + std::cos(f * t) * b(j));
    }
    return v;
}

Mat Loop::acceleration(double t) const {
    Mat acc = Mat::Zero(d, n());
    for (int j = 1; j <= modes; ++j) {
        const double f = j * omega();
        acc -= f * f * (std::cos(f * t) * a(j) + std::sin(f * t) * b(j));
    }
    return acc;
}

Loop Loop::with_modes(int m) const {
    Loop l = zeros(sys, T, d, m);
    for (int j = 0; j <= std::min(m, modes); ++j) l.a(j) = a(j);
    for (int j = 1; j <= std::min(m, modes); ++j) l.b(j) = b(j);
    return l;
}

SymmetryElement SymmetryElement::compose(const SymmetryElement& o) const {
    SymmetryElement g;
    g.sigma.resize(sigma.size());
    for (size_t k = 0; k < sigma.size(); ++k) g.sigma[k] = sigma[o.sigma[k]];
    g.R = R * o.R;
    g.tau = std::fmod(tau + o.tau, 1.0);
    return g;
}

bool SymmetryElement::same(const SymmetryElement& o, double tol) const {
    if (sigma != o.sigma) return false;
    if ((R - o.R).cwiseAbs().maxCoeff() > tol) return false;
    double dt = std::abs(tau - o.tau);
    return std::min(dt, 1 - dt) < tol;
}

namespace {
SymmetryElement identity_element(int n, int d) {
    SymmetryElement g;
    g.sigma.resize(n);
    std::iota(g.sigma.begin(), g.sigma.end(), 0);
    g.R = Mat::Identity(d, d);
    return g;
}
}  // namespace

SymmetryAction SymmetryAction::trivial(int n, int d) { return {"trivial", {identity_element(n, d)}}; }

SymmetryAction SymmetryAction::italian(int n, int d) {
    SymmetryElement g = identity_element(n, d);
    g.R = -Mat::Identity(d, d);
    g.tau = 0.5;
    return {"italian", {g}};
}

SymmetryAction SymmetryAction::hiphop_z2z4() {
    SymmetryElement g = identity_element(4, 3);
    g.sigma = {1, 2, 3, 0};
    g.R << 0, -1, 0, 1, 0, 0, 0, 0, -1;
    SymmetryAction s = italian(4, 3);
    s.label = "z2z4";
    s.generators.push_back(g);
    return s;
}

SymmetryAction SymmetryAction::hiphop_z3() {
    SymmetryElement g = identity_element(4, 3);
    g.sigma = {1, 2, 0, 3};
    const double c = std::cos(2 * kPi / 3), s = std::sin(2 * kPi / 3);
    g.R << c, -s, 0, s, c, 0, 0, 0, 1;
    SymmetryAction a = italian(4, 3);
    a.label = "z3";
    a.generators.push_back(g);
    return a;
}

SymmetryAction SymmetryAction::from_label(const std::string& label, int n, int d) {
    if (label == "italian") return italian(n, d);
    if (label == "none" || label == "trivial") return trivial(n, d);
    if (label == "z2z4" || label == "hiphop_Z2xZ4") {
        if (n != 4 || d != 3) throw ValidationError("z2z4 symmetry needs 4 bodies in R^3");
        return hiphop_z2z4();
    }
    if (label == "z3" || label == "hiphop_Z3") {
        if (n != 4 || d != 3) throw ValidationError("z3 symmetry needs 4 bodies in R^3");
        return hiphop_z3();
    }
    throw ValidationError("unknown symmetry '" + label + "'");
}

std::vector<SymmetryElement> SymmetryAction::elements() const {
    if (generators.empty()) return {};
    const int n = static_cast<int>(generators[0].sigma.size());
    const int d = static_cast<int>(generators[0].R.rows());
    std::vector<SymmetryElement> out{identity_element(n, d)};
    std::deque<SymmetryElement> todo{out[0]};
    while (!todo.empty()) {
        SymmetryElement h = todo.front();
        todo.pop_front();
        for (const auto& g : generators) {
            SymmetryElement c = g.compose(h);
            bool seen = std::any_of(out.begin(), out.end(), [&](const auto& e) { return e.same(c, 1e-9); });
            if (!seen) {
                if (out.size() > 512) throw ValidationError("symmetry group is not finite");
                out.push_back(c);
                todo.push_back(c);
            }
        }
    }
    return out;
}

namespace {

// cos and sin of 2 pi f, exact at multiples of a quarter turn
std::pair<double, double> shift_phase(double f) {
    f -= std::floor(f);
    const double q = 4 * f;
    const double r = std::round(q);
    if (std::abs(q - r) < 1e-12) {
        static const double cs[4][2] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
        const int k = static_cast<int>(r) % 4;
        return {cs[k][0], cs[k][1]};
    }
    return {std::cos(2 * kPi * f), std::sin(2 * kPi * f)};
}

}  // namespace

Vec apply_symmetry(const SymmetryElement& g, const Loop& loop) {
    Loop out = Loop::zeros(loop.sys, loop.T, loop.d, loop.modes);
    const int n = loop.n();
    for (int j = 0; j <= loop.modes; ++j) {
        const auto [c, s] = shift_phase(j * g.tau);
        for (int k = 0; k < n; ++k) {
            Vec ak = loop.a(j).col(k);
            Vec bk = j > 0 ? Vec(loop.b(j).col(k)) : Vec::Zero(loop.d);
            out.a(j).col(g.sigma[k]) = g.R * (c * ak - s * bk);
            if (j > 0) out.b(j).col(g.sigma[k]) = g.R * (s * ak + c * bk);
        }
    }
    return out.coeffs;
}

Loop project_symmetry(const Loop& loop, const SymmetryAction& sym) {
    auto els = sym.elements();
    Loop out = loop;
    if (els.empty()) return out;
    out.coeffs.setZero();
    for (const auto& g : els) out.coeffs += apply_symmetry(g, loop);
    out.coeffs /= static_cast<double>(els.size());
    return out;
}

double symmetry_defect(const Loop& loop, const SymmetryAction& sym) {
    const double scale = std::max(loop.coeffs.norm(), 1e-300);
    return (project_symmetry(loop, sym).coeffs - loop.coeffs).norm() / scale;
}

namespace {

struct Nodes {
    Mat cosv, sinv;  // (modes + 1) x nodes
    double w;        // quadrature weight
};

Nodes make_nodes(const Loop& loop, int nq) {
    Nodes nd;
    nd.cosv.resize(loop.modes + 1, nq);
    nd.sinv.resize(loop.modes + 1, nq);
    for (int q = 0; q < nq; ++q)
        for (int j = 0; j <= loop.modes; ++j) {
            const double th = 2 * kPi * j * q / nq;
            nd.cosv(j, q) = std::cos(th);
            nd.sinv(j, q) = std::sin(th);
        }
    nd.w = loop.T / nq;
    return nd;
}

void node_state(const Loop& loop, const Nodes& nd, int q, Mat& x, Mat& v) {
    x = loop.a(0);
    v = Mat::Zero(loop.d, loop.n());
    const double om = loop.omega();
    for (int j = 1; j <= loop.modes; ++j) {
        x += nd.cosv(j, q) * loop.a(j) + nd.sinv(j, q) * loop.b(j);
        v += (j * om) * (nd.cosv(j, q) * loop.b(j) - nd.sinv(j, q) * loop.a(j));
    }
}

}  // namespace

ActionValue action_value_and_gradient(const Loop& loop, int nodes) {
    const int nq = default_nodes(loop.modes, nodes);
    Nodes nd = make_nodes(loop, nq);
    const Vec& m = loop.sys.m;
    const double om = loop.omega();
    const double floor = loop.sys.collision_floor;

    ActionValue r{0, 0, 0, Vec::Zero(loop.coeffs.size())};
    Loop grad = Loop::zeros(loop.sys, loop.T, loop.d, loop.modes);
    Mat x, v;
    for (int q = 0; q < nq; ++q) {
        node_state(loop, nd, q, x, v);
        if (min_distance(x) < floor)
            throw CollisionAtNode("collision at quadrature node t = " + std::to_string(q * nd.w));
        auto pg = potential_and_gradient(x, loop.sys);
        r.kinetic += 0.5 * mass_dot(v, v, m);
        r.potential += pg.U;
        Mat pv = v * m.asDiagonal();          // dL/dv
        Mat px = pg.grad * m.asDiagonal();    // dL/dx
        grad.a(0) += px;
        for (int j = 1; j <= loop.modes; ++j) {
            const double c = nd.cosv(j, q), s = nd.sinv(j, q);
            grad.a(j) += c * px - (j * om * s) * pv;
            grad.b(j) += s * px + (j * om * c) * pv;
        }
    }
    r.kinetic *= nd.w;
    r.potential *= nd.w;
    r.value = r.kinetic + r.potential;
    r.gradient = grad.coeffs * nd.w;
    return r;
}

namespace {

// Orthonormal basis of the symmetric, centred coefficient subspace.
Mat reduced_basis(const Loop& loop, const SymmetryAction& sym) {
    const Eigen::Index N = loop.coeffs.size();
    auto els = sym.elements();
    Mat P(N, N);
    Loop e = loop;
    for (Eigen::Index i = 0; i < N; ++i) {
        e.coeffs.setZero();
        e.coeffs[i] = 1;
        P.col(i) = project_symmetry(e, sym).coeffs;
    }
    P = 0.5 * (P + P.transpose());
    Eigen::SelfAdjointEigenSolver<Mat> es(P);
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < N; ++i)
        if (es.eigenvalues()[i] > 0.5) keep.push_back(i);
    Mat V(N, keep.size());
    for (size_t c = 0; c < keep.size(); ++c) V.col(c) = es.eigenvectors().col(keep[c]);

    // centring: sum_k m_k c_k = 0 for every coefficient block
    const int d = loop.d, n = loop.n(), blocks = 2 * loop.modes + 1;
    Mat C = Mat::Zero(static_cast<Eigen::Index>(blocks) * d, N);
    for (int bl = 0; bl < blocks; ++bl)
        for (int r = 0; r < d; ++r)
            for (int k = 0; k < n; ++k) C(bl * d + r, bl * d * n + k * d + r) = loop.sys.m[k];
    Mat CV = C * V;
    Eigen::JacobiSVD<Mat> svd(CV, Eigen::ComputeFullV);
    const Vec& sv = svd.singularValues();
    int rank = 0;
    for (int i = 0; i < sv.size(); ++i)
        if (sv[i] > 1e-10 * std::max(1.0, sv[0])) ++rank;
    Mat B = V * svd.matrixV().rightCols(V.cols() - rank);
    Eigen::HouseholderQR<Mat> qr(B);
    return qr.householderQ() * Mat::Identity(N, B.cols());
}

double mean_node_distance(const Loop& loop, int nq) {
    double acc = 0;
    int cnt = 0;
    for (int q = 0; q < nq; ++q) {
        Mat x = loop.position(loop.T * q / nq);
        for (int i = 0; i < x.cols(); ++i)
            for (int j = i + 1; j < x.cols(); ++j) {
                acc += (x.col(i) - x.col(j)).norm();
                ++cnt;
            }
    }
    return acc / std::max(cnt, 1);
}

double min_node_distance(const Loop& loop, int nq) {
    double best = std::numeric_limits<double>::infinity();
    for (int q = 0; q < nq; ++q) best = std::min(best, min_distance(loop.position(loop.T * q / nq)));
    return best;
}

}  // namespace

MinimizeResult minimize_action(const Loop& seed, const SymmetryAction& sym, const MinimizeOptions& opts) {
    seed.sys.validate();
    const int nq = default_nodes(seed.modes, opts.nodes);
    for (const auto& g : sym.elements()) {
        if (static_cast<int>(g.sigma.size()) != seed.n() || g.R.rows() != seed.d)
            throw ValidationError("symmetry does not match the loop's bodies or dimension");
        for (int k = 0; k < seed.n(); ++k)
            if (seed.sys.m[g.sigma[k]] != seed.sys.m[k])
                throw ValidationError("symmetry permutes bodies of different masses");
    }

    Mat B = reduced_basis(seed, sym);
    Loop cur = seed;
    Vec u = B.transpose() * seed.coeffs;
    cur.coeffs = B * u;
    if ((cur.coeffs - seed.coeffs).norm() > 1e-8 * std::max(1.0, seed.coeffs.norm()))
        spdlog::info("minimize_action: seed projected onto the symmetry class");

    const double floor = opts.dist_floor_fraction * mean_node_distance(cur, nq);
    if (min_node_distance(cur, nq) <= floor) throw CollisionApproach("seed loop comes closer than the distance floor");

    auto eval = [&](const Vec& uu, Vec& gr) {
        Loop l = cur;
        l.coeffs = B * uu;
        auto av = action_value_and_gradient(l, nq);
        gr = B.transpose() * av.gradient;
        return av.value;
    };

    Vec g;
    double f = eval(u, g);
    std::deque<Vec> S, Y;
    MinimizeResult res;
    int it = 0;
    for (; it < opts.max_iter && g.norm() > opts.gtol; ++it) {
        // two-loop recursion
        Vec q = g;
        std::vector<double> alpha(S.size());
        for (int i = static_cast<int>(S.size()) - 1; i >= 0; --i) {
            alpha[i] = S[i].dot(q) / Y[i].dot(S[i]);
            q -= alpha[i] * Y[i];
        }
        double gamma = S.empty() ? 1.0 / std::max(1.0, g.norm()) : S.back().dot(Y.back()) / Y.back().squaredNorm();
        Vec r = gamma * q;
        for (size_t i = 0; i < S.size(); ++i) {
            double beta = Y[i].dot(r) / Y[i].dot(S[i]);
            r += S[i] * (alpha[i] - beta);
        }
        Vec dir = -r;
        double slope = g.dot(dir);
        if (!(slope < 0)) {
            S.clear();
            Y.clear();
            dir = -g / std::max(1.0, g.norm());
            slope = g.dot(dir);
        }

        // backtracking with an Armijo test; near convergence, where the decrease is below
        // rounding, a step that shrinks the gradient is taken instead
        double step = 1.0;
        bool accepted = false;
        bool too_close = false;
        Vec un, gn;
        double fn = 0;
        for (int k = 0; k < 40; ++k) {
            un = u + step * dir;
            Loop trial = cur;
            trial.coeffs = B * un;
            if (min_node_distance(trial, nq) <= floor) {
                too_close = true;
                step *= 0.5;
                continue;
            }
            fn = eval(un, gn);
            const double noise = 1e-13 * std::max(1.0, std::abs(f));
            if (fn <= f + 1e-4 * step * slope ||
                (std::abs(fn - f) <= noise && gn.norm() < g.norm())) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            spdlog::trace("line search failed at iteration {}: f {:.17g} |g| {:.3e} slope {:.3e} memory {}", it, f, g.norm(), slope, S.size());
            if (too_close) throw CollisionApproach("line search approaches a collision");
            if (!S.empty()) {
                S.clear();
                Y.clear();
                continue;
            }
            break;
        }
        Vec s = un - u, y = gn - g;
        if (s.dot(y) > 1e-12 * s.norm() * y.norm()) {
            S.push_back(s);
            Y.push_back(y);
            if (static_cast<int>(S.size()) > opts.memory) {
                S.pop_front();
                Y.pop_front();
            }
        }
        u = un;
        g = gn;
        f = fn;
    }
    res.loop = cur;
    res.loop.coeffs = B * u;
    res.action = f;
    res.grad_norm = g.norm();
    res.iterations = it;
    spdlog::debug("minimize_action: {} iterations, action {:.12g}, |g| {:.3e}", it, f, res.grad_norm);
    if (!(res.grad_norm <= opts.gtol))
        throw NoConvergence(fmt::format("action minimization stopped with gradient norm {:.3e}", res.grad_norm));
    return res;
}

namespace {

Vec normalized_distances(const Mat& x, const std::vector<int>& perm) {
    Vec r(6);
    int k = 0;
    for (int i = 0; i < 4; ++i)
        for (int j = i + 1; j < 4; ++j) r[k++] = (x.col(perm[i]) - x.col(perm[j])).norm();
    return r / std::sqrt(r.squaredNorm() / 6);
}

double shape_distance(const Mat& x, const Vec& ref) {
    if (x.cols() != 4) throw ValidationError("shape distances are defined for four bodies");
    std::vector<int> perm{0, 1, 2, 3};
    double best = std::numeric_limits<double>::infinity();
    do {
        best = std::min(best, (normalized_distances(x, perm) - ref).norm());
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

Vec reference(bool square) {
    Vec r(6);
    if (square)
        r << 1, std::sqrt(2.0), 1, 1, std::sqrt(2.0), 1;  // pairs 01 02 03 12 13 23 of a cycle 0-1-2-3
    else
        r.setOnes();
    return r / std::sqrt(r.squaredNorm() / 6);
}

std::vector<double> cyclic_minima(const std::vector<double>& v, double tol) {
    std::vector<double> idx;
    const int N = static_cast<int>(v.size());
    for (int i = 0; i < N; ++i) {
        const double prev = v[(i + N - 1) % N], next = v[(i + 1) % N];
        if (v[i] < prev && v[i] <= next && v[i] < tol) idx.push_back(i);
    }
    return idx;
}

}  // namespace

double shape_distance_square(const Mat& x) { return shape_distance(x, reference(true)); }
double shape_distance_tetrahedron(const Mat& x) { return shape_distance(x, reference(false)); }

LoopReport verify_loop(const Loop& loop, const SymmetryAction& sym, int nodes, int shape_samples,
                       double event_tol) {
    const int nq = default_nodes(loop.modes, nodes);
    LoopReport rep{};
    double num = 0, den = 0;
    rep.min_distance = std::numeric_limits<double>::infinity();
    for (int q = 0; q < nq; ++q) {
        const double t = loop.T * q / nq;
        Mat x = loop.position(t);
        rep.min_distance = std::min(rep.min_distance, min_distance(x));
        if (rep.min_distance < loop.sys.collision_floor) continue;
        Mat acc = loop.acceleration(t);
        Mat force = potential_and_gradient(x, loop.sys).grad;
        num += (acc - force).squaredNorm();
        den += acc.squaredNorm();
    }
    rep.eom_residual = den > 0 ? std::sqrt(num / den) : std::numeric_limits<double>::infinity();
    // the loop lies in a plane iff all coefficient columns span at most two dimensions
    Mat span = Eigen::Map<const Mat>(loop.coeffs.data(), loop.d, loop.coeffs.size() / loop.d);
    rep.planar = numerical_rank(span * span.transpose(), 1e-12) <= 2;
    rep.action = rep.min_distance >= loop.sys.collision_floor ? action_value_and_gradient(loop, nq).value
                                                              : std::numeric_limits<double>::infinity();
    rep.symmetry_defect = symmetry_defect(loop, sym);

    if (loop.n() == 4 && loop.d >= 3) {
        std::vector<double> ds(shape_samples), dt(shape_samples);
        for (int i = 0; i < shape_samples; ++i) {
            Mat x = loop.position(loop.T * i / shape_samples);
            ds[i] = shape_distance_square(x);
            dt[i] = shape_distance_tetrahedron(x);
        }
        for (double i : cyclic_minima(ds, event_tol)) rep.square_events.push_back(loop.T * i / shape_samples);
        for (double i : cyclic_minima(dt, event_tol)) rep.tetrahedron_events.push_back(loop.T * i / shape_samples);
        rep.square_min = *std::min_element(ds.begin(), ds.end());
        rep.tetrahedron_min = *std::min_element(dt.begin(), dt.end());
    }
    return rep;
}

Loop polygon_loop(int n, int d, double T, int modes) {
    if (d < 2) throw ValidationError("a rotating polygon needs d >= 2");
    MassSystem sys(Vec::Ones(n));
    const double om = 2 * kPi / T;
    // |acceleration| of a vertex of the unit-radius regular n-gon
    double f = 0;
    for (int k = 1; k < n; ++k) f += 1.0 / (4 * std::sin(kPi * k / n));
    const double r = std::cbrt(f / (om * om));
    Loop l = Loop::zeros(sys, T, d, modes);
    for (int k = 0; k < n; ++k) {
        const double th = 2 * kPi * k / n;
        l.a(1)(0, k) = r * std::cos(th);
        l.a(1)(1, k) = r * std::sin(th);
        l.b(1)(0, k) = -r * std::sin(th);
        l.b(1)(1, k) = r * std::cos(th);
    }
    return l;
}

Loop hiphop_seed(double T, int modes, double eps) {
    Loop l = polygon_loop(4, 3, T, modes);
    for (int k = 0; k < 4; ++k) l.b(1)(2, k) = (k % 2 == 0 ? eps : -eps);
    return l;
}

Loop symmetric_seed(const std::string& symmetry, int n, double T, int modes, double eps) {
    if (symmetry == "z2z4" || symmetry == "hiphop_Z2xZ4") {
        if (n != 4) throw ValidationError("z2z4 symmetry needs 4 bodies");
        return hiphop_seed(T, modes, eps);
    }
    if (symmetry == "z3" || symmetry == "hiphop_Z3") {
        if (n != 4) throw ValidationError("z3 symmetry needs 4 bodies");
        const double om = 2 * kPi / T;
        const double r = std::cbrt((1 + 1 / std::sqrt(3.0)) / (om * om));
        Loop l = Loop::zeros(MassSystem(Vec::Ones(4)), T, 3, modes);
        for (int k = 0; k < 3; ++k) {
            const double th = 2 * kPi * k / 3;
            l.a(1)(0, k) = r * std::cos(th);
            l.a(1)(1, k) = r * std::sin(th);
            l.b(1)(0, k) = -r * std::sin(th);
            l.b(1)(1, k) = r * std::cos(th);
            l.b(1)(2, k) = -eps / 3;
        }
        l.b(1)(2, 3) = eps;
        return l;
    }
    Loop l = polygon_loop(n, 3, T, modes);
    for (int k = 0; k < n; ++k) l.b(1)(2, k) = (k % 2 == 0 ? eps : -eps);
    return l;
}

}  // namespace nbody
