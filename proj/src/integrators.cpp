#include <algorithm>
#include <cmath>
#include <sstream>

#include "dop853.hpp"
#include "nbody/errors.hpp"

namespace nbody::detail {

using Eigen::VectorXd;
using namespace dp853;

namespace {

struct Stages {
    VectorXd k1, k2, k3, k4, k5, k6, k7, k8, k9, k10, k11, k12, k13;
    VectorXd ynew, w;
    explicit Stages(int n)
        : k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), k8(n), k9(n), k10(n), k11(n), k12(n),
          k13(n), ynew(n), w(n) {}
};

// Twelve stages of the 8th-order step; k1 = f(t, y) on entry. Returns the error estimate.
double attempt(const OdeRhs& f, double t, const VectorXd& y, double h, Stages& s,
               const Dop853Options& o, long& nfev) {
    VectorXd& w = s.w;
    w = y + h * (a21 * s.k1);
    f(t + c2 * h, w, s.k2);
    w = y + h * (a31 * s.k1 + a32 * s.k2);
    f(t + c3 * h, w, s.k3);
    w = y + h * (a41 * s.k1 + a43 * s.k3);
    f(t + c4 * h, w, s.k4);
    w = y + h * (a51 * s.k1 + a53 * s.k3 + a54 * s.k4);
    f(t + c5 * h, w, s.k5);
    w = y + h * (a61 * s.k1 + a64 * s.k4 + a65 * s.k5);
    f(t + c6 * h, w, s.k6);
    w = y + h * (a71 * s.k1 + a74 * s.k4 + a75 * s.k5 + a76 * s.k6);
    f(t + c7 * h, w, s.k7);
    w = y + h * (a81 * s.k1 + a84 * s.k4 + a85 * s.k5 + a86 * s.k6 + a87 * s.k7);
    f(t + c8 * h, w, s.k8);
    w = y + h * (a91 * s.k1 + a94 * s.k4 + a95 * s.k5 + a96 * s.k6 + a97 * s.k7 + a98 * s.k8);
    f(t + c9 * h, w, s.k9);
    w = y + h * (a101 * s.k1 + a104 * s.k4 + a105 * s.k5 + a106 * s.k6 + a107 * s.k7 +
                 a108 * s.k8 + a109 * s.k9);
    f(t + c10 * h, w, s.k10);
    w = y + h * (a111 * s.k1 + a114 * s.k4 + a115 * s.k5 + a116 * s.k6 + a117 * s.k7 +
                 a118 * s.k8 + a119 * s.k9 + a1110 * s.k10);
    f(t + c11 * h, w, s.k11);
    w = y + h * (a121 * s.k1 + a124 * s.k4 + a125 * s.k5 + a126 * s.k6 + a127 * s.k7 +
                 a128 * s.k8 + a129 * s.k9 + a1210 * s.k10 + a1211 * s.k11);
    f(t + h, w, s.k12);
    nfev += 11;

    VectorXd bsum = b1 * s.k1 + b6 * s.k6 + b7 * s.k7 + b8 * s.k8 + b9 * s.k9 + b10 * s.k10 +
                    b11 * s.k11 + b12 * s.k12;
    s.ynew = y + h * bsum;

    const int n = static_cast<int>(y.size());
    double err3 = 0, err5 = 0;
    for (int i = 0; i < n; ++i) {
        double sk = o.atol + o.rtol * std::max(std::abs(y[i]), std::abs(s.ynew[i]));
        double e3 = bsum[i] - e31 * s.k1[i] - e32 * s.k9[i] - e33 * s.k12[i];
        double e5 = e51 * s.k1[i] + e56 * s.k6[i] + e57 * s.k7[i] + e58 * s.k8[i] +
                    e59 * s.k9[i] + e510 * s.k10[i] + e511 * s.k11[i] + e512 * s.k12[i];
        err3 += (e3 / sk) * (e3 / sk);
        err5 += (e5 / sk) * (e5 / sk);
    }
    double deno = err5 + 0.01 * err3;
    if (deno <= 0) deno = 1;
    return std::abs(h) * err5 * std::sqrt(1.0 / (n * deno));
}

struct Dense {
    VectorXd r1, r2, r3, r4, r5, r6, r7, r8;
    double t0 = 0, h = 0;

    VectorXd at(double t) const {
        const double s = (t - t0) / h, s1 = 1 - s;
        VectorXd conpar = r5 + s * (r6 + s1 * (r7 + s * r8));
        return r1 + s * (r2 + s1 * (r3 + s * (r4 + s1 * conpar)));
    }
};

// Requires s.k13 = f(t + h, ynew). Uses three extra evaluations.
void build_dense(const OdeRhs& f, double t, const VectorXd& y, double h, Stages& s, Dense& d,
                 long& nfev) {
    d.t0 = t;
    d.h = h;
    d.r1 = y;
    d.r2 = s.ynew - y;
    d.r3 = h * s.k1 - d.r2;
    d.r4 = d.r2 - h * s.k13 - d.r3;
    d.r5 = d41 * s.k1 + d46 * s.k6 + d47 * s.k7 + d48 * s.k8 + d49 * s.k9 + d410 * s.k10 +
           d411 * s.k11 + d412 * s.k12;
    d.r6 = d51 * s.k1 + d56 * s.k6 + d57 * s.k7 + d58 * s.k8 + d59 * s.k9 + d510 * s.k10 +
           d511 * s.k11 + d512 * s.k12;
    d.r7 = d61 * s.k1 + d66 * s.k6 + d67 * s.k7 + d68 * s.k8 + d69 * s.k9 + d610 * s.k10 +
           d611 * s.k11 + d612 * s.k12;
    d.r8 = d71 * s.k1 + d76 * s.k6 + d77 * s.k7 + d78 * s.k8 + d79 * s.k9 + d710 * s.k10 +
           d711 * s.k11 + d712 * s.k12;

    VectorXd k14(y.size()), k15(y.size()), k16(y.size());
    s.w = y + h * (a141 * s.k1 + a147 * s.k7 + a148 * s.k8 + a149 * s.k9 + a1410 * s.k10 +
                   a1411 * s.k11 + a1412 * s.k12 + a1413 * s.k13);
    f(t + c14 * h, s.w, k14);
    s.w = y + h * (a151 * s.k1 + a156 * s.k6 + a157 * s.k7 + a158 * s.k8 + a1511 * s.k11 +
                   a1512 * s.k12 + a1513 * s.k13 + a1514 * k14);
    f(t + c15 * h, s.w, k15);
    s.w = y + h * (a161 * s.k1 + a166 * s.k6 + a167 * s.k7 + a168 * s.k8 + a169 * s.k9 +
                   a1613 * s.k13 + a1614 * k14 + a1615 * k15);
    f(t + c16 * h, s.w, k16);
    nfev += 3;

    d.r5 = h * (d.r5 + d413 * s.k13 + d414 * k14 + d415 * k15 + d416 * k16);
    d.r6 = h * (d.r6 + d513 * s.k13 + d514 * k14 + d515 * k15 + d516 * k16);
    d.r7 = h * (d.r7 + d613 * s.k13 + d614 * k14 + d615 * k15 + d616 * k16);
    d.r8 = h * (d.r8 + d713 * s.k13 + d714 * k14 + d715 * k15 + d716 * k16);
}

double initial_step(const OdeRhs& f, double t, const VectorXd& y, const VectorXd& f0,
                    double hmax, const Dop853Options& o, long& nfev) {
    const int n = static_cast<int>(y.size());
    VectorXd sk = (o.atol + o.rtol * y.array().abs()).matrix();
    double dnf = (f0.array() / sk.array()).square().sum() / n;
    double dny = (y.array() / sk.array()).square().sum() / n;
    double h = (dnf <= 1e-10 || dny <= 1e-10) ? 1e-6 : std::sqrt(dny / dnf) * 0.01;
    h = std::min(h, hmax);
    VectorXd y1 = y + h * f0, f1(n);
    f(t + h, y1, f1);
    ++nfev;
    double der2 = std::sqrt(((f1 - f0).array() / sk.array()).square().sum() / n) / h;
    double der12 = std::max(der2, std::sqrt(dnf));
    double h1 = der12 <= 1e-15 ? std::max(1e-6, h * 1e-3) : std::pow(0.01 / der12, 1.0 / 8);
    return std::min({100 * h, h1, hmax});
}

}  // namespace

std::vector<VectorXd> dop853(const OdeRhs& f, double t0, const VectorXd& y0,
                             const std::vector<double>& sample_times, const Dop853Options& o,
                             Dop853Stats* stats, const OdeHook& post_step) {
    std::vector<VectorXd> out;
    out.reserve(sample_times.size());
    if (sample_times.empty()) return out;
    const double tend = sample_times.back();
    const int n = static_cast<int>(y0.size());

    Dop853Stats st;
    VectorXd y = y0;
    if (post_step) post_step(y);
    Stages s(n);
    f(t0, y, s.k1);
    ++st.evaluations;

    size_t next = 0;
    while (next < sample_times.size() && sample_times[next] <= t0) {
        out.push_back(y);
        ++next;
    }
    if (next == sample_times.size()) return out;

    const double span = tend - t0;
    const double hmax = o.h_max > 0 ? o.h_max : span;
    double h = initial_step(f, t0, y, s.k1, hmax, o, st.evaluations);
    double t = t0;
    bool last_rejected = false;
    const double safe = 0.9, fac1 = 0.333, fac2 = 6.0, expo1 = 1.0 / 8;
    Dense dense;

    while (next < sample_times.size()) {
        if (st.accepted + st.rejected >= o.max_steps) {
            std::ostringstream os;
            os << "step budget of " << o.max_steps << " exhausted at t = " << t;
            throw StepFailure(os.str());
        }
        if (std::abs(h) < 1e-14 * std::max(1.0, std::abs(t))) {
            std::ostringstream os;
            os << "step size underflow (h = " << h << ") at t = " << t;
            throw StepFailure(os.str());
        }
        bool final_step = false;
        if (t + 1.01 * h >= tend) {
            h = tend - t;
            final_step = true;
        }

        double err;
        try {
            err = attempt(f, t, y, h, s, o, st.evaluations);
            if (!s.ynew.allFinite()) err = 1e10;
        } catch (const CollisionError&) {
            // a stage landed inside the collision floor; retry with a much smaller step
            if (std::abs(h) < 1e-12 * std::max(1.0, std::abs(t))) throw;
            h *= 0.25;
            ++st.rejected;
            last_rejected = true;
            continue;
        }

        const double fac11 = std::pow(err, expo1);
        if (err <= 1.0) {
            try {
                f(t + h, s.ynew, s.k13);
            } catch (const CollisionError&) {
                if (std::abs(h) < 1e-12 * std::max(1.0, std::abs(t))) throw;
                h *= 0.25;
                ++st.rejected;
                last_rejected = true;
                continue;
            }
            ++st.evaluations;
            ++st.accepted;
            const double tnew = final_step ? tend : t + h;
            bool need_dense = next < sample_times.size() && sample_times[next] <= tnew;
            if (need_dense) build_dense(f, t, y, h, s, dense, st.evaluations);
            while (next < sample_times.size() && sample_times[next] <= tnew) {
                VectorXd v = sample_times[next] >= tnew ? s.ynew : dense.at(sample_times[next]);
                if (post_step) post_step(v);
                out.push_back(std::move(v));
                ++next;
            }
            y = s.ynew;
            t = tnew;
            if (post_step) {
                post_step(y);
                f(t, y, s.k1);
                ++st.evaluations;
            } else {
                s.k1 = s.k13;
            }
            double fac = std::clamp(fac11 / safe, 1.0 / fac2, 1.0 / fac1);
            double hnew = std::min(h / fac, hmax);
            if (last_rejected) hnew = std::min(hnew, h);
            last_rejected = false;
            h = hnew;
        } else {
            h /= std::min(1.0 / fac1, fac11 / safe);
            ++st.rejected;
            last_rejected = true;
        }
    }
    if (stats) *stats = st;
    return out;
}

}  // namespace nbody::detail
