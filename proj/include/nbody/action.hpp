#pragma once

#include <string>
#include <vector>

#include "nbody/geometry.hpp"

namespace nbody {

// T-periodic path x(t) = a_0 + sum_{j=1}^{Nf} a_j cos(j w t) + b_j sin(j w t), w = 2 pi / T.
// Coefficients are d x n arrays stored flat as [a_0, ..., a_Nf, b_1, ..., b_Nf].
struct Loop {
    MassSystem sys;
    double T = 1;
    int d = 0;
    int modes = 0;
    Vec coeffs;

    static Loop zeros(const MassSystem& sys, double T, int d, int modes);

    int n() const { return sys.n(); }
    int block() const { return d * n(); }
    double omega() const;
    Eigen::Map<Mat> a(int j);
    Eigen::Map<Mat> b(int j);
    Eigen::Map<const Mat> a(int j) const;
    Eigen::Map<const Mat> b(int j) const;

    Mat position(double t) const;
    Mat velocity(double t) const;
    Mat acceleration(double t) const;

    // Same path with a different truncation order (padding or cutting modes).
    Loop with_modes(int modes) const;
};

// (g . x)_{sigma(k)}(t) = R x_k(t - tau T)
struct SymmetryElement {
    std::vector<int> sigma;
    Mat R;
    double tau = 0;  // fraction of the period, kept in [0, 1)

    SymmetryElement compose(const SymmetryElement& other) const;  // this after other
    bool same(const SymmetryElement& other, double tol = 1e-12) const;
};

struct SymmetryAction {
    std::string label;
    std::vector<SymmetryElement> generators;

    static SymmetryAction trivial(int n, int d);
    // x(t - T/2) = -x(t)
    static SymmetryAction italian(int n, int d);
    // Four bodies in R^3: body k+1 is body k turned by a quarter horizontally with the
    // vertical coordinate flipped, together with the italian symmetry.
    static SymmetryAction hiphop_z2z4();
    // Bodies 0..2 related by a horizontal third of a turn, body 3 fixed, with the italian symmetry.
    static SymmetryAction hiphop_z3();
    static SymmetryAction from_label(const std::string& label, int n, int d);

    std::vector<SymmetryElement> elements() const;
};

Vec apply_symmetry(const SymmetryElement& g, const Loop& loop);
Loop project_symmetry(const Loop& loop, const SymmetryAction& sym);
double symmetry_defect(const Loop& loop, const SymmetryAction& sym);

struct ActionValue {
    double value;
    double kinetic;    // integral of K/2
    double potential;  // integral of U
    Vec gradient;      // with respect to the flat coefficients
};

// Trapezoidal rule on `nodes` equispaced times (0 picks max(256, 8 Nf)).
ActionValue action_value_and_gradient(const Loop& loop, int nodes = 0);

struct MinimizeOptions {
    double gtol = 1e-7;
    int max_iter = 5000;
    double dist_floor_fraction = 1e-3;
    int memory = 12;
    int nodes = 0;
};

struct MinimizeResult {
    Loop loop;
    double action = 0;
    double grad_norm = 0;  // gradient norm in the symmetric, centred subspace
    int iterations = 0;
};

MinimizeResult minimize_action(const Loop& seed, const SymmetryAction& sym,
                               const MinimizeOptions& opts = {});

struct LoopReport {
    double eom_residual;  // |x'' - 2xA| / |x''| over the nodes
    double action;
    double min_distance;
    double symmetry_defect;
    bool planar;
    std::vector<double> square_events;       // times
    std::vector<double> tetrahedron_events;  // times
    double square_min = 0;
    double tetrahedron_min = 0;
};

LoopReport verify_loop(const Loop& loop, const SymmetryAction& sym, int nodes = 0,
                       int shape_samples = 2048, double event_tol = 1e-2);

// Distance between the scale-normalized mutual-distance vectors of x and a reference
// shape, minimized over relabelings. Four bodies.
double shape_distance_square(const Mat& x);
double shape_distance_tetrahedron(const Mat& x);

// Uniformly rotating square of four unit masses in the horizontal plane with vertical
// antiphase oscillation of amplitude eps on the diagonals.
Loop hiphop_seed(double T, int modes, double eps);
// Uniform rotation of the regular n-gon (unit masses) in the plane, embedded in R^d.
Loop polygon_loop(int n, int d, double T, int modes);
// Starting loop for a symmetry label: the Hip-Hop seed for z2z4, a rotating triangle with a
// central body for z3, otherwise a rotating polygon in R^3 with alternating vertical kicks.
Loop symmetric_seed(const std::string& symmetry, int n, double T, int modes, double eps);

}  // namespace nbody
