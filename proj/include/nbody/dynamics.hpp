#pragma once

#include <string>
#include <vector>

#include "nbody/geometry.hpp"

namespace nbody {

enum class IntegratorKind { RK853, Leapfrog };

// tol bounds the local error per step; the adaptive controller aims at safety * tol.
struct IntegratorOptions {
    double tol = 1e-10;
    double safety = 1e-2;
    IntegratorKind kind = IntegratorKind::RK853;
    int samples = 201;          // output times, uniformly spaced including 0 and T
    double leapfrog_dt = 1e-3;  // upper bound; refined so samples fall on steps
    long max_steps = 2000000;
};

template <class S>
struct BasicTrajectory {
    std::vector<double> times;
    std::vector<S> states;
    std::string integrator;
    double tol = 0;
    long steps = 0;
    long rejected = 0;
};
using Trajectory = BasicTrajectory<State>;
using ReducedTrajectory = BasicTrajectory<RelativeState>;

Trajectory integrate_absolute(const State& z0, const MassSystem& sys, double T,
                              const IntegratorOptions& opts = {});

RelativeState reduced_rhs(const RelativeState& rel, const MassSystem& sys);

ReducedTrajectory integrate_reduced(const RelativeState& rel0, const MassSystem& sys, double T,
                                    const IntegratorOptions& opts = {});

// Per-sample scalars of an absolute trajectory.
struct InvariantSample {
    double t, H, I, J, K, U, C_norm, sundman_gap, G;
};

struct InvariantReport {
    double energy_drift = 0;
    double momentum_drift = 0;
    double lagrange_jacobi_residual = 0;
    double sundman_min_gap = 0;  // relative to IK
    double g_drift = 0;          // only meaningful for kappa = -1
    bool has_g = false;
    std::vector<InvariantSample> series;
};

InvariantReport audit_invariants(const Trajectory& traj, const MassSystem& sys);

struct Scalars {
    double I, J, K, U, H;
};
Scalars scalars(const State& z, const MassSystem& sys);

// IK - J^2 - |C|^2
double sundman_gap(const State& z, const MassSystem& sys);
// I^{-1/2}(J^2 + |C|^2) - 2 I^{1/2} H
double sundman_function(const State& z, const MassSystem& sys);

struct SchwarzResult {
    double gap;             // IK - J^2 - (Omega x . y)^2
    bool equality;          // gap <= tol * IK
    double structure_defect;  // on equality: distance from +-Omega_C on the fixed space
};
SchwarzResult complex_schwarz_gap(const State& z, const Bivector& omega, const MassSystem& sys,
                                  double tol = 1e-10);

struct SaariParts {
    Mat yh, yr, yd;
    Mat omega;  // rotation with yr = omega x
};
SaariParts saari_decomposition(const State& z, const MassSystem& sys);

// Solve S W + W S = C for antisymmetric W, S symmetric positive semidefinite.
Mat solve_inertia_operator(const Mat& S, const Mat& C);

struct DziobekRanks {
    int rank_C;
    int rank_E;
    int n;
    bool holds() const { return rank_C <= rank_E && 2 * rank_E <= rank_C + 2 * (n - 1); }
};
DziobekRanks dziobek_ranks(const State& z, const MassSystem& sys, double rel = 1e-9);

// Subtract the rigid rotation carrying all the angular momentum, leaving C = 0.
State remove_angular_momentum(const State& z, const MassSystem& sys);

}  // namespace nbody
