#pragma once

#include <Eigen/Dense>
#include <vector>

#include "nbody/errors.hpp"

namespace nbody {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Masses and the power-law pair potential Phi(s) = G s^kappa, s = r^2.
// kappa = -1/2 is Newton; kappa = -1 the Jacobi-Banachiewicz potential.
struct MassSystem {
    Vec m;
    double G = 1.0;
    double kappa = -0.5;
    double collision_floor = 1e-10;

    MassSystem() = default;
    MassSystem(Vec masses, double G = 1.0, double kappa = -0.5);

    int n() const { return static_cast<int>(m.size()); }
    double total() const { return m.sum(); }

    double phi(double s) const;
    double dphi(double s) const;
    double ddphi(double s) const;

    // Throws ValidationError naming the violated invariant.
    void validate() const;
};

// Subtract the mass-weighted centroid from every column of a d x n array.
Mat centred(const Mat& x, const Vec& m);

// Positions as a d x n array with centroid zero. Centring happens on construction.
class Configuration {
public:
    Configuration(const Mat& r, const MassSystem& sys) : r_(centred(r, sys.m)) {}
    int dim() const { return static_cast<int>(r_.rows()); }
    int size() const { return static_cast<int>(r_.cols()); }
    const Mat& coords() const { return r_; }
    operator const Mat&() const { return r_; }

private:
    Mat r_;
};

struct State {
    Mat x;  // d x n positions
    Mat y;  // d x n velocities

    State() = default;
    // Centres both arrays and checks shapes.
    State(const Mat& x, const Mat& y, const MassSystem& sys);
    int dim() const { return static_cast<int>(x.rows()); }
    int size() const { return static_cast<int>(x.cols()); }
};

// Antisymmetric d x d array kept as its strict upper triangle.
class Bivector {
public:
    Bivector() = default;
    explicit Bivector(int d) : d_(d), upper_(Vec::Zero(d * (d - 1) / 2)) {}
    // Takes the antisymmetric part of c.
    explicit Bivector(const Mat& c);

    int dim() const { return d_; }
    double operator()(int i, int j) const;
    Mat matrix() const;
    const Vec& upper() const { return upper_; }

private:
    int d_ = 0;
    Vec upper_;
};

// Rotation- and translation-reduced state. Arrays are n x n and annihilate the mass vector.
struct RelativeState {
    Mat beta, gamma, delta, rho;

    static RelativeState from_state(const State& z);
    // The 2n x 2n block [[beta, gamma - rho], [gamma + rho, delta]].
    Mat energy_form() const;
    int size() const { return static_cast<int>(beta.rows()); }
};

// Mass scalar product sum_k m_k <a_k, b_k>.
double mass_dot(const Mat& a, const Mat& b, const Vec& m);

Mat gram_form(const Mat& x);

// s_ij = beta_ii + beta_jj - 2 beta_ij. Entries in [-tol, 0) are set to 0.
Mat beta_to_distances(const Mat& beta, double tol = 1e-12);

struct Inertia {
    double I;
    Mat B;  // diag(m) beta, n x n
    Mat S;  // x diag(m) x^T, d x d
};
Inertia inertia(const Mat& x, const MassSystem& sys);
// (1/M) sum_{i<j} m_i m_j s_ij
double inertia_from_distances(const Mat& s, const Vec& m);

// Elementary symmetric functions e_1..e_k of the given values.
Vec elementary_symmetric(const Vec& values, int k);

enum class InertiaSide { Intrinsic, Ambient };
// eta_1..eta_{n-1}: det(Id - lambda B) = sum_k (-lambda)^k eta_k.
Vec characteristic_coefficients(const Mat& x, const MassSystem& sys,
                                InertiaSide side = InertiaSide::Intrinsic);

// A_ij = -m_i Phi'(s_ij) off the diagonal, columns summing to zero.
Mat wintner_conley(const Mat& x, const MassSystem& sys);
Mat wintner_conley_from_distances(const Mat& s, const MassSystem& sys);

// grad is the mass-metric gradient 2 x A, i.e. the accelerations.
struct PotentialGradient {
    double U;
    Mat grad;
};
PotentialGradient potential_and_gradient(const Mat& x, const MassSystem& sys);
double potential(const Mat& x, const MassSystem& sys);
double potential_from_distances(const Mat& s, const MassSystem& sys);
double min_distance(const Mat& x);

// c_ij = sum_k m_k (-x_ik y_jk + x_jk y_ik)
Bivector angular_momentum(const State& z, const MassSystem& sys);
Bivector angular_momentum(const Mat& x, const Mat& y, const Vec& m);

struct NormFrequencies {
    double norm;
    std::vector<double> omega;  // descending, zeros dropped
};
NormFrequencies bivector_norm_and_frequencies(const Bivector& c, double rel_zero = 1e-12);

struct HermitianStructure {
    Mat J;      // complex structure on F, zero on its complement
    Mat Omega;  // equal to J in an orthonormal basis
    Mat F;      // orthonormal basis of the fixed space, d x rank
};
HermitianStructure hermitian_from_bivector(const Bivector& c, double rel_zero = 1e-12);

// S Omega + Omega S with S the ambient inertia of x.
Bivector inertia_operator_apply(const Bivector& omega, const Mat& x, const MassSystem& sys);

// (1/2) trace(C Omega^T)
double bivector_component(const Bivector& c, const Bivector& omega);

// Numerical rank with threshold rel * sigma_max.
int numerical_rank(const Mat& a, double rel = 1e-9);

}  // namespace nbody
