#pragma once

#include <array>
#include <cstdint>
#include <map>

#include "nbody/geometry.hpp"

namespace nbody {

enum class ConfigKind { Central, Balanced, Neither };
const char* to_string(ConfigKind k);

struct ConfigClass {
    ConfigKind kind;
    double multiplier;         // lambda = 2 kappa U / I (Newton: -U/I)
    double central_residual;   // |grad U - lambda x| / |grad U|, mass norm
    double balanced_residual;  // |AB - BA|_F / (|A|_F |B|_F)
};

double central_residual(const Mat& x, const MassSystem& sys);
double balanced_residual(const Mat& x, const MassSystem& sys);
ConfigClass classify(const Mat& x, const MassSystem& sys, double tol = 1e-8);

struct SolverOptions {
    int max_iter = 20000;
    double tol = 1e-12;  // target residual
};

// Random start in R^d with the given seed, then find_central_from.
Mat find_central(const MassSystem& sys, int d, std::uint64_t seed, const SolverOptions& opts = {});
// Descent of U on the sphere I = 1 followed by Newton refinement. Result has I = 1.
Mat find_central_from(const Mat& x0, const MassSystem& sys, const SolverOptions& opts = {});

// Critical point of U among configurations whose B has the given spectrum. Zero entries
// are dropped; the ambient dimension equals the number of positive entries.
Mat find_balanced(const MassSystem& sys, const std::vector<double>& spectrum, std::uint64_t seed,
                  const SolverOptions& opts = {});
// Same, keeping the B-spectrum of x0 and starting from its orbit point.
Mat find_balanced_from(const Mat& x0, const MassSystem& sys, const SolverOptions& opts = {});

// Nonzero eigenvalues of B = diag(m) beta, descending.
std::vector<double> intrinsic_spectrum(const Mat& x, const MassSystem& sys, double rel_zero = 1e-12);

using Triple = std::array<int, 3>;

struct BalancedResiduals {
    std::map<Triple, double> P;         // P_ijk
    std::map<Triple, double> nabla;     // nabla_ijk
    std::map<Triple, double> Y;         // sum over l of the selected Y^l_ijk
    std::map<Triple, double> Y_literal; // sum over l of the determinant as displayed
    std::map<Triple, double> commutator;  // W_ij + W_jk + W_ki with W = beta A - (beta A)^T
    Mat Pij;
    bool corrected_selected = true;
    double literal_defect = 0;    // max |(-nabla + sum Y_literal)/2 - commutator|
    double corrected_defect = 0;  // same for the corrected variant
};

// s is the symmetric matrix of squared distances.
BalancedResiduals balanced_residuals_pijk(const Mat& s, const MassSystem& sys);

// Gram form of a squared-distance table, centred for the masses.
Mat gram_from_distances(const Mat& s, const Vec& m);
// Positions in R^d (d = numerical rank) reproducing s; NotEmbeddable on negative spectrum.
Mat embed_distances(const Mat& s, const MassSystem& sys, double neg_tol = 1e-9);

struct ShapePoint {
    Eigen::Vector3d point;  // unit vector
    double longitude;
    double latitude;
    double I;
};
ShapePoint shape_sphere(const Mat& x, const MassSystem& sys);

}  // namespace nbody
