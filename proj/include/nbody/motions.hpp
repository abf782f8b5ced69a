#pragma once

#include <vector>

#include "nbody/dynamics.hpp"

namespace nbody {

// Solves u - e sin u = l for 0 <= e < 1.
double kepler_anomaly(double e, double l);

// Elliptic solution of zeta'' = -k zeta / |zeta|^3 in the plane, periapsis on the +x axis.
// The semi-major axis is k a, the energy H = -1/(2a), the period 2 pi k a^{3/2}.
struct KeplerOrbit {
    double k = 1, a = 1, e = 0, c = 1, t0 = 0;

    static KeplerOrbit make(double k, double a, double e, double t0 = 0);
    double energy() const { return -0.5 / a; }
    double period() const;
    double mean_motion() const;
};

struct KeplerState {
    Eigen::Vector2d position, velocity;
    double r, u, v, l;  // radius, eccentric, true and mean anomalies
};
KeplerState kepler_state(const KeplerOrbit& orbit, double t);

enum class StructureChoice { Auto, PlaneQuarterTurn, Complexified };

// x(t) = zeta(t) x0 with zeta Keplerian for k = U(x0); zeta acts through a hermitian
// structure on Im x0 (plus an orthogonal copy when needed).
class HomographicMotion {
public:
    HomographicMotion(const Mat& x0, const MassSystem& sys, double e, double scale,
                      StructureChoice choice = StructureChoice::Auto, double tol = 1e-8);

    State at(double t) const;
    const KeplerOrbit& orbit() const { return orbit_; }
    const Mat& base() const { return x0_; }  // embedded x0 with I = 1
    const Mat& structure() const { return Jx0_; }  // J x0
    int dimension() const { return static_cast<int>(x0_.rows()); }
    double period() const { return orbit_.period(); }

private:
    MassSystem sys_;
    Mat x0_, Jx0_;
    KeplerOrbit orbit_;
};

State homographic_motion(const Mat& x0, const MassSystem& sys, double e, double scale, double t);

struct RelativeEquilibrium {
    Mat x0;      // embedded configuration, 2p x n
    Mat Omega;   // antisymmetric 2p x 2p, y = Omega x
    std::vector<double> frequencies;  // descending
    int rank = 0;

    int dimension() const { return static_cast<int>(x0.rows()); }
    State at(double t) const;
    State initial_state() const;
    double slowest_period() const;
};

RelativeEquilibrium relative_equilibrium(const Mat& x0, const MassSystem& sys, double tol = 1e-8);

// IK - J^2 - |C|^2 at each sample.
std::vector<double> sundman_profile(const std::vector<State>& samples, const MassSystem& sys);

}  // namespace nbody
