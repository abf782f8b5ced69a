#pragma once

#include <json.hpp>
#include <ostream>
#include <string>

#include "nbody/action.hpp"
#include "nbody/dynamics.hpp"
#include "nbody/motions.hpp"

namespace nbody::io {

using json = nlohmann::json;

// %.17g, so every double re-reads to the same bits.
std::string format_double(double v);
// JSON text with doubles written by format_double and keys in sorted order.
std::string dump(const json& j, int indent = 2);

json matrix_to_json(const Mat& a);  // list of rows
Mat matrix_from_json(const json& j);

json system_to_json(const MassSystem& sys);
MassSystem system_from_json(const json& j);

// {masses, G, kappa, positions, velocities}; positions and velocities are d x n row-major.
json state_to_json(const State& z, const MassSystem& sys);
State state_from_json(const json& j, const MassSystem& sys);
// Positions only; velocities default to zero when absent.
Mat positions_from_json(const json& j);

json loop_to_json(const Loop& loop, const std::string& symmetry = "");
Loop loop_from_json(const json& j);

json relequil_to_json(const RelativeEquilibrium& re, const MassSystem& sys);
json report_to_json(const InvariantReport& r);
json loop_report_to_json(const LoopReport& r);

json read_json_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

// time, positions row-major (x<row>_<body>), velocities row-major (v<row>_<body>).
void write_trajectory_csv(std::ostream& os, const std::vector<double>& times,
                          const std::vector<State>& states);
// time, then the upper triangles of beta, gamma, delta and rho.
void write_reduced_csv(std::ostream& os, const ReducedTrajectory& traj);
void write_invariants_csv(std::ostream& os, const InvariantReport& r);

}  // namespace nbody::io
