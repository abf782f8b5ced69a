#include "nbody/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace nbody::io {

std::string format_double(double v) {
    if (!std::isfinite(v)) return std::isnan(v) ? "NaN" : (v > 0 ? "Infinity" : "-Infinity");
    if (v == 0) return "0";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

namespace {

void write(std::ostringstream& os, const json& j, int indent, int level) {
    const std::string pad = indent > 0 ? std::string(static_cast<size_t>(indent) * (level + 1), ' ') : "";
    const std::string close = indent > 0 ? std::string(static_cast<size_t>(indent) * level, ' ') : "";
    const char* nl = indent > 0 ? "\n" : "";
    switch (j.type()) {
    case json::value_t::number_float: {
        const double v = j.get<double>();
        // JSON has no non-finite numbers
        os << (std::isfinite(v) ? format_double(v) : "null");
        break;
    }
    case json::value_t::array: {
        // arrays of scalars stay on one line
        bool flat = std::all_of(j.begin(), j.end(), [](const json& e) { return e.is_primitive(); });
        if (j.empty()) {
            os << "[]";
            break;
        }
        os << '[';
        bool first = true;
        for (const auto& e : j) {
            if (!first) os << (flat ? ", " : ",");
            if (!flat) os << nl << pad;
            write(os, e, indent, level + 1);
            first = false;
        }
        if (!flat) os << nl << close;
        os << ']';
        break;
    }
    case json::value_t::object: {
        if (j.empty()) {
            os << "{}";
            break;
        }
        os << '{';
        bool first = true;
        for (auto it = j.begin(); it != j.end(); ++it) {
            if (!first) os << ',';
            os << nl << pad << json(it.key()).dump() << ": ";
            write(os, it.value(), indent, level + 1);
            first = false;
        }
        os << nl << close << '}';
        break;
    }
    default:
        os << j.dump();
    }
}

const json& require(const json& j, const char* key) {
    if (!j.is_object() || !j.contains(key)) throw ValidationError(std::string("missing field '") + key + "'");
    return j.at(key);
}

double number(const json& j, const char* what) {
    if (!j.is_number()) throw ValidationError(std::string("field '") + what + "' must be a number");
    return j.get<double>();
}

}  // namespace

std::string dump(const json& j, int indent) {
    std::ostringstream os;
    write(os, j, indent, 0);
    if (indent > 0) os << '\n';
    return os.str();
}

json matrix_to_json(const Mat& a) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index k = 0; k < a.cols(); ++k) row.push_back(a(i, k));
        rows.push_back(row);
    }
    return rows;
}

Mat matrix_from_json(const json& j) {
    if (!j.is_array() || j.empty() || !j[0].is_array()) throw ValidationError("expected a non-empty list of rows");
    const size_t cols = j[0].size();
    Mat a(j.size(), cols);
    for (size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_array() || j[i].size() != cols) throw ValidationError("rows of unequal length");
        for (size_t k = 0; k < cols; ++k) a(i, k) = number(j[i][k], "matrix entry");
    }
    return a;
}

json system_to_json(const MassSystem& sys) {
    json j;
    j["masses"] = std::vector<double>(sys.m.data(), sys.m.data() + sys.m.size());
    j["G"] = sys.G;
    j["kappa"] = sys.kappa;
    return j;
}

MassSystem system_from_json(const json& j) {
    const json& ms = require(j, "masses");
    if (!ms.is_array()) throw ValidationError("'masses' must be a list");
    Vec m(ms.size());
    for (size_t i = 0; i < ms.size(); ++i) m[i] = number(ms[i], "masses");
    const double G = j.contains("G") ? number(j["G"], "G") : 1.0;
    const double kappa = j.contains("kappa") ? number(j["kappa"], "kappa") : -0.5;
    return MassSystem(m, G, kappa);
}

json state_to_json(const State& z, const MassSystem& sys) {
    json j = system_to_json(sys);
    j["positions"] = matrix_to_json(z.x);
    j["velocities"] = matrix_to_json(z.y);
    return j;
}

Mat positions_from_json(const json& j) { return matrix_from_json(require(j, "positions")); }

State state_from_json(const json& j, const MassSystem& sys) {
    Mat x = positions_from_json(j);
    Mat y = j.contains("velocities") ? matrix_from_json(j["velocities"]) : Mat::Zero(x.rows(), x.cols());
    return State(x, y, sys);
}

json loop_to_json(const Loop& loop, const std::string& symmetry) {
    json j = system_to_json(loop.sys);
    j["T"] = loop.T;
    j["modes"] = loop.modes;
    j["dim"] = loop.d;
    if (!symmetry.empty()) j["symmetry"] = symmetry;
    json a = json::array(), b = json::array();
    for (int k = 0; k <= loop.modes; ++k) a.push_back(matrix_to_json(loop.a(k)));
    for (int k = 1; k <= loop.modes; ++k) b.push_back(matrix_to_json(loop.b(k)));
    j["a"] = a;
    j["b"] = b;
    return j;
}

Loop loop_from_json(const json& j) {
    MassSystem sys = system_from_json(j);
    const double T = number(require(j, "T"), "T");
    const int modes = require(j, "modes").get<int>();
    const int d = require(j, "dim").get<int>();
    Loop l = Loop::zeros(sys, T, d, modes);
    const json& a = require(j, "a");
    const json& b = require(j, "b");
    if (a.size() != static_cast<size_t>(modes + 1) || b.size() != static_cast<size_t>(modes))
        throw ValidationError("loop coefficient lists do not match 'modes'");
    for (int k = 0; k <= modes; ++k) {
        Mat m = matrix_from_json(a[k]);
        if (m.rows() != d || m.cols() != sys.n()) throw ValidationError("loop coefficient has the wrong shape");
        l.a(k) = m;
    }
    for (int k = 1; k <= modes; ++k) {
        Mat m = matrix_from_json(b[k - 1]);
        if (m.rows() != d || m.cols() != sys.n()) throw ValidationError("loop coefficient has the wrong shape");
        l.b(k) = m;
    }
    return l;
}

json relequil_to_json(const RelativeEquilibrium& re, const MassSystem& sys) {
    json j = system_to_json(sys);
    j["x0"] = matrix_to_json(re.x0);
    j["Omega"] = matrix_to_json(re.Omega);
    j["frequencies"] = re.frequencies;
    j["rank"] = re.rank;
    j["dimension"] = re.dimension();
    return j;
}

json report_to_json(const InvariantReport& r) {
    json j;
    j["energy_drift"] = r.energy_drift;
    j["momentum_drift"] = r.momentum_drift;
    j["lagrange_jacobi_residual"] = r.lagrange_jacobi_residual;
    j["sundman_min_gap"] = r.sundman_min_gap;
    if (r.has_g) j["g_drift"] = r.g_drift;
    j["samples"] = r.series.size();
    return j;
}

json loop_report_to_json(const LoopReport& r) {
    json j;
    j["eom_residual"] = r.eom_residual;
    j["action"] = r.action;
    j["min_distance"] = r.min_distance;
    j["symmetry_defect"] = r.symmetry_defect;
    j["planar"] = r.planar;
    j["square_events"] = r.square_events;
    j["tetrahedron_events"] = r.tetrahedron_events;
    j["square_min_distance"] = r.square_min;
    j["tetrahedron_min_distance"] = r.tetrahedron_min;
    return j;
}

json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ValidationError("malformed JSON in '" + path + "': " + e.what());
    }
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write '" + path + "'");
    out << text;
}

void write_trajectory_csv(std::ostream& os, const std::vector<double>& times, const std::vector<State>& states) {
    if (states.empty()) return;
    const auto d = states[0].x.rows(), n = states[0].x.cols();
    os << "time [T]";
    for (const char* p : {"x", "v"})
        for (Eigen::Index r = 0; r < d; ++r)
            for (Eigen::Index k = 0; k < n; ++k) os << ',' << p << r << '_' << k << (p[0] == 'x' ? " [L]" : " [L/T]");
    os << '\n';
    for (size_t i = 0; i < states.size(); ++i) {
        os << format_double(times[i]);
        for (const Mat* a : {&states[i].x, &states[i].y})
            for (Eigen::Index r = 0; r < d; ++r)
                for (Eigen::Index k = 0; k < n; ++k) os << ',' << format_double((*a)(r, k));
        os << '\n';
    }
}

void write_reduced_csv(std::ostream& os, const ReducedTrajectory& traj) {
    if (traj.states.empty()) return;
    const int n = traj.states[0].size();
    const char* names[] = {"beta", "gamma", "delta", "rho"};
    const char* units[] = {" [L^2]", " [L^2/T]", " [L^2/T^2]", " [L^2/T]"};
    os << "time [T]";
    for (int b = 0; b < 4; ++b)
        for (int i = 0; i < n; ++i)
            for (int j = i; j < n; ++j) os << ',' << names[b] << i << '_' << j << units[b];
    os << '\n';
    for (size_t s = 0; s < traj.states.size(); ++s) {
        const RelativeState& r = traj.states[s];
        os << format_double(traj.times[s]);
        for (const Mat* a : {&r.beta, &r.gamma, &r.delta, &r.rho})
            for (int i = 0; i < n; ++i)
                for (int j = i; j < n; ++j) os << ',' << format_double((*a)(i, j));
        os << '\n';
    }
}

void write_invariants_csv(std::ostream& os, const InvariantReport& r) {
    os << "time [T],H [E],I [M L^2],J [M L^2/T],K [M L^2/T^2],U [E],C_norm [M L^2/T],sundman_gap [M^2 L^4/T^2],G [M^2 L^4/T^2]\n";
    for (const auto& s : r.series) {
        os << format_double(s.t);
        for (double v : {s.H, s.I, s.J, s.K, s.U, s.C_norm, s.sundman_gap, s.G}) os << ',' << format_double(v);
        os << '\n';
    }
}

}  // namespace nbody::io
