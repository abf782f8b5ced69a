#include "nbody/cli.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <future>
#include <mutex>
#include <numbers>
#include <random>
#include <sstream>

#include "nbody/configurations.hpp"
#include "nbody/io.hpp"

namespace nbody {

namespace {

namespace fs = std::filesystem;
using io::json;

struct Flags {
    std::vector<std::string> configs;
    std::string out = ".";
    double tol = 1e-10;
    double horizon = 10;
    std::uint64_t seed = 0;
    int jobs = 1;
    std::string integrator = "rk8";
    int samples = 201;
    std::vector<double> masses;
    int dim = 2;
    std::vector<double> spectrum;
    double e = 0, a = 1, k = 1, scale = 1;
    int bodies = 4;
    double period = 2 * std::numbers::pi;
    int modes = 16;
    std::string symmetry = "z2z4";
    double kick = 0.2;
};

// Per-job context: flags plus the scenario file and the suffix for output names.
struct Job {
    const Flags& f;
    const CLI::App& sub;
    std::string config;
    std::string suffix;

    bool given(const char* flag) const { return sub.count(flag) > 0; }
    std::string path(const std::string& stem, const std::string& ext) const {
        return (fs::path(f.out) / (stem + suffix + ext)).string();
    }
    json scenario() const {
        if (config.empty()) throw ValidationError("--config is required");
        return io::read_json_file(config);
    }
    // `value` holds the flag (or its default); the scenario field wins only when the flag is absent.
    double param(const json& sc, const char* flag, const char* key, double value) const {
        if (given(flag)) return value;
        if (sc.contains(key)) {
            if (!sc[key].is_number()) throw ValidationError(std::string("field '") + key + "' must be a number");
            return sc[key].get<double>();
        }
        return value;
    }
};

IntegratorOptions integrator_options(const Job& job, const json& sc) {
    IntegratorOptions o;
    o.tol = job.param(sc, "--tol", "tol", job.f.tol);
    o.samples = static_cast<int>(job.param(sc, "--samples", "samples", job.f.samples));
    std::string kind = job.f.integrator;
    if (!job.given("--integrator") && sc.contains("integrator")) kind = sc["integrator"].get<std::string>();
    if (kind == "rk8") o.kind = IntegratorKind::RK853;
    else if (kind == "leapfrog") o.kind = IntegratorKind::Leapfrog;
    else throw ValidationError("integrator must be rk8 or leapfrog, got '" + kind + "'");
    if (!(o.tol > 0)) throw ValidationError("tol must be positive");
    if (o.samples < 2) throw ValidationError("samples must be at least 2");
    return o;
}

std::string csv_of(const std::vector<double>& t, const std::vector<State>& s) {
    std::ostringstream os;
    io::write_trajectory_csv(os, t, s);
    return os.str();
}

Mat distance_matrix(const Mat& x) {
    Mat d(x.cols(), x.cols());
    for (Eigen::Index i = 0; i < x.cols(); ++i)
        for (Eigen::Index j = 0; j < x.cols(); ++j) d(i, j) = (x.col(i) - x.col(j)).norm();
    return d;
}

json simulate(const Job& job, bool write_traj) {
    json sc = job.scenario();
    MassSystem sys = io::system_from_json(sc);
    State z0 = io::state_from_json(sc, sys);
    const double T = job.param(sc, "--horizon", "horizon", job.f.horizon);
    if (!(T > 0)) throw ValidationError("horizon must be positive");
    Trajectory tr = integrate_absolute(z0, sys, T, integrator_options(job, sc));
    InvariantReport rep = audit_invariants(tr, sys);
    json out = io::report_to_json(rep);
    out["integrator"] = tr.integrator;
    out["steps"] = tr.steps;
    out["rejected"] = tr.rejected;
    out["horizon"] = T;
    if (write_traj) io::write_text_file(job.path("trajectory", ".csv"), csv_of(tr.times, tr.states));
    std::ostringstream inv;
    io::write_invariants_csv(inv, rep);
    io::write_text_file(job.path("invariants", ".csv"), inv.str());
    io::write_text_file(job.path("audit", ".json"), io::dump(out));
    return out;
}

json reduce(const Job& job) {
    json sc = job.scenario();
    MassSystem sys = io::system_from_json(sc);
    State z0 = io::state_from_json(sc, sys);
    const double T = job.param(sc, "--horizon", "horizon", job.f.horizon);
    if (!(T > 0)) throw ValidationError("horizon must be positive");
    IntegratorOptions o = integrator_options(job, sc);
    if (o.kind != IntegratorKind::RK853) throw ValidationError("reduced integration supports rk8 only");
    ReducedTrajectory tr = integrate_reduced(RelativeState::from_state(z0), sys, T, o);
    std::ostringstream os;
    io::write_reduced_csv(os, tr);
    io::write_text_file(job.path("reduced", ".csv"), os.str());
    json out;
    out["samples"] = tr.states.size();
    out["steps"] = tr.steps;
    out["horizon"] = T;
    const RelativeState& last = tr.states.back();
    out["final_energy_form"] = io::matrix_to_json(last.energy_form());
    return out;
}

MassSystem masses_system(const Job& job) {
    if (job.f.masses.empty()) throw ValidationError("--masses is required");
    return MassSystem(Eigen::Map<const Vec>(job.f.masses.data(), job.f.masses.size()));
}

json configuration_json(const Mat& x, const MassSystem& sys) {
    ConfigClass c = classify(x, sys);
    json out = io::system_to_json(sys);
    out["positions"] = io::matrix_to_json(x);
    out["distances"] = io::matrix_to_json(distance_matrix(x));
    out["kind"] = to_string(c.kind);
    out["central_residual"] = c.central_residual;
    out["balanced_residual"] = c.balanced_residual;
    out["multiplier"] = c.multiplier;
    out["I"] = mass_dot(x, x, sys.m);
    out["U"] = potential(x, sys);
    out["spectrum"] = intrinsic_spectrum(x, sys);
    return out;
}

json find_central_cmd(const Job& job) {
    MassSystem sys = masses_system(job);
    Mat x = find_central(sys, job.f.dim, job.f.seed);
    json out = configuration_json(x, sys);
    out["seed"] = job.f.seed;
    io::write_text_file(job.path("central", ".json"), io::dump(out));
    return out;
}

json find_balanced_cmd(const Job& job) {
    MassSystem sys = masses_system(job);
    if (job.f.spectrum.empty()) throw ValidationError("--spectrum is required");
    Mat x = find_balanced(sys, job.f.spectrum, job.f.seed);
    json out = configuration_json(x, sys);
    out["seed"] = job.f.seed;
    out["requested_spectrum"] = job.f.spectrum;
    io::write_text_file(job.path("balanced", ".json"), io::dump(out));
    return out;
}

json kepler_cmd(const Job& job) {
    KeplerOrbit o = KeplerOrbit::make(job.f.k, job.f.a, job.f.e);
    const int N = job.f.samples;
    if (N < 2) throw ValidationError("samples must be at least 2");
    std::ostringstream os;
    os << "time [T],x [L],y [L],vx [L/T],vy [L/T],u [rad],r [L]\n";
    for (int i = 0; i < N; ++i) {
        const double t = o.period() * i / (N - 1);
        KeplerState s = kepler_state(o, t);
        os << io::format_double(t);
        for (double v : {s.position[0], s.position[1], s.velocity[0], s.velocity[1], s.u, s.r})
            os << ',' << io::format_double(v);
        os << '\n';
    }
    io::write_text_file(job.path("kepler", ".csv"), os.str());
    json out;
    out["k"] = o.k;
    out["a"] = o.a;
    out["e"] = o.e;
    out["c"] = o.c;
    out["energy"] = o.energy();
    out["period"] = o.period();
    out["semi_major_axis"] = o.k * o.a;
    io::write_text_file(job.path("kepler", ".json"), io::dump(out));
    return out;
}

json homographic_cmd(const Job& job) {
    json sc = job.scenario();
    MassSystem sys = io::system_from_json(sc);
    Mat x0 = io::positions_from_json(sc);
    const double e = job.param(sc, "--e", "e", job.f.e);
    const double scale = job.param(sc, "--scale", "scale", job.f.scale);
    HomographicMotion hm(x0, sys, e, scale);
    const int N = static_cast<int>(job.param(sc, "--samples", "samples", job.f.samples));
    if (N < 2) throw ValidationError("samples must be at least 2");
    std::vector<double> t;
    std::vector<State> s;
    for (int i = 0; i < N; ++i) {
        t.push_back(hm.period() * i / (N - 1));
        s.push_back(hm.at(t.back()));
    }
    io::write_text_file(job.path("homographic", ".csv"), csv_of(t, s));
    json out = io::system_to_json(sys);
    out["e"] = e;
    out["k"] = hm.orbit().k;
    out["a"] = hm.orbit().a;
    out["period"] = hm.period();
    out["dimension"] = hm.dimension();
    out["base"] = io::matrix_to_json(hm.base());
    out["structure"] = io::matrix_to_json(hm.structure());
    io::write_text_file(job.path("homographic", ".json"), io::dump(out));
    return out;
}

json relequil_cmd(const Job& job) {
    json sc = job.scenario();
    MassSystem sys = io::system_from_json(sc);
    Mat x0 = io::positions_from_json(sc);
    RelativeEquilibrium re = relative_equilibrium(x0, sys);
    const double T = job.given("--horizon") || sc.contains("horizon")
                         ? job.param(sc, "--horizon", "horizon", job.f.horizon)
                         : re.slowest_period();
    const int N = static_cast<int>(job.param(sc, "--samples", "samples", job.f.samples));
    if (N < 2) throw ValidationError("samples must be at least 2");
    std::vector<double> t;
    std::vector<State> s;
    for (int i = 0; i < N; ++i) {
        t.push_back(T * i / (N - 1));
        s.push_back(re.at(t.back()));
    }
    io::write_text_file(job.path("relequil", ".csv"), csv_of(t, s));
    json out = io::relequil_to_json(re, sys);
    out["sundman_gap"] = sundman_gap(re.initial_state(), sys);
    io::write_text_file(job.path("relequil", ".json"), io::dump(out));
    return out;
}

json hiphop_cmd(const Job& job) {
    const Flags& f = job.f;
    SymmetryAction sym = SymmetryAction::from_label(f.symmetry, f.bodies, 3);
    Loop seed = symmetric_seed(f.symmetry, f.bodies, f.period, f.modes, f.kick);
    std::mt19937_64 rng(f.seed);
    std::uniform_real_distribution<double> noise(-1e-3, 1e-3);
    for (Eigen::Index i = 0; i < seed.coeffs.size(); ++i) seed.coeffs[i] += noise(rng);
    MinimizeResult res = minimize_action(project_symmetry(seed, sym), sym);
    LoopReport rep = verify_loop(res.loop, sym);

    io::write_text_file(job.path("loop", ".json"), io::dump(io::loop_to_json(res.loop, sym.label)));
    const int N = f.samples;
    if (N < 2) throw ValidationError("samples must be at least 2");
    std::vector<double> t;
    std::vector<State> s;
    for (int i = 0; i < N; ++i) {
        t.push_back(f.period * i / (N - 1));
        s.emplace_back();
        s.back().x = res.loop.position(t.back());
        s.back().y = res.loop.velocity(t.back());
    }
    io::write_text_file(job.path("loop", ".csv"), csv_of(t, s));
    json out = io::loop_report_to_json(rep);
    out["gradient_norm"] = res.grad_norm;
    out["iterations"] = res.iterations;
    out["symmetry"] = sym.label;
    out["group_order"] = sym.elements().size();
    out["polygon_action"] = action_value_and_gradient(polygon_loop(f.bodies, 3, f.period, f.modes)).value;
    io::write_text_file(job.path("report", ".json"), io::dump(out));
    return out;
}

json shape_sphere_cmd(const Job& job) {
    json sc = job.scenario();
    MassSystem sys = io::system_from_json(sc);
    if (sys.n() != 3) throw ValidationError("the shape sphere is defined for three bodies");
    State z0 = io::state_from_json(sc, sys);
    std::vector<double> t{0};
    std::vector<State> s{z0};
    const double T = job.param(sc, "--horizon", "horizon", job.given("--horizon") ? job.f.horizon : 0.0);
    if (T > 0) {
        Trajectory tr = integrate_absolute(z0, sys, T, integrator_options(job, sc));
        t = tr.times;
        s = tr.states;
    }
    std::ostringstream os;
    os << "time [T],longitude [rad],latitude [rad],I [M L^2]\n";
    for (size_t i = 0; i < s.size(); ++i) {
        ShapePoint p = shape_sphere(s[i].x, sys);
        os << io::format_double(t[i]) << ',' << io::format_double(p.longitude) << ','
           << io::format_double(p.latitude) << ',' << io::format_double(p.I) << '\n';
    }
    io::write_text_file(job.path("shape_sphere", ".csv"), os.str());
    json out;
    out["points"] = s.size();
    return out;
}

json dispatch(const std::string& name, const Job& job) {
    if (name == "simulate") return simulate(job, true);
    if (name == "audit") return simulate(job, false);
    if (name == "reduce") return reduce(job);
    if (name == "find-central") return find_central_cmd(job);
    if (name == "find-balanced") return find_balanced_cmd(job);
    if (name == "kepler") return kepler_cmd(job);
    if (name == "homographic") return homographic_cmd(job);
    if (name == "relequil") return relequil_cmd(job);
    if (name == "hiphop") return hiphop_cmd(job);
    if (name == "shape-sphere") return shape_sphere_cmd(job);
    throw ValidationError("unknown subcommand '" + name + "'");
}

json error_json(const std::string& kind, const std::string& family, const std::string& message) {
    json j;
    j["error"] = kind;
    j["family"] = family;
    j["message"] = message;
    return j;
}

struct Outcome {
    int code = 0;
    json body;
};

Outcome run_job(const std::string& name, const Job& job) {
    try {
        return {0, dispatch(name, job)};
    } catch (const Error& e) {
        const bool validation = e.family() == ErrorFamily::Validation;
        return {validation ? 2 : 3, error_json(e.kind(), validation ? "validation" : "numerical", e.what())};
    } catch (const nlohmann::json::exception& e) {
        return {2, error_json("ValidationError", "validation", e.what())};
    } catch (const std::exception& e) {
        return {3, error_json("InternalError", "numerical", e.what())};
    }
}

void configure_logging() {
    static std::once_flag once;
    std::call_once(once, [] {
        auto logger = spdlog::stderr_color_mt("nbody");
        spdlog::set_default_logger(logger);
        spdlog::set_level(spdlog::level::warn);
        if (const char* lvl = std::getenv("NBODY_LOG")) spdlog::set_level(spdlog::level::from_str(lvl));
    });
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    configure_logging();
    Flags f;
    CLI::App app{"N-body reduction toolkit"};
    app.require_subcommand(1);

    auto common = [&](CLI::App* s) {
        s->add_option("--config", f.configs, "scenario JSON file(s)");
        s->add_option("--out", f.out, "output directory");
        s->add_option("--jobs", f.jobs, "parallel scenarios")->check(CLI::PositiveNumber);
    };
    auto integration = [&](CLI::App* s) {
        s->add_option("--tol", f.tol, "integrator tolerance");
        s->add_option("--horizon", f.horizon, "integration time");
        s->add_option("--integrator", f.integrator, "rk8 or leapfrog")->check(CLI::IsMember({"rk8", "leapfrog"}));
        s->add_option("--samples", f.samples, "output samples");
    };
    for (const char* name : {"simulate", "reduce", "audit"}) {
        auto* s = app.add_subcommand(name);
        common(s);
        integration(s);
    }
    auto* shape = app.add_subcommand("shape-sphere", "shape-sphere coordinates of a 3-body scenario");
    common(shape);
    integration(shape);

    for (const char* name : {"find-central", "find-balanced"}) {
        auto* s = app.add_subcommand(name);
        s->add_option("--out", f.out, "output directory");
        s->add_option("--masses", f.masses, "comma-separated masses")->delimiter(',')->required();
        s->add_option("--seed", f.seed, "random seed")->required();
        if (std::string(name) == "find-central") s->add_option("--dim", f.dim, "ambient dimension");
        else s->add_option("--spectrum", f.spectrum, "comma-separated spectrum of B")->delimiter(',')->required();
    }

    auto* kep = app.add_subcommand("kepler");
    kep->add_option("--out", f.out, "output directory");
    kep->add_option("--e", f.e, "eccentricity");
    kep->add_option("--a", f.a, "energy parameter, H = -1/(2a)");
    kep->add_option("--k", f.k, "attraction constant");
    kep->add_option("--samples", f.samples, "samples over one period");

    auto* hom = app.add_subcommand("homographic");
    common(hom);
    hom->add_option("--e", f.e, "eccentricity");
    hom->add_option("--scale", f.scale, "semi-major axis of the Kepler factor");
    hom->add_option("--samples", f.samples, "samples over one period");

    auto* rel = app.add_subcommand("relequil");
    common(rel);
    rel->add_option("--horizon", f.horizon, "time span (default: slowest period)");
    rel->add_option("--samples", f.samples, "output samples");

    auto* hip = app.add_subcommand("hiphop");
    hip->add_option("--out", f.out, "output directory");
    hip->add_option("--bodies", f.bodies, "number of equal masses");
    hip->add_option("--period", f.period, "period T");
    hip->add_option("--modes", f.modes, "Fourier modes");
    hip->add_option("--symmetry", f.symmetry, "z2z4, z3, italian or none");
    hip->add_option("--seed", f.seed, "seed for the perturbation of the starting loop")->required();
    hip->add_option("--kick", f.kick, "vertical amplitude of the starting loop");
    hip->add_option("--samples", f.samples, "samples of the CSV trajectory");

    try {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        app.parse(rev);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << io::dump(error_json("UsageError", "validation", e.what()));
        return 2;
    }

    CLI::App* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    try {
        fs::create_directories(f.out);
    } catch (const std::exception& e) {
        err << io::dump(error_json("ValidationError", "validation", e.what()));
        return 2;
    }

    std::vector<std::string> configs = f.configs;
    if (configs.empty()) configs.push_back("");
    const bool suffixed = configs.size() > 1;
    std::vector<Outcome> results(configs.size());
    auto work = [&](size_t i) {
        Job job{f, *sub, configs[i], suffixed ? "_job" + std::to_string(i) : ""};
        results[i] = run_job(name, job);
    };
    const size_t width = static_cast<size_t>(std::max(1, f.jobs));
    for (size_t start = 0; start < configs.size(); start += width) {
        std::vector<std::future<void>> batch;
        for (size_t i = start; i < std::min(configs.size(), start + width); ++i)
            batch.push_back(std::async(width > 1 ? std::launch::async : std::launch::deferred, work, i));
        for (auto& b : batch) b.get();
    }

    int code = 0;
    json summary = suffixed ? json::array() : json();
    for (size_t i = 0; i < results.size(); ++i) {
        if (results[i].code != 0) {
            err << io::dump(results[i].body);
            if (code == 0) code = results[i].code;
        } else if (suffixed) {
            summary.push_back(results[i].body);
        } else {
            summary = results[i].body;
        }
    }
    if (code == 0) out << io::dump(summary);
    return code;
}

}  // namespace nbody
