#include <doctest.h>

#include <unistd.h>

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "nbody/cli.hpp"
#include "nbody/io.hpp"
#include "support.hpp"

using namespace nbody;
using io::json;
namespace fs = std::filesystem;

namespace {

const std::string data = NBODY_TEST_DATA;

struct Run {
    int code;
    std::string out, err;
};

Run cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("nbody_test_" + std::to_string(::getpid()) + "_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

}  // namespace

TEST_CASE("float formatting round-trips") {
    CHECK(io::format_double(0.1) == "0.10000000000000001");
    CHECK(io::format_double(0.0) == "0");
    CHECK(io::format_double(-0.0) == "0");
    CHECK(io::format_double(-2.5) == "-2.5");
    CHECK(io::format_double(std::nan("")) == "NaN");
    std::mt19937_64 rng(41);
    std::uniform_int_distribution<std::uint64_t> bits;
    for (int k = 0; k < 10000; ++k) {
        std::uint64_t b = bits(rng);
        double v;
        std::memcpy(&v, &b, sizeof v);
        if (!std::isfinite(v)) continue;
        CHECK(std::strtod(io::format_double(v).c_str(), nullptr) == v);
    }
}

TEST_CASE("JSON writer") {
    json j;
    j["zeta"] = 1.5;
    j["alpha"] = json::array({1.0, 2.0, 0.1});
    j["mid"] = {{"b", 1}, {"a", "text"}};
    const std::string s = io::dump(j);
    CHECK(s.find("\"alpha\"") < s.find("\"mid\""));
    CHECK(s.find("\"mid\"") < s.find("\"zeta\""));
    CHECK(s.find("[1, 2, 0.10000000000000001]") != std::string::npos);
    CHECK(json::parse(s) == json::parse(j.dump()));
    CHECK(io::dump(json(std::nan(""))) == "null\n");
}

TEST_CASE("state and loop round-trips") {
    std::mt19937_64 rng(42);
    MassSystem sys(testing::random_masses(rng, 4), 1.3, -2.0 / 3.0);
    State z(testing::gaussian(rng, 3, 4), testing::gaussian(rng, 3, 4), sys);
    json j = json::parse(io::dump(io::state_to_json(z, sys)));
    MassSystem sys2 = io::system_from_json(j);
    State z2 = io::state_from_json(j, sys2);
    CHECK(sys2.m == sys.m);
    CHECK(sys2.G == sys.G);
    CHECK(sys2.kappa == sys.kappa);
    // re-centring may move a coordinate by one unit in the last place
    const double eps = std::numeric_limits<double>::epsilon();
    CHECK(testing::max_abs(z2.x - z.x) <= eps * testing::max_abs(z.x));
    CHECK(testing::max_abs(z2.y - z.y) <= eps * testing::max_abs(z.y));

    Loop loop = hiphop_seed(2 * std::numbers::pi, 6, 0.3);
    loop.coeffs += 1e-3 * testing::gaussian(rng, loop.coeffs.size(), 1);
    json lj = json::parse(io::dump(io::loop_to_json(loop, "z2z4")));
    CHECK(lj["symmetry"] == "z2z4");
    Loop back = io::loop_from_json(lj);
    CHECK(back.coeffs == loop.coeffs);
    CHECK(back.T == loop.T);
    CHECK(back.modes == loop.modes);

    Mat a = testing::gaussian(rng, 3, 5);
    CHECK(io::matrix_from_json(json::parse(io::dump(io::matrix_to_json(a)))) == a);
}

TEST_CASE("scenario validation") {
    CHECK_THROWS_AS(io::system_from_json(json::parse(R"({"masses": [1, -2, 1]})")), ValidationError);
    CHECK_THROWS_AS(io::system_from_json(json::parse(R"({"G": 1})")), ValidationError);
    MassSystem sys(Vec::Ones(3));
    CHECK_THROWS_AS(io::state_from_json(json::parse(R"({"positions": [[0, 1], [0, 0]]})"), sys), ValidationError);
    fs::path dir = scratch("bad");
    write(dir / "bad.json", "{\"masses\": [1, 2,");
    CHECK_THROWS_AS(io::read_json_file((dir / "bad.json").string()), ValidationError);
    CHECK_THROWS_AS(io::read_json_file((dir / "missing.json").string()), ValidationError);
    fs::remove_all(dir);
}

TEST_CASE("CSV headers carry units") {
    MassSystem sys(Vec::Ones(2));
    State z(Mat::Identity(2, 2), Mat::Zero(2, 2), sys);
    std::ostringstream os;
    io::write_trajectory_csv(os, {0.0}, {z});
    const std::string header = os.str().substr(0, os.str().find('\n'));
    CHECK(header == "time [T],x0_0 [L],x0_1 [L],x1_0 [L],x1_1 [L],v0_0 [L/T],v0_1 [L/T],v1_0 [L/T],v1_1 [L/T]");
}

TEST_CASE("simulate writes outputs and is deterministic") {
    fs::path a = scratch("sim_a"), b = scratch("sim_b");
    Run r1 = cli({"simulate", "--config", data + "/two_body_circular.json", "--out", a.string()});
    Run r2 = cli({"simulate", "--config", data + "/two_body_circular.json", "--out", b.string()});
    REQUIRE(r1.code == 0);
    REQUIRE(r2.code == 0);
    CHECK(r1.out == r2.out);
    for (const char* f : {"trajectory.csv", "invariants.csv", "audit.json"}) {
        REQUIRE(fs::exists(a / f));
        CHECK(slurp(a / f) == slurp(b / f));
    }
    json audit = json::parse(slurp(a / "audit.json"));
    CHECK(audit["energy_drift"].get<double>() < 1e-8);
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST_CASE("parallel jobs match serial runs") {
    fs::path a = scratch("jobs_a"), b = scratch("jobs_b");
    std::vector<std::string> cfg = {"--config", data + "/two_body_circular.json", "--config", data + "/three_body.json"};
    std::vector<std::string> serial = {"audit", "--out", a.string()}, par = {"audit", "--jobs", "2", "--out", b.string()};
    serial.insert(serial.end(), cfg.begin(), cfg.end());
    par.insert(par.end(), cfg.begin(), cfg.end());
    Run r1 = cli(serial), r2 = cli(par);
    REQUIRE(r1.code == 0);
    REQUIRE(r2.code == 0);
    CHECK(r1.out == r2.out);
    CHECK(json::parse(r1.out).size() == 2);
    for (const char* f : {"audit_job0.json", "audit_job1.json", "invariants_job1.csv"}) {
        REQUIRE(fs::exists(a / f));
        CHECK(slurp(a / f) == slurp(b / f));
    }
    fs::remove_all(a);
    fs::remove_all(b);
}

TEST_CASE("exit codes and error JSON") {
    fs::path dir = scratch("errors");
    Run neg = cli({"simulate", "--config", data + "/negative_mass.json", "--out", dir.string()});
    CHECK(neg.code == 2);
    json e = json::parse(neg.err);
    CHECK(e["family"] == "validation");
    CHECK(e["error"] == "ValidationError");
    CHECK(e["message"].get<std::string>().find("m[1]") != std::string::npos);

    CHECK(cli({"frobnicate"}).code == 2);
    CHECK(json::parse(cli({"simulate", "--tol"}).err)["error"] == "UsageError");
    CHECK(cli({"find-central", "--masses", "1,2,3"}).code == 2);  // --seed is mandatory
    CHECK(cli({"simulate", "--config", (dir / "none.json").string(), "--out", dir.string()}).code == 2);

    // head-on fall reaches a collision within the horizon
    write(dir / "infall.json", R"({"masses": [1, 1], "positions": [[-0.5, 0.5]], "velocities": [[0, 0]], "horizon": 5})");
    Run col = cli({"simulate", "--config", (dir / "infall.json").string(), "--out", dir.string()});
    CHECK(col.code == 3);
    CHECK(json::parse(col.err)["family"] == "numerical");

    Run inf = cli({"find-balanced", "--masses", "1,1,1", "--spectrum", "1,1,1", "--seed", "1", "--out", dir.string()});
    CHECK(inf.code == 2);
    CHECK(json::parse(inf.err)["error"] == "InfeasibleSpectrum");
    fs::remove_all(dir);
}

TEST_CASE("configuration and motion subcommands") {
    fs::path dir = scratch("sub");
    const std::string out = dir.string();
    REQUIRE(cli({"find-central", "--masses", "1,2,3", "--seed", "4", "--out", out}).code == 0);
    json c = json::parse(slurp(dir / "central.json"));
    CHECK(c["kind"] == "central");
    auto dist = c["distances"];
    CHECK(dist[0][1].get<double>() == doctest::Approx(dist[1][2].get<double>()).epsilon(1e-10));
    CHECK(dist[0][1].get<double>() == doctest::Approx(dist[0][2].get<double>()).epsilon(1e-10));

    REQUIRE(cli({"find-balanced", "--masses", "1,1,1", "--spectrum", "0.7,0.3", "--seed", "2", "--out", out}).code == 0);
    CHECK(json::parse(slurp(dir / "balanced.json"))["kind"] == "balanced");

    REQUIRE(cli({"kepler", "--e", "0.5", "--samples", "33", "--out", out}).code == 0);
    CHECK(fs::exists(dir / "kepler.csv"));

    REQUIRE(cli({"homographic", "--config", data + "/equilateral.json", "--e", "0.5", "--out", out}).code == 0);
    CHECK(fs::exists(dir / "homographic.csv"));

    REQUIRE(cli({"shape-sphere", "--config", data + "/three_body.json", "--horizon", "1", "--out", out}).code == 0);
    const std::string sphere = slurp(dir / "shape_sphere.csv");
    CHECK(sphere.substr(0, sphere.find('\n')) == "time [T],longitude [rad],latitude [rad],I [M L^2]");

    Run hip = cli({"hiphop", "--modes", "8", "--seed", "3", "--out", out});
    REQUIRE(hip.code == 0);
    json rep = json::parse(slurp(dir / "report.json"));
    CHECK(rep["planar"] == false);
    CHECK(rep["action"].get<double>() < rep["polygon_action"].get<double>());
    Loop loop = io::loop_from_json(json::parse(slurp(dir / "loop.json")));
    CHECK(loop.modes == 8);
    fs::remove_all(dir);
}
