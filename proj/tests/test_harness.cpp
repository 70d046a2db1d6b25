#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "harness.hpp"

using namespace sepdiff;
using namespace sepdiff::harness;
using nlohmann::json;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream is(path);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

int run_cli(const std::string& args) {
    const int status = std::system((std::string(SEPDIFF_CLI) + " " + args + " > /dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::set<std::string> keys(const json& j) {
    std::set<std::string> out;
    for (const auto& [k, v] : j.items()) out.insert(k);
    return out;
}

}  // namespace

TEST_CASE("config parsing") {
    const Config d = config_from_json(json::object());
    CHECK(d.seed == 1);
    CHECK(d.couple_verify.seeds == 200);
    CHECK(d.fbp.delta == 1e-3);
    CHECK(config_from_json(to_json(d)).fbp.mc.paths == d.fbp.mc.paths);

    CHECK_THROWS_AS(config_from_json(json{{"bogus", 1}}), ConfigError);
    CHECK_THROWS_AS(config_from_json(json{{"simulate", {{"epsilon", "x"}}}}), ConfigError);
    CHECK_THROWS_AS(config_from_json(json{{"simulate", {{"epsilon", 1.5}}}}), ConfigError);
    CHECK_THROWS_AS(config_from_json(json{{"barriers", {{"deltas", json::array()}}}}), ConfigError);
    CHECK_THROWS_AS(load_config("no_such_config.json"), ConfigError);

    ProfileConfig pc;
    pc.kind = "file";
    pc.path = "no_such_profile.csv";
    CHECK_THROWS_AS(load_profile(pc), ConfigError);
}

TEST_CASE("simulate is byte-identical for equal seeds") {
    Config c = config_from_json(json::object());
    c.simulate.epsilon = 0.1;
    c.simulate.times = {0.0, 0.5, 1.0};
    std::filesystem::remove_all("sim_a");
    std::filesystem::remove_all("sim_b");
    CHECK(cmd_simulate(c, "sim_a") == 0);
    CHECK(cmd_simulate(c, "sim_b") == 0);
    for (const char* f : {"snapshots.csv", "occupation_t0.5000.csv", "profile_t1.0000.csv"}) {
        const std::string a = slurp(std::string("sim_a/") + f);
        CHECK(!a.empty());
        CHECK(a == slurp(std::string("sim_b/") + f));
    }
    const json m = json::parse(slurp("sim_a/manifest.json"));
    CHECK(m["command"] == "simulate");
    CHECK(m["config"]["simulate"]["epsilon"] == 0.1);
    CHECK(m.contains("wall_time_s"));
    std::filesystem::remove_all("sim_a");
    std::filesystem::remove_all("sim_b");
}

TEST_CASE("couple-verify report schema is stable") {
    Config c = config_from_json(json::object());
    c.couple_verify.seeds = 5;
    c.couple_verify.epsilon = 0.1;
    c.couple_verify.max_exclusion = 1.0;
    c.couple_verify.exhaustive = {2, 3, 2};
    std::filesystem::remove_all("cv_a");
    std::filesystem::remove_all("cv_b");
    CHECK(cmd_couple_verify(c, "cv_a") == 0);
    c.seed = 2;
    CHECK(cmd_couple_verify(c, "cv_b") == 0);
    const json a = json::parse(slurp("cv_a/report.json")), b = json::parse(slurp("cv_b/report.json"));
    CHECK(keys(a) == keys(b));
    CHECK(keys(a["sandwich"]) == keys(b["sandwich"]));
    CHECK(keys(a["exhaustive"]) == keys(b["exhaustive"]));
    std::filesystem::remove_all("cv_a");
    std::filesystem::remove_all("cv_b");
}

TEST_CASE("zero-particle configurations are rejected") {
    // A valid class-U profile whose total mass is below one particle at every epsilon used.
    const macro::GridSpec g = macro::GridSpec::from_range(-2.0, 2.0, 400);
    const auto p = macro::ProfilePair::make(g, macro::tent(g, -1.0, 0.5, 0.01), macro::tent(g, 0.0, 1.5, 0.01));
    macro::write_profile_csv(p, "tiny_profile.csv");
    Config c = config_from_json(json::object());
    c.profile.kind = "file";
    c.profile.path = "tiny_profile.csv";
    CHECK_THROWS_AS(cmd_hydro_compare(c, "hydro_tiny"), ConfigError);
    std::filesystem::remove("tiny_profile.csv");
    std::filesystem::remove_all("hydro_tiny");
}

TEST_CASE("barrier sweep rows") {
    const auto rows = barrier_sweep(macro::tent_pair(0.01), 0.5, 0.2, {0.1, 0.05});
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].steps == 2);
    CHECK(rows[1].steps == 4);
    CHECK(rows[1].l1_gap < rows[0].l1_gap);
    CHECK_THROWS(barrier_sweep(macro::tent_pair(0.01), 0.5, 0.2, {0.03}));
}

TEST_CASE("heat tail matches the analytic Gaussian tail of a tent") {
    // Tent of unit mass on (-1, 1) convolved with N(0, t): closed form via the Gaussian CDF antiderivatives.
    const macro::GridSpec g = macro::GridSpec::from_range(-2.0, 2.0, 400);
    std::vector<double> u(g.n_nodes(), 0.0), v(g.n_nodes(), 0.0);
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double y = g.node(i);
        (y < 0.0 ? u : v)[i] = std::max(0.0, 1.0 - std::abs(y));
    }
    // phi = u + v is the unit tent 1 - |y| on (-1, 1).
    const auto p = macro::ProfilePair::make(g, u, v);
    const double t = 0.3, s = std::sqrt(t);
    const auto Phi = [](double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); };
    const auto pdf = [](double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); };
    // P(Y + sZ >= r) with Y ~ tent: integrate the tent density against 1 - Phi((r - y)/s).
    // Antiderivatives: J of Phi, K of x Phi.
    const auto J = [&](double x) { return x * Phi(x) + pdf(x); };
    const auto K = [&](double x) { return 0.5 * (x * x - 1.0) * Phi(x) + 0.5 * x * pdf(x); };
    const auto tail = [&](double r) {
        // E[Phi((Y - r)/s)] with Y tent; substitute x = (y - r)/s.
        const double x0 = (-1.0 - r) / s, x1 = -r / s, x2 = (1.0 - r) / s;
        // Density (1 + y) on (-1, 0) and (1 - y) on (0, 1); y = r + s x.
        const double left = s * ((1.0 + r) * (J(x1) - J(x0)) + s * (K(x1) - K(x0)));
        const double right = s * ((1.0 - r) * (J(x2) - J(x1)) - s * (K(x2) - K(x1)));
        return left + right;
    };
    for (double r = -2.0; r <= 2.0; r += 0.1) CHECK(heat_tail(p, t, r) == doctest::Approx(tail(r)).epsilon(1e-6));
}

TEST_CASE("command-line exit codes") {
    CHECK(run_cli("--help") == 0);
    CHECK(run_cli("") == 2);
    CHECK(run_cli("frobnicate") == 2);
    CHECK(run_cli("barriers --config no_such_config.json") == 2);
    {
        std::ofstream os("cli_missing_profile.json");
        os << R"({"profile": {"kind": "file", "path": "missing_profile.csv"}})";
    }
    CHECK(run_cli("simulate --config cli_missing_profile.json --out cli_sim") == 2);
    CHECK(run_cli("barriers --out cli_barriers") == 0);
    CHECK(std::filesystem::exists("cli_barriers/manifest.json"));
    CHECK(std::filesystem::exists("cli_barriers/report.json"));
    CHECK(std::filesystem::exists("cli_barriers/barriers.csv"));
    std::filesystem::remove("cli_missing_profile.json");
    std::filesystem::remove_all("cli_barriers");
    std::filesystem::remove_all("cli_sim");
}
