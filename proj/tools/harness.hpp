#pragma once

// Experiment harness shared by the command-line tool and the acceptance
// binary: configuration, the sweep computations behind each subcommand, and
// run-directory emission.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "sepdiff/coupling.hpp"
#include "sepdiff/fbp.hpp"
#include "sepdiff/lattice.hpp"
#include "sepdiff/macro.hpp"

namespace sepdiff::harness {

inline constexpr const char* kVersion = "0.1.0";

/// Bad configuration or usage; maps to exit code 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ProfileConfig {
    std::string kind = "tent";  // "tent" or "file"
    double h = 0.005;           // grid spacing of the tent pair
    std::string path;           // CSV with header r,u,v when kind == "file"
};

struct SimulateConfig {
    double epsilon = 0.05;
    double kappa = 1.0;
    double T = 1.0;
    double walk_rate = 1.0;
    std::vector<double> times{0.0, 0.25, 0.5, 0.75, 1.0};
    double grid_h = 0.05;
};

struct ExhaustiveConfig {
    std::size_t max_particles = 4;
    int n_sites = 4;
    std::size_t max_marks = 3;
};

struct CoupleConfig {
    double epsilon = 0.05;
    double kappa = 1.0;
    double T = 1.0;
    double delta = 0.2;
    std::size_t seeds = 200;
    double max_exclusion = 0.05;
    ExhaustiveConfig exhaustive;
};

struct BarriersConfig {
    double kappa = 0.5;
    double t = 0.5;
    std::vector<double> deltas{0.1, 0.05, 0.025, 0.0125};
    double max_ratio = 0.9;
    double order_tol = 1e-9;
};

struct OracleConfig {
    double x = 0.0;
    double a = 0.5;
    double t = 0.25;
};

struct McConfig {
    std::size_t paths = 100000;
    double dt = 1e-4;
    std::vector<double> times{0.1, 0.25};
    std::size_t intervals = 10;
    double z_identity = 3.0;
    double z_interval = 4.0;
    OracleConfig oracle;
};

struct FbpConfig {
    double kappa = 0.5;
    double T = 0.5;
    double delta = 1e-3;
    double threshold_rel = 1e-6;
    std::size_t store_every = 10;
    double flux_t0 = 0.1;
    double flux_t1 = 0.5;
    double flux_tol = 0.1;
    McConfig mc;
};

struct HydroConfig {
    double kappa = 0.5;
    double t = 0.5;
    std::vector<double> epsilons{0.1, 0.05, 0.02};
    std::size_t seeds = 100;
    double ref_delta = 1e-3;
    double heat_tol = 0.05;
    double band_z = 2.0;
};

struct Config {
    std::uint64_t seed = 1;
    unsigned threads = 1;
    ProfileConfig profile;
    SimulateConfig simulate;
    CoupleConfig couple_verify;
    BarriersConfig barriers;
    FbpConfig fbp;
    HydroConfig hydro_compare;
};

/// Parses a config document; unknown keys and ill-typed values throw ConfigError.
Config config_from_json(const nlohmann::json& j);
Config load_config(const std::string& path);
nlohmann::json to_json(const Config& c);

/// Initial profile pair named by the config; a missing or malformed file throws ConfigError.
macro::ProfilePair load_profile(const ProfileConfig& pc);

// ---------------------------------------------------------------------------
// Sweeps

struct BarrierRow {
    double delta = 0.0;
    std::size_t steps = 0;
    double l1_gap = 0.0;      // L1 distance of (u, v) between plus and minus at t
    double ratio = 0.0;       // l1_gap / previous l1_gap (0 on the first row)
    double order_excess = 0.0;  // max over steps of sup_r [F(minus) - F(plus)]
    double mass_drift = 0.0;    // relative, both species and variants
    double marginal_l1 = 0.0;   // u+v against the n-fold heat convolution of u0+v0
};

std::vector<BarrierRow> barrier_sweep(const macro::ProfilePair& p0, double kappa, double t,
                                      const std::vector<double>& deltas);

/// int_r^inf (G_t * phi) by direct quadrature of phi against the Gaussian tail.
double heat_tail(const macro::ProfilePair& p0, double t, double r);

struct HydroRow {
    double epsilon = 0.0;
    std::size_t M = 0;
    std::size_t seeds = 0;
    std::size_t noop_runs = 0;     // runs with a flip on an absent species
    double mean_sup_dev = 0.0;     // mean over seeds of sup_r |F_a - F_mid|
    double se_sup_dev = 0.0;
    double heat_sup_dist = 0.0;    // sup_r |mean total tail - heat tail|
    double band_max_z = 0.0;       // max_r distance of the mean a-tail outside the bracket, in units of its SE
    double band_max_excess = 0.0;  // the same distance in mass units
    std::vector<double> r;         // evaluation points eps*(j - 1/2)
    std::vector<double> mean_tail_a, se_tail_a, mean_tail_all, heat, bracket_lo, bracket_hi;
};

/// One row of the eps-sweep: true particle runs compared against the bracket
/// (minus, plus) of `ref` at time t and against the heat marginal.
HydroRow hydro_row(const macro::ProfilePair& p0, const fbp::FbpSolution& ref, double epsilon, double kappa,
                   double t, std::size_t seeds, std::uint64_t root_seed, unsigned threads);

// ---------------------------------------------------------------------------
// Commands. Each writes manifest.json, report.json and CSV data into `out`
// and returns the exit code (0 pass, 1 check violation).

int cmd_simulate(const Config& c, const std::string& out);
int cmd_couple_verify(const Config& c, const std::string& out);
int cmd_barriers(const Config& c, const std::string& out);
int cmd_fbp(const Config& c, const std::string& out);
int cmd_hydro_compare(const Config& c, const std::string& out);

}  // namespace sepdiff::harness
