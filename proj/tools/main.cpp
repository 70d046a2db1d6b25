#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "harness.hpp"

namespace h = sepdiff::harness;

int main(int argc, char** argv) {
    CLI::App app{"sepdiff: two-species separation experiments"};
    app.require_subcommand(1);
    app.fallthrough();
    std::string config_path;
    std::string out_dir;
    std::size_t seeds = 0;
    unsigned threads = 0;
    app.add_option("--config", config_path, "JSON configuration file");
    app.add_option("--out", out_dir, "output directory (default: runs/<subcommand>)");
    app.add_option("--seeds", seeds, "number of replicas for couple-verify and hydro-compare")->check(CLI::PositiveNumber);
    app.add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);

    app.add_subcommand("simulate", "lattice trajectories, snapshots and empirical profiles");
    app.add_subcommand("couple-verify", "exhaustive balance check and pathwise sandwich");
    app.add_subcommand("barriers", "delta sweep of the barrier iterations");
    app.add_subcommand("fbp", "reference free-boundary solution and its validation");
    app.add_subcommand("hydro-compare", "epsilon sweep of particle tails against the bracket");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }
    const std::string cmd = app.get_subcommands().front()->get_name();
    try {
        h::Config c = config_path.empty() ? h::config_from_json(nlohmann::json::object()) : h::load_config(config_path);
        if (seeds > 0) {
            c.couple_verify.seeds = seeds;
            c.hydro_compare.seeds = seeds;
        }
        if (threads > 0) c.threads = threads;
        if (out_dir.empty()) out_dir = "runs/" + cmd;

        int rc = 0;
        if (cmd == "simulate") rc = h::cmd_simulate(c, out_dir);
        else if (cmd == "couple-verify") rc = h::cmd_couple_verify(c, out_dir);
        else if (cmd == "barriers") rc = h::cmd_barriers(c, out_dir);
        else if (cmd == "fbp") rc = h::cmd_fbp(c, out_dir);
        else rc = h::cmd_hydro_compare(c, out_dir);
        std::cout << cmd << ": " << (rc == 0 ? "PASS" : "FAIL") << " (" << out_dir << ")\n";
        return rc;
    } catch (const h::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
