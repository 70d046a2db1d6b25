#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "sepdiff/fbp.hpp"

using namespace sepdiff;
using namespace sepdiff::fbp;

TEST_CASE("kappa = 0 is pure heat") {
    const auto p0 = macro::tent_pair(0.01);
    FbpOptions opt;
    opt.store_every = 5;
    const FbpSolution sol = solve_reference(p0, 0.0, 0.1, 0.005, opt);
    REQUIRE(sol.completed);
    for (double w : sol.bracket_width) CHECK(w <= 1e-9);
    const Flux f = flux_at_boundary(sol, 0.1);
    CHECK(std::abs(f.right) <= 1e-3);
    CHECK(std::abs(f.left) <= 1e-3);

    McOptions mo;
    mo.n_paths = 20000;
    mo.seed = 3;
    const auto iv = default_intervals(sol, 0.1, Species::u, 5);
    const McReport rep = mc_validate(sol, p0, 0.1, Species::u, iv, mo);
    CHECK(rep.max_abs_z <= 3.0);
    CHECK(rep.identity.expected == 0.0);
}

TEST_CASE("mass is conserved and the bracket is ordered") {
    const auto p0 = macro::tent_pair(0.01);
    FbpOptions opt;
    opt.store_every = 4;
    opt.extrapolate = false;
    const FbpSolution sol = solve_reference(p0, 0.5, 0.2, 0.005, opt);
    REQUIRE(sol.completed);
    CHECK(sol.max_mass_drift <= 1e-10);
    for (std::size_t k = 0; k < sol.times.size(); ++k) {
        CHECK(sol.minus[k].mass_u == doctest::Approx(sol.mass_u0).epsilon(1e-10));
        CHECK(sol.bracket_excess[k] <= 1e-9);
    }
    const BoundaryCurves b = extract_boundaries(sol);
    CHECK_NOTHROW(b.validate());
}

TEST_CASE("bracket width shrinks under delta halving") {
    const auto p0 = macro::tent_pair(0.01);
    FbpOptions opt;
    opt.extrapolate = false;
    const double w1 = solve_reference(p0, 0.5, 0.1, 0.01, opt).bracket_width.back();
    const double w2 = solve_reference(p0, 0.5, 0.1, 0.005, opt).bracket_width.back();
    CHECK(w2 < w1);
}

TEST_CASE("initial boundaries are the support ends") {
    const auto p0 = macro::tent_pair(0.01);
    const FbpSolution sol = solve_reference(p0, 0.5, 0.05, 0.005);
    const BoundaryCurves b = extract_boundaries(sol);
    CHECK(std::abs(b.U.front() - 0.5) <= p0.grid.h);
    CHECK(std::abs(b.V.front() - 0.0) <= p0.grid.h);
}

TEST_CASE("mirror-symmetric data give mirror-symmetric fronts") {
    // The reference tents are symmetric about r = 1/4.
    const auto p0 = macro::tent_pair(0.01);
    FbpOptions opt;
    opt.store_every = 2;
    const FbpSolution sol = solve_reference(p0, 0.5, 0.1, 0.005, opt);
    const BoundaryCurves b = extract_boundaries(sol);
    for (std::size_t k = 0; k < b.size(); ++k) CHECK(std::abs((b.U[k] - 0.25) - (0.25 - b.V[k])) <= 2 * p0.grid.h);
    const Flux f = flux_at_boundary(sol, 0.1);
    CHECK(f.right == doctest::Approx(-f.left).epsilon(1e-6));
}

TEST_CASE("boundary_of and curves") {
    const auto p0 = macro::tent_pair(0.01);
    const Boundary b = boundary_of(p0);
    CHECK(b.V < b.U);
    BoundaryCurves c;
    c.times = {0.0, 1.0};
    c.U = {1.0, 2.0};
    c.V = {0.0, -1.0};
    CHECK(c.U_at(0.5) == doctest::Approx(1.5));
    CHECK(c.V_at(5.0) == doctest::Approx(-1.0));
    c.V = {0.0, 3.0};
    CHECK_THROWS(c.validate());
}

TEST_CASE("reflection oracle for a constant boundary") {
    CHECK(reflection_hit_probability(0.0, 0.0, 1.0) == doctest::Approx(1.0));
    CHECK(reflection_hit_probability(-30.0, 0.0, 1.0) < 1e-12);
    McOptions mo;
    mo.n_paths = 20000;
    mo.seed = 2;
    const OracleCheck oc = constant_boundary_oracle(0.0, 0.5, 0.25, mo);
    CHECK(std::abs(oc.z) <= 3.0);
    // Far-left starts are essentially never absorbed.
    const OracleCheck far = constant_boundary_oracle(-5.0, 0.5, 0.25, mo);
    CHECK(far.mc.value == 0.0);
}

TEST_CASE("mass identity at a small time") {
    const auto p0 = macro::tent_pair(0.01);
    const FbpSolution sol = solve_reference(p0, 0.5, 0.02, 0.001);
    McOptions mo;
    mo.n_paths = 20000;
    const MassIdentity mi = mass_identity_check(sol, p0, 0.02, Species::u, mo);
    CHECK(mi.expected == doctest::Approx(0.01));
    CHECK(std::abs(mi.z) <= 3.0);
}

TEST_CASE("exports") {
    const auto p0 = macro::tent_pair(0.05);
    FbpOptions opt;
    opt.store_every = 5;
    const FbpSolution sol = solve_reference(p0, 0.5, 0.05, 0.005, opt);
    const std::string dir = "fbp_export_test";
    std::filesystem::remove_all(dir);
    const auto names = write_slices(sol, dir);
    CHECK(names.size() == sol.times.size());
    CHECK(std::filesystem::exists(dir + "/slices.csv"));
    write_boundaries_csv(sol.boundaries, dir + "/b.csv");
    CHECK(std::filesystem::file_size(dir + "/b.csv") > 10);
    CHECK(summary_json(sol)["completed"] == true);
    std::filesystem::remove_all(dir);
}
