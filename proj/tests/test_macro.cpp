#include <cmath>

#include "doctest.h"
#include "fuzz.hpp"
#include "sepdiff/macro.hpp"

using namespace sepdiff;
using namespace sepdiff::macro;

namespace {

// Step of height one on [lo, hi]: half values at the two edge nodes.
std::vector<double> step(const GridSpec& g, double lo, double hi) {
    std::vector<double> f(g.n_nodes(), 0.0);
    for (std::size_t i = 0; i < f.size(); ++i) {
        const double r = g.node(i);
        if (r > lo + 1e-9 && r < hi - 1e-9) f[i] = 1.0;
        else if (std::abs(r - lo) < 1e-9 || std::abs(r - hi) < 1e-9) f[i] = 0.5;
    }
    return f;
}

std::vector<double> bump(const GridSpec& g, double c, double w) {
    std::vector<double> f(g.n_nodes(), 0.0);
    for (std::size_t i = 0; i < f.size(); ++i) {
        const double x = (g.node(i) - c) / w;
        if (std::abs(x) < 1.0) f[i] = std::pow(std::cos(0.5 * M_PI * x), 2);
    }
    return f;
}

double gaussian(double r, double var) { return std::exp(-r * r / (2 * var)) / std::sqrt(2 * M_PI * var); }

}  // namespace

TEST_CASE("validate_class_U") {
    CHECK(validate_class_U(tent_pair(0.01)).valid);
    const GridSpec g = GridSpec::from_range(-3.0, 3.0, 600);
    CHECK_FALSE(validate_class_U(ProfilePair::make(g, tent(g, -2, -1, 1), tent(g, 0, 1, 1))).valid);
    CHECK_FALSE(validate_class_U(ProfilePair::make(g, tent(g, -1, 0.5, 1), std::vector<double>(g.n_nodes(), 0.0))).valid);
}

TEST_CASE("ProfilePair caches masses") {
    const ProfilePair p = tent_pair(0.01);
    CHECK(p.mass_u == doctest::Approx(mass(p.grid, p.u)).epsilon(1e-12));
    CHECK(p.mass_u == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS(ProfilePair::make(p.grid, std::vector<double>(p.grid.n_nodes(), -1.0), p.v));
}

TEST_CASE("tail and head integrals") {
    const GridSpec g = GridSpec::from_range(0.0, 1.0, 100);
    const std::vector<double> one(g.n_nodes(), 1.0);
    CHECK(tail_integral(g, one, 0.25) == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(head_integral(g, one, 0.25) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(tail_integral(g, one, g.r_max()) == doctest::Approx(0.0));
    CHECK(tail_integral(g, one, g.r_min) == doctest::Approx(mass(g, one)).epsilon(1e-12));

    // Refinement oracle on a smooth bump.
    const GridSpec coarse = GridSpec::from_range(-2.0, 2.0, 2000);
    const GridSpec fine = GridSpec::from_range(-2.0, 2.0, 20000);
    const auto fc = bump(coarse, 0.1, 1.3), ff = bump(fine, 0.1, 1.3);
    const double m = mass(fine, ff);
    for (double r = -1.5; r <= 1.5; r += 0.0137) {
        CHECK(std::abs(tail_integral(coarse, fc, r) - tail_integral(fine, ff, r)) <= 1e-6 * m);
    }
}

TEST_CASE("cut points and the cut operator") {
    const GridSpec g = GridSpec::from_range(-1.0, 2.0, 3000);
    const ProfilePair p = ProfilePair::make(g, step(g, 0.0, 1.0), step(g, 0.5, 1.5));
    const CutPoints c = cut_points(p, 0.25);
    CHECK(c.R_delta == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(c.D_delta == doctest::Approx(0.75).epsilon(1e-12));

    const ProfilePair q = apply_cut(p, 0.25);
    CHECK(q.mass_u == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(q.mass_v == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(q.u_at(0.3) == doctest::Approx(1.0));
    CHECK(q.u_at(0.6) == doctest::Approx(2.0));
    CHECK(q.u_at(0.74) == doctest::Approx(2.0));
    CHECK(q.u_at(0.9) == doctest::Approx(0.0));
    CHECK(q.v_at(0.6) == doctest::Approx(0.0));
    CHECK(q.v_at(0.9) == doctest::Approx(2.0));
    for (std::size_t i = 0; i < p.u.size(); ++i) CHECK(q.u[i] + q.v[i] == doctest::Approx(p.u[i] + p.v[i]));

    const ProfilePair tiny = apply_cut(tent_pair(0.01), 1e-8);
    CHECK(l1_distance_u(tiny, tent_pair(0.01)) <= 3e-8);
    CHECK_THROWS_AS(cut_points(p, 1.5), std::domain_error);
}

TEST_CASE("cut points of a mirrored pair are mirrored") {
    const GridSpec g = GridSpec::from_range(-3.0, 3.0, 600);
    const auto u = tent(g, -1.0, 0.4, 1.0);
    std::vector<double> v(u.rbegin(), u.rend());
    const CutPoints c = cut_points(ProfilePair::make(g, u, v), 0.1);
    CHECK(std::abs(c.R_delta + c.D_delta) <= 1e-9);
}

TEST_CASE("gauss_convolve") {
    SUBCASE("Gaussian semigroup") {
        const GridSpec g = GridSpec::from_range(-5.0, 5.0, 1000);
        std::vector<double> f(g.n_nodes());
        for (std::size_t i = 0; i < f.size(); ++i) f[i] = gaussian(g.node(i), 0.2);
        const GridFunction out = gauss_convolve(g, f, 0.3);
        double err = 0.0;
        for (std::size_t i = 0; i < out.f.size(); ++i) {
            err = std::max(err, std::abs(out.f[i] - gaussian(out.grid.node(i), 0.5)));
        }
        CHECK(err <= 1e-4);
    }
    SUBCASE("mass preservation and nodewise monotonicity on random input") {
        Rng rng(5);
        const GridSpec g = GridSpec::from_range(-2.0, 2.0, 400);
        for (int rep = 0; rep < 50; ++rep) {
            std::vector<double> f(g.n_nodes()), h(g.n_nodes());
            for (std::size_t i = 0; i < f.size(); ++i) {
                f[i] = fuzz::uniform(rng, 0.0, 1.0);
                h[i] = f[i] + fuzz::uniform(rng, 0.0, 0.5);
            }
            // Compactly supported input: zero end nodes.
            f.front() = f.back() = h.front() = h.back() = 0.0;
            const GridFunction a = gauss_convolve(g, f, 0.05), b = gauss_convolve(g, h, 0.05);
            CHECK(std::abs(mass(a.grid, a.f) - mass(g, f)) <= 1e-9 * mass(g, f));
            REQUIRE(a.grid.r_min == b.grid.r_min);
            for (std::size_t i = 0; i < a.f.size(); ++i) REQUIRE(a.f[i] <= b.f[i] + 1e-15);
        }
    }
}

TEST_CASE("barrier steps") {
    const ProfilePair p0 = tent_pair(0.01);
    CHECK(iterate_barriers(p0, 0.05, 0.5, 0, Variant::plus).front().u == p0.u);
    const auto plus = iterate_barriers(p0, 0.05, 0.5, 10, Variant::plus);
    const auto minus = iterate_barriers(p0, 0.05, 0.5, 10, Variant::minus);
    GridFunction heat{p0.grid, p0.u};
    for (std::size_t i = 0; i < heat.f.size(); ++i) heat.f[i] += p0.v[i];
    for (std::size_t k = 1; k <= 10; ++k) {
        heat = gauss_convolve(heat.grid, heat.f, 0.05);
        for (const auto* s : {&plus[k], &minus[k]}) {
            CHECK(std::abs(s->mass_u - p0.mass_u) <= 1e-10);
            CHECK(std::abs(s->mass_v - p0.mass_v) <= 1e-10);
            GridFunction w{s->grid, s->u};
            for (std::size_t i = 0; i < w.f.size(); ++i) w.f[i] += s->v[i];
            CHECK(l1_distance(w, heat) <= 1e-6);
        }
        CHECK(order_mod_m(minus[k], plus[k], 0.0, 1e-9).holds);
    }
    // One plus step and one minus step differ by O(delta).
    const double d1 = l1_distance_u(barrier_step(p0, 0.02, 0.5, Variant::plus), barrier_step(p0, 0.02, 0.5, Variant::minus));
    const double d2 = l1_distance_u(barrier_step(p0, 0.01, 0.5, Variant::plus), barrier_step(p0, 0.01, 0.5, Variant::minus));
    CHECK(d2 < d1);
}

TEST_CASE("order modulo m") {
    const ProfilePair p = tent_pair(0.01);
    CHECK(order_mod_m(p, p, 0.0).holds);
    // u shifted right by 0.2.
    const GridSpec& g = p.grid;
    const ProfilePair s = ProfilePair::make(g, tent(g, -0.8, 0.7, 1.0), tent(g, 0.0, 1.5, 1.0));
    CHECK_FALSE(order_mod_m(s, p, 0.0).holds);
    CHECK(order_mod_m(s, p, s.mass_u).holds);

    // Brute-force scan of the tail difference.
    const OrderReport rep = order_mod_m(s, p, 0.0);
    double best = -1.0, arg = 0.0;
    for (double r = g.r_min; r <= g.r_max(); r += 0.0005) {
        const double d = tail_integral(g, s.u, r) - tail_integral(g, p.u, r);
        if (d > best) {
            best = d;
            arg = r;
        }
    }
    CHECK(rep.max_excess == doctest::Approx(best).epsilon(1e-6));
    CHECK(std::abs(rep.argmax - arg) <= 0.01);
}

TEST_CASE("cut operator and convolution preserve order on random ordered pairs") {
    Rng rng(23);
    const GridSpec g = GridSpec::from_range(-4.0, 4.0, 800);
    for (int rep = 0; rep < 100; ++rep) {
        const fuzz::Ordered o = fuzz::random_ordered(rng, g);
        REQUIRE(order_mod_m(o.lower, o.upper, 0.0, 1e-12).holds);
        REQUIRE(validate_class_U(o.lower).valid);
        REQUIRE(validate_class_U(o.upper).valid);
        const double kd = fuzz::cut_mass(rng, o);
        REQUIRE(order_mod_m(apply_cut(o.lower, kd), apply_cut(o.upper, kd), 0.0, 1e-9).holds);
        REQUIRE(order_mod_m(gauss_convolve(o.lower, 0.01), gauss_convolve(o.upper, 0.01), 0.0, 1e-9).holds);
        // D <= D' <= R' <= R for (u', v') <= (u, v).
        const CutPoints c = cut_points(o.upper, kd), cp = cut_points(o.lower, kd);
        CHECK(c.D_delta <= cp.D_delta + 1e-9);
        CHECK(cp.R_delta <= c.R_delta + 1e-9);
    }
}

TEST_CASE("repair operators") {
    const ProfilePair p = tent_pair(0.01);
    CHECK(repair_upper(p, 0.0).u == p.u);
    CHECK(repair_lower(p, 0.0).u == p.u);
    CHECK_THROWS_AS(repair_upper(p, 0.5), std::domain_error);

    Rng rng(29);
    const GridSpec g = GridSpec::from_range(-4.0, 4.0, 800);
    for (int rep = 0; rep < 100; ++rep) {
        const fuzz::Ordered o = fuzz::random_ordered_mod(rng, g, 0.02);
        const double m = 0.02 * std::min(o.upper.mass_u, o.upper.mass_v);
        REQUIRE(order_mod_m(o.lower, o.upper, m, 1e-12).holds);
        const ProfilePair star = repair_upper(o.upper, m);
        const ProfilePair low = repair_lower(o.lower, m);
        CHECK(std::abs(star.mass_u - o.upper.mass_u) <= 1e-12);
        CHECK(order_mod_m(o.upper, star, 0.0, 1e-9).holds);
        CHECK(order_mod_m(o.lower, star, 0.0, 1e-9).holds);
        CHECK(order_mod_m(low, o.lower, 0.0, 1e-9).holds);
        CHECK(order_mod_m(low, o.upper, 0.0, 1e-9).holds);
    }
}

TEST_CASE("profile CSV round trip") {
    const ProfilePair p = tent_pair(0.05);
    const std::string path = "macro_roundtrip.csv";
    write_profile_csv(p, path);
    const ProfilePair q = read_profile_csv(path);
    CHECK(q.grid.n_cells == p.grid.n_cells);
    CHECK(q.mass_u == doctest::Approx(p.mass_u).epsilon(1e-12));
    CHECK_THROWS(read_profile_csv("does_not_exist.csv"));
}
