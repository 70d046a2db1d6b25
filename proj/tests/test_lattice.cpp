#include <cmath>
#include <map>
#include <stdexcept>

#include "doctest.h"
#include "sepdiff/lattice.hpp"
#include "sepdiff/rng.hpp"

using namespace sepdiff;
using namespace sepdiff::lattice;

namespace {

ParticleState state(std::vector<Site> x, std::string colors) {
    ParticleState ps;
    ps.positions = std::move(x);
    for (char c : colors) ps.colors.push_back(c == 'a' ? Color::a : Color::b);
    return ps;
}

macro::ProfilePair symmetric_pair() {
    // Nearly equal tents; v is shifted slightly so the supports interleave.
    const macro::GridSpec g = macro::GridSpec::from_range(-2.0, 2.0, 400);
    return macro::ProfilePair::make(g, macro::tent(g, -1.0, 1.0, 1.0), macro::tent(g, -0.99, 1.01, 1.0));
}

}  // namespace

TEST_CASE("particle count of two unit tents at eps = 0.1") {
    CHECK(particle_count(macro::tent_pair(0.005), 0.1) == 20);
}

TEST_CASE("sample_initial rejects a profile outside class U") {
    const macro::GridSpec g = macro::GridSpec::from_range(-2.0, 2.0, 400);
    const auto p = macro::ProfilePair::make(g, std::vector<double>(g.n_nodes(), 0.0), macro::tent(g, 0.0, 1.5, 1.0));
    Rng rng(1);
    SimConfig cfg;
    CHECK_THROWS_AS(sample_initial(p, cfg, rng), std::invalid_argument);
}

TEST_CASE("sample_initial color fraction matches the local ratio") {
    // Binomial confidence interval on the a-fraction of nearly equal densities.
    const auto p = symmetric_pair();
    SimConfig cfg;
    cfg.epsilon = 0.001;
    Rng rng = make_rng(7, Stream::initial);
    std::size_t n = 0, na = 0;
    double expected = 0.0, var = 0.0;
    for (int rep = 0; rep < 50; ++rep) {
        const ParticleState ps = sample_initial(p, cfg, rng);
        for (std::size_t i = 0; i < ps.size(); ++i) {
            const double r = cfg.epsilon * static_cast<double>(ps.positions[i]);
            if (std::abs(r) > 0.5) continue;
            const double q = p.u_at(r) / (p.u_at(r) + p.v_at(r));
            ++n;
            na += ps.colors[i] == Color::a;
            expected += q;
            var += q * (1.0 - q);
        }
    }
    CHECK(n > 10000);
    CHECK(std::abs(static_cast<double>(na) - expected) <= 3.0 * std::sqrt(var));
    CHECK(std::abs(expected / static_cast<double>(n) - 0.5) < 0.01);
}

TEST_CASE("sample_initial is deterministic given the seed") {
    const auto p = macro::tent_pair(0.005);
    SimConfig cfg;
    Rng r1 = make_rng(3, Stream::initial), r2 = make_rng(3, Stream::initial);
    CHECK(sample_initial(p, cfg, r1) == sample_initial(p, cfg, r2));
}

TEST_CASE("sample_clock") {
    SimConfig cfg;
    cfg.epsilon = 0.1;
    cfg.kappa = 0.0;
    Rng rng(1);
    CHECK(sample_clock(cfg, rng).size() == 0);

    // Poisson count with mean 2 * 0.1 * 1 * 100 = 20.
    cfg.kappa = 1.0;
    const int n = 10000;
    double sum = 0.0;
    std::size_t right = 0, total = 0;
    for (int s = 0; s < n; ++s) {
        Rng r = make_rng(replica_seed(11, s), Stream::clock);
        const EventLog log = sample_clock(cfg, r);
        log.validate();
        sum += static_cast<double>(log.size());
        for (Mark m : log.marks) right += m == Mark::right;
        total += log.size();
        for (double t : log.times) REQUIRE(t <= cfg.micro_horizon());
    }
    CHECK(std::abs(sum / n - 20.0) <= 3.0 * std::sqrt(20.0 / n));
    const double f = static_cast<double>(right) / static_cast<double>(total);
    CHECK(std::abs(f - 0.5) <= 3.0 * std::sqrt(0.25 / static_cast<double>(total)));
}

TEST_CASE("evolve_positions") {
    const ParticleState ps = state({0, 5}, "ab");
    Rng rng(1);
    CHECK(evolve_positions(ps, 0.0, 1.0, rng) == ps);
    CHECK_THROWS(evolve_positions(ps, -1.0, 1.0, rng));

    // Displacement mean 0 and variance walk_rate * tau; independence of two walkers.
    const double tau = 3.0, rate = 1.5;
    const int n = 100000;
    double s1 = 0, s2 = 0, s11 = 0, s22 = 0, s12 = 0;
    Rng r = make_rng(5, Stream::walks);
    for (int k = 0; k < n; ++k) {
        const ParticleState out = evolve_positions(ps, tau, rate, r);
        CHECK_EQ(out.colors, ps.colors);
        const double d1 = static_cast<double>(out.positions[0] - 0), d2 = static_cast<double>(out.positions[1] - 5);
        s1 += d1;
        s2 += d2;
        s11 += d1 * d1;
        s22 += d2 * d2;
        s12 += d1 * d2;
    }
    const double var = rate * tau;
    CHECK(std::abs(s1 / n) <= 3.0 * std::sqrt(var / n));
    // Var of the squared displacement of a compound Poisson walk is var^2*2 + var.
    CHECK(std::abs(s11 / n - var) <= 3.0 * std::sqrt((2.0 * var * var + var) / n));
    CHECK(std::abs(s22 / n - var) <= 3.0 * std::sqrt((2.0 * var * var + var) / n));
    CHECK(std::abs(s12 / n - (s1 / n) * (s2 / n)) <= 3.0 * var / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("rightmost_a and leftmost_b") {
    CHECK(rightmost_a(state({0, 1, 2}, "aab")) == Label{1});
    CHECK(rightmost_a(state({1, 1}, "aa")) == Label{1});
    CHECK_FALSE(rightmost_a(state({0, 1}, "bb")).has_value());
    CHECK(leftmost_b(state({0, 1, 2}, "abb")) == Label{1});
    CHECK(leftmost_b(state({3, 3}, "bb")) == Label{1});
    CHECK_FALSE(leftmost_b(state({0, 1}, "aa")).has_value());
}

TEST_CASE("apply_H") {
    CHECK(apply_H(state({0, 1, 2}, "aab"), Mark::right) == state({0, 1, 2}, "abb"));
    CHECK(apply_H(state({0, 1}, "aa"), Mark::left) == state({0, 1}, "aa"));
    CHECK(apply_H(apply_H(state({0}, "a"), Mark::right), Mark::left) == state({0}, "a"));
    const ParticleState ps = state({4, -2, 7}, "bab");
    CHECK(apply_H(ps, Mark::left).positions == ps.positions);
}

TEST_CASE("run_true") {
    const auto p = macro::tent_pair(0.005);
    SimConfig cfg;
    cfg.epsilon = 0.1;
    Rng ri = make_rng(2, Stream::initial), rw = make_rng(2, Stream::walks);
    const ParticleState ps0 = sample_initial(p, cfg, ri);
    const double t_end = cfg.micro_horizon();
    const WalkRealization walk(ps0.positions, 1.0, t_end, rw);

    SUBCASE("empty log keeps colors") {
        const EventLog log;
        const auto states = run_true(ps0, walk, log, {0.0, 10.0, 50.0, t_end});
        for (const auto& s : states) CHECK(s.colors == ps0.colors);
        CHECK(states.back().positions == walk.positions_at(t_end));
    }
    SUBCASE("one ring flips at most one label, cadlag") {
        EventLog log;
        log.times = {30.0};
        log.marks = {Mark::right};
        TrueTrajectory traj(ps0, walk, log);
        const ParticleState before = traj.at(29.999);
        const ParticleState at = traj.at(30.0);
        std::size_t diff = 0;
        for (std::size_t i = 0; i < ps0.size(); ++i) diff += before.colors[i] != at.colors[i];
        CHECK(before.colors == ps0.colors);
        CHECK(diff == (ps0.count_a() > 0 ? 1u : 0u));
    }
    SUBCASE("N_a recount matches the tally on 100 seeds") {
        cfg.kappa = 1.0;
        for (int s = 0; s < 100; ++s) {
            const auto seed = replica_seed(9, s);
            Rng a = make_rng(seed, Stream::initial), b = make_rng(seed, Stream::walks), c = make_rng(seed, Stream::clock);
            const ParticleState q0 = sample_initial(p, cfg, a);
            const WalkRealization w(q0.positions, 1.0, t_end, b);
            const EventLog log = sample_clock(cfg, c);
            TrueTrajectory traj(q0, w, log);
            for (double t : log.times) {
                const ParticleState& st = traj.at(t);
                if (traj.noop_flips() > 0) break;
                REQUIRE(static_cast<std::int64_t>(st.count_a()) == tally_a(q0.count_a(), log, t));
                REQUIRE(st.count_a() + (st.size() - st.count_a()) == q0.size());
            }
        }
    }
    SUBCASE("replay gives identical states") {
        cfg.kappa = 1.0;
        Rng c = make_rng(2, Stream::clock);
        const EventLog log = sample_clock(cfg, c);
        TrueTrajectory traj(ps0, walk, log);
        const ParticleState late = traj.at(80.0);
        traj.at(10.0);
        CHECK(traj.at(80.0) == late);
    }
}

TEST_CASE("occupation and tail_mass") {
    const OccupationPair occ = occupation(state({0, 0, 1}, "aba"));
    CHECK(occ.xi == SiteCounts{{0, 1}, {1, 1}});
    CHECK(occ.eta == SiteCounts{{0, 1}});
    CHECK(count_at(occ.xi, 17) == 0);

    const SiteCounts xi{{0, 1}, {2, 2}};
    CHECK(tail_mass(xi, 1) == 2);
    CHECK(tail_mass(xi, 0) == 3);
    CHECK(tail_mass(xi, 3) == 0);
    CHECK(tail_mass(xi, -100) == 3);

    Rng rng(4);
    std::uniform_int_distribution<int> site(-5, 5), col(0, 1);
    for (int rep = 0; rep < 200; ++rep) {
        ParticleState ps;
        for (int i = 0; i < 12; ++i) {
            ps.positions.push_back(site(rng));
            ps.colors.push_back(col(rng) ? Color::a : Color::b);
        }
        const OccupationPair o = occupation(ps);
        std::int64_t total = 0;
        for (const auto& [x, n] : o.xi) total += n;
        for (const auto& [x, n] : o.eta) total += n;
        CHECK(total == 12);
        for (Site x = -7; x < 7; ++x) CHECK(tail_mass(o.xi, x) >= tail_mass(o.xi, x + 1));
        CHECK(tail_mass(o.xi, -6) == static_cast<std::int64_t>(ps.count_a()));
    }
}

TEST_CASE("empirical_profile") {
    SimConfig cfg;
    cfg.epsilon = 0.5;
    SUBCASE("single particle is a unit-mass spike") {
        SimConfig one = cfg;
        one.epsilon = 0.999999;
        const macro::GridSpec g = macro::GridSpec::from_range(-3.0, 3.0, 6);
        const macro::ProfilePair p = empirical_profile(state({0}, "a"), one, g);
        CHECK(p.mass_u == doctest::Approx(0.999999).epsilon(1e-12));
        CHECK(p.mass_v == 0.0);
    }
    SUBCASE("total integral equals eps * M") {
        const macro::GridSpec g = macro::GridSpec::from_range(-5.0, 5.0, 50);
        const ParticleState ps = state({-3, -1, 0, 0, 2, 9}, "aabbab");
        const macro::ProfilePair p = empirical_profile(ps, cfg, g);
        CHECK(p.mass_total() == doctest::Approx(cfg.epsilon * 6).epsilon(1e-12));
    }
    SUBCASE("initial samples reproduce the profile tails") {
        // Pooled over 100 draws of 100 particles: sup distance of the tail curves.
        const auto p0 = macro::tent_pair(0.005);
        SimConfig c2;
        c2.epsilon = 0.02;
        std::map<Site, double> pooled;
        Rng rng2 = make_rng(2, Stream::initial);
        const int reps = 100;
        for (int rep = 0; rep < reps; ++rep) {
            const ParticleState ps = sample_initial(p0, c2, rng2);
            for (Site j = -60; j <= 85; ++j) pooled[j] += scaled_tail_a(ps, c2.epsilon, j) / reps;
        }
        double sup = 0.0;
        for (const auto& [j, f] : pooled) {
            const double r = c2.epsilon * (static_cast<double>(j) - 0.5);
            sup = std::max(sup, std::abs(f - macro::tail_integral(p0.grid, p0.u, r)));
        }
        CHECK(sup <= 0.05);
    }
}
