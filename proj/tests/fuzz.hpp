#pragma once

// Random class-U profile pairs sharing the sum phi = u + v and the u-mass,
// for the order fuzzing tests. Mass is moved between two ranges that do not
// interleave, which orders the tail masses node by node.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "sepdiff/macro.hpp"
#include "sepdiff/rng.hpp"

namespace fuzz {

using sepdiff::Rng;
using sepdiff::macro::GridSpec;
using sepdiff::macro::ProfilePair;

inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

/// Class-U pair: phi a sum of two overlapping tents on (L, E); u = phi on
/// (L, D], decreasing smoothly to 0 at R, and v = phi - u, so u lives on
/// (L, R) and v on (D, E).
inline ProfilePair random_pair(Rng& rng, const GridSpec& g) {
    std::vector<double> phi(g.n_nodes(), 0.0);
    double L = 1e300, E = -1e300;
    for (const auto [clo, chi] : {std::pair{-1.0, 0.0}, std::pair{0.0, 1.0}}) {
        const double c = uniform(rng, clo, chi);
        const double w = uniform(rng, 1.0, 1.5);
        L = std::min(L, c - w);
        E = std::max(E, c + w);
        const std::vector<double> t = sepdiff::macro::tent(g, c - w, c + w, uniform(rng, 0.5, 1.5));
        for (std::size_t i = 0; i < phi.size(); ++i) phi[i] += t[i];
    }
    const double D = L + uniform(rng, 0.2, 0.45) * (E - L);
    const double R = L + uniform(rng, 0.55, 0.8) * (E - L);
    std::vector<double> u(phi.size()), v(phi.size());
    for (std::size_t i = 0; i < phi.size(); ++i) {
        const double r = g.node(i);
        const double w = r <= D ? 1.0 : r >= R ? 0.0 : 0.5 * (1.0 + std::cos(M_PI * (r - D) / (R - D)));
        u[i] = phi[i] * w;
        v[i] = phi[i] - u[i];
    }
    return ProfilePair::make(g, std::move(u), std::move(v));
}

/// Moves up to `amount` of u-mass inside the overlap of the two supports,
/// across a random split point: leftwards when `left` is true (the result is
/// below p), rightwards otherwise. Supports are unchanged. Returns the mass moved.
inline double move_mass(ProfilePair& p, Rng& rng, double amount, bool left) {
    const GridSpec& g = p.grid;
    const sepdiff::macro::Support su = sepdiff::macro::support_of(g, p.u);
    const sepdiff::macro::Support sv = sepdiff::macro::support_of(g, p.v);
    const double D = sv.lo, R = su.hi;
    if (!(D < R)) return 0.0;
    const double split = D + uniform(rng, 0.3, 0.7) * (R - D);
    // Smooth weights vanishing at D, at the split and at R.
    const auto lower_w = [&](double r) { return r > D && r < split ? std::sin(M_PI * (r - D) / (split - D)) : 0.0; };
    const auto upper_w = [&](double r) { return r > split && r < R ? std::sin(M_PI * (r - split) / (R - split)) : 0.0; };
    const auto donor_w = [&](double r) { return left ? upper_w(r) : lower_w(r); };
    const auto recv_w = [&](double r) { return left ? lower_w(r) : upper_w(r); };
    double have = 0.0, room = 0.0;
    for (std::size_t i = 0; i < p.u.size(); ++i) {
        have += g.weight(i) * donor_w(g.node(i)) * p.u[i];
        room += g.weight(i) * recv_w(g.node(i)) * p.v[i];
    }
    const double m = std::min({amount, 0.9 * have, 0.9 * room});
    if (m <= 0.0) return 0.0;
    const double a = m / have, b = m / room;
    for (std::size_t i = 0; i < p.u.size(); ++i) {
        const double r = g.node(i);
        const double d = b * recv_w(r) * p.v[i] - a * donor_w(r) * p.u[i];
        p.u[i] += d;
        p.v[i] -= d;
    }
    p.refresh_masses();
    return m;
}

struct Ordered {
    ProfilePair lower;
    ProfilePair upper;
};

/// lower <= upper in tail order, same phi and u-mass.
inline Ordered random_ordered(Rng& rng, const GridSpec& g) {
    Ordered o{ProfilePair{}, random_pair(rng, g)};
    o.lower = o.upper;
    const int moves = std::uniform_int_distribution<int>(1, 3)(rng);
    for (int k = 0; k < moves; ++k) move_mass(o.lower, rng, uniform(rng, 0.0, 0.3) * o.upper.mass_u, true);
    return o;
}

/// lower <= upper modulo m: an ordered pair whose lower member is then pushed
/// right by at most m.
inline Ordered random_ordered_mod(Rng& rng, const GridSpec& g, double m_rel) {
    Ordered o = random_ordered(rng, g);
    const double m = m_rel * std::min(o.upper.mass_u, o.upper.mass_v);
    move_mass(o.lower, rng, uniform(rng, 0.3, 1.0) * m, false);
    return o;
}

/// kappa*delta drawn in (0, 0.05 min mass), halved until the cut points of
/// both pairs satisfy D < R.
inline double cut_mass(Rng& rng, const Ordered& o) {
    double kd = uniform(rng, 0.001, 0.05) * std::min(o.upper.mass_u, o.upper.mass_v);
    for (int k = 0; k < 40; ++k, kd *= 0.5) {
        const auto a = sepdiff::macro::cut_points(o.lower, kd);
        const auto b = sepdiff::macro::cut_points(o.upper, kd);
        if (a.D_delta < a.R_delta && b.D_delta < b.R_delta) break;
    }
    return kd;
}

}  // namespace fuzz
