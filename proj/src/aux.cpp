#include "sepdiff/aux.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sepdiff::aux {

namespace {

void check_block(const ParticleState& ps, const WalkRealization& walk, Block b) {
    if (!(b.t1 >= b.t0)) throw std::invalid_argument("block end precedes block start");
    if (std::abs(ps.time - b.t0) > 1e-9 * std::max(1.0, b.t0)) {
        throw std::invalid_argument("state time does not match the block start");
    }
    if (b.t1 > walk.t_end() * (1.0 + 1e-12)) throw std::out_of_range("block exceeds the walk realization");
    if (ps.size() != walk.initial().size()) throw std::invalid_argument("particle count differs from the walk");
}

void apply_block_flips(ParticleState& ps, const EventLog& log, Block b) {
    const auto [first, last] = block_rings(log, b);
    for (std::size_t k = first; k < last; ++k) lattice::apply_H_inplace(ps.positions, ps.colors, log.marks[k]);
}

}  // namespace

std::pair<std::size_t, std::size_t> block_rings(const EventLog& log, Block b) {
    const auto lo = std::upper_bound(log.times.begin(), log.times.end(), b.t0);
    const auto hi = std::upper_bound(lo, log.times.end(), b.t1);
    return {static_cast<std::size_t>(lo - log.times.begin()), static_cast<std::size_t>(hi - log.times.begin())};
}

std::size_t block_count(double T, double delta) {
    if (!(T > 0.0) || !(delta > 0.0)) throw std::invalid_argument("block_count needs positive T and delta");
    return static_cast<std::size_t>(std::ceil(T / delta * (1.0 - 1e-12)));
}

void transport(std::vector<lattice::Site>& positions, const WalkRealization& walk, double t0, double t1) {
    const auto& jumps = walk.jumps();
    auto it = std::upper_bound(jumps.begin(), jumps.end(), t0,
                               [](double t, const lattice::Jump& j) { return t < j.time; });
    for (; it != jumps.end() && it->time <= t1; ++it) positions[it->label] += it->step;
}

ParticleState run_block_plus(const ParticleState& ps, const WalkRealization& walk, const EventLog& log, Block b) {
    check_block(ps, walk, b);
    ParticleState out = ps;
    apply_block_flips(out, log, b);
    transport(out.positions, walk, b.t0, b.t1);
    out.time = b.t1;
    return out;
}

ParticleState run_block_minus(const ParticleState& ps, const WalkRealization& walk, const EventLog& log, Block b) {
    check_block(ps, walk, b);
    ParticleState out = ps;
    transport(out.positions, walk, b.t0, b.t1);
    apply_block_flips(out, log, b);
    out.time = b.t1;
    return out;
}

std::vector<ParticleState> run_aux(const ParticleState& ps0, const WalkRealization& walk, const EventLog& log,
                                   double block_len, std::size_t K, Variant variant) {
    if (!(block_len > 0.0)) throw std::invalid_argument("block length must be positive");
    log.validate();
    std::vector<ParticleState> out;
    out.reserve(K + 1);
    out.push_back(ps0);
    for (std::size_t k = 0; k < K; ++k) {
        const Block b{block_len * static_cast<double>(k), block_len * static_cast<double>(k + 1)};
        ParticleState cur = out.back();
        cur.time = b.t0;
        out.push_back(variant == Variant::plus ? run_block_plus(cur, walk, log, b) : run_block_minus(cur, walk, log, b));
    }
    return out;
}

}  // namespace sepdiff::aux
