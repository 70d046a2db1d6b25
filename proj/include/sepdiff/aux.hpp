#pragma once

// Auxiliary block evolutions: the color flips of each block are applied as a
// product at the start of the block (plus) or at its end (minus), with the
// particle positions taken from the shared walk realization.
//
// Block k covers microscopic times (t_k, t_{k+1}]; a ring at exactly t_{k+1}
// belongs to block k.

#include <cstddef>
#include <utility>
#include <vector>

#include "sepdiff/lattice.hpp"
#include "sepdiff/macro.hpp"

namespace sepdiff::aux {

using lattice::EventLog;
using lattice::ParticleState;
using lattice::WalkRealization;
using macro::Variant;

struct Block {
    double t0 = 0.0;
    double t1 = 0.0;
};

/// Index range [first, last) of the rings with time in (t0, t1].
std::pair<std::size_t, std::size_t> block_rings(const EventLog& log, Block b);

/// Smallest K with K * delta >= T (with a relative guard against rounding).
std::size_t block_count(double T, double delta);

/// Applies the walk's jumps with time in (t0, t1] to `positions`.
void transport(std::vector<lattice::Site>& positions, const WalkRealization& walk, double t0, double t1);

/// Product of the block's flips at x(t0), then transport to t1.
ParticleState run_block_plus(const ParticleState& ps, const WalkRealization& walk, const EventLog& log, Block b);
/// Transport to t1, then the product of the block's flips at x(t1).
ParticleState run_block_minus(const ParticleState& ps, const WalkRealization& walk, const EventLog& log, Block b);

/// States at t_k = k * block_len for k = 0..K (microscopic block length).
std::vector<ParticleState> run_aux(const ParticleState& ps0, const WalkRealization& walk, const EventLog& log,
                                   double block_len, std::size_t K, Variant variant);

}  // namespace sepdiff::aux
