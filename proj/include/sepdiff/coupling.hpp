#pragma once

// Order and coupling calculus for two color configurations on shared
// positions: tail-mass domination, splittings into married pairs, singletons
// and discrepancies, collision-driven pair dissolution, the four C-maps and
// the balance identities along a C1/C2 sweep.
//
// Copy one is sigma, copy two is sigma'. A married pair (i, j) has i colored
// (a, b) and j colored (b, a) with x_i > x_j. I holds (b, a) labels, J holds
// (a, b) labels.

#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "sepdiff/lattice.hpp"
#include "sepdiff/macro.hpp"

namespace sepdiff::coupling {

using lattice::Color;
using lattice::Label;
using lattice::Mark;
using lattice::Site;
using lattice::SiteCounts;

// ---------------------------------------------------------------------------
// Domination

/// F(x; xi_prime) <= F(x; xi) at every site.
bool dominates(const SiteCounts& xi_prime, const SiteCounts& xi);
/// First site (from the right) where domination fails.
std::optional<Site> domination_witness(const SiteCounts& xi_prime, const SiteCounts& xi);
/// Number of sites where domination fails.
std::size_t domination_violations(const SiteCounts& xi_prime, const SiteCounts& xi);

struct OrderError : std::runtime_error {
    Site witness;
    OrderError(const std::string& what, Site w) : std::runtime_error(what), witness(w) {}
};

/// A coupling-level invariant was broken (unreachable when the maps are correct).
struct InternalFault : std::logic_error {
    using std::logic_error::logic_error;
};

// ---------------------------------------------------------------------------
// Coupled state and splittings

struct CoupledState {
    std::vector<Site> x;
    std::vector<Color> sigma;        // copy one
    std::vector<Color> sigma_prime;  // copy two

    std::size_t size() const { return x.size(); }
    SiteCounts xi() const;        // a-counts of sigma
    SiteCounts xi_prime() const;  // a-counts of sigma'
};

enum class Role : std::uint8_t { single_a, single_b, pair_first, pair_second, disc_I, disc_J };

/// Copy whose colors may be exchanged between two particles on one site.
enum class Side { first, second };

struct Splitting {
    static constexpr Label none = static_cast<Label>(-1);

    std::vector<Role> role;
    std::vector<Label> partner;  // pair partner or `none`
    std::set<Label> I;
    std::set<Label> J;

    explicit Splitting(std::size_t M = 0) : role(M, Role::single_a), partner(M, none) {}

    std::size_t size() const { return role.size(); }
    std::vector<std::pair<Label, Label>> pairs() const;
    std::vector<Label> singletons() const;
    std::size_t pair_count() const;

    void make_single(Label i, Color c);
    void make_pair(Label i, Label j);  // i is the (a,b) member
    void make_I(Label i);
    void make_J(Label i);
};

/// Empty when the splitting is consistent with `st`; otherwise one message per
/// broken invariant (partition, tag consistency, strict pair order).
std::vector<std::string> check_splitting(const Splitting& spl, const CoupledState& st);

/// Splitting with I = J = empty for sigma' <= sigma with matched a-counts.
/// An (a,b) label and a (b,a) label on one site become two singletons by
/// exchanging their colors on `swap_side`. The rest marry by rank. Throws
/// OrderError when the hypothesis fails.
Splitting build_splitting(CoupledState& st, Side swap_side = Side::second);

/// Dissolves the pair holding `label` if both members share a site.
bool dissolve_if_collided(Splitting& spl, CoupledState& st, Label label, Side swap_side = Side::second);
/// Dissolves every pair whose members share a site. Returns the count.
std::size_t dissolve_collisions(Splitting& spl, CoupledState& st, Side swap_side = Side::second);

// ---------------------------------------------------------------------------
// C-maps

enum class CMapCase : char { a = 'a', b = 'b', c = 'c' };

/// Updates the splitting after copy one flipped label i under `mark`.
CMapCase apply_C1(Splitting& spl, const CoupledState& st, Mark mark, Label i);
/// Updates the splitting after copy two flipped label i under `mark`. Pairs
/// created by case (b) may sit on one site; the caller dissolves them.
CMapCase apply_C2(Splitting& spl, const CoupledState& st, Mark mark, Label i);

struct StepRecord {
    int q = 0;  // 1..2m
    int phase = 1;
    Mark mark = Mark::right;
    char cmap_case = 'a';
    std::size_t I = 0;
    std::size_t J = 0;
    std::size_t pairs = 0;
};

/// Flip copy one with `mark`, then C1. Returns nothing on a no-op flip.
std::optional<CMapCase> step_C1(Splitting& spl, CoupledState& st, Mark mark);
/// Flip copy two with `mark`, then C2, then dissolve a same-site pair it created.
std::optional<CMapCase> step_C2(Splitting& spl, CoupledState& st, Mark mark, Side swap_side = Side::second);

struct BalanceReport {
    bool ok = true;
    int first_bad_q = -1;
    std::string message;
};

/// Checks the balance identities on a sweep of m C1 steps followed by m C2
/// steps driven by `marks`, and I = J = empty at the end.
BalanceReport balance_check(const std::vector<Mark>& marks, const std::vector<StepRecord>& history);

nlohmann::json to_json(const std::vector<StepRecord>& history);

struct SweepResult {
    std::vector<StepRecord> history;
    BalanceReport balance;
    bool final_order = true;  // sigma' <= sigma after the sweep
    std::vector<std::string> faults;
};

/// Frozen positions: build_splitting, m C1 steps, m C2 steps.
SweepResult run_sweep(CoupledState st, const std::vector<Mark>& marks);

// ---------------------------------------------------------------------------
// Exhaustive small-instance check

struct ExhaustiveReport {
    std::size_t instances = 0;     // (x, sigma, sigma') triples examined
    std::size_t sweeps = 0;        // sweeps run
    std::size_t skipped_noop = 0;  // mark sequences with a flip on an absent species
    std::size_t violations = 0;
    std::size_t roundtrip_failures = 0;  // domination <-> empty discrepancies
    std::vector<std::string> examples;   // first few violations
    double seconds = 0.0;

    nlohmann::json to_json() const;
};

ExhaustiveReport exhaustive_check(std::size_t max_particles = 4, int n_sites = 4, std::size_t max_marks = 3);

// ---------------------------------------------------------------------------
// Coupled block runs and the pathwise sandwich

struct SandwichSeed {
    std::uint64_t seed = 0;
    bool in_X = true;
    std::size_t M = 0;
    std::size_t blocks = 0;
    std::size_t rings = 0;
    std::size_t violations_lower = 0;  // sites with F(minus) > F(true)
    std::size_t violations_upper = 0;  // sites with F(true) > F(plus)
    std::size_t count_mismatch = 0;    // block times where N_a differs
    std::size_t literal_violations = 0;  // same check on the swap-free block evolutions
    std::size_t faults = 0;
    std::vector<std::string> fault_messages;
};

struct SandwichReport {
    lattice::SimConfig cfg;
    double delta = 0.0;
    std::size_t seeds = 0;
    std::size_t in_X_runs = 0;
    std::size_t violations = 0;  // on in-X runs
    std::size_t count_mismatches = 0;
    std::size_t literal_violations = 0;
    std::size_t literal_runs_with_violation = 0;
    std::size_t faults = 0;
    std::vector<SandwichSeed> per_seed;

    double exclusion_rate() const {
        return seeds == 0 ? 0.0 : 1.0 - static_cast<double>(in_X_runs) / static_cast<double>(seeds);
    }
    bool passed() const { return violations == 0 && count_mismatches == 0 && faults == 0; }
    nlohmann::json to_json() const;
};

/// One seed: true run plus coupled minus and plus copies on the shared walk
/// and clock, checked at every block time t_k.
SandwichSeed sandwich_seed(const macro::ProfilePair& profile, const lattice::SimConfig& cfg, double delta,
                           std::uint64_t seed);

SandwichReport verify_sandwich(const lattice::SimConfig& cfg, const macro::ProfilePair& profile, double delta,
                               std::size_t n_seeds, unsigned threads = 1);

}  // namespace sepdiff::coupling
