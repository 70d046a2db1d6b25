#pragma once

// Microscopic two-species system on Z: independent continuous-time random
// walks plus rank-based color exchange driven by a marked Poisson clock.
//
// Labels are 0-based indices into ParticleState. Times are microscopic.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sepdiff/macro.hpp"
#include "sepdiff/rng.hpp"

namespace sepdiff::lattice {

enum class Color : std::uint8_t { a, b };
enum class Mark : std::uint8_t { right, left };

char to_char(Color c);
const char* to_string(Mark m);

using Label = std::size_t;
using Site = std::int64_t;

struct SimConfig {
    double epsilon = 0.05;
    double kappa = 1.0;
    double horizon_T = 1.0;
    std::uint64_t seed = 1;
    double walk_rate = 1.0;

    void validate() const;
    double micro_horizon() const { return horizon_T / (epsilon * epsilon); }
    double clock_rate() const { return 2.0 * epsilon * kappa; }
    /// Microscopic time corresponding to macroscopic time t.
    double micro(double t) const { return t / (epsilon * epsilon); }
};

struct ParticleState {
    std::vector<Site> positions;
    std::vector<Color> colors;
    double time = 0.0;

    std::size_t size() const { return positions.size(); }
    std::size_t count_a() const;
    void validate() const;
    bool operator==(const ParticleState&) const = default;
};

struct EventLog {
    std::vector<double> times;
    std::vector<Mark> marks;

    std::size_t size() const { return times.size(); }
    /// Throws unless times are strictly increasing and positive, lengths match.
    void validate() const;
};

using SiteCounts = std::map<Site, std::int64_t>;

struct OccupationPair {
    SiteCounts xi;   // a-counts
    SiteCounts eta;  // b-counts
};

// ---------------------------------------------------------------------------
// Sampling

/// Number of particles floor(M_tot / epsilon).
std::size_t particle_count(const macro::ProfilePair& profile, double epsilon);

ParticleState sample_initial(const macro::ProfilePair& profile, const SimConfig& cfg, Rng& rng);

/// Poisson times of intensity 2*eps*kappa on (0, t_end], fair right/left marks.
EventLog sample_clock(const SimConfig& cfg, Rng& rng, double t_end);
inline EventLog sample_clock(const SimConfig& cfg, Rng& rng) { return sample_clock(cfg, rng, cfg.micro_horizon()); }

/// One nearest-neighbour step of one particle.
struct Jump {
    double time;
    std::uint32_t label;
    std::int8_t step;  // +1 or -1
};

/// A pre-sampled position realization on [0, t_end]: every particle holds for
/// Exp(walk_rate) times and then steps +-1 with probability 1/2. Shared by the
/// true and auxiliary evolutions.
class WalkRealization {
public:
    WalkRealization() = default;
    WalkRealization(std::vector<Site> initial, double walk_rate, double t_end, Rng& rng);

    const std::vector<Site>& initial() const { return initial_; }
    const std::vector<Jump>& jumps() const { return jumps_; }
    double t_end() const { return t_end_; }
    std::vector<Site> positions_at(double t) const;

private:
    std::vector<Site> initial_;
    std::vector<Jump> jumps_;
    double t_end_ = 0.0;
};

ParticleState evolve_positions(const ParticleState& ps, double t1, double walk_rate, Rng& rng);

// ---------------------------------------------------------------------------
// Color exchange

std::optional<Label> rightmost_a(const std::vector<Site>& x, const std::vector<Color>& sigma);
std::optional<Label> leftmost_b(const std::vector<Site>& x, const std::vector<Color>& sigma);
inline std::optional<Label> rightmost_a(const ParticleState& ps) { return rightmost_a(ps.positions, ps.colors); }
inline std::optional<Label> leftmost_b(const ParticleState& ps) { return leftmost_b(ps.positions, ps.colors); }

/// Applies H^right / H^left in place. Returns the flipped label, or nothing
/// when the relevant species is absent (no-op).
std::optional<Label> apply_H_inplace(const std::vector<Site>& x, std::vector<Color>& sigma, Mark mark);
ParticleState apply_H(const ParticleState& ps, Mark mark);

/// h_a(sigma) + #left - #right over rings with time <= t.
std::int64_t tally_a(std::size_t h_a0, const EventLog& log, double t);

/// Both species present at every time in [0, t] according to the tally.
bool in_X(std::size_t h_a0, std::size_t M, const EventLog& log, double t);

/// Trajectory of the true evolution. Queries are served from a cached cursor;
/// asking for an earlier time replays from t = 0.
class TrueTrajectory {
public:
    TrueTrajectory(ParticleState initial, const WalkRealization& walk, const EventLog& log);

    /// State at time t (cadlag: a ring at exactly t has been applied).
    const ParticleState& at(double t);
    /// Number of flips that found their species absent so far.
    std::size_t noop_flips() const { return noop_flips_; }

private:
    void reset();

    ParticleState initial_;
    const WalkRealization* walk_;
    const EventLog* log_;
    ParticleState cur_;
    std::size_t next_jump_ = 0;
    std::size_t next_ring_ = 0;
    std::size_t noop_flips_ = 0;
};

/// Convenience wrapper: run the true evolution and return the states at the
/// requested query times (ascending).
std::vector<ParticleState> run_true(const ParticleState& ps, const WalkRealization& walk, const EventLog& log,
                                    const std::vector<double>& query_times);

// ---------------------------------------------------------------------------
// Occupation numbers and empirical profiles

OccupationPair occupation(const ParticleState& ps);
/// F(x; counts) = sum_{y >= x} counts(y)
std::int64_t tail_mass(const SiteCounts& counts, Site x);
std::int64_t count_at(const SiteCounts& counts, Site x);

/// eps-scaled histogram of the a and b particles on `grid` (nearest node).
/// The grid is extended, with a warning on stderr, when it does not cover
/// every particle.
macro::ProfilePair empirical_profile(const ParticleState& ps, const SimConfig& cfg, const macro::GridSpec& grid);

/// eps * #{a-particles with x >= site}: macroscopic tail mass at r = eps*(site - 1/2).
double scaled_tail_a(const ParticleState& ps, double epsilon, Site site);
double scaled_tail_all(const ParticleState& ps, double epsilon, Site site);

// ---------------------------------------------------------------------------
// CSV export

void write_snapshot_csv(const std::vector<ParticleState>& states, const std::string& path);
void write_occupation_csv(const OccupationPair& occ, const std::string& path);

}  // namespace sepdiff::lattice
