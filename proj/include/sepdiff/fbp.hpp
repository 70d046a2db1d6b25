#pragma once

// Free-boundary system: a fine-delta barrier bracket used as the reference
// solution, boundary and flux extraction, and a Monte Carlo check of the
// absorbed-Brownian-motion representation of the solution.
//
// The u-side walkers are absorbed when B_t >= U_t, the v-side walkers when
// B_t <= V_t. Thresholded supports and fluxes are read off the minus member of
// the bracket, whose support ends sharply at the last cut point. The cut
// points themselves sit O(sqrt(delta)) inside the limiting fronts; the curves
// handed to the Monte Carlo combine the cut points of runs at delta and
// 4*delta to cancel that leading term.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "sepdiff/macro.hpp"

namespace sepdiff::fbp {

using macro::ProfilePair;

struct BoundaryCurves {
    std::vector<double> times;  // increasing
    std::vector<double> U;      // rightmost support point of u
    std::vector<double> V;      // leftmost support point of v

    std::size_t size() const { return times.size(); }
    /// Throws unless sizes match, times increase and V < U everywhere.
    void validate() const;
    /// Linear interpolation in time (clamped to the sampled range).
    double U_at(double t) const;
    double V_at(double t) const;
};

/// Cut points of the minus iteration at every step up to T.
BoundaryCurves minus_cut_curve(const ProfilePair& p0, double kappa, double T, double delta);

/// Fronts from cut curves at step sizes d, 4d, 16d (errors a*sqrt(d) + b*d),
/// sampled at the times of `fine`.
BoundaryCurves extrapolate(const BoundaryCurves& fine, const BoundaryCurves& mid, const BoundaryCurves& coarse);

struct FbpOptions {
    double threshold_rel = 1e-6;   // support threshold relative to the current peak
    std::size_t store_every = 10;  // keep every n-th profile (the last step is always kept)
    bool extrapolate = true;       // front curves from minus runs at delta/4, delta, 4*delta
};

struct FbpSolution {
    double kappa = 0.0;
    double delta = 0.0;
    double T = 0.0;
    double threshold_rel = 1e-6;
    std::vector<double> times;  // stored slice times
    std::vector<ProfilePair> minus;
    std::vector<ProfilePair> plus;
    std::vector<ProfilePair> mid;        // (minus + plus) / 2 on the common grid
    std::vector<double> bracket_width;   // sup_r |F(r; minus.u) - F(r; plus.u)|
    std::vector<double> bracket_excess;  // sup_r [F(r; minus.u) - F(r; plus.u)], should be <= 0
    BoundaryCurves cut_points;           // minus-variant cut points (R_delta, D_delta), every step
    BoundaryCurves boundaries;           // front curves used downstream
    std::string front_method = "cut points";
    double mass_u0 = 0.0;
    double mass_v0 = 0.0;
    double max_mass_drift = 0.0;  // relative, over both species and variants
    bool completed = true;
    std::string flag;  // reason for an early stop

    /// Index of the stored slice nearest to t.
    std::size_t slice_at(double t) const;
};

struct Boundary {
    double U = 0.0;
    double V = 0.0;
};

/// U = sup{r : u > thr}, V = inf{r : v > thr}, linearly interpolated inside
/// the transition cell; thr is relative to the species peak.
Boundary boundary_of(const ProfilePair& p, double threshold_rel = 1e-6);

FbpSolution solve_reference(const ProfilePair& p0, double kappa, double T, double delta, const FbpOptions& opt = {});

/// Boundaries of the stored slices.
BoundaryCurves extract_boundaries(const FbpSolution& sol);

struct Flux {
    double left = 0.0;   // -1/2 v_r(V+), compare with -kappa
    double right = 0.0;  // -1/2 u_r(U-), compare with kappa
};

/// Least-squares slope over a 5-cell window that stops 2 cells short of the
/// boundary, on the stored minus slice nearest to t.
Flux flux_at_boundary(const FbpSolution& sol, double t, std::size_t window_cells = 5, std::size_t skip_cells = 2);

// ---------------------------------------------------------------------------
// Monte Carlo

enum class Species { u, v };
const char* to_string(Species s);

struct McOptions {
    double dt = 1e-4;
    std::size_t n_paths = 100000;
    std::uint64_t seed = 1;
    unsigned threads = 1;
};

struct Estimate {
    double value = 0.0;
    double se = 0.0;
};

/// Exit probability of Brownian motion from x through a constant upper barrier a by time t.
double reflection_hit_probability(double x, double a, double t);

struct OracleCheck {
    double x = 0.0, a = 0.0, t = 0.0;
    double exact = 0.0;
    Estimate mc;
    double z = 0.0;
    nlohmann::json to_json() const;
};

OracleCheck constant_boundary_oracle(double x, double a, double t, const McOptions& opt);

struct MassIdentity {
    double t = 0.0;
    Species species = Species::u;
    double expected = 0.0;  // kappa * t
    Estimate initial_part;  // mass_0 * P(absorbed by t) from the initial profile
    Estimate source_part;   // kappa * t * P(absorbed by t) from the opposite front
    Estimate total;
    double z = 0.0;
    nlohmann::json to_json() const;
};

struct IntervalCheck {
    double lo = 0.0, hi = 0.0;
    double reference = 0.0;  // midpoint profile mass on [lo, hi]
    double ref_err = 0.0;    // half-width of the bracket for that mass
    Estimate mc;
    double z = 0.0;
};

struct McReport {
    double t = 0.0;
    Species species = Species::u;
    MassIdentity identity;
    std::vector<IntervalCheck> intervals;
    double max_abs_z = 0.0;
    nlohmann::json to_json() const;
};

/// n equal intervals spanning the support of the species at the slice nearest to t.
std::vector<std::pair<double, double>> default_intervals(const FbpSolution& sol, double t, Species s,
                                                         std::size_t n = 10);

/// Absorbed paths from the initial profile plus source paths from the opposite
/// front: the mass identity at t and the interval masses at t.
McReport mc_validate(const FbpSolution& sol, const ProfilePair& p0, double t, Species s,
                     const std::vector<std::pair<double, double>>& intervals, const McOptions& opt);

/// Mass identity only (same path engine).
MassIdentity mass_identity_check(const FbpSolution& sol, const ProfilePair& p0, double t, Species s,
                                 const McOptions& opt);

// ---------------------------------------------------------------------------
// Export

void write_boundaries_csv(const BoundaryCurves& b, const std::string& path);
/// One profile CSV per stored slice plus an index file; returns the file names.
std::vector<std::string> write_slices(const FbpSolution& sol, const std::string& dir);
nlohmann::json summary_json(const FbpSolution& sol);

}  // namespace sepdiff::fbp
