#pragma once

// Deterministic macroscopic machinery: gridded profile pairs, the cut
// operator, Gaussian smoothing, the two barrier iterations, order modulo m
// and the repair constructions used to restore exact order.
//
// Discretization: a profile is a vector of node values on a uniform grid.
// Node i carries the mass w_i * f_i with trapezoid weights (h inside, h/2 at
// the two end nodes) spread uniformly over its dual cell
// [r_i - h/2, r_i + h/2] clipped to the grid. Cumulative masses are therefore
// piecewise linear in r, they agree with the trapezoid rule at every node, and
// cut points can be located by linear inversion with exact mass bookkeeping.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace sepdiff::macro {

struct GridSpec {
    double r_min = 0.0;
    double h = 1.0;
    std::size_t n_cells = 1;

    static GridSpec from_range(double r_min, double r_max, std::size_t n_cells);

    double r_max() const { return r_min + h * static_cast<double>(n_cells); }
    std::size_t n_nodes() const { return n_cells + 1; }
    double node(std::size_t i) const { return r_min + h * static_cast<double>(i); }
    double weight(std::size_t i) const { return (i == 0 || i == n_cells) ? 0.5 * h : h; }
    // Dual cell of node i, clipped to the grid.
    double dual_lo(std::size_t i) const { return i == 0 ? r_min : node(i) - 0.5 * h; }
    double dual_hi(std::size_t i) const { return i == n_cells ? r_max() : node(i) + 0.5 * h; }

    void validate() const;
};

/// Integer node offset of `b` relative to `a`; throws if the grids are not aligned.
std::int64_t node_offset(const GridSpec& a, const GridSpec& b);

struct GridFunction {
    GridSpec grid;
    std::vector<double> f;
};

struct ProfilePair {
    GridSpec grid;
    std::vector<double> u;
    std::vector<double> v;
    double mass_u = 0.0;
    double mass_v = 0.0;

    /// Builds a pair, checks sizes and nonnegativity, caches the masses.
    static ProfilePair make(const GridSpec& grid, std::vector<double> u, std::vector<double> v);

    void refresh_masses();
    double mass_total() const { return mass_u + mass_v; }
    /// Linear interpolation of the node values; zero outside the grid.
    double u_at(double r) const;
    double v_at(double r) const;
};

// ---------------------------------------------------------------------------
// Quadrature

double mass(const GridSpec& g, std::span<const double> f);
/// int_r^inf f
double tail_integral(const GridSpec& g, std::span<const double> f, double r);
/// int_-inf^r f
double head_integral(const GridSpec& g, std::span<const double> f, double r);
/// Linear interpolation of node values (0 outside the grid).
double sample(const GridSpec& g, std::span<const double> f, double r);

/// Extends `p` with zero nodes so that its grid covers [lo, hi]; node alignment kept.
ProfilePair extend_to(const ProfilePair& p, double lo, double hi);
GridFunction extend_to(const GridFunction& p, double lo, double hi);
/// Re-expresses both pairs on their common (union) grid.
void align(ProfilePair& a, ProfilePair& b);

// ---------------------------------------------------------------------------
// Class U

struct Support {
    bool empty = true;
    double lo = 0.0;
    double hi = 0.0;
};

/// Support proxy: nodes with value > rel_threshold * peak.
Support support_of(const GridSpec& g, std::span<const double> f, double rel_threshold = 1e-12);

struct ClassUReport {
    bool valid = false;
    Support u_support;  // (L, R)
    Support v_support;  // (D, E)
    std::vector<std::string> violations;
};

ClassUReport validate_class_U(const ProfilePair& p);

/// Tent of the given mass on (lo, hi), peak at the midpoint.
std::vector<double> tent(const GridSpec& g, double lo, double hi, double mass);

/// The reference initial datum used across the harness: u a tent of mass 1 on
/// (-1, 0.5) and v a tent of mass 1 on (0, 1.5).
ProfilePair tent_pair(double h, double pad = 2.0);

// ---------------------------------------------------------------------------
// Cut operator K

struct CutPoints {
    double R_delta = 0.0;  // int_R^inf u = kappa*delta
    double D_delta = 0.0;  // int_-inf^D v = kappa*delta
};

/// Point r with int_r^inf f = target (linear inversion of the cumulative).
double tail_point(const GridSpec& g, std::span<const double> f, double target);
/// Point r with int_-inf^r f = target.
double head_point(const GridSpec& g, std::span<const double> f, double target);

CutPoints cut_points(const ProfilePair& p, double kappa_delta);

/// K: moves the rightmost kappa*delta of u into v and the leftmost
/// kappa*delta of v into u. Exactly mass preserving per species, nodal sum unchanged.
ProfilePair apply_cut(const ProfilePair& p, double kappa_delta);

// ---------------------------------------------------------------------------
// Gaussian smoothing and barriers

/// G_t * f with the kernel truncated at 8 sqrt(t) and renormalized to unit
/// discrete mass. The grid is extended (cells appended) so the smoothed
/// profile is fully represented.
GridFunction gauss_convolve(const GridSpec& g, std::span<const double> f, double t);
ProfilePair gauss_convolve(const ProfilePair& p, double t);

enum class Variant { plus, minus };
const char* to_string(Variant v);

/// plus: G_delta after K; minus: K after G_delta.
ProfilePair barrier_step(const ProfilePair& p, double delta, double kappa, Variant variant);

/// S_0 = p0, S_{k} = barrier_step(S_{k-1}); returns n+1 profiles.
std::vector<ProfilePair> iterate_barriers(const ProfilePair& p0, double delta, double kappa,
                                          std::size_t n, Variant variant);

// ---------------------------------------------------------------------------
// Order

struct OrderReport {
    bool holds = true;
    double max_excess = 0.0;  // sup_r [F(r;u1) - F(r;u2)]
    double argmax = 0.0;
};

/// Checks F(r;p1.u) <= F(r;p2.u) + m for every r (breakpoints of the cumulative).
OrderReport order_mod_m(const ProfilePair& p1, const ProfilePair& p2, double m, double tol = 0.0);

/// sup_r |F(r;a) - F(r;b)| for the u species.
double tail_sup_distance(const ProfilePair& a, const ProfilePair& b);
/// L1 distance of the u species.
double l1_distance_u(const ProfilePair& a, const ProfilePair& b);
double l1_distance(const GridFunction& a, const GridFunction& b);

// ---------------------------------------------------------------------------
// Repair operators

/// Default admissible bound for the repair slack m.
double default_m0(const ProfilePair& p);

/// Upper repair of the dominating pair (u, v): removes the leftmost mass m of u
/// and adds the rightmost mass m of v. Throws if m >= m0 or H >= Z.
ProfilePair repair_upper(const ProfilePair& p, double m, double m0 = -1.0);
/// Lower repair of the dominated pair (u', v'): mirror construction.
ProfilePair repair_lower(const ProfilePair& p, double m, double m0 = -1.0);

// ---------------------------------------------------------------------------
// I/O

void write_profile_csv(const ProfilePair& p, const std::string& path);
ProfilePair read_profile_csv(const std::string& path);

}  // namespace sepdiff::macro
