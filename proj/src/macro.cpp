#include "sepdiff/macro.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace sepdiff::macro {

namespace {

// Values below this fraction of the peak are not propagated by the smoother.
constexpr double kConvolveDropThreshold = 1e-30;

double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

// Fraction of node i's dual cell lying above r.
double frac_above(const GridSpec& g, std::size_t i, double r) {
    const double lo = g.dual_lo(i);
    const double hi = g.dual_hi(i);
    return clamp01((hi - r) / (hi - lo));
}

double frac_below(const GridSpec& g, std::size_t i, double r) {
    const double lo = g.dual_lo(i);
    const double hi = g.dual_hi(i);
    return clamp01((r - lo) / (hi - lo));
}

void check_size(const GridSpec& g, std::span<const double> f, const char* what) {
    if (f.size() != g.n_nodes()) {
        throw std::invalid_argument(std::string(what) + ": sample count does not match grid");
    }
}

std::vector<double> shifted(const std::vector<double>& f, std::size_t lead, std::size_t n_nodes) {
    std::vector<double> out(n_nodes, 0.0);
    std::copy(f.begin(), f.end(), out.begin() + static_cast<std::ptrdiff_t>(lead));
    return out;
}

// Grid extension covering [lo, hi] with whole cells appended on either side.
GridSpec extended_grid(const GridSpec& g, double lo, double hi, std::size_t& lead) {
    lead = 0;
    std::size_t trail = 0;
    if (lo < g.r_min) lead = static_cast<std::size_t>(std::ceil((g.r_min - lo) / g.h - 1e-9));
    if (hi > g.r_max()) trail = static_cast<std::size_t>(std::ceil((hi - g.r_max()) / g.h - 1e-9));
    GridSpec out = g;
    out.r_min = g.r_min - g.h * static_cast<double>(lead);
    out.n_cells = g.n_cells + lead + trail;
    return out;
}

struct ActiveRange {
    bool empty = true;
    std::size_t first = 0;
    std::size_t last = 0;
};

ActiveRange active_range(std::span<const double> f, double rel) {
    double peak = 0.0;
    for (double x : f) peak = std::max(peak, x);
    ActiveRange a;
    if (peak <= 0.0) return a;
    const double thr = rel * peak;
    for (std::size_t i = 0; i < f.size(); ++i) {
        if (f[i] > thr) {
            if (a.empty) a.first = i;
            a.last = i;
            a.empty = false;
        }
    }
    return a;
}

std::vector<double> gaussian_kernel(double h, double t, std::size_t& radius) {
    radius = static_cast<std::size_t>(std::ceil(8.0 * std::sqrt(t) / h));
    std::vector<double> k(2 * radius + 1);
    double s = 0.0;
    for (std::size_t j = 0; j < k.size(); ++j) {
        const double x = h * (static_cast<double>(j) - static_cast<double>(radius));
        k[j] = std::exp(-x * x / (2.0 * t));
        s += k[j];
    }
    for (double& x : k) x /= s;
    return k;
}

void convolve_into(std::span<const double> f, const std::vector<double>& k, std::size_t radius,
                   std::vector<double>& out) {
    std::fill(out.begin(), out.end(), 0.0);
    const ActiveRange a = active_range(f, kConvolveDropThreshold);
    if (a.empty) return;
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(f.size());
    const std::ptrdiff_t rad = static_cast<std::ptrdiff_t>(radius);
    for (std::ptrdiff_t j = static_cast<std::ptrdiff_t>(a.first); j <= static_cast<std::ptrdiff_t>(a.last); ++j) {
        const double fj = f[static_cast<std::size_t>(j)];
        if (fj == 0.0) continue;
        const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, j - rad);
        const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(n - 1, j + rad);
        for (std::ptrdiff_t i = lo; i <= hi; ++i) {
            out[static_cast<std::size_t>(i)] += fj * k[static_cast<std::size_t>(i - j + rad)];
        }
    }
}

// Suffix sums of node masses: T[k] = sum_{i >= k} w_i f_i, T[n_nodes] = 0.
std::vector<double> suffix_masses(const GridSpec& g, std::span<const double> f) {
    std::vector<double> t(f.size() + 1, 0.0);
    for (std::size_t i = f.size(); i-- > 0;) t[i] = t[i + 1] + g.weight(i) * f[i];
    return t;
}

}  // namespace

// ---------------------------------------------------------------------------

GridSpec GridSpec::from_range(double r_min, double r_max, std::size_t n_cells) {
    GridSpec g;
    g.r_min = r_min;
    g.n_cells = n_cells;
    g.h = (r_max - r_min) / static_cast<double>(n_cells);
    g.validate();
    return g;
}

void GridSpec::validate() const {
    if (n_cells == 0) throw std::invalid_argument("grid: n_cells must be positive");
    if (!(h > 0.0) || !std::isfinite(h) || !std::isfinite(r_min)) {
        throw std::invalid_argument("grid: r_min < r_max required");
    }
}

std::int64_t node_offset(const GridSpec& a, const GridSpec& b) {
    if (std::abs(a.h - b.h) > 1e-12 * a.h) throw std::invalid_argument("grids have different spacing");
    const double k = (b.r_min - a.r_min) / a.h;
    const double kr = std::round(k);
    if (std::abs(k - kr) > 1e-6) throw std::invalid_argument("grids are not node-aligned");
    return static_cast<std::int64_t>(kr);
}

ProfilePair ProfilePair::make(const GridSpec& grid, std::vector<double> u, std::vector<double> v) {
    grid.validate();
    check_size(grid, u, "profile u");
    check_size(grid, v, "profile v");
    for (std::size_t i = 0; i < u.size(); ++i) {
        if (!(u[i] >= 0.0) || !(v[i] >= 0.0) || !std::isfinite(u[i]) || !std::isfinite(v[i])) {
            throw std::invalid_argument("profile values must be finite and nonnegative");
        }
    }
    ProfilePair p;
    p.grid = grid;
    p.u = std::move(u);
    p.v = std::move(v);
    p.refresh_masses();
    return p;
}

void ProfilePair::refresh_masses() {
    mass_u = mass(grid, u);
    mass_v = mass(grid, v);
}

double ProfilePair::u_at(double r) const { return sample(grid, u, r); }
double ProfilePair::v_at(double r) const { return sample(grid, v, r); }

// ---------------------------------------------------------------------------

double mass(const GridSpec& g, std::span<const double> f) {
    check_size(g, f, "mass");
    double s = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) s += g.weight(i) * f[i];
    return s;
}

double tail_integral(const GridSpec& g, std::span<const double> f, double r) {
    check_size(g, f, "tail_integral");
    if (r <= g.r_min) return mass(g, f);
    if (r >= g.r_max()) return 0.0;
    double s = 0.0;
    for (std::size_t i = f.size(); i-- > 0;) {
        if (g.dual_hi(i) <= r) break;
        s += g.weight(i) * f[i] * frac_above(g, i, r);
    }
    return s;
}

double head_integral(const GridSpec& g, std::span<const double> f, double r) {
    check_size(g, f, "head_integral");
    if (r <= g.r_min) return 0.0;
    if (r >= g.r_max()) return mass(g, f);
    double s = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
        if (g.dual_lo(i) >= r) break;
        s += g.weight(i) * f[i] * frac_below(g, i, r);
    }
    return s;
}

double sample(const GridSpec& g, std::span<const double> f, double r) {
    if (r < g.r_min || r > g.r_max()) return 0.0;
    const double x = (r - g.r_min) / g.h;
    std::size_t i = static_cast<std::size_t>(std::floor(x));
    if (i >= g.n_cells) return f[g.n_cells];
    const double a = x - static_cast<double>(i);
    return (1.0 - a) * f[i] + a * f[i + 1];
}

ProfilePair extend_to(const ProfilePair& p, double lo, double hi) {
    std::size_t lead = 0;
    const GridSpec g = extended_grid(p.grid, lo, hi, lead);
    if (g.n_cells == p.grid.n_cells) return p;
    ProfilePair out;
    out.grid = g;
    out.u = shifted(p.u, lead, g.n_nodes());
    out.v = shifted(p.v, lead, g.n_nodes());
    out.refresh_masses();
    return out;
}

GridFunction extend_to(const GridFunction& p, double lo, double hi) {
    std::size_t lead = 0;
    const GridSpec g = extended_grid(p.grid, lo, hi, lead);
    if (g.n_cells == p.grid.n_cells) return p;
    return GridFunction{g, shifted(p.f, lead, g.n_nodes())};
}

void align(ProfilePair& a, ProfilePair& b) {
    (void)node_offset(a.grid, b.grid);
    const double lo = std::min(a.grid.r_min, b.grid.r_min);
    const double hi = std::max(a.grid.r_max(), b.grid.r_max());
    a = extend_to(a, lo, hi);
    b = extend_to(b, lo, hi);
}

// ---------------------------------------------------------------------------

Support support_of(const GridSpec& g, std::span<const double> f, double rel_threshold) {
    check_size(g, f, "support");
    const ActiveRange a = active_range(f, rel_threshold);
    Support s;
    if (a.empty) return s;
    s.empty = false;
    s.lo = a.first == 0 ? g.r_min : g.node(a.first - 1);
    s.hi = a.last == g.n_cells ? g.r_max() : g.node(a.last + 1);
    return s;
}

ClassUReport validate_class_U(const ProfilePair& p) {
    ClassUReport rep;
    const double thr = 1e-12;
    rep.u_support = support_of(p.grid, p.u, thr);
    rep.v_support = support_of(p.grid, p.v, thr);
    if (rep.u_support.empty) rep.violations.emplace_back("u has empty support");
    if (rep.v_support.empty) rep.violations.emplace_back("v has empty support");
    auto check_interval = [&](const std::vector<double>& f, const char* name) {
        const ActiveRange a = active_range(f, thr);
        if (a.empty) return;
        double peak = 0.0;
        for (double x : f) peak = std::max(peak, x);
        for (std::size_t i = a.first; i <= a.last; ++i) {
            if (!(f[i] > thr * peak)) {
                rep.violations.emplace_back(std::string(name) + " vanishes inside its support at r=" +
                                            std::to_string(p.grid.node(i)));
                return;
            }
        }
        if (a.first == 0 || a.last == p.grid.n_cells) {
            rep.violations.emplace_back(std::string(name) + " support touches the grid boundary");
        }
    };
    check_interval(p.u, "u");
    check_interval(p.v, "v");
    if (!rep.u_support.empty && !rep.v_support.empty) {
        const double L = rep.u_support.lo, R = rep.u_support.hi;
        const double D = rep.v_support.lo, E = rep.v_support.hi;
        if (!(L < D)) rep.violations.emplace_back("L < D fails");
        if (!(D < R)) rep.violations.emplace_back("D < R fails (supports do not overlap)");
        if (!(R < E)) rep.violations.emplace_back("R < E fails");
    }
    rep.valid = rep.violations.empty();
    return rep;
}

std::vector<double> tent(const GridSpec& g, double lo, double hi, double m) {
    const double mid = 0.5 * (lo + hi);
    const double half = 0.5 * (hi - lo);
    const double peak = m / half;
    std::vector<double> f(g.n_nodes());
    for (std::size_t i = 0; i < f.size(); ++i) {
        f[i] = peak * std::max(0.0, 1.0 - std::abs(g.node(i) - mid) / half);
    }
    return f;
}

ProfilePair tent_pair(double h, double pad) {
    const double lo = -1.0 - pad;
    const double hi = 1.5 + pad;
    const auto n = static_cast<std::size_t>(std::llround((hi - lo) / h));
    const GridSpec g = GridSpec::from_range(lo, hi, n);
    return ProfilePair::make(g, tent(g, -1.0, 0.5, 1.0), tent(g, 0.0, 1.5, 1.0));
}

// ---------------------------------------------------------------------------

double tail_point(const GridSpec& g, std::span<const double> f, double target) {
    check_size(g, f, "tail_point");
    const std::vector<double> t = suffix_masses(g, f);
    if (target > t[0] * (1.0 + 1e-12)) throw std::invalid_argument("tail_point: target exceeds total mass");
    if (target <= 0.0) {
        for (std::size_t i = f.size(); i-- > 0;) {
            if (f[i] > 0.0) return g.dual_hi(i);
        }
        return g.r_max();
    }
    for (std::size_t k = f.size(); k-- > 0;) {
        if (t[k] >= target && f[k] > 0.0) {
            const double mk = t[k] - t[k + 1];
            const double need = target - t[k + 1];
            const double w = g.dual_hi(k) - g.dual_lo(k);
            return g.dual_hi(k) - w * std::clamp(need / mk, 0.0, 1.0);
        }
    }
    return g.r_min;
}

double head_point(const GridSpec& g, std::span<const double> f, double target) {
    check_size(g, f, "head_point");
    const double total = mass(g, f);
    if (target > total * (1.0 + 1e-12)) throw std::invalid_argument("head_point: target exceeds total mass");
    if (target <= 0.0) {
        for (std::size_t i = 0; i < f.size(); ++i) {
            if (f[i] > 0.0) return g.dual_lo(i);
        }
        return g.r_min;
    }
    double acc = 0.0;
    for (std::size_t k = 0; k < f.size(); ++k) {
        const double mk = g.weight(k) * f[k];
        if (acc + mk >= target && f[k] > 0.0) {
            const double w = g.dual_hi(k) - g.dual_lo(k);
            return g.dual_lo(k) + w * std::clamp((target - acc) / mk, 0.0, 1.0);
        }
        acc += mk;
    }
    return g.r_max();
}

CutPoints cut_points(const ProfilePair& p, double kappa_delta) {
    if (kappa_delta < 0.0) throw std::invalid_argument("cut_points: kappa*delta must be nonnegative");
    if (kappa_delta >= p.mass_u || kappa_delta >= p.mass_v) {
        throw std::domain_error("cut_points: kappa*delta reaches a species mass (species would be annihilated)");
    }
    return CutPoints{tail_point(p.grid, p.u, kappa_delta), head_point(p.grid, p.v, kappa_delta)};
}

ProfilePair apply_cut(const ProfilePair& p, double kappa_delta) {
    const CutPoints c = cut_points(p, kappa_delta);
    ProfilePair out = p;
    if (kappa_delta == 0.0) return out;
    for (std::size_t i = 0; i < p.u.size(); ++i) {
        const double a = frac_above(p.grid, i, c.R_delta);
        const double b = frac_below(p.grid, i, c.D_delta);
        const double du = p.u[i] * a;  // u above R goes to v
        const double dv = p.v[i] * b;  // v below D goes to u
        out.u[i] = (p.u[i] - du) + dv;
        out.v[i] = (p.v[i] - dv) + du;
    }
    out.refresh_masses();
    return out;
}

// ---------------------------------------------------------------------------

GridFunction gauss_convolve(const GridSpec& g, std::span<const double> f, double t) {
    if (!(t > 0.0)) throw std::invalid_argument("gauss_convolve: t must be positive");
    check_size(g, f, "gauss_convolve");
    std::size_t radius = 0;
    const std::vector<double> k = gaussian_kernel(g.h, t, radius);
    GridFunction in{g, std::vector<double>(f.begin(), f.end())};
    const ActiveRange a = active_range(f, kConvolveDropThreshold);
    if (!a.empty) {
        const double pad = g.h * static_cast<double>(radius + 1);
        in = extend_to(in, g.node(a.first) - pad, g.node(a.last) + pad);
    }
    GridFunction out{in.grid, std::vector<double>(in.f.size(), 0.0)};
    convolve_into(in.f, k, radius, out.f);
    return out;
}

ProfilePair gauss_convolve(const ProfilePair& p, double t) {
    if (!(t > 0.0)) throw std::invalid_argument("gauss_convolve: t must be positive");
    std::size_t radius = 0;
    const std::vector<double> k = gaussian_kernel(p.grid.h, t, radius);
    const double pad = p.grid.h * static_cast<double>(radius + 1);
    ProfilePair in = p;
    for (const std::vector<double>* f : {&p.u, &p.v}) {
        const ActiveRange a = active_range(*f, kConvolveDropThreshold);
        if (!a.empty) in = extend_to(in, p.grid.node(a.first) - pad, p.grid.node(a.last) + pad);
    }
    ProfilePair out;
    out.grid = in.grid;
    out.u.assign(in.u.size(), 0.0);
    out.v.assign(in.v.size(), 0.0);
    convolve_into(in.u, k, radius, out.u);
    convolve_into(in.v, k, radius, out.v);
    out.refresh_masses();
    return out;
}

const char* to_string(Variant v) { return v == Variant::plus ? "plus" : "minus"; }

ProfilePair barrier_step(const ProfilePair& p, double delta, double kappa, Variant variant) {
    if (!(delta > 0.0)) throw std::invalid_argument("barrier_step: delta must be positive");
    if (kappa < 0.0) throw std::invalid_argument("barrier_step: kappa must be nonnegative");
    if (variant == Variant::plus) return gauss_convolve(apply_cut(p, kappa * delta), delta);
    return apply_cut(gauss_convolve(p, delta), kappa * delta);
}

std::vector<ProfilePair> iterate_barriers(const ProfilePair& p0, double delta, double kappa,
                                          std::size_t n, Variant variant) {
    std::vector<ProfilePair> out;
    out.reserve(n + 1);
    out.push_back(p0);
    for (std::size_t k = 0; k < n; ++k) out.push_back(barrier_step(out.back(), delta, kappa, variant));
    return out;
}

// ---------------------------------------------------------------------------

OrderReport order_mod_m(const ProfilePair& p1, const ProfilePair& p2, double m, double tol) {
    ProfilePair a = p1, b = p2;
    align(a, b);
    const std::vector<double> ta = suffix_masses(a.grid, a.u);
    const std::vector<double> tb = suffix_masses(b.grid, b.u);
    OrderReport rep;
    rep.max_excess = -std::numeric_limits<double>::infinity();
    // The cumulative is linear between dual-cell edges, so edges suffice.
    for (std::size_t k = 0; k < ta.size(); ++k) {
        const double d = ta[k] - tb[k];
        if (d > rep.max_excess) {
            rep.max_excess = d;
            rep.argmax = k < a.u.size() ? a.grid.dual_lo(k) : a.grid.r_max();
        }
    }
    rep.holds = rep.max_excess <= m + tol;
    return rep;
}

double tail_sup_distance(const ProfilePair& p1, const ProfilePair& p2) {
    ProfilePair a = p1, b = p2;
    align(a, b);
    const std::vector<double> ta = suffix_masses(a.grid, a.u);
    const std::vector<double> tb = suffix_masses(b.grid, b.u);
    double d = 0.0;
    for (std::size_t k = 0; k < ta.size(); ++k) d = std::max(d, std::abs(ta[k] - tb[k]));
    return d;
}

double l1_distance_u(const ProfilePair& p1, const ProfilePair& p2) {
    ProfilePair a = p1, b = p2;
    align(a, b);
    double s = 0.0;
    for (std::size_t i = 0; i < a.u.size(); ++i) s += a.grid.weight(i) * std::abs(a.u[i] - b.u[i]);
    return s;
}

double l1_distance(const GridFunction& p1, const GridFunction& p2) {
    (void)node_offset(p1.grid, p2.grid);
    const double lo = std::min(p1.grid.r_min, p2.grid.r_min);
    const double hi = std::max(p1.grid.r_max(), p2.grid.r_max());
    const GridFunction a = extend_to(p1, lo, hi);
    const GridFunction b = extend_to(p2, lo, hi);
    double s = 0.0;
    for (std::size_t i = 0; i < a.f.size(); ++i) s += a.grid.weight(i) * std::abs(a.f[i] - b.f[i]);
    return s;
}

// ---------------------------------------------------------------------------

double default_m0(const ProfilePair& p) { return 0.1 * std::min(p.mass_u, p.mass_v); }

ProfilePair repair_upper(const ProfilePair& p, double m, double m0) {
    if (m0 < 0.0) m0 = default_m0(p);
    if (m < 0.0) throw std::invalid_argument("repair_upper: m must be nonnegative");
    if (m >= m0) throw std::domain_error("repair_upper: m must be below m0");
    if (m == 0.0) return p;
    const double H = head_point(p.grid, p.u, m);
    const double Z = tail_point(p.grid, p.v, m);
    if (!(H < Z)) throw std::domain_error("repair_upper: H < Z fails for this profile");
    ProfilePair out = p;
    for (std::size_t i = 0; i < p.u.size(); ++i) {
        const double du = p.u[i] * frac_below(p.grid, i, H);
        const double dv = p.v[i] * frac_above(p.grid, i, Z);
        out.u[i] = (p.u[i] - du) + dv;
        out.v[i] = (p.v[i] - dv) + du;
    }
    out.refresh_masses();
    return out;
}

ProfilePair repair_lower(const ProfilePair& p, double m, double m0) {
    if (m0 < 0.0) m0 = default_m0(p);
    if (m < 0.0) throw std::invalid_argument("repair_lower: m must be nonnegative");
    if (m >= m0) throw std::domain_error("repair_lower: m must be below m0");
    if (m == 0.0) return p;
    const double Hp = tail_point(p.grid, p.u, m);
    const double Zp = head_point(p.grid, p.v, m);
    if (!(Zp < Hp)) throw std::domain_error("repair_lower: Z' < H' fails for this profile");
    ProfilePair out = p;
    for (std::size_t i = 0; i < p.u.size(); ++i) {
        const double du = p.u[i] * frac_above(p.grid, i, Hp);
        const double dv = p.v[i] * frac_below(p.grid, i, Zp);
        out.u[i] = (p.u[i] - du) + dv;
        out.v[i] = (p.v[i] - dv) + du;
    }
    out.refresh_masses();
    return out;
}

// ---------------------------------------------------------------------------

void write_profile_csv(const ProfilePair& p, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << "r,u,v\n" << std::setprecision(17);
    for (std::size_t i = 0; i < p.u.size(); ++i) os << p.grid.node(i) << ',' << p.u[i] << ',' << p.v[i] << '\n';
}

ProfilePair read_profile_csv(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read profile file " + path);
    std::string line;
    std::getline(is, line);
    if (line.rfind("r,u,v", 0) != 0) throw std::runtime_error(path + ": expected header r,u,v");
    std::vector<double> r, u, v;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        double a = 0, b = 0, c = 0;
        char s1 = 0, s2 = 0;
        if (!(ls >> a >> s1 >> b >> s2 >> c) || s1 != ',' || s2 != ',') {
            throw std::runtime_error(path + ": malformed row '" + line + "'");
        }
        r.push_back(a);
        u.push_back(b);
        v.push_back(c);
    }
    if (r.size() < 2) throw std::runtime_error(path + ": need at least two rows");
    const GridSpec g = GridSpec::from_range(r.front(), r.back(), r.size() - 1);
    for (std::size_t i = 0; i < r.size(); ++i) {
        if (std::abs(r[i] - g.node(i)) > 1e-9 * std::max(1.0, std::abs(r[i]))) {
            throw std::runtime_error(path + ": grid is not uniform");
        }
    }
    return ProfilePair::make(g, std::move(u), std::move(v));
}

}  // namespace sepdiff::macro
