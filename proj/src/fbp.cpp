#include "sepdiff/fbp.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "sepdiff/rng.hpp"

namespace sepdiff::fbp {

namespace {

double interp(const std::vector<double>& ts, const std::vector<double>& ys, double t) {
    if (ts.empty()) throw std::logic_error("empty boundary curve");
    if (t <= ts.front()) return ys.front();
    if (t >= ts.back()) return ys.back();
    const auto it = std::upper_bound(ts.begin(), ts.end(), t);
    const std::size_t k = static_cast<std::size_t>(it - ts.begin());
    const double w = (t - ts[k - 1]) / (ts[k] - ts[k - 1]);
    return ys[k - 1] + w * (ys[k] - ys[k - 1]);
}

double peak(const std::vector<double>& f) { return f.empty() ? 0.0 : *std::max_element(f.begin(), f.end()); }

ProfilePair midpoint(const ProfilePair& a0, const ProfilePair& b0) {
    ProfilePair a = a0, b = b0;
    macro::align(a, b);
    for (std::size_t i = 0; i < a.u.size(); ++i) {
        a.u[i] = 0.5 * (a.u[i] + b.u[i]);
        a.v[i] = 0.5 * (a.v[i] + b.v[i]);
    }
    a.refresh_masses();
    return a;
}

double signed_tail_gap(const ProfilePair& lower, const ProfilePair& upper) {
    return macro::order_mod_m(lower, upper, 0.0).max_excess;
}

}  // namespace

void BoundaryCurves::validate() const {
    if (U.size() != times.size() || V.size() != times.size()) throw std::invalid_argument("boundary curve sizes differ");
    for (std::size_t k = 0; k < times.size(); ++k) {
        if (k > 0 && !(times[k] > times[k - 1])) throw std::invalid_argument("boundary times must increase");
        if (!(V[k] < U[k])) {
            std::ostringstream os;
            os << "V_t >= U_t at t=" << times[k] << " (V=" << V[k] << ", U=" << U[k] << ")";
            throw std::domain_error(os.str());
        }
    }
}

double BoundaryCurves::U_at(double t) const { return interp(times, U, t); }
double BoundaryCurves::V_at(double t) const { return interp(times, V, t); }

BoundaryCurves extrapolate(const BoundaryCurves& fine, const BoundaryCurves& mid, const BoundaryCurves& coarse) {
    BoundaryCurves out;
    out.times = fine.times;
    const auto combine = [](double f, double m, double c) {
        const double e_fine = 2.0 * f - m;
        const double e_coarse = 2.0 * m - c;
        return (4.0 * e_fine - e_coarse) / 3.0;
    };
    for (std::size_t k = 0; k < fine.size(); ++k) {
        const double t = fine.times[k];
        out.U.push_back(combine(fine.U[k], mid.U_at(t), coarse.U_at(t)));
        out.V.push_back(combine(fine.V[k], mid.V_at(t), coarse.V_at(t)));
    }
    return out;
}

std::size_t FbpSolution::slice_at(double t) const {
    if (times.empty()) throw std::logic_error("solution holds no slices");
    std::size_t best = 0;
    for (std::size_t k = 1; k < times.size(); ++k)
        if (std::abs(times[k] - t) < std::abs(times[best] - t)) best = k;
    return best;
}

Boundary boundary_of(const ProfilePair& p, double threshold_rel) {
    const double tu = threshold_rel * peak(p.u);
    const double tv = threshold_rel * peak(p.v);
    const std::size_t n = p.u.size();
    Boundary b;
    std::size_t i = n;
    while (i > 0 && !(p.u[i - 1] > tu)) --i;
    if (i == 0 || tu <= 0.0) throw std::domain_error("u has empty support");
    --i;  // last node above threshold
    if (i + 1 < n) {
        const double f0 = p.u[i], f1 = p.u[i + 1];
        b.U = p.grid.node(i) + p.grid.h * (f0 - tu) / (f0 - f1);
    } else {
        b.U = p.grid.node(i);
    }
    std::size_t j = 0;
    while (j < n && !(p.v[j] > tv)) ++j;
    if (j == n || tv <= 0.0) throw std::domain_error("v has empty support");
    if (j > 0) {
        const double f0 = p.v[j], f1 = p.v[j - 1];
        b.V = p.grid.node(j) - p.grid.h * (f0 - tv) / (f0 - f1);
    } else {
        b.V = p.grid.node(j);
    }
    return b;
}

namespace {

ProfilePair minus_step(const ProfilePair& p, double d, double kappa, macro::CutPoints& cp) {
    const ProfilePair g = macro::gauss_convolve(p, d);
    cp = macro::cut_points(g, kappa * d);
    return macro::apply_cut(g, kappa * d);
}

}  // namespace

BoundaryCurves minus_cut_curve(const ProfilePair& p0, double kappa, double T, double delta) {
    const std::size_t n = static_cast<std::size_t>(std::llround(T / delta));
    if (std::abs(static_cast<double>(n) * delta - T) > 1e-9 * std::max(1.0, T)) {
        throw std::invalid_argument("T must be a multiple of delta");
    }
    const Boundary b0 = boundary_of(p0);
    BoundaryCurves c;
    c.times.push_back(0.0);
    c.U.push_back(b0.U);
    c.V.push_back(b0.V);
    ProfilePair p = p0;
    for (std::size_t k = 1; k <= n; ++k) {
        macro::CutPoints cp;
        p = minus_step(p, delta, kappa, cp);
        c.times.push_back(static_cast<double>(k) * delta);
        c.U.push_back(cp.R_delta);
        c.V.push_back(cp.D_delta);
    }
    return c;
}

FbpSolution solve_reference(const ProfilePair& p0, double kappa, double T, double delta, const FbpOptions& opt) {
    if (!(delta > 0.0) || !(T > 0.0)) throw std::invalid_argument("solve_reference needs positive T and delta");
    if (!(kappa >= 0.0)) throw std::invalid_argument("kappa must be nonnegative");
    const auto rep = macro::validate_class_U(p0);
    if (!rep.valid) throw std::invalid_argument("initial profile is not in class U");
    if (opt.store_every == 0) throw std::invalid_argument("store_every must be positive");

    FbpSolution sol;
    sol.kappa = kappa;
    sol.delta = delta;
    sol.T = T;
    sol.threshold_rel = opt.threshold_rel;
    sol.mass_u0 = p0.mass_u;
    sol.mass_v0 = p0.mass_v;
    const std::size_t n = static_cast<std::size_t>(std::llround(T / delta));
    if (std::abs(static_cast<double>(n) * delta - T) > 1e-9 * T) throw std::invalid_argument("T must be a multiple of delta");

    const auto store = [&](double t, const ProfilePair& mi, const ProfilePair& pl) {
        sol.times.push_back(t);
        sol.minus.push_back(mi);
        sol.plus.push_back(pl);
        sol.mid.push_back(midpoint(mi, pl));
        sol.bracket_width.push_back(macro::tail_sup_distance(mi, pl));
        sol.bracket_excess.push_back(signed_tail_gap(mi, pl));
    };
    const auto record = [](BoundaryCurves& c, double t, double U, double V) {
        c.times.push_back(t);
        c.U.push_back(U);
        c.V.push_back(V);
    };
    const Boundary b0 = boundary_of(p0, opt.threshold_rel);
    const auto drift = [&](const ProfilePair& p) {
        const double du = std::abs(p.mass_u - sol.mass_u0) / sol.mass_u0;
        const double dv = std::abs(p.mass_v - sol.mass_v0) / sol.mass_v0;
        return std::max(du, dv);
    };

    ProfilePair mi = p0, pl = p0;
    store(0.0, mi, pl);
    record(sol.cut_points, 0.0, b0.U, b0.V);
    const double min_mass = std::min(sol.mass_u0, sol.mass_v0);
    for (std::size_t k = 1; k <= n; ++k) {
        const double t = static_cast<double>(k) * delta;
        if (kappa * t >= min_mass) {
            sol.completed = false;
            sol.flag = "species annihilation: kappa*t reaches the initial species mass";
            break;
        }
        macro::CutPoints cp;
        try {
            mi = minus_step(mi, delta, kappa, cp);
            pl = macro::barrier_step(pl, delta, kappa, macro::Variant::plus);
        } catch (const std::domain_error& e) {
            sol.completed = false;
            sol.flag = std::string("cut failed: ") + e.what();
            break;
        }
        sol.max_mass_drift = std::max({sol.max_mass_drift, drift(mi), drift(pl)});
        if (sol.max_mass_drift > 1e-8) throw std::logic_error("species mass drifted beyond 1e-8");
        const Boundary b = kappa > 0.0 ? Boundary{cp.R_delta, cp.D_delta} : boundary_of(mi, opt.threshold_rel);
        record(sol.cut_points, t, b.U, b.V);
        const bool keep = k % opt.store_every == 0 || k == n;
        if (!(b.V < b.U)) {
            sol.completed = false;
            std::ostringstream os;
            os << "V_t >= U_t at t=" << t;
            sol.flag = os.str();
            store(t, mi, pl);
            break;
        }
        if (keep) store(t, mi, pl);
    }

    sol.boundaries = sol.cut_points;
    const double t_last = sol.cut_points.times.back();
    if (opt.extrapolate && kappa > 0.0 && n % 4 == 0) {
        try {
            const BoundaryCurves fine = minus_cut_curve(p0, kappa, t_last, 0.25 * delta);
            const BoundaryCurves coarse = minus_cut_curve(p0, kappa, t_last, 4.0 * delta);
            sol.boundaries = extrapolate(fine, sol.cut_points, coarse);
            sol.front_method = "extrapolated cut points";
        } catch (const std::exception&) {
            sol.boundaries = sol.cut_points;
        }
    }
    return sol;
}

BoundaryCurves extract_boundaries(const FbpSolution& sol) {
    BoundaryCurves out;
    for (std::size_t k = 0; k < sol.times.size(); ++k) {
        const Boundary b = boundary_of(sol.minus[k], sol.threshold_rel);
        out.times.push_back(sol.times[k]);
        out.U.push_back(b.U);
        out.V.push_back(b.V);
    }
    return out;
}

Flux flux_at_boundary(const FbpSolution& sol, double t, std::size_t window_cells, std::size_t skip_cells) {
    if (t < 5.0 * sol.delta - 1e-12) throw std::invalid_argument("flux requested inside the initial layer");
    const ProfilePair& p = sol.minus[sol.slice_at(t)];
    const Boundary b = boundary_of(p, sol.threshold_rel);
    const auto& g = p.grid;
    const auto fit = [&](long first, long last, const std::vector<double>& f) {
        if (first < 0 || last >= static_cast<long>(g.n_nodes())) throw std::out_of_range("flux window exits the grid");
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        double n = 0;
        for (long i = first; i <= last; ++i) {
            const double x = g.node(static_cast<std::size_t>(i)) - g.node(static_cast<std::size_t>(first));
            const double y = f[static_cast<std::size_t>(i)];
            sx += x;
            sy += y;
            sxx += x * x;
            sxy += x * y;
            n += 1;
        }
        return (n * sxy - sx * sy) / (n * sxx - sx * sx);
    };
    const auto w = static_cast<long>(window_cells);
    const auto s = static_cast<long>(skip_cells);
    const long iu = static_cast<long>(std::floor((b.U - g.r_min) / g.h)) - s;
    const long iv = static_cast<long>(std::ceil((b.V - g.r_min) / g.h)) + s;
    Flux out;
    out.right = -0.5 * fit(iu - w, iu, p.u);
    out.left = -0.5 * fit(iv, iv + w, p.v);
    return out;
}

// ---------------------------------------------------------------------------

const char* to_string(Species s) { return s == Species::u ? "u" : "v"; }

double reflection_hit_probability(double x, double a, double t) {
    if (x >= a) return 1.0;
    if (t <= 0.0) return 0.0;
    return std::erfc((a - x) / std::sqrt(2.0 * t));
}

namespace {

struct PathOutcome {
    bool absorbed = false;
    double end = 0.0;
};

// Brownian motion from (x, s) to time t, absorbed at the upper barrier c(.).
template <class Barrier>
PathOutcome run_path(double x, double s, double t, const Barrier& c, double dt, Rng& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double sdt = std::sqrt(dt);
    double time = s;
    double c1 = c(time);
    if (x >= c1) return {true, x};
    while (time < t) {
        const double h = std::min(dt, t - time);
        if (h <= 0.0) break;
        const double x2 = x + (h == dt ? sdt : std::sqrt(h)) * normal(rng);
        const double c2 = c(time + h);
        if (x2 >= c2) return {true, x2};
        const double e = 2.0 * (c1 - x) * (c2 - x2) / h;
        if (e < 40.0 && unif(rng) < std::exp(-e)) return {true, x2};
        x = x2;
        c1 = c2;
        time += h;
    }
    return {false, x};
}

struct Tally {
    std::size_t n = 0;
    std::size_t absorbed = 0;
    std::vector<std::size_t> in_interval;
};

// Runs n_paths paths in fixed chunks so the result does not depend on the thread count.
template <class Make>
Tally run_paths(std::size_t n_paths, std::size_t n_intervals, const McOptions& opt, std::uint64_t stream_tag,
                const Make& make) {
    constexpr std::size_t chunk = 2000;
    const std::size_t n_chunks = (n_paths + chunk - 1) / chunk;
    Tally total;
    total.in_interval.assign(n_intervals, 0);
    std::mutex mu;
    std::atomic<std::size_t> next{0};
    const auto worker = [&] {
        Tally local;
        local.in_interval.assign(n_intervals, 0);
        for (std::size_t c; (c = next++) < n_chunks;) {
            Rng rng = make_rng(replica_seed(opt.seed ^ stream_tag, c), Stream::mc);
            const std::size_t count = std::min(chunk, n_paths - c * chunk);
            for (std::size_t k = 0; k < count; ++k) make(rng, local);
        }
        std::lock_guard<std::mutex> lock(mu);
        total.n += local.n;
        total.absorbed += local.absorbed;
        for (std::size_t i = 0; i < n_intervals; ++i) total.in_interval[i] += local.in_interval[i];
    };
    const unsigned n_threads = std::max(1u, std::min<unsigned>(opt.threads, static_cast<unsigned>(n_chunks)));
    std::vector<std::thread> pool;
    for (unsigned k = 1; k < n_threads; ++k) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
    return total;
}

Estimate scaled_fraction(std::size_t hits, std::size_t n, double scale) {
    const double p = static_cast<double>(hits) / static_cast<double>(n);
    return {scale * p, scale * std::sqrt(p * (1.0 - p) / static_cast<double>(n))};
}

// O(1) linear interpolation on a uniformly sampled curve.
struct UniformCurve {
    double t0 = 0.0, step = 1.0;
    std::vector<double> y;
    UniformCurve(const std::vector<double>& ts, const std::vector<double>& ys, double sign) : y(ys) {
        if (ts.size() < 2) throw std::invalid_argument("boundary curve needs two samples");
        t0 = ts.front();
        step = (ts.back() - ts.front()) / static_cast<double>(ts.size() - 1);
        for (std::size_t k = 0; k < ts.size(); ++k) {
            if (std::abs(ts[k] - (t0 + step * static_cast<double>(k))) > 1e-9 * std::max(1.0, ts.back())) {
                throw std::invalid_argument("boundary curve is not uniformly sampled");
            }
        }
        for (double& v : y) v *= sign;
    }
    double operator()(double t) const {
        const double q = (t - t0) / step;
        if (q <= 0.0) return y.front();
        const auto k = static_cast<std::size_t>(q);
        if (k + 1 >= y.size()) return y.back();
        const double w = q - static_cast<double>(k);
        return y[k] + w * (y[k + 1] - y[k]);
    }
};

Estimate add(const Estimate& a, const Estimate& b) { return {a.value + b.value, std::hypot(a.se, b.se)}; }

// Sampler of the lumped profile: node by mass, then uniform over its dual cell.
struct ProfileSampler {
    macro::GridSpec g;
    std::vector<double> cdf;
    ProfileSampler(const macro::GridSpec& grid, const std::vector<double>& f) : g(grid), cdf(f.size()) {
        double acc = 0.0;
        for (std::size_t i = 0; i < f.size(); ++i) cdf[i] = acc += g.weight(i) * f[i];
        if (!(acc > 0.0)) throw std::domain_error("cannot sample a profile of zero mass");
    }
    double operator()(Rng& rng) const {
        std::uniform_real_distribution<double> unif(0.0, cdf.back());
        const auto it = std::upper_bound(cdf.begin(), cdf.end(), unif(rng));
        const std::size_t i = std::min(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
        std::uniform_real_distribution<double> cell(g.dual_lo(i), g.dual_hi(i));
        return cell(rng);
    }
};

struct Simulation {
    Tally initial;
    Tally source;
};

// Paths live in mirrored coordinates y = -B on the v-side so that absorption
// is always at an upper barrier.
Simulation simulate(const FbpSolution& sol, const ProfilePair& p0, double t, Species s,
                    const std::vector<std::pair<double, double>>& intervals, const McOptions& opt) {
    if (!(t > 0.0) || t > sol.boundaries.times.back() + 1e-12) throw std::invalid_argument("t outside the solved range");
    if (opt.n_paths == 0 || !(opt.dt > 0.0)) throw std::invalid_argument("invalid Monte Carlo options");
    const BoundaryCurves& bc = sol.boundaries;
    const double sign = s == Species::u ? 1.0 : -1.0;
    const UniformCurve barrier(bc.times, s == Species::u ? bc.U : bc.V, sign);
    const UniformCurve front(bc.times, s == Species::u ? bc.V : bc.U, sign);
    std::vector<std::pair<double, double>> iv;
    for (const auto& [lo, hi] : intervals) iv.emplace_back(s == Species::u ? lo : -hi, s == Species::u ? hi : -lo);

    const auto classify = [&](const PathOutcome& o, Tally& tl) {
        ++tl.n;
        if (o.absorbed) {
            ++tl.absorbed;
            return;
        }
        for (std::size_t i = 0; i < iv.size(); ++i)
            if (o.end >= iv[i].first && o.end < iv[i].second) ++tl.in_interval[i];
    };

    Simulation sim;
    const ProfileSampler base(p0.grid, s == Species::u ? p0.u : p0.v);
    sim.initial = run_paths(opt.n_paths, iv.size(), opt, 0x11, [&](Rng& rng, Tally& tl) {
        const double y0 = sign * base(rng);
        classify(run_path(y0, 0.0, t, barrier, opt.dt, rng), tl);
    });
    if (sol.kappa > 0.0) {
        sim.source = run_paths(opt.n_paths, iv.size(), opt, 0x22, [&](Rng& rng, Tally& tl) {
            std::uniform_real_distribution<double> when(0.0, t);
            const double s0 = when(rng);
            classify(run_path(front(s0), s0, t, barrier, opt.dt, rng), tl);
        });
    } else {
        sim.source.n = 1;
        sim.source.in_interval.assign(iv.size(), 0);
    }
    return sim;
}

MassIdentity identity_from(const Simulation& sim, const FbpSolution& sol, double t, Species s) {
    MassIdentity mi;
    mi.t = t;
    mi.species = s;
    mi.expected = sol.kappa * t;
    const double m0 = s == Species::u ? sol.mass_u0 : sol.mass_v0;
    mi.initial_part = scaled_fraction(sim.initial.absorbed, sim.initial.n, m0);
    mi.source_part = scaled_fraction(sim.source.absorbed, sim.source.n, sol.kappa * t);
    mi.total = add(mi.initial_part, mi.source_part);
    mi.z = mi.total.se > 0.0 ? (mi.total.value - mi.expected) / mi.total.se
                             : (mi.total.value == mi.expected ? 0.0 : INFINITY);
    return mi;
}

nlohmann::json estimate_json(const Estimate& e) { return {{"value", e.value}, {"se", e.se}}; }

}  // namespace

nlohmann::json OracleCheck::to_json() const {
    return {{"x", x}, {"a", a}, {"t", t}, {"exact", exact}, {"mc", estimate_json(mc)}, {"z", z}};
}

OracleCheck constant_boundary_oracle(double x, double a, double t, const McOptions& opt) {
    OracleCheck oc;
    oc.x = x;
    oc.a = a;
    oc.t = t;
    oc.exact = reflection_hit_probability(x, a, t);
    const auto barrier = [a](double) { return a; };
    const Tally tl = run_paths(opt.n_paths, 0, opt, 0x33, [&](Rng& rng, Tally& local) {
        ++local.n;
        if (run_path(x, 0.0, t, barrier, opt.dt, rng).absorbed) ++local.absorbed;
    });
    oc.mc = scaled_fraction(tl.absorbed, tl.n, 1.0);
    const double se = std::max(oc.mc.se, std::sqrt(oc.exact * (1.0 - oc.exact) / static_cast<double>(tl.n)));
    oc.z = se > 0.0 ? (oc.mc.value - oc.exact) / se : 0.0;
    return oc;
}

nlohmann::json MassIdentity::to_json() const {
    return {{"t", t},
            {"species", to_string(species)},
            {"expected", expected},
            {"initial_part", estimate_json(initial_part)},
            {"source_part", estimate_json(source_part)},
            {"total", estimate_json(total)},
            {"z", z}};
}

nlohmann::json McReport::to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& c : intervals) {
        arr.push_back({{"lo", c.lo},
                       {"hi", c.hi},
                       {"reference", c.reference},
                       {"ref_err", c.ref_err},
                       {"mc", estimate_json(c.mc)},
                       {"z", c.z}});
    }
    return {{"t", t},
            {"species", to_string(species)},
            {"mass_identity", identity.to_json()},
            {"intervals", arr},
            {"max_abs_z", max_abs_z}};
}

std::vector<std::pair<double, double>> default_intervals(const FbpSolution& sol, double t, Species s, std::size_t n) {
    const ProfilePair& p = sol.mid[sol.slice_at(t)];
    const std::vector<double>& f = s == Species::u ? p.u : p.v;
    const macro::Support sup = macro::support_of(p.grid, f, 1e-3);
    if (sup.empty || n == 0) throw std::domain_error("empty support for the interval family");
    const double lo = s == Species::u ? sup.lo : sol.boundaries.V_at(t);
    const double hi = s == Species::u ? sol.boundaries.U_at(t) : sup.hi;
    std::vector<std::pair<double, double>> out;
    for (std::size_t k = 0; k < n; ++k) {
        out.emplace_back(lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(n),
                         lo + (hi - lo) * static_cast<double>(k + 1) / static_cast<double>(n));
    }
    return out;
}

McReport mc_validate(const FbpSolution& sol, const ProfilePair& p0, double t, Species s,
                     const std::vector<std::pair<double, double>>& intervals, const McOptions& opt) {
    const std::size_t idx = sol.slice_at(t);
    if (std::abs(sol.times[idx] - t) > 1e-9) throw std::invalid_argument("t is not a stored slice time");
    const Simulation sim = simulate(sol, p0, t, s, intervals, opt);
    McReport rep;
    rep.t = t;
    rep.species = s;
    rep.identity = identity_from(sim, sol, t, s);
    const ProfilePair& mid = sol.mid[idx];
    const ProfilePair& lo_p = sol.minus[idx];
    const ProfilePair& hi_p = sol.plus[idx];
    const double m0 = s == Species::u ? sol.mass_u0 : sol.mass_v0;
    const auto pick = [s](const ProfilePair& p) -> const std::vector<double>& { return s == Species::u ? p.u : p.v; };
    const auto gap = [&](double r) {
        return std::abs(macro::tail_integral(lo_p.grid, pick(lo_p), r) - macro::tail_integral(hi_p.grid, pick(hi_p), r));
    };
    for (std::size_t i = 0; i < intervals.size(); ++i) {
        IntervalCheck c;
        c.lo = intervals[i].first;
        c.hi = intervals[i].second;
        c.reference = macro::tail_integral(mid.grid, pick(mid), c.lo) - macro::tail_integral(mid.grid, pick(mid), c.hi);
        c.ref_err = 0.5 * (gap(c.lo) + gap(c.hi));
        c.mc = add(scaled_fraction(sim.initial.in_interval[i], sim.initial.n, m0),
                   sol.kappa > 0.0 ? scaled_fraction(sim.source.in_interval[i], sim.source.n, sol.kappa * t)
                                   : Estimate{});
        const double err = std::hypot(c.mc.se, c.ref_err);
        c.z = err > 0.0 ? (c.mc.value - c.reference) / err : 0.0;
        rep.max_abs_z = std::max(rep.max_abs_z, std::abs(c.z));
        rep.intervals.push_back(c);
    }
    return rep;
}

MassIdentity mass_identity_check(const FbpSolution& sol, const ProfilePair& p0, double t, Species s,
                                 const McOptions& opt) {
    return identity_from(simulate(sol, p0, t, s, {}, opt), sol, t, s);
}

// ---------------------------------------------------------------------------

void write_boundaries_csv(const BoundaryCurves& b, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << "t,U,V\n" << std::setprecision(17);
    for (std::size_t k = 0; k < b.size(); ++k) os << b.times[k] << ',' << b.U[k] << ',' << b.V[k] << '\n';
}

std::vector<std::string> write_slices(const FbpSolution& sol, const std::string& dir) {
    std::filesystem::create_directories(dir);
    std::vector<std::string> names;
    std::ofstream idx(dir + "/slices.csv");
    if (!idx) throw std::runtime_error("cannot write " + dir + "/slices.csv");
    idx << "index,t,file,bracket_width\n" << std::setprecision(17);
    for (std::size_t k = 0; k < sol.times.size(); ++k) {
        std::ostringstream name;
        name << "slice_" << std::setw(5) << std::setfill('0') << k << ".csv";
        macro::write_profile_csv(sol.mid[k], dir + "/" + name.str());
        idx << k << ',' << sol.times[k] << ',' << name.str() << ',' << sol.bracket_width[k] << '\n';
        names.push_back(name.str());
    }
    return names;
}

nlohmann::json summary_json(const FbpSolution& sol) {
    double max_width = 0.0, max_excess = -INFINITY;
    for (double w : sol.bracket_width) max_width = std::max(max_width, w);
    for (double e : sol.bracket_excess) max_excess = std::max(max_excess, e);
    return {{"kappa", sol.kappa},
            {"delta", sol.delta},
            {"T", sol.T},
            {"threshold_rel", sol.threshold_rel},
            {"slices", sol.times.size()},
            {"mass_u0", sol.mass_u0},
            {"mass_v0", sol.mass_v0},
            {"max_mass_drift", sol.max_mass_drift},
            {"max_bracket_width", max_width},
            {"max_bracket_excess", max_excess},
            {"completed", sol.completed},
            {"front_method", sol.front_method},
            {"flag", sol.flag}};
}

}  // namespace sepdiff::fbp
