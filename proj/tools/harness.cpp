#include "harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "sepdiff/aux.hpp"
#include "sepdiff/rng.hpp"

namespace sepdiff::harness {

using nlohmann::json;

namespace {

// Reads the members of one JSON object and rejects keys it does not know.
class Section {
public:
    Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
        if (!j_.is_object()) throw ConfigError(name_ + ": expected an object");
    }

    template <class T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception&) {
            throw ConfigError(name_ + "." + key + ": wrong type");
        }
    }

    const json* child(const char* key) {
        seen_.insert(key);
        return j_.contains(key) ? &j_.at(key) : nullptr;
    }

    void finish() const {
        for (const auto& [k, v] : j_.items()) {
            if (!seen_.count(k)) throw ConfigError(name_ + ": unknown key '" + k + "'");
        }
    }

private:
    const json& j_;
    std::string name_;
    std::set<std::string> seen_;
};

void require(bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
}

void require_positive_list(const std::vector<double>& xs, const std::string& what) {
    require(!xs.empty(), what + ": must not be empty");
    for (double x : xs) require(x > 0.0 && std::isfinite(x), what + ": entries must be positive");
}

void validate(const Config& c) {
    require(c.threads >= 1, "threads: must be >= 1");
    require(c.profile.kind == "tent" || c.profile.kind == "file", "profile.kind: expected \"tent\" or \"file\"");
    require(c.profile.h > 0.0, "profile.h: must be positive");
    require(c.profile.kind != "file" || !c.profile.path.empty(), "profile.path: required when kind is \"file\"");

    const auto& s = c.simulate;
    require(s.epsilon > 0.0 && s.epsilon < 1.0, "simulate.epsilon: must lie in (0, 1)");
    require(s.kappa >= 0.0, "simulate.kappa: must be nonnegative");
    require(s.T > 0.0, "simulate.T: must be positive");
    require(s.walk_rate > 0.0, "simulate.walk_rate: must be positive");
    require(s.grid_h > 0.0, "simulate.grid_h: must be positive");
    require(!s.times.empty(), "simulate.times: must not be empty");
    for (std::size_t i = 0; i < s.times.size(); ++i) {
        require(s.times[i] >= 0.0 && s.times[i] <= s.T, "simulate.times: entries must lie in [0, T]");
        require(i == 0 || s.times[i] > s.times[i - 1], "simulate.times: must be increasing");
    }

    const auto& cv = c.couple_verify;
    require(cv.epsilon > 0.0 && cv.epsilon < 1.0, "couple_verify.epsilon: must lie in (0, 1)");
    require(cv.kappa >= 0.0, "couple_verify.kappa: must be nonnegative");
    require(cv.T > 0.0 && cv.delta > 0.0, "couple_verify: T and delta must be positive");
    require(cv.seeds >= 1, "couple_verify.seeds: must be >= 1");
    require(cv.exhaustive.max_particles >= 1 && cv.exhaustive.n_sites >= 1,
            "couple_verify.exhaustive: bounds must be positive");

    const auto& b = c.barriers;
    require(b.kappa >= 0.0 && b.t > 0.0, "barriers: kappa >= 0 and t > 0 required");
    require_positive_list(b.deltas, "barriers.deltas");

    const auto& f = c.fbp;
    require(f.kappa >= 0.0 && f.T > 0.0 && f.delta > 0.0, "fbp: kappa >= 0, T > 0, delta > 0 required");
    require(f.store_every >= 1, "fbp.store_every: must be >= 1");
    require(f.flux_t0 < f.flux_t1 && f.flux_t1 <= f.T + 1e-12, "fbp: flux window must lie inside (0, T]");
    require(f.mc.paths >= 1 && f.mc.dt > 0.0 && f.mc.intervals >= 1, "fbp.mc: paths, dt and intervals must be positive");
    for (double t : f.mc.times) require(t > 0.0 && t <= f.T + 1e-12, "fbp.mc.times: entries must lie in (0, T]");
    require(f.mc.oracle.t > 0.0 && f.mc.oracle.x < f.mc.oracle.a, "fbp.mc.oracle: need t > 0 and x < a");

    const auto& h = c.hydro_compare;
    require(h.kappa >= 0.0 && h.t > 0.0 && h.ref_delta > 0.0, "hydro_compare: kappa >= 0, t > 0, ref_delta > 0");
    require_positive_list(h.epsilons, "hydro_compare.epsilons");
    for (double e : h.epsilons) require(e < 1.0, "hydro_compare.epsilons: entries must be below 1");
    require(h.seeds >= 2, "hydro_compare.seeds: must be >= 2");
}

void write_json(const json& j, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << j.dump(2) << '\n';
}

std::string format_time(double t) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4) << t;
    return os.str();
}

// Run directory bookkeeping: creates the directory and writes the manifest.
class Run {
public:
    Run(const Config& c, std::string command, std::string out)
        : c_(c), command_(std::move(command)), out_(std::move(out)), start_(std::chrono::steady_clock::now()) {
        std::filesystem::create_directories(out_);
    }

    std::string path(const std::string& name) {
        files_.push_back(name);
        return out_ + "/" + name;
    }

    int finish(json report, bool passed) {
        report["passed"] = passed;
        write_json(report, path("report.json"));
        const double wall =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        json m{{"tool", "sepdiff"},
               {"version", kVersion},
               {"compiler", __VERSION__},
               {"json_library", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                    std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                    std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
               {"command", command_},
               {"seed", c_.seed},
               {"threads", c_.threads},
               {"config", to_json(c_)},
               {"wall_time_s", wall},
               {"outputs", files_}};
        write_json(m, out_ + "/manifest.json");
        return passed ? 0 : 1;
    }

private:
    const Config& c_;
    std::string command_;
    std::string out_;
    std::chrono::steady_clock::time_point start_;
    std::vector<std::string> files_;
};

// Runs f(i) for i in [0, n) on up to `threads` workers.
template <class F>
void parallel_for(std::size_t n, unsigned threads, F f) {
    std::atomic<std::size_t> next{0};
    const auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) f(i);
    };
    const unsigned k = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n)));
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < k; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
}

double l1_pair(const macro::ProfilePair& p1, const macro::ProfilePair& p2) {
    macro::ProfilePair a = p1, b = p2;
    macro::align(a, b);
    double s = 0.0;
    for (std::size_t i = 0; i < a.u.size(); ++i) {
        s += a.grid.weight(i) * (std::abs(a.u[i] - b.u[i]) + std::abs(a.v[i] - b.v[i]));
    }
    return s;
}

macro::GridFunction marginal(const macro::ProfilePair& p) {
    macro::GridFunction g{p.grid, p.u};
    for (std::size_t i = 0; i < g.f.size(); ++i) g.f[i] += p.v[i];
    return g;
}

double relative_drift(double m, double m0) { return m0 > 0.0 ? std::abs(m - m0) / m0 : std::abs(m); }

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

Config config_from_json(const json& j) {
    Config c;
    Section root(j, "config");
    root.get("seed", c.seed);
    root.get("threads", c.threads);
    if (const json* p = root.child("profile")) {
        Section s(*p, "profile");
        s.get("kind", c.profile.kind);
        s.get("h", c.profile.h);
        s.get("path", c.profile.path);
        s.finish();
    }
    if (const json* p = root.child("simulate")) {
        Section s(*p, "simulate");
        s.get("epsilon", c.simulate.epsilon);
        s.get("kappa", c.simulate.kappa);
        s.get("T", c.simulate.T);
        s.get("walk_rate", c.simulate.walk_rate);
        s.get("times", c.simulate.times);
        s.get("grid_h", c.simulate.grid_h);
        s.finish();
    }
    if (const json* p = root.child("couple_verify")) {
        Section s(*p, "couple_verify");
        s.get("epsilon", c.couple_verify.epsilon);
        s.get("kappa", c.couple_verify.kappa);
        s.get("T", c.couple_verify.T);
        s.get("delta", c.couple_verify.delta);
        s.get("seeds", c.couple_verify.seeds);
        s.get("max_exclusion", c.couple_verify.max_exclusion);
        if (const json* e = s.child("exhaustive")) {
            Section x(*e, "couple_verify.exhaustive");
            x.get("max_particles", c.couple_verify.exhaustive.max_particles);
            x.get("n_sites", c.couple_verify.exhaustive.n_sites);
            x.get("max_marks", c.couple_verify.exhaustive.max_marks);
            x.finish();
        }
        s.finish();
    }
    if (const json* p = root.child("barriers")) {
        Section s(*p, "barriers");
        s.get("kappa", c.barriers.kappa);
        s.get("t", c.barriers.t);
        s.get("deltas", c.barriers.deltas);
        s.get("max_ratio", c.barriers.max_ratio);
        s.get("order_tol", c.barriers.order_tol);
        s.finish();
    }
    if (const json* p = root.child("fbp")) {
        Section s(*p, "fbp");
        s.get("kappa", c.fbp.kappa);
        s.get("T", c.fbp.T);
        s.get("delta", c.fbp.delta);
        s.get("threshold_rel", c.fbp.threshold_rel);
        s.get("store_every", c.fbp.store_every);
        s.get("flux_t0", c.fbp.flux_t0);
        s.get("flux_t1", c.fbp.flux_t1);
        s.get("flux_tol", c.fbp.flux_tol);
        if (const json* m = s.child("mc")) {
            Section x(*m, "fbp.mc");
            x.get("paths", c.fbp.mc.paths);
            x.get("dt", c.fbp.mc.dt);
            x.get("times", c.fbp.mc.times);
            x.get("intervals", c.fbp.mc.intervals);
            x.get("z_identity", c.fbp.mc.z_identity);
            x.get("z_interval", c.fbp.mc.z_interval);
            if (const json* o = x.child("oracle")) {
                Section y(*o, "fbp.mc.oracle");
                y.get("x", c.fbp.mc.oracle.x);
                y.get("a", c.fbp.mc.oracle.a);
                y.get("t", c.fbp.mc.oracle.t);
                y.finish();
            }
            x.finish();
        }
        s.finish();
    }
    if (const json* p = root.child("hydro_compare")) {
        Section s(*p, "hydro_compare");
        s.get("kappa", c.hydro_compare.kappa);
        s.get("t", c.hydro_compare.t);
        s.get("epsilons", c.hydro_compare.epsilons);
        s.get("seeds", c.hydro_compare.seeds);
        s.get("ref_delta", c.hydro_compare.ref_delta);
        s.get("heat_tol", c.hydro_compare.heat_tol);
        s.get("band_z", c.hydro_compare.band_z);
        s.finish();
    }
    root.finish();
    validate(c);
    return c;
}

Config load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot read config file " + path);
    json j;
    try {
        j = json::parse(is);
    } catch (const json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return config_from_json(j);
}

json to_json(const Config& c) {
    const auto& cv = c.couple_verify;
    const auto& f = c.fbp;
    const auto& h = c.hydro_compare;
    return {
        {"seed", c.seed},
        {"threads", c.threads},
        {"profile", {{"kind", c.profile.kind}, {"h", c.profile.h}, {"path", c.profile.path}}},
        {"simulate",
         {{"epsilon", c.simulate.epsilon},
          {"kappa", c.simulate.kappa},
          {"T", c.simulate.T},
          {"walk_rate", c.simulate.walk_rate},
          {"times", c.simulate.times},
          {"grid_h", c.simulate.grid_h}}},
        {"couple_verify",
         {{"epsilon", cv.epsilon},
          {"kappa", cv.kappa},
          {"T", cv.T},
          {"delta", cv.delta},
          {"seeds", cv.seeds},
          {"max_exclusion", cv.max_exclusion},
          {"exhaustive",
           {{"max_particles", cv.exhaustive.max_particles},
            {"n_sites", cv.exhaustive.n_sites},
            {"max_marks", cv.exhaustive.max_marks}}}}},
        {"barriers",
         {{"kappa", c.barriers.kappa},
          {"t", c.barriers.t},
          {"deltas", c.barriers.deltas},
          {"max_ratio", c.barriers.max_ratio},
          {"order_tol", c.barriers.order_tol}}},
        {"fbp",
         {{"kappa", f.kappa},
          {"T", f.T},
          {"delta", f.delta},
          {"threshold_rel", f.threshold_rel},
          {"store_every", f.store_every},
          {"flux_t0", f.flux_t0},
          {"flux_t1", f.flux_t1},
          {"flux_tol", f.flux_tol},
          {"mc",
           {{"paths", f.mc.paths},
            {"dt", f.mc.dt},
            {"times", f.mc.times},
            {"intervals", f.mc.intervals},
            {"z_identity", f.mc.z_identity},
            {"z_interval", f.mc.z_interval},
            {"oracle", {{"x", f.mc.oracle.x}, {"a", f.mc.oracle.a}, {"t", f.mc.oracle.t}}}}}}},
        {"hydro_compare",
         {{"kappa", h.kappa},
          {"t", h.t},
          {"epsilons", h.epsilons},
          {"seeds", h.seeds},
          {"ref_delta", h.ref_delta},
          {"heat_tol", h.heat_tol},
          {"band_z", h.band_z}}},
    };
}

macro::ProfilePair load_profile(const ProfileConfig& pc) {
    if (pc.kind == "tent") return macro::tent_pair(pc.h);
    if (!std::filesystem::exists(pc.path)) throw ConfigError("profile.path: file not found: " + pc.path);
    try {
        return macro::read_profile_csv(pc.path);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("profile.path: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Sweeps

std::vector<BarrierRow> barrier_sweep(const macro::ProfilePair& p0, double kappa, double t,
                                      const std::vector<double>& deltas) {
    std::vector<BarrierRow> rows;
    for (double delta : deltas) {
        const double nf = t / delta;
        const auto n = static_cast<std::size_t>(std::llround(nf));
        if (n == 0 || std::abs(nf - static_cast<double>(n)) > 1e-9 * nf) {
            throw std::invalid_argument("barrier_sweep: t must be a multiple of every delta");
        }
        BarrierRow row;
        row.delta = delta;
        row.steps = n;
        macro::ProfilePair plus = p0, minus = p0;
        macro::GridFunction heat = marginal(p0);
        for (std::size_t k = 0; k < n; ++k) {
            plus = macro::barrier_step(plus, delta, kappa, macro::Variant::plus);
            minus = macro::barrier_step(minus, delta, kappa, macro::Variant::minus);
            heat = macro::gauss_convolve(heat.grid, heat.f, delta);
            row.order_excess = std::max(row.order_excess, macro::order_mod_m(minus, plus, 0.0).max_excess);
            for (const macro::ProfilePair* p : {&plus, &minus}) {
                row.mass_drift = std::max({row.mass_drift, relative_drift(p->mass_u, p0.mass_u),
                                           relative_drift(p->mass_v, p0.mass_v)});
                row.marginal_l1 = std::max(row.marginal_l1, macro::l1_distance(marginal(*p), heat));
            }
        }
        row.l1_gap = l1_pair(plus, minus);
        row.ratio = rows.empty() || rows.back().l1_gap == 0.0 ? 0.0 : row.l1_gap / rows.back().l1_gap;
        rows.push_back(row);
    }
    return rows;
}

double heat_tail(const macro::ProfilePair& p0, double t, double r) {
    // Composite Simpson per grid cell of the piecewise-linear phi against the Gaussian tail.
    const macro::GridSpec& g = p0.grid;
    const double s = std::sqrt(2.0 * t);
    const auto phi = [&](double y) { return p0.u_at(y) + p0.v_at(y); };
    const auto integrand = [&](double y) { return phi(y) * 0.5 * std::erfc((r - y) / s); };
    constexpr int kSub = 8;
    double total = 0.0;
    for (std::size_t i = 0; i < g.n_cells; ++i) {
        const double a = g.node(i);
        const double hh = g.h / kSub;
        double acc = integrand(a) + integrand(a + g.h);
        for (int k = 1; k < kSub; ++k) acc += (k % 2 ? 4.0 : 2.0) * integrand(a + hh * k);
        total += acc * hh / 3.0;
    }
    return total;
}

HydroRow hydro_row(const macro::ProfilePair& p0, const fbp::FbpSolution& ref, double epsilon, double kappa,
                   double t, std::size_t seeds, std::uint64_t root_seed, unsigned threads) {
    const std::size_t idx = ref.slice_at(t);
    if (std::abs(ref.times[idx] - t) > 1e-9) throw std::invalid_argument("hydro_row: t is not a reference slice time");
    if (std::abs(ref.kappa - kappa) > 1e-15) throw std::invalid_argument("hydro_row: reference has a different kappa");
    lattice::SimConfig cfg;
    cfg.epsilon = epsilon;
    cfg.kappa = kappa;
    cfg.horizon_T = t;
    cfg.validate();

    HydroRow row;
    row.epsilon = epsilon;
    row.M = lattice::particle_count(p0, epsilon);
    if (row.M == 0) throw std::invalid_argument("hydro_row: the profile yields zero particles");
    row.seeds = seeds;

    // Evaluation sites: the initial support widened by 6 standard deviations of the walk.
    const macro::Support su = macro::support_of(p0.grid, p0.u);
    const macro::Support sv = macro::support_of(p0.grid, p0.v);
    const double spread = 6.0 * std::sqrt(t) + 2.0 * epsilon;
    const auto j_lo = static_cast<lattice::Site>(std::floor((std::min(su.lo, sv.lo) - spread) / epsilon));
    const auto j_hi = static_cast<lattice::Site>(std::ceil((std::max(su.hi, sv.hi) + spread) / epsilon));
    const auto n_j = static_cast<std::size_t>(j_hi - j_lo + 1);

    std::vector<std::vector<double>> tail_a(seeds), tail_all(seeds);
    std::vector<char> noop(seeds, 0);
    parallel_for(seeds, threads, [&](std::size_t s) {
        const std::uint64_t seed = replica_seed(root_seed, s);
        Rng r_init = make_rng(seed, Stream::initial);
        Rng r_walk = make_rng(seed, Stream::walks);
        Rng r_clock = make_rng(seed, Stream::clock);
        const lattice::ParticleState ps0 = lattice::sample_initial(p0, cfg, r_init);
        const double t_end = cfg.micro(t);
        const lattice::WalkRealization walk(ps0.positions, cfg.walk_rate, t_end, r_walk);
        const lattice::EventLog log = lattice::sample_clock(cfg, r_clock, t_end);
        lattice::TrueTrajectory traj(ps0, walk, log);
        const lattice::ParticleState& ps = traj.at(t_end);
        noop[s] = traj.noop_flips() > 0;
        // Histograms over [j_lo, j_hi], clamped, then suffix sums.
        std::vector<double> ha(n_j + 1, 0.0), hall(n_j + 1, 0.0);
        for (std::size_t i = 0; i < ps.size(); ++i) {
            const lattice::Site x = std::clamp(ps.positions[i], j_lo, j_hi);
            const auto k = static_cast<std::size_t>(x - j_lo);
            hall[k] += 1.0;
            if (ps.colors[i] == lattice::Color::a) ha[k] += 1.0;
        }
        for (std::size_t k = n_j; k-- > 0;) {
            ha[k] += ha[k + 1];
            hall[k] += hall[k + 1];
        }
        ha.pop_back();
        hall.pop_back();
        for (double& v : ha) v *= epsilon;
        for (double& v : hall) v *= epsilon;
        tail_a[s] = std::move(ha);
        tail_all[s] = std::move(hall);
    });
    row.noop_runs = static_cast<std::size_t>(std::count(noop.begin(), noop.end(), 1));

    const macro::ProfilePair& lo_p = ref.minus[idx];
    const macro::ProfilePair& hi_p = ref.plus[idx];
    const macro::ProfilePair& mid = ref.mid[idx];
    const double n = static_cast<double>(seeds);
    std::vector<double> sup_dev(seeds, 0.0);
    for (std::size_t k = 0; k < n_j; ++k) {
        const double r = epsilon * (static_cast<double>(j_lo + static_cast<lattice::Site>(k)) - 0.5);
        const double f_lo = macro::tail_integral(lo_p.grid, lo_p.u, r);
        const double f_hi = macro::tail_integral(hi_p.grid, hi_p.u, r);
        const double f_mid = macro::tail_integral(mid.grid, mid.u, r);
        double sa = 0.0, sa2 = 0.0, sall = 0.0;
        for (std::size_t s = 0; s < seeds; ++s) {
            sa += tail_a[s][k];
            sa2 += tail_a[s][k] * tail_a[s][k];
            sall += tail_all[s][k];
            sup_dev[s] = std::max(sup_dev[s], std::abs(tail_a[s][k] - f_mid));
        }
        const double mean = sa / n;
        const double var = std::max(0.0, (sa2 - n * mean * mean) / (n - 1.0));
        const double se = std::sqrt(var / n);
        const double heat = heat_tail(p0, t, r);
        const double blo = std::min(f_lo, f_hi), bhi = std::max(f_lo, f_hi);
        const double excess = std::max({0.0, blo - mean, mean - bhi});
        const double z = excess == 0.0 ? 0.0 : (se > 0.0 ? excess / se : INFINITY);
        row.band_max_z = std::max(row.band_max_z, z);
        row.band_max_excess = std::max(row.band_max_excess, excess);
        row.heat_sup_dist = std::max(row.heat_sup_dist, std::abs(sall / n - heat));
        row.r.push_back(r);
        row.mean_tail_a.push_back(mean);
        row.se_tail_a.push_back(se);
        row.mean_tail_all.push_back(sall / n);
        row.heat.push_back(heat);
        row.bracket_lo.push_back(blo);
        row.bracket_hi.push_back(bhi);
    }
    const double m = std::accumulate(sup_dev.begin(), sup_dev.end(), 0.0) / n;
    double v = 0.0;
    for (double d : sup_dev) v += (d - m) * (d - m);
    row.mean_sup_dev = m;
    row.se_sup_dev = std::sqrt(v / (n - 1.0) / n);
    return row;
}

// ---------------------------------------------------------------------------
// Commands

int cmd_simulate(const Config& c, const std::string& out) {
    const macro::ProfilePair p0 = load_profile(c.profile);
    const SimulateConfig& sc = c.simulate;
    lattice::SimConfig cfg;
    cfg.epsilon = sc.epsilon;
    cfg.kappa = sc.kappa;
    cfg.horizon_T = sc.T;
    cfg.walk_rate = sc.walk_rate;
    cfg.seed = c.seed;
    cfg.validate();
    if (lattice::particle_count(p0, cfg.epsilon) == 0) throw ConfigError("simulate: the profile yields zero particles");

    Run run(c, "simulate", out);
    Rng r_init = make_rng(c.seed, Stream::initial);
    Rng r_walk = make_rng(c.seed, Stream::walks);
    Rng r_clock = make_rng(c.seed, Stream::clock);
    const lattice::ParticleState ps0 = lattice::sample_initial(p0, cfg, r_init);
    const double t_end = cfg.micro_horizon();
    const lattice::WalkRealization walk(ps0.positions, cfg.walk_rate, t_end, r_walk);
    const lattice::EventLog log = lattice::sample_clock(cfg, r_clock, t_end);
    std::vector<double> query;
    for (double t : sc.times) query.push_back(cfg.micro(t));
    lattice::TrueTrajectory traj(ps0, walk, log);
    std::vector<lattice::ParticleState> states;
    for (double q : query) states.push_back(traj.at(q));
    const bool inx = lattice::in_X(ps0.count_a(), ps0.size(), log, t_end);

    lattice::write_snapshot_csv(states, run.path("snapshots.csv"));
    const macro::GridSpec grid = macro::GridSpec::from_range(
        p0.grid.r_min, p0.grid.r_max(),
        std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil((p0.grid.r_max() - p0.grid.r_min) / sc.grid_h))));
    json snaps = json::array();
    std::size_t mismatches = 0;
    for (std::size_t k = 0; k < states.size(); ++k) {
        const std::string tag = format_time(sc.times[k]);
        lattice::write_occupation_csv(lattice::occupation(states[k]), run.path("occupation_t" + tag + ".csv"));
        macro::write_profile_csv(lattice::empirical_profile(states[k], cfg, grid), run.path("profile_t" + tag + ".csv"));
        const auto recount = static_cast<std::int64_t>(states[k].count_a());
        const std::int64_t tally = lattice::tally_a(ps0.count_a(), log, query[k]);
        if (inx && recount != tally) ++mismatches;
        snaps.push_back({{"t", sc.times[k]}, {"micro_time", query[k]}, {"N_a", recount}, {"tally", tally}});
    }
    json report{{"command", "simulate"},
                {"M", ps0.size()},
                {"rings", log.size()},
                {"jumps", walk.jumps().size()},
                {"in_X", inx},
                {"noop_flips", traj.noop_flips()},
                {"count_mismatches", mismatches},
                {"snapshots", snaps}};
    return run.finish(report, mismatches == 0);
}

int cmd_couple_verify(const Config& c, const std::string& out) {
    const macro::ProfilePair p0 = load_profile(c.profile);
    const CoupleConfig& cc = c.couple_verify;
    lattice::SimConfig cfg;
    cfg.epsilon = cc.epsilon;
    cfg.kappa = cc.kappa;
    cfg.horizon_T = cc.T;
    cfg.seed = c.seed;
    cfg.validate();
    if (lattice::particle_count(p0, cfg.epsilon) == 0) throw ConfigError("couple_verify: the profile yields zero particles");

    Run run(c, "couple-verify", out);
    const coupling::ExhaustiveReport ex =
        coupling::exhaustive_check(cc.exhaustive.max_particles, cc.exhaustive.n_sites, cc.exhaustive.max_marks);
    const coupling::SandwichReport sw = coupling::verify_sandwich(cfg, p0, cc.delta, cc.seeds, c.threads);
    {
        std::ofstream os(run.path("sandwich_seeds.csv"));
        os << "seed,in_X,M,blocks,rings,violations_lower,violations_upper,count_mismatch,literal_violations,faults\n";
        for (const auto& s : sw.per_seed) {
            os << s.seed << ',' << s.in_X << ',' << s.M << ',' << s.blocks << ',' << s.rings << ','
               << s.violations_lower << ',' << s.violations_upper << ',' << s.count_mismatch << ','
               << s.literal_violations << ',' << s.faults << '\n';
        }
    }
    const bool ex_ok = ex.violations == 0 && ex.roundtrip_failures == 0;
    const bool sw_ok = sw.passed() && sw.exclusion_rate() < cc.max_exclusion;
    json report{{"command", "couple-verify"},
                {"exhaustive", ex.to_json()},
                {"exhaustive_passed", ex_ok},
                {"sandwich", sw.to_json()},
                {"sandwich_passed", sw_ok}};
    return run.finish(report, ex_ok && sw_ok);
}

int cmd_barriers(const Config& c, const std::string& out) {
    const macro::ProfilePair p0 = load_profile(c.profile);
    const BarriersConfig& bc = c.barriers;
    Run run(c, "barriers", out);
    const std::vector<BarrierRow> rows = barrier_sweep(p0, bc.kappa, bc.t, bc.deltas);
    std::ofstream os(run.path("barriers.csv"));
    os << "delta,steps,l1_gap,ratio,order_excess,mass_drift,marginal_l1\n" << std::setprecision(10);
    bool ok = true;
    json arr = json::array();
    for (std::size_t k = 0; k < rows.size(); ++k) {
        const BarrierRow& r = rows[k];
        os << r.delta << ',' << r.steps << ',' << r.l1_gap << ',' << r.ratio << ',' << r.order_excess << ','
           << r.mass_drift << ',' << r.marginal_l1 << '\n';
        const bool row_ok = (k == 0 || r.ratio <= bc.max_ratio) && r.order_excess <= bc.order_tol &&
                            r.mass_drift <= 1e-9 && r.marginal_l1 <= 1e-6;
        ok = ok && row_ok;
        arr.push_back({{"delta", r.delta},
                       {"steps", r.steps},
                       {"l1_gap", r.l1_gap},
                       {"ratio", r.ratio},
                       {"order_excess", r.order_excess},
                       {"mass_drift", r.mass_drift},
                       {"marginal_l1", r.marginal_l1},
                       {"passed", row_ok}});
    }
    return run.finish({{"command", "barriers"}, {"kappa", bc.kappa}, {"t", bc.t}, {"rows", arr}}, ok);
}

int cmd_fbp(const Config& c, const std::string& out) {
    const macro::ProfilePair p0 = load_profile(c.profile);
    const FbpConfig& fc = c.fbp;
    fbp::FbpOptions opt;
    opt.threshold_rel = fc.threshold_rel;
    opt.store_every = fc.store_every;
    Run run(c, "fbp", out);
    const fbp::FbpSolution sol = fbp::solve_reference(p0, fc.kappa, fc.T, fc.delta, opt);
    fbp::write_boundaries_csv(sol.boundaries, run.path("fronts.csv"));
    fbp::write_boundaries_csv(sol.cut_points, run.path("cut_points.csv"));
    fbp::write_boundaries_csv(fbp::extract_boundaries(sol), run.path("boundaries.csv"));
    for (const std::string& n : fbp::write_slices(sol, out + "/slices")) run.path("slices/" + n);
    run.path("slices/slices.csv");

    json report{{"command", "fbp"}, {"solution", fbp::summary_json(sol)}};
    bool ok = sol.completed;

    // Flux condition averaged over the stored slices in the window.
    double sum_l = 0.0, sum_r = 0.0;
    std::size_t n_flux = 0;
    {
        std::ofstream os(run.path("flux.csv"));
        os << "t,left,right\n" << std::setprecision(10);
        for (double t : sol.times) {
            if (t < fc.flux_t0 - 1e-12 || t > fc.flux_t1 + 1e-12 || t < 5.0 * sol.delta) continue;
            const fbp::Flux f = fbp::flux_at_boundary(sol, t);
            os << t << ',' << f.left << ',' << f.right << '\n';
            sum_l += f.left;
            sum_r += f.right;
            ++n_flux;
        }
    }
    const double mean_r = n_flux ? sum_r / static_cast<double>(n_flux) : 0.0;
    const double mean_l = n_flux ? sum_l / static_cast<double>(n_flux) : 0.0;
    const double k = fc.kappa;
    const bool flux_ok = n_flux > 0 && (k == 0.0 ? std::abs(mean_r) <= fc.flux_tol && std::abs(mean_l) <= fc.flux_tol
                                                 : std::abs(mean_r - k) <= fc.flux_tol * k &&
                                                       std::abs(mean_l + k) <= fc.flux_tol * k);
    report["flux"] = {{"slices", n_flux}, {"mean_right", mean_r}, {"mean_left", mean_l}, {"passed", flux_ok}};
    ok = ok && flux_ok;

    fbp::McOptions mo;
    mo.dt = fc.mc.dt;
    mo.n_paths = fc.mc.paths;
    mo.seed = c.seed;
    mo.threads = c.threads;
    const fbp::OracleCheck oc = fbp::constant_boundary_oracle(fc.mc.oracle.x, fc.mc.oracle.a, fc.mc.oracle.t, mo);
    const bool oracle_ok = std::abs(oc.z) <= 3.0;
    report["oracle"] = oc.to_json();
    report["oracle"]["passed"] = oracle_ok;
    ok = ok && oracle_ok;
    json mc = json::array();
    if (oracle_ok && !fc.mc.times.empty()) {
        std::vector<std::pair<double, fbp::Species>> runs;
        for (double t : fc.mc.times) runs.emplace_back(t, fbp::Species::u);
        runs.emplace_back(fc.mc.times.back(), fbp::Species::v);
        for (const auto& [t, s] : runs) {
            const auto iv = fbp::default_intervals(sol, t, s, fc.mc.intervals);
            const fbp::McReport r = fbp::mc_validate(sol, p0, t, s, iv, mo);
            const bool r_ok = std::abs(r.identity.z) <= fc.mc.z_identity && r.max_abs_z <= fc.mc.z_interval;
            json j = r.to_json();
            j["passed"] = r_ok;
            mc.push_back(j);
            ok = ok && r_ok;
        }
    }
    report["mc"] = mc;
    return run.finish(report, ok);
}

int cmd_hydro_compare(const Config& c, const std::string& out) {
    const macro::ProfilePair p0 = load_profile(c.profile);
    const HydroConfig& hc = c.hydro_compare;
    for (double e : hc.epsilons) {
        if (lattice::particle_count(p0, e) == 0) {
            throw ConfigError("hydro_compare: epsilon " + std::to_string(e) + " yields zero particles");
        }
    }
    std::vector<double> eps = hc.epsilons;
    std::sort(eps.begin(), eps.end(), std::greater<>());

    Run run(c, "hydro-compare", out);
    fbp::FbpOptions opt;
    opt.extrapolate = false;
    opt.store_every = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(hc.t / hc.ref_delta)));
    const fbp::FbpSolution ref = fbp::solve_reference(p0, hc.kappa, hc.t, hc.ref_delta, opt);

    std::vector<HydroRow> rows;
    for (double e : eps) rows.push_back(hydro_row(p0, ref, e, hc.kappa, hc.t, hc.seeds, c.seed, c.threads));

    std::ofstream os(run.path("hydro.csv"));
    os << "epsilon,M,seeds,noop_runs,mean_sup_dev,se_sup_dev,heat_sup_dist,band_max_z,band_max_excess\n"
       << std::setprecision(10);
    json arr = json::array();
    for (const HydroRow& r : rows) {
        os << r.epsilon << ',' << r.M << ',' << r.seeds << ',' << r.noop_runs << ',' << r.mean_sup_dev << ','
           << r.se_sup_dev << ',' << r.heat_sup_dist << ',' << r.band_max_z << ',' << r.band_max_excess << '\n';
        std::ostringstream name;
        name << "tails_eps" << r.epsilon << ".csv";
        std::ofstream ts(run.path(name.str()));
        ts << "r,mean_tail_a,se_tail_a,bracket_lo,bracket_hi,mean_tail_all,heat\n" << std::setprecision(10);
        for (std::size_t k = 0; k < r.r.size(); ++k) {
            ts << r.r[k] << ',' << r.mean_tail_a[k] << ',' << r.se_tail_a[k] << ',' << r.bracket_lo[k] << ','
               << r.bracket_hi[k] << ',' << r.mean_tail_all[k] << ',' << r.heat[k] << '\n';
        }
        arr.push_back({{"epsilon", r.epsilon},
                       {"M", r.M},
                       {"seeds", r.seeds},
                       {"noop_runs", r.noop_runs},
                       {"mean_sup_dev", r.mean_sup_dev},
                       {"se_sup_dev", r.se_sup_dev},
                       {"heat_sup_dist", r.heat_sup_dist},
                       {"band_max_z", r.band_max_z},
                       {"band_max_excess", r.band_max_excess}});
    }
    bool monotone = true;
    for (std::size_t k = 1; k < rows.size(); ++k) monotone = monotone && rows[k].mean_sup_dev < rows[k - 1].mean_sup_dev;
    const HydroRow& finest = rows.back();
    const bool band_ok = finest.band_max_z <= hc.band_z;
    const bool heat_ok = finest.heat_sup_dist <= hc.heat_tol;
    json report{{"command", "hydro-compare"},
                {"kappa", hc.kappa},
                {"t", hc.t},
                {"reference", fbp::summary_json(ref)},
                {"rows", arr},
                {"monotone", monotone},
                {"band_passed", band_ok},
                {"heat_passed", heat_ok}};
    return run.finish(report, monotone && band_ok && heat_ok);
}

}  // namespace sepdiff::harness
