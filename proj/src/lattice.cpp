#include "sepdiff/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <stdexcept>

namespace sepdiff::lattice {

char to_char(Color c) { return c == Color::a ? 'a' : 'b'; }
const char* to_string(Mark m) { return m == Mark::right ? "right" : "left"; }

void SimConfig::validate() const {
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("epsilon must lie in (0, 1)");
    if (!(kappa >= 0.0) || !std::isfinite(kappa)) throw std::invalid_argument("kappa must be nonnegative");
    if (!(horizon_T > 0.0)) throw std::invalid_argument("horizon_T must be positive");
    if (!(walk_rate > 0.0)) throw std::invalid_argument("walk_rate must be positive");
}

std::size_t ParticleState::count_a() const {
    return static_cast<std::size_t>(std::count(colors.begin(), colors.end(), Color::a));
}

void ParticleState::validate() const {
    if (positions.empty()) throw std::invalid_argument("particle state must hold at least one particle");
    if (positions.size() != colors.size()) throw std::invalid_argument("positions and colors differ in length");
    if (!(time >= 0.0)) throw std::invalid_argument("particle state time must be nonnegative");
}

void EventLog::validate() const {
    if (times.size() != marks.size()) throw std::invalid_argument("event log: times and marks differ in length");
    for (std::size_t k = 0; k < times.size(); ++k) {
        if (!(times[k] > 0.0)) throw std::invalid_argument("event log: ring times must be positive");
        if (k > 0 && !(times[k] > times[k - 1])) {
            throw std::invalid_argument("event log: ring times must be strictly increasing");
        }
    }
}

// ---------------------------------------------------------------------------

std::size_t particle_count(const macro::ProfilePair& profile, double epsilon) {
    // Guard against a trapezoid mass landing a few ulps below an integer multiple.
    return static_cast<std::size_t>(std::floor(profile.mass_total() / epsilon + 1e-9));
}

ParticleState sample_initial(const macro::ProfilePair& profile, const SimConfig& cfg, Rng& rng) {
    cfg.validate();
    const macro::ClassUReport rep = macro::validate_class_U(profile);
    if (!rep.valid) {
        std::string msg = "initial profile is not in class U:";
        for (const auto& v : rep.violations) msg += " " + v + ";";
        throw std::invalid_argument(msg);
    }
    const std::size_t M = particle_count(profile, cfg.epsilon);
    if (M == 0) throw std::invalid_argument("initial profile yields zero particles at this epsilon");

    const auto first = static_cast<Site>(std::ceil(profile.grid.r_min / cfg.epsilon));
    const auto last = static_cast<Site>(std::floor(profile.grid.r_max() / cfg.epsilon));
    std::vector<Site> sites;
    std::vector<double> weights, pa;
    for (Site x = first; x <= last; ++x) {
        const double r = cfg.epsilon * static_cast<double>(x);
        const double u = profile.u_at(r);
        const double v = profile.v_at(r);
        if (u + v > 0.0) {
            sites.push_back(x);
            weights.push_back(u + v);
            pa.push_back(u / (u + v));
        }
    }
    if (sites.empty()) throw std::invalid_argument("initial profile has no mass on the lattice");

    std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    ParticleState ps;
    ps.positions.resize(M);
    ps.colors.resize(M);
    for (std::size_t i = 0; i < M; ++i) {
        const std::size_t k = pick(rng);
        ps.positions[i] = sites[k];
        ps.colors[i] = unif(rng) < pa[k] ? Color::a : Color::b;
    }
    return ps;
}

EventLog sample_clock(const SimConfig& cfg, Rng& rng, double t_end) {
    EventLog log;
    const double rate = cfg.clock_rate();
    if (rate <= 0.0) return log;
    std::exponential_distribution<double> gap(rate);
    std::bernoulli_distribution fair(0.5);
    double t = 0.0;
    while (true) {
        t += gap(rng);
        if (t > t_end) break;
        log.times.push_back(t);
        log.marks.push_back(fair(rng) ? Mark::right : Mark::left);
    }
    return log;
}

WalkRealization::WalkRealization(std::vector<Site> initial, double walk_rate, double t_end, Rng& rng)
    : initial_(std::move(initial)), t_end_(t_end) {
    if (initial_.empty()) return;
    const double total = walk_rate * static_cast<double>(initial_.size());
    std::exponential_distribution<double> gap(total);
    std::uniform_int_distribution<std::uint32_t> who(0, static_cast<std::uint32_t>(initial_.size() - 1));
    std::bernoulli_distribution fair(0.5);
    jumps_.reserve(static_cast<std::size_t>(total * t_end * 1.1) + 16);
    double t = 0.0;
    while (true) {
        t += gap(rng);
        if (t > t_end) break;
        const std::uint32_t i = who(rng);
        jumps_.push_back(Jump{t, i, static_cast<std::int8_t>(fair(rng) ? 1 : -1)});
    }
}

std::vector<Site> WalkRealization::positions_at(double t) const {
    if (t > t_end_ * (1.0 + 1e-12)) throw std::out_of_range("walk realization does not cover the query time");
    std::vector<Site> x = initial_;
    for (const Jump& j : jumps_) {
        if (j.time > t) break;
        x[j.label] += j.step;
    }
    return x;
}

ParticleState evolve_positions(const ParticleState& ps, double t1, double walk_rate, Rng& rng) {
    if (t1 < ps.time) throw std::invalid_argument("evolve_positions: t1 precedes the state time");
    ParticleState out = ps;
    const WalkRealization w(ps.positions, walk_rate, t1 - ps.time, rng);
    for (const Jump& j : w.jumps()) out.positions[j.label] += j.step;
    out.time = t1;
    return out;
}

// ---------------------------------------------------------------------------

std::optional<Label> rightmost_a(const std::vector<Site>& x, const std::vector<Color>& sigma) {
    std::optional<Label> best;
    for (Label i = 0; i < sigma.size(); ++i) {
        if (sigma[i] != Color::a) continue;
        // ascending labels: ties resolve to the largest label
        if (!best || x[i] >= x[*best]) best = i;
    }
    return best;
}

std::optional<Label> leftmost_b(const std::vector<Site>& x, const std::vector<Color>& sigma) {
    std::optional<Label> best;
    for (Label i = 0; i < sigma.size(); ++i) {
        if (sigma[i] != Color::b) continue;
        if (!best || x[i] <= x[*best]) best = i;
    }
    return best;
}

std::optional<Label> apply_H_inplace(const std::vector<Site>& x, std::vector<Color>& sigma, Mark mark) {
    if (mark == Mark::right) {
        const auto i = rightmost_a(x, sigma);
        if (i) sigma[*i] = Color::b;
        return i;
    }
    const auto i = leftmost_b(x, sigma);
    if (i) sigma[*i] = Color::a;
    return i;
}

ParticleState apply_H(const ParticleState& ps, Mark mark) {
    ParticleState out = ps;
    apply_H_inplace(out.positions, out.colors, mark);
    return out;
}

std::int64_t tally_a(std::size_t h_a0, const EventLog& log, double t) {
    auto n = static_cast<std::int64_t>(h_a0);
    for (std::size_t k = 0; k < log.size() && log.times[k] <= t; ++k) n += log.marks[k] == Mark::left ? 1 : -1;
    return n;
}

bool in_X(std::size_t h_a0, std::size_t M, const EventLog& log, double t) {
    auto n = static_cast<std::int64_t>(h_a0);
    const auto m = static_cast<std::int64_t>(M);
    if (n <= 0 || n >= m) return false;
    for (std::size_t k = 0; k < log.size() && log.times[k] <= t; ++k) {
        n += log.marks[k] == Mark::left ? 1 : -1;
        if (n <= 0 || n >= m) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------

TrueTrajectory::TrueTrajectory(ParticleState initial, const WalkRealization& walk, const EventLog& log)
    : initial_(std::move(initial)), walk_(&walk), log_(&log) {
    initial_.validate();
    log.validate();
    if (initial_.time != 0.0) throw std::invalid_argument("true evolution must start at time 0");
    if (walk.initial() != initial_.positions) {
        throw std::invalid_argument("walk realization does not start from the initial positions");
    }
    reset();
}

void TrueTrajectory::reset() {
    cur_ = initial_;
    next_jump_ = 0;
    next_ring_ = 0;
    noop_flips_ = 0;
}

const ParticleState& TrueTrajectory::at(double t) {
    if (t < cur_.time) reset();
    if (t > walk_->t_end() * (1.0 + 1e-12)) throw std::out_of_range("query time beyond the walk realization");
    const auto& jumps = walk_->jumps();
    while (true) {
        const double tj = next_jump_ < jumps.size() ? jumps[next_jump_].time : INFINITY;
        const double tr = next_ring_ < log_->size() ? log_->times[next_ring_] : INFINITY;
        if (std::min(tj, tr) > t) break;
        if (tj <= tr) {
            cur_.positions[jumps[next_jump_].label] += jumps[next_jump_].step;
            ++next_jump_;
        } else {
            if (!apply_H_inplace(cur_.positions, cur_.colors, log_->marks[next_ring_])) ++noop_flips_;
            ++next_ring_;
        }
    }
    cur_.time = t;
    return cur_;
}

std::vector<ParticleState> run_true(const ParticleState& ps, const WalkRealization& walk, const EventLog& log,
                                    const std::vector<double>& query_times) {
    TrueTrajectory traj(ps, walk, log);
    std::vector<ParticleState> out;
    out.reserve(query_times.size());
    for (double t : query_times) out.push_back(traj.at(t));
    return out;
}

// ---------------------------------------------------------------------------

OccupationPair occupation(const ParticleState& ps) {
    OccupationPair occ;
    for (std::size_t i = 0; i < ps.size(); ++i) {
        (ps.colors[i] == Color::a ? occ.xi : occ.eta)[ps.positions[i]] += 1;
    }
    return occ;
}

std::int64_t tail_mass(const SiteCounts& counts, Site x) {
    std::int64_t s = 0;
    for (auto it = counts.lower_bound(x); it != counts.end(); ++it) s += it->second;
    return s;
}

std::int64_t count_at(const SiteCounts& counts, Site x) {
    const auto it = counts.find(x);
    return it == counts.end() ? 0 : it->second;
}

macro::ProfilePair empirical_profile(const ParticleState& ps, const SimConfig& cfg, const macro::GridSpec& grid) {
    grid.validate();
    macro::ProfilePair p = macro::ProfilePair::make(grid, std::vector<double>(grid.n_nodes(), 0.0),
                                                    std::vector<double>(grid.n_nodes(), 0.0));
    if (!ps.positions.empty()) {
        const auto [lo, hi] = std::minmax_element(ps.positions.begin(), ps.positions.end());
        const double rlo = cfg.epsilon * static_cast<double>(*lo);
        const double rhi = cfg.epsilon * static_cast<double>(*hi);
        if (rlo < grid.r_min - 0.5 * grid.h || rhi > grid.r_max() + 0.5 * grid.h) {
            std::cerr << "warning: empirical_profile grid extended to cover particles in [" << rlo << ", " << rhi
                      << "]\n";
            p = macro::extend_to(p, rlo, rhi);
        }
    }
    for (std::size_t i = 0; i < ps.size(); ++i) {
        const double r = cfg.epsilon * static_cast<double>(ps.positions[i]);
        auto k = static_cast<std::size_t>(std::llround((r - p.grid.r_min) / p.grid.h));
        k = std::min(k, p.grid.n_cells);
        (ps.colors[i] == Color::a ? p.u : p.v)[k] += cfg.epsilon / p.grid.weight(k);
    }
    p.refresh_masses();
    return p;
}

double scaled_tail_a(const ParticleState& ps, double epsilon, Site site) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < ps.size(); ++i) n += (ps.colors[i] == Color::a && ps.positions[i] >= site) ? 1 : 0;
    return epsilon * static_cast<double>(n);
}

double scaled_tail_all(const ParticleState& ps, double epsilon, Site site) {
    std::size_t n = 0;
    for (Site x : ps.positions) n += x >= site ? 1 : 0;
    return epsilon * static_cast<double>(n);
}

void write_snapshot_csv(const std::vector<ParticleState>& states, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << "time,label,position,color\n" << std::setprecision(17);
    for (const ParticleState& s : states) {
        for (std::size_t i = 0; i < s.size(); ++i) {
            os << s.time << ',' << (i + 1) << ',' << s.positions[i] << ',' << to_char(s.colors[i]) << '\n';
        }
    }
}

void write_occupation_csv(const OccupationPair& occ, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path);
    os << "site,xi,eta\n";
    SiteCounts sites = occ.xi;
    for (const auto& [x, n] : occ.eta) sites[x] += 0;
    for (const auto& [x, n] : sites) os << x << ',' << count_at(occ.xi, x) << ',' << count_at(occ.eta, x) << '\n';
}

}  // namespace sepdiff::lattice
