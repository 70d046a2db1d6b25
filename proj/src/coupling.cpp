#include "sepdiff/coupling.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <map>
#include <thread>

#include "sepdiff/aux.hpp"

namespace sepdiff::coupling {

namespace {

// Tail masses of both count maps walked from the right; calls f(site, Fp, F).
template <class F>
void scan_tails(const SiteCounts& xi_prime, const SiteCounts& xi, F&& f) {
    auto ip = xi_prime.rbegin();
    auto iq = xi.rbegin();
    std::int64_t fp = 0, fq = 0;
    while (ip != xi_prime.rend() || iq != xi.rend()) {
        Site s;
        if (ip == xi_prime.rend()) s = iq->first;
        else if (iq == xi.rend()) s = ip->first;
        else s = std::max(ip->first, iq->first);
        if (ip != xi_prime.rend() && ip->first == s) fp += (ip++)->second;
        if (iq != xi.rend() && iq->first == s) fq += (iq++)->second;
        if (!f(s, fp, fq)) return;
    }
}

SiteCounts a_counts(const std::vector<Site>& x, const std::vector<Color>& c) {
    SiteCounts out;
    for (std::size_t i = 0; i < x.size(); ++i)
        if (c[i] == Color::a) out[x[i]] += 1;
    return out;
}

std::string label_str(Label i) { return std::to_string(i + 1); }

void swap_colors(CoupledState& st, Label i, Label j, Side side) {
    auto& c = side == Side::first ? st.sigma : st.sigma_prime;
    std::swap(c[i], c[j]);
}

}  // namespace

bool dominates(const SiteCounts& xi_prime, const SiteCounts& xi) { return !domination_witness(xi_prime, xi); }

std::optional<Site> domination_witness(const SiteCounts& xi_prime, const SiteCounts& xi) {
    std::optional<Site> w;
    scan_tails(xi_prime, xi, [&](Site s, std::int64_t fp, std::int64_t fq) {
        if (fp > fq) {
            w = s;
            return false;
        }
        return true;
    });
    return w;
}

std::size_t domination_violations(const SiteCounts& xi_prime, const SiteCounts& xi) {
    // Tails are constant between support sites, so counting breakpoints suffices.
    std::size_t n = 0;
    scan_tails(xi_prime, xi, [&](Site, std::int64_t fp, std::int64_t fq) {
        n += fp > fq ? 1 : 0;
        return true;
    });
    return n;
}

SiteCounts CoupledState::xi() const { return a_counts(x, sigma); }
SiteCounts CoupledState::xi_prime() const { return a_counts(x, sigma_prime); }

// ---------------------------------------------------------------------------

std::vector<std::pair<Label, Label>> Splitting::pairs() const {
    std::vector<std::pair<Label, Label>> out;
    for (Label i = 0; i < size(); ++i)
        if (role[i] == Role::pair_first) out.emplace_back(i, partner[i]);
    return out;
}

std::vector<Label> Splitting::singletons() const {
    std::vector<Label> out;
    for (Label i = 0; i < size(); ++i)
        if (role[i] == Role::single_a || role[i] == Role::single_b) out.push_back(i);
    return out;
}

std::size_t Splitting::pair_count() const {
    return static_cast<std::size_t>(std::count(role.begin(), role.end(), Role::pair_first));
}

void Splitting::make_single(Label i, Color c) {
    role[i] = c == Color::a ? Role::single_a : Role::single_b;
    partner[i] = none;
    I.erase(i);
    J.erase(i);
}

void Splitting::make_pair(Label i, Label j) {
    role[i] = Role::pair_first;
    role[j] = Role::pair_second;
    partner[i] = j;
    partner[j] = i;
    I.erase(i);
    J.erase(i);
    I.erase(j);
    J.erase(j);
}

void Splitting::make_I(Label i) {
    role[i] = Role::disc_I;
    partner[i] = none;
    J.erase(i);
    I.insert(i);
}

void Splitting::make_J(Label i) {
    role[i] = Role::disc_J;
    partner[i] = none;
    I.erase(i);
    J.insert(i);
}

std::vector<std::string> check_splitting(const Splitting& spl, const CoupledState& st) {
    std::vector<std::string> err;
    const std::size_t M = st.size();
    if (spl.size() != M || st.sigma.size() != M || st.sigma_prime.size() != M) {
        err.push_back("size mismatch between splitting and coupled state");
        return err;
    }
    for (Label i = 0; i < M; ++i) {
        const Color s = st.sigma[i], sp = st.sigma_prime[i];
        const std::string who = "label " + label_str(i);
        switch (spl.role[i]) {
            case Role::single_a:
                if (s != Color::a || sp != Color::a) err.push_back(who + ": a-singleton without colors (a,a)");
                break;
            case Role::single_b:
                if (s != Color::b || sp != Color::b) err.push_back(who + ": b-singleton without colors (b,b)");
                break;
            case Role::pair_first: {
                const Label j = spl.partner[i];
                if (s != Color::a || sp != Color::b) err.push_back(who + ": pair head without colors (a,b)");
                if (j >= M || spl.role[j] != Role::pair_second || spl.partner[j] != i) {
                    err.push_back(who + ": broken pair link");
                } else if (!(st.x[i] > st.x[j])) {
                    err.push_back(who + ": pair (" + label_str(i) + "," + label_str(j) + ") not strictly ordered");
                }
                break;
            }
            case Role::pair_second: {
                const Label j = spl.partner[i];
                if (s != Color::b || sp != Color::a) err.push_back(who + ": pair tail without colors (b,a)");
                if (j >= M || spl.role[j] != Role::pair_first || spl.partner[j] != i) {
                    err.push_back(who + ": broken pair link");
                }
                break;
            }
            case Role::disc_I:
                if (s != Color::b || sp != Color::a) err.push_back(who + ": I-discrepancy without colors (b,a)");
                if (!spl.I.count(i)) err.push_back(who + ": tagged I but not in I");
                break;
            case Role::disc_J:
                if (s != Color::a || sp != Color::b) err.push_back(who + ": J-discrepancy without colors (a,b)");
                if (!spl.J.count(i)) err.push_back(who + ": tagged J but not in J");
                break;
        }
    }
    for (Label i : spl.I)
        if (i >= M || spl.role[i] != Role::disc_I) err.push_back("I holds a label not tagged I");
    for (Label i : spl.J)
        if (i >= M || spl.role[i] != Role::disc_J) err.push_back("J holds a label not tagged J");
    return err;
}

Splitting build_splitting(CoupledState& st, Side swap_side) {
    const std::size_t M = st.size();
    if (st.sigma.size() != M || st.sigma_prime.size() != M) throw std::invalid_argument("coupled state size mismatch");
    const auto na = std::count(st.sigma.begin(), st.sigma.end(), Color::a);
    const auto npa = std::count(st.sigma_prime.begin(), st.sigma_prime.end(), Color::a);
    if (na != npa) throw std::invalid_argument("coupled copies hold different numbers of a-particles");
    if (const auto w = domination_witness(st.xi_prime(), st.xi())) {
        throw OrderError("second copy not dominated by the first at site " + std::to_string(*w), *w);
    }

    Splitting spl(M);
    std::map<Site, std::vector<Label>> A, B;  // (a,b) and (b,a) labels by site
    for (Label i = 0; i < M; ++i) {
        if (st.sigma[i] == st.sigma_prime[i]) spl.make_single(i, st.sigma[i]);
        else if (st.sigma[i] == Color::a) A[st.x[i]].push_back(i);
        else B[st.x[i]].push_back(i);
    }
    std::vector<Label> rest_a, rest_b;
    for (auto& [site, la] : A) {
        auto it = B.find(site);
        std::size_t used = 0;
        if (it != B.end()) {
            auto& lb = it->second;
            for (; used < la.size() && used < lb.size(); ++used) {
                const Label i = la[used], j = lb[used];
                swap_colors(st, i, j, swap_side);
                spl.make_single(i, st.sigma[i]);
                spl.make_single(j, st.sigma[j]);
            }
            lb.erase(lb.begin(), lb.begin() + static_cast<std::ptrdiff_t>(used));
        }
        rest_a.insert(rest_a.end(), la.begin() + static_cast<std::ptrdiff_t>(used), la.end());
    }
    for (auto& [site, lb] : B) rest_b.insert(rest_b.end(), lb.begin(), lb.end());

    const auto by_pos_desc = [&](Label p, Label q) { return st.x[p] != st.x[q] ? st.x[p] > st.x[q] : p > q; };
    std::sort(rest_a.begin(), rest_a.end(), by_pos_desc);
    std::sort(rest_b.begin(), rest_b.end(), by_pos_desc);
    if (rest_a.size() != rest_b.size()) throw InternalFault("unbalanced discrepancy lists in build_splitting");
    for (std::size_t k = 0; k < rest_a.size(); ++k) {
        const Label i = rest_a[k], j = rest_b[k];
        if (!(st.x[i] > st.x[j])) throw OrderError("rank matching failed", st.x[j]);
        spl.make_pair(i, j);
    }
    return spl;
}

bool dissolve_if_collided(Splitting& spl, CoupledState& st, Label label, Side swap_side) {
    const Role r = spl.role[label];
    if (r != Role::pair_first && r != Role::pair_second) return false;
    const Label i = r == Role::pair_first ? label : spl.partner[label];
    const Label j = spl.partner[i];
    if (st.x[i] != st.x[j]) return false;
    swap_colors(st, i, j, swap_side);
    spl.make_single(i, st.sigma[i]);
    spl.make_single(j, st.sigma[j]);
    return true;
}

std::size_t dissolve_collisions(Splitting& spl, CoupledState& st, Side swap_side) {
    std::size_t n = 0;
    for (const auto& [i, j] : spl.pairs()) n += dissolve_if_collided(spl, st, i, swap_side) ? 1 : 0;
    return n;
}

// ---------------------------------------------------------------------------

CMapCase apply_C1(Splitting& spl, const CoupledState& st, Mark mark, Label i) {
    (void)st;
    const Role r = spl.role[i];
    if (mark == Mark::right) {
        if (r == Role::pair_first) {
            const Label j = spl.partner[i];
            spl.make_single(i, Color::b);
            spl.make_I(j);
            return CMapCase::a;
        }
        if (r == Role::single_a) {
            spl.make_I(i);
            return CMapCase::b;
        }
        if (r == Role::disc_J) {
            spl.make_single(i, Color::b);
            return CMapCase::c;
        }
    } else {
        if (r == Role::pair_second) {
            const Label j = spl.partner[i];
            spl.make_single(i, Color::a);
            spl.make_J(j);
            return CMapCase::a;
        }
        if (r == Role::single_b) {
            spl.make_J(i);
            return CMapCase::b;
        }
        if (r == Role::disc_I) {
            spl.make_single(i, Color::a);
            return CMapCase::c;
        }
    }
    throw InternalFault("C1: no case matches label " + label_str(i));
}

CMapCase apply_C2(Splitting& spl, const CoupledState& st, Mark mark, Label i) {
    (void)st;
    const Role r = spl.role[i];
    if (mark == Mark::right) {
        if (r == Role::pair_second) {
            const Label j = spl.partner[i];
            spl.make_single(i, Color::b);
            if (!spl.I.empty()) spl.make_pair(j, *spl.I.rbegin());
            else spl.make_J(j);
            return CMapCase::a;
        }
        if (r == Role::single_a) {
            if (!spl.I.empty()) spl.make_pair(i, *spl.I.rbegin());
            else spl.make_J(i);
            return CMapCase::b;
        }
        if (r == Role::disc_I) {
            spl.make_single(i, Color::b);
            return CMapCase::c;
        }
    } else {
        if (r == Role::pair_first) {
            const Label j = spl.partner[i];
            spl.make_single(i, Color::a);
            if (!spl.J.empty()) spl.make_pair(*spl.J.rbegin(), j);
            else spl.make_I(j);
            return CMapCase::a;
        }
        if (r == Role::single_b) {
            if (!spl.J.empty()) spl.make_pair(*spl.J.rbegin(), i);
            else spl.make_I(i);
            return CMapCase::b;
        }
        if (r == Role::disc_J) {
            spl.make_single(i, Color::a);
            return CMapCase::c;
        }
    }
    throw InternalFault("C2: no case matches label " + label_str(i));
}

std::optional<CMapCase> step_C1(Splitting& spl, CoupledState& st, Mark mark) {
    const auto i = lattice::apply_H_inplace(st.x, st.sigma, mark);
    if (!i) return std::nullopt;
    return apply_C1(spl, st, mark, *i);
}

std::optional<CMapCase> step_C2(Splitting& spl, CoupledState& st, Mark mark, Side swap_side) {
    const auto i = lattice::apply_H_inplace(st.x, st.sigma_prime, mark);
    if (!i) return std::nullopt;
    const CMapCase c = apply_C2(spl, st, mark, *i);
    if (c == CMapCase::b) dissolve_if_collided(spl, st, *i, swap_side);
    return c;
}

BalanceReport balance_check(const std::vector<Mark>& marks, const std::vector<StepRecord>& history) {
    BalanceReport rep;
    const std::size_t m = marks.size();
    if (history.size() != 2 * m) {
        rep.ok = false;
        rep.message = "history holds " + std::to_string(history.size()) + " steps, expected " + std::to_string(2 * m);
        return rep;
    }
    for (std::size_t q = 1; q <= 2 * m; ++q) {
        long nr = 0, nl = 0;
        const std::size_t from = q <= m ? 0 : q - m;
        const std::size_t to = q <= m ? q : m;
        for (std::size_t k = from; k < to; ++k) (marks[k] == Mark::right ? nr : nl) += 1;
        const StepRecord& s = history[q - 1];
        const long lhs = nr - static_cast<long>(s.I);
        const long rhs = nl - static_cast<long>(s.J);
        if (lhs != rhs || lhs < 0) {
            rep.ok = false;
            rep.first_bad_q = static_cast<int>(q);
            rep.message = "balance broken at q=" + std::to_string(q) + ": " + std::to_string(nr) + "-" +
                          std::to_string(s.I) + " vs " + std::to_string(nl) + "-" + std::to_string(s.J);
            return rep;
        }
    }
    if (m > 0 && (history.back().I != 0 || history.back().J != 0)) {
        rep.ok = false;
        rep.first_bad_q = static_cast<int>(2 * m);
        rep.message = "discrepancies left at the end of the sweep";
    }
    return rep;
}

nlohmann::json to_json(const std::vector<StepRecord>& history) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& s : history) {
        arr.push_back({{"q", s.q},
                       {"phase", s.phase},
                       {"mark", lattice::to_string(s.mark)},
                       {"case", std::string(1, s.cmap_case)},
                       {"I", s.I},
                       {"J", s.J},
                       {"pairs", s.pairs}});
    }
    return arr;
}

SweepResult run_sweep(CoupledState st, const std::vector<Mark>& marks) {
    SweepResult res;
    Splitting spl = build_splitting(st);
    const auto record = [&](int q, int phase, Mark mark, std::optional<CMapCase> c) {
        if (!c) {
            res.faults.push_back("no-op flip at q=" + std::to_string(q));
            return;
        }
        res.history.push_back({q, phase, mark, static_cast<char>(*c), spl.I.size(), spl.J.size(), spl.pair_count()});
        for (auto& e : check_splitting(spl, st)) res.faults.push_back("q=" + std::to_string(q) + ": " + e);
    };
    const int m = static_cast<int>(marks.size());
    try {
        for (int q = 1; q <= m; ++q) record(q, 1, marks[q - 1], step_C1(spl, st, marks[q - 1]));
        for (int q = 1; q <= m; ++q) record(m + q, 2, marks[q - 1], step_C2(spl, st, marks[q - 1]));
    } catch (const InternalFault& e) {
        res.faults.emplace_back(e.what());
    }
    res.balance = balance_check(marks, res.history);
    res.final_order = dominates(st.xi_prime(), st.xi());
    return res;
}

// ---------------------------------------------------------------------------

nlohmann::json ExhaustiveReport::to_json() const {
    return {{"instances", instances},   {"sweeps", sweeps},
            {"skipped_noop", skipped_noop}, {"violations", violations},
            {"roundtrip_failures", roundtrip_failures}, {"examples", examples},
            {"seconds", seconds}};
}

namespace {

std::string describe(const CoupledState& st, const std::vector<Mark>& marks) {
    std::string s = "x=";
    for (Site v : st.x) s += std::to_string(v) + ' ';
    s += "sigma=";
    for (Color c : st.sigma) s += lattice::to_char(c);
    s += " sigma'=";
    for (Color c : st.sigma_prime) s += lattice::to_char(c);
    s += " marks=";
    for (Mark m : marks) s += m == Mark::right ? 'R' : 'L';
    return s;
}

bool has_noop(std::size_t h_a, std::size_t M, const std::vector<Mark>& marks) {
    std::size_t n = h_a;
    for (Mark m : marks) {
        if (m == Mark::right) {
            if (n == 0) return true;
            --n;
        } else {
            if (n == M) return true;
            ++n;
        }
    }
    return false;
}

}  // namespace

ExhaustiveReport exhaustive_check(std::size_t max_particles, int n_sites, std::size_t max_marks) {
    const auto start = std::chrono::steady_clock::now();
    ExhaustiveReport rep;
    std::vector<std::vector<Mark>> sequences{{}};
    for (std::size_t len = 1; len <= max_marks; ++len) {
        for (std::size_t code = 0; code < (std::size_t{1} << len); ++code) {
            std::vector<Mark> s(len);
            for (std::size_t k = 0; k < len; ++k) s[k] = (code >> k) & 1 ? Mark::left : Mark::right;
            sequences.push_back(std::move(s));
        }
    }
    const auto note = [&](const std::string& msg) {
        if (rep.examples.size() < 10) rep.examples.push_back(msg);
    };

    for (std::size_t M = 1; M <= max_particles; ++M) {
        std::size_t n_pos = 1;
        for (std::size_t k = 0; k < M; ++k) n_pos *= static_cast<std::size_t>(n_sites);
        const std::size_t n_col = std::size_t{1} << M;
        CoupledState st;
        st.x.resize(M);
        st.sigma.resize(M);
        st.sigma_prime.resize(M);
        for (std::size_t pc = 0; pc < n_pos; ++pc) {
            std::size_t code = pc;
            for (std::size_t k = 0; k < M; ++k) {
                st.x[k] = static_cast<Site>(code % static_cast<std::size_t>(n_sites));
                code /= static_cast<std::size_t>(n_sites);
            }
            for (std::size_t c1 = 0; c1 < n_col; ++c1) {
                for (std::size_t c2 = 0; c2 < n_col; ++c2) {
                    if (__builtin_popcountll(c1) != __builtin_popcountll(c2)) continue;
                    for (std::size_t k = 0; k < M; ++k) {
                        st.sigma[k] = (c1 >> k) & 1 ? Color::a : Color::b;
                        st.sigma_prime[k] = (c2 >> k) & 1 ? Color::a : Color::b;
                    }
                    const bool ordered = dominates(st.xi_prime(), st.xi());
                    if (!ordered) {
                        CoupledState probe = st;
                        try {
                            build_splitting(probe);
                            ++rep.roundtrip_failures;
                            note("splitting built for an unordered pair: " + describe(st, {}));
                        } catch (const OrderError&) {
                        }
                        continue;
                    }
                    ++rep.instances;
                    {
                        CoupledState probe = st;
                        const Splitting spl = build_splitting(probe);
                        const bool same_occ = probe.xi() == st.xi() && probe.xi_prime() == st.xi_prime();
                        if (!spl.I.empty() || !spl.J.empty() || !check_splitting(spl, probe).empty() || !same_occ) {
                            ++rep.roundtrip_failures;
                            note("bad initial splitting: " + describe(st, {}));
                        }
                    }
                    const auto h_a = static_cast<std::size_t>(__builtin_popcountll(c1));
                    for (const auto& marks : sequences) {
                        if (has_noop(h_a, M, marks)) {
                            ++rep.skipped_noop;
                            continue;
                        }
                        ++rep.sweeps;
                        const SweepResult r = run_sweep(st, marks);
                        if (!r.balance.ok || !r.final_order || !r.faults.empty()) {
                            ++rep.violations;
                            std::string why = !r.balance.ok ? r.balance.message
                                              : !r.faults.empty() ? r.faults.front()
                                                                  : std::string("final order lost");
                            note(describe(st, marks) + ": " + why);
                        }
                    }
                }
            }
        }
    }
    rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return rep;
}

// ---------------------------------------------------------------------------

nlohmann::json SandwichReport::to_json() const {
    nlohmann::json seeds_arr = nlohmann::json::array();
    for (const auto& s : per_seed) {
        seeds_arr.push_back({{"seed", s.seed},
                             {"in_X", s.in_X},
                             {"M", s.M},
                             {"blocks", s.blocks},
                             {"rings", s.rings},
                             {"violations_lower", s.violations_lower},
                             {"violations_upper", s.violations_upper},
                             {"count_mismatch", s.count_mismatch},
                             {"literal_violations", s.literal_violations},
                             {"faults", s.faults},
                             {"fault_messages", s.fault_messages}});
    }
    return {{"epsilon", cfg.epsilon},
            {"kappa", cfg.kappa},
            {"horizon_T", cfg.horizon_T},
            {"seed", cfg.seed},
            {"delta", delta},
            {"seeds", seeds},
            {"in_X_runs", in_X_runs},
            {"exclusion_rate", exclusion_rate()},
            {"violations", violations},
            {"count_mismatches", count_mismatches},
            {"faults", faults},
            {"literal_violations", literal_violations},
            {"literal_runs_with_violation", literal_runs_with_violation},
            {"passed", passed()},
            {"per_seed", seeds_arr}};
}

SandwichSeed sandwich_seed(const macro::ProfilePair& profile, const lattice::SimConfig& cfg, double delta,
                           std::uint64_t seed) {
    cfg.validate();
    SandwichSeed out;
    out.seed = seed;
    Rng r_init = make_rng(seed, Stream::initial);
    Rng r_walk = make_rng(seed, Stream::walks);
    Rng r_clock = make_rng(seed, Stream::clock);
    const lattice::ParticleState ps0 = lattice::sample_initial(profile, cfg, r_init);
    const std::size_t K = aux::block_count(cfg.horizon_T, delta);
    const double block_len = cfg.micro(delta);
    const double t_end = block_len * static_cast<double>(K);
    const lattice::WalkRealization walk(ps0.positions, cfg.walk_rate, t_end, r_walk);
    const lattice::EventLog log = lattice::sample_clock(cfg, r_clock, t_end);
    out.M = ps0.size();
    out.blocks = K;
    out.rings = log.size();
    out.in_X = lattice::in_X(ps0.count_a(), out.M, log, t_end);
    if (!out.in_X) return out;

    const auto fault = [&](const std::string& msg) {
        ++out.faults;
        if (out.fault_messages.size() < 5) out.fault_messages.push_back(msg);
    };

    // Literal block evolutions, reported as a diagnostic.
    {
        const auto plus = aux::run_aux(ps0, walk, log, block_len, K, macro::Variant::plus);
        const auto minus = aux::run_aux(ps0, walk, log, block_len, K, macro::Variant::minus);
        lattice::TrueTrajectory traj(ps0, walk, log);
        for (std::size_t k = 1; k <= K; ++k) {
            const auto xi = lattice::occupation(traj.at(plus[k].time)).xi;
            out.literal_violations += domination_violations(lattice::occupation(minus[k]).xi, xi);
            out.literal_violations += domination_violations(xi, lattice::occupation(plus[k]).xi);
        }
    }

    lattice::TrueTrajectory reference(ps0, walk, log);
    CoupledState lo{ps0.positions, ps0.colors, ps0.colors};  // (true, minus)
    CoupledState up{ps0.positions, ps0.colors, ps0.colors};  // (plus, true)
    const auto& jumps = walk.jumps();
    std::size_t next_jump = 0;

    try {
        for (std::size_t k = 0; k < K; ++k) {
            const aux::Block b{block_len * static_cast<double>(k), block_len * static_cast<double>(k + 1)};
            const auto [first, last] = aux::block_rings(log, b);
            Splitting s_lo = build_splitting(lo, Side::second);
            Splitting s_up = build_splitting(up, Side::first);

            for (std::size_t r = first; r < last; ++r) {
                if (!step_C1(s_up, up, log.marks[r])) fault("no-op flip in the plus copy");
            }
            std::size_t r = first;
            while (true) {
                const double tj = next_jump < jumps.size() && jumps[next_jump].time <= b.t1 ? jumps[next_jump].time
                                                                                            : INFINITY;
                const double tr = r < last ? log.times[r] : INFINITY;
                if (tj == INFINITY && tr == INFINITY) break;
                if (tj <= tr) {
                    const auto& jp = jumps[next_jump++];
                    lo.x[jp.label] += jp.step;
                    up.x[jp.label] += jp.step;
                    dissolve_if_collided(s_lo, lo, jp.label, Side::second);
                    dissolve_if_collided(s_up, up, jp.label, Side::first);
                } else {
                    const Mark mk = log.marks[r++];
                    if (!step_C1(s_lo, lo, mk)) fault("no-op flip in the true copy");
                    if (!step_C2(s_up, up, mk, Side::first)) fault("no-op flip in the true copy");
                }
            }
            for (std::size_t q = first; q < last; ++q) {
                if (!step_C2(s_lo, lo, log.marks[q], Side::second)) fault("no-op flip in the minus copy");
            }

            const std::string at = " after block " + std::to_string(k + 1);
            if (!s_lo.I.empty() || !s_lo.J.empty()) fault("lower coupling left discrepancies" + at);
            if (!s_up.I.empty() || !s_up.J.empty()) fault("upper coupling left discrepancies" + at);
            for (const auto& e : check_splitting(s_lo, lo)) fault("lower: " + e + at);
            for (const auto& e : check_splitting(s_up, up)) fault("upper: " + e + at);

            const lattice::ParticleState& truth = reference.at(b.t1);
            if (truth.positions != lo.x || truth.colors != lo.sigma || lo.sigma != up.sigma_prime) {
                fault("true copy diverged from the reference trajectory" + at);
            }
            const SiteCounts xi_true = lo.xi();
            const SiteCounts xi_minus = lo.xi_prime();
            const SiteCounts xi_plus = up.xi();
            out.violations_lower += domination_violations(xi_minus, xi_true);
            out.violations_upper += domination_violations(xi_true, xi_plus);
            const auto count = [](const std::vector<Color>& c) { return std::count(c.begin(), c.end(), Color::a); };
            if (count(lo.sigma) != count(lo.sigma_prime) || count(lo.sigma) != count(up.sigma)) ++out.count_mismatch;
        }
    } catch (const std::exception& e) {
        fault(e.what());
    }
    return out;
}

SandwichReport verify_sandwich(const lattice::SimConfig& cfg, const macro::ProfilePair& profile, double delta,
                               std::size_t n_seeds, unsigned threads) {
    cfg.validate();
    if (!(delta > 0.0)) throw std::invalid_argument("delta must be positive");
    SandwichReport rep;
    rep.cfg = cfg;
    rep.delta = delta;
    rep.seeds = n_seeds;
    rep.per_seed.resize(n_seeds);
    std::atomic<std::size_t> next{0};
    const auto worker = [&] {
        for (std::size_t s; (s = next++) < n_seeds;) {
            rep.per_seed[s] = sandwich_seed(profile, cfg, delta, replica_seed(cfg.seed, s));
        }
    };
    const unsigned n_threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n_seeds)));
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < n_threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    for (const auto& s : rep.per_seed) {
        rep.faults += s.faults;
        if (!s.in_X) continue;
        ++rep.in_X_runs;
        rep.violations += s.violations_lower + s.violations_upper;
        rep.count_mismatches += s.count_mismatch;
        rep.literal_violations += s.literal_violations;
        rep.literal_runs_with_violation += s.literal_violations > 0 ? 1 : 0;
    }
    return rep;
}

}  // namespace sepdiff::coupling
