#ifndef MATCHSURV_SIMULATE_HPP
#define MATCHSURV_SIMULATE_HPP

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "matchsurv/cohort.hpp"
#include "matchsurv/matching.hpp"
#include "matchsurv/pipeline.hpp"
#include "matchsurv/rng.hpp"

namespace matchsurv {

// Exponential event-time generator with three standard-normal covariates:
// z1 drives everything (confounder), zt only treatment, zd only death.
struct SimConfig {
    std::size_t n = 1000;

    double treat_rate = 0.5;            // baseline treatment hazard
    double untreated_death_rate = 0.5;  // baseline treatment-free death hazard
    double treated_death_rate = 0.2;    // baseline post-treatment death hazard
    double censor_rate = 0.2;           // baseline censoring hazard

    double treat_confounder = 0.15;  // z1 -> treatment
    double treat_driver = 1.0;       // zt -> treatment
    double death_confounder = 0.25;  // z1 -> treatment-free death
    double death_driver = 1.0;       // zd -> treatment-free death
    double post_confounder = 0.20;   // z1 -> post-treatment death
    double post_driver = 0.15;       // zd -> post-treatment death
    double post_shift = -0.7;        // intercept shift of the post-treatment hazard
    double censor_confounder = 0.2;  // z1 -> censoring

    double tau = 3.0;   // latest treatment time admitted for matching
    double tau1 = 5.0;  // post-treatment follow-up horizon

    MatchCriterion criterion{MatchMode::prognostic, 0.0, 1.1};
    std::vector<double> eval_times{0.5, 1.0, 1.5};
    std::uint64_t seed = 12345;
    std::size_t truth_draws = 1000000;
    FitOptions fit_options;
};

// Every potential outcome of one simulated subject, censoring-free.
struct CounterfactualRecord {
    double z1 = 0.0, zt = 0.0, zd = 0.0;
    double treat_time = 0.0;       // potential T
    double untreated_death = 0.0;  // potential D0
    double post_gap = 0.0;         // potential D1 - T
    double censor_time = 0.0;      // potential C
};

class SimulationError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

class ReplicationBudgetError : public std::runtime_error {
public:
    ReplicationBudgetError(std::size_t failed, std::size_t reps)
        : std::runtime_error("failed replications exceed budget: " + std::to_string(failed) +
                             " of " + std::to_string(reps)) {}
};

// One cohort draw. Deterministic in (cfg.seed, rep): replication streams are
// independent, so runs parallelize without changing results.
inline std::pair<Cohort, std::vector<CounterfactualRecord>> generate_cohort(
    const SimConfig& cfg, std::uint64_t rep) {
    Rng rng = Rng::stream(cfg.seed, rep);
    std::vector<SubjectRecord> subjects;
    std::vector<CounterfactualRecord> truth;
    subjects.reserve(cfg.n);
    truth.reserve(cfg.n);
    for (std::size_t i = 0; i < cfg.n; ++i) {
        CounterfactualRecord cf;
        cf.z1 = rng.normal();
        cf.zt = rng.normal();
        cf.zd = rng.normal();
        cf.treat_time = rng.exponential(
            cfg.treat_rate * std::exp(cfg.treat_confounder * cf.z1 + cfg.treat_driver * cf.zt));
        cf.untreated_death = rng.exponential(
            cfg.untreated_death_rate *
            std::exp(cfg.death_confounder * cf.z1 + cfg.death_driver * cf.zd));
        cf.post_gap = rng.exponential(
            cfg.treated_death_rate *
            std::exp(cfg.post_confounder * cf.z1 + cfg.post_driver * cf.zd + cfg.post_shift));
        cf.censor_time = rng.exponential(cfg.censor_rate *
                                         std::exp(cfg.censor_confounder * cf.z1));

        SubjectRecord s;
        s.id = static_cast<std::int64_t>(i) + 1;
        s.covariates = {cf.z1, cf.zt, cf.zd};
        if (cf.treat_time < std::min(cf.untreated_death, cf.censor_time)) {
            const double death_time = cf.treat_time + cf.post_gap;
            s.treated = true;
            s.treat_time = cf.treat_time;
            s.obs_time = std::min(death_time, cf.censor_time);
            s.death = death_time < cf.censor_time;
        } else {
            s.obs_time = std::min(cf.untreated_death, cf.censor_time);
            s.death = cf.untreated_death < cf.censor_time;
        }
        subjects.push_back(std::move(s));
        truth.push_back(cf);
    }
    return {validate_cohort(std::move(subjects)), std::move(truth)};
}

struct TruthTable {
    std::vector<double> times;
    std::vector<double> s1, s0, delta;
    std::vector<double> se_s1, se_s0, se_delta;  // Monte-Carlo standard errors
    std::size_t draws = 0;
    std::size_t population = 0;  // counterfactual subjects with T < D0 and T <= tau
};

// Ground truth by counterfactual averaging in a censoring-free world,
// restricted to the treated-and-identifiable population {T < D0, T <= tau}.
inline TruthTable true_att(const SimConfig& cfg, const std::vector<double>& t_grid,
                           std::size_t draws) {
    if (draws < 100000)
        throw std::invalid_argument("true_att: at least 1e5 counterfactual draws required");
    constexpr std::uint64_t kTruthStream = 0x7472757468ULL;
    Rng rng = Rng::stream(cfg.seed, kTruthStream);

    TruthTable table;
    table.times = t_grid;
    table.draws = draws;
    const std::size_t nt = t_grid.size();
    std::vector<std::size_t> c1(nt, 0), c0(nt, 0), cboth(nt, 0);
    std::size_t pop = 0;
    for (std::size_t m = 0; m < draws; ++m) {
        const double z1 = rng.normal();
        const double zt = rng.normal();
        const double zd = rng.normal();
        const double t_treat = rng.exponential(
            cfg.treat_rate * std::exp(cfg.treat_confounder * z1 + cfg.treat_driver * zt));
        const double d0 = rng.exponential(
            cfg.untreated_death_rate *
            std::exp(cfg.death_confounder * z1 + cfg.death_driver * zd));
        const double gap = rng.exponential(
            cfg.treated_death_rate *
            std::exp(cfg.post_confounder * z1 + cfg.post_driver * zd + cfg.post_shift));
        if (!(t_treat < d0 && t_treat <= cfg.tau)) continue;
        ++pop;
        for (std::size_t j = 0; j < nt; ++j) {
            const bool alive1 = gap > t_grid[j];
            const bool alive0 = d0 - t_treat > t_grid[j];
            c1[j] += alive1 ? 1 : 0;
            c0[j] += alive0 ? 1 : 0;
            cboth[j] += (alive1 && alive0) ? 1 : 0;
        }
    }
    if (pop == 0) throw SimulationError("EmptyTreatedPopulation: no counterfactual subject has T < D0 and T <= tau");
    table.population = pop;
    const double m = static_cast<double>(pop);
    for (std::size_t j = 0; j < nt; ++j) {
        const double p1 = static_cast<double>(c1[j]) / m;
        const double p0 = static_cast<double>(c0[j]) / m;
        const double pb = static_cast<double>(cboth[j]) / m;
        table.s1.push_back(p1);
        table.s0.push_back(p0);
        table.delta.push_back(p1 - p0);
        table.se_s1.push_back(std::sqrt(p1 * (1.0 - p1) / m));
        table.se_s0.push_back(std::sqrt(p0 * (1.0 - p0) / m));
        // delta indicator is (alive1 - alive0), a three-valued variate
        const double p10 = p1 - pb;
        const double p01 = p0 - pb;
        const double vd = p10 + p01 - (p10 - p01) * (p10 - p01);
        table.se_delta.push_back(std::sqrt(std::max(vd, 0.0) / m));
    }
    return table;
}

struct ReplicationResult {
    bool ok = false;
    std::string error;
    std::vector<double> s0, s1, delta;           // estimates at cfg.eval_times
    std::vector<double> se_s0, se_s1, se_delta;  // sigma/sqrt(n)
    double match_rate = 1.0;
    std::size_t pairs = 0;
    std::size_t unmatched = 0;
};

// Full pipeline on one generated cohort: fit, match, weight, estimate,
// variance. Deterministic in (cfg, rep).
inline ReplicationResult run_replication(const SimConfig& cfg, std::uint64_t rep) {
    ReplicationResult out;
    try {
        auto [cohort, truth] = generate_cohort(cfg, rep);
        AnalysisOptions opts;
        opts.criterion = cfg.criterion;
        opts.tau = cfg.tau;
        opts.tau1 = cfg.tau1;
        opts.eval_times = cfg.eval_times;
        opts.fit_options = cfg.fit_options;
        AnalysisResult res = analyze(cohort, opts);
        for (double t : cfg.eval_times) {
            out.s0.push_back(res.s0.value(t));
            out.s1.push_back(res.s1.value(t));
            out.delta.push_back(res.delta.value(t));
            out.se_s0.push_back(res.s0.std_error(t));
            out.se_s1.push_back(res.s1.std_error(t));
            out.se_delta.push_back(res.delta.std_error(t));
        }
        out.match_rate = res.match.match_rate;
        out.pairs = res.match.pairs.size();
        out.unmatched = res.match.unmatched_treated.size();
        out.ok = true;
    } catch (const std::exception& e) {
        out.ok = false;
        out.error = e.what();
    }
    return out;
}

struct MCRow {
    std::string quantity;  // "S0", "S1", "delta"
    double t = 0.0;
    double truth = 0.0;
    double est = 0.0;
    double bias = 0.0;
    double esd = 0.0;         // NaN when fewer than 2 replications
    double ase = 0.0;
    double cp_percent = 0.0;  // coverage of nominal 95% Wald intervals
};

struct MCSummary {
    std::size_t reps = 0;
    std::size_t failed = 0;
    TruthTable truth;
    std::vector<MCRow> rows;  // S0 rows, then S1, then delta, by time
    double match_rate_mean = std::numeric_limits<double>::quiet_NaN();
    double match_rate_sd = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

template <typename F>
inline void parallel_for(std::size_t count, unsigned threads, F&& body) {
    if (threads <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) body(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) body(i);
    };
    std::vector<std::thread> pool;
    const unsigned spawn = std::min<unsigned>(threads, static_cast<unsigned>(count));
    pool.reserve(spawn);
    for (unsigned w = 0; w < spawn; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
}

inline double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? std::numeric_limits<double>::quiet_NaN()
                     : s / static_cast<double>(v.size());
}

inline double sd_of(const std::vector<double>& v) {
    if (v.size() < 2) return std::numeric_limits<double>::quiet_NaN();
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace detail

// Monte-Carlo study: truth by counterfactual averaging, then `reps`
// independent replications aggregated into Est/Bias/ESD/ASE/CP rows.
// Results do not depend on the thread count.
inline MCSummary run_mc(const SimConfig& cfg, std::size_t reps, unsigned threads = 0) {
    if (reps < 1) throw std::invalid_argument("run_mc: reps must be >= 1");
    for (double t : cfg.eval_times)
        if (!(t >= 0.0) || t > cfg.tau1)
            throw std::invalid_argument("run_mc: eval times must lie in [0, tau1]");
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());

    MCSummary summary;
    summary.reps = reps;
    summary.truth = true_att(cfg, cfg.eval_times, cfg.truth_draws);

    std::vector<ReplicationResult> results(reps);
    detail::parallel_for(reps, threads,
                         [&](std::size_t r) { results[r] = run_replication(cfg, r); });

    std::size_t failed = 0;
    for (const auto& r : results) failed += r.ok ? 0 : 1;
    summary.failed = failed;
    if (static_cast<double>(failed) > 0.005 * static_cast<double>(reps))
        throw ReplicationBudgetError(failed, reps);

    const std::size_t nt = cfg.eval_times.size();
    struct Slot {
        const char* name;
        std::vector<double> ReplicationResult::*est;
        std::vector<double> ReplicationResult::*se;
        const std::vector<double> TruthTable::*truth;
    };
    const Slot slots[3] = {
        {"S0", &ReplicationResult::s0, &ReplicationResult::se_s0, &TruthTable::s0},
        {"S1", &ReplicationResult::s1, &ReplicationResult::se_s1, &TruthTable::s1},
        {"delta", &ReplicationResult::delta, &ReplicationResult::se_delta, &TruthTable::delta},
    };
    for (const Slot& slot : slots) {
        for (std::size_t j = 0; j < nt; ++j) {
            std::vector<double> est, se;
            est.reserve(reps);
            se.reserve(reps);
            std::size_t covered = 0, used = 0;
            const double truth = (summary.truth.*slot.truth)[j];
            for (const auto& r : results) {
                if (!r.ok) continue;
                const double e = (r.*slot.est)[j];
                const double s = (r.*slot.se)[j];
                est.push_back(e);
                se.push_back(s);
                ++used;
                if (std::abs(e - truth) <= 1.959963984540054 * s) ++covered;
            }
            MCRow row;
            row.quantity = slot.name;
            row.t = cfg.eval_times[j];
            row.truth = truth;
            row.est = detail::mean_of(est);
            row.bias = row.est - truth;
            row.esd = detail::sd_of(est);
            row.ase = detail::mean_of(se);
            row.cp_percent =
                used == 0 ? std::numeric_limits<double>::quiet_NaN()
                          : 100.0 * static_cast<double>(covered) / static_cast<double>(used);
            summary.rows.push_back(std::move(row));
        }
    }

    std::vector<double> rates;
    rates.reserve(reps);
    for (const auto& r : results)
        if (r.ok) rates.push_back(r.match_rate);
    summary.match_rate_mean = detail::mean_of(rates);
    summary.match_rate_sd = detail::sd_of(rates);
    return summary;
}

// Named generator settings. "null", "strong", "medium", "negative" are the
// calibration scenarios; first_set_config builds the efficiency-comparison
// ladder entries.
inline SimConfig preset_config(const std::string& name) {
    SimConfig cfg;  // defaults = first-set shared parameters
    cfg.treat_driver = 0.5;
    cfg.criterion = MatchCriterion{MatchMode::prognostic, 0.0, 1.1};
    if (name == "null") {
        cfg.treat_rate = 0.7;
        cfg.untreated_death_rate = 0.7;
        cfg.treated_death_rate = 0.7;
        cfg.death_confounder = 0.25;
        cfg.death_driver = 0.50;
        cfg.post_confounder = 0.20;
        cfg.post_driver = 0.50;
        cfg.post_shift = 0.0;
    } else if (name == "strong") {
        cfg.treat_rate = 0.5;
        cfg.untreated_death_rate = 0.5;
        cfg.treated_death_rate = 0.5;
        cfg.death_confounder = 0.5;
        cfg.death_driver = 1.0;
        cfg.post_confounder = 0.20;
        cfg.post_driver = 0.15;
        cfg.post_shift = -1.0;
    } else if (name == "medium") {
        cfg.treat_rate = 0.5;
        cfg.untreated_death_rate = 0.5;
        cfg.treated_death_rate = 0.7;
        cfg.death_confounder = 0.25;
        cfg.death_driver = 0.5;
        cfg.post_confounder = 0.20;
        cfg.post_driver = 0.15;
        cfg.post_shift = -0.7;
    } else if (name == "negative") {
        cfg.treat_rate = 0.5;
        cfg.untreated_death_rate = 0.5;
        cfg.treated_death_rate = 0.7;
        cfg.death_confounder = 0.25;
        cfg.death_driver = 0.5;
        cfg.post_confounder = 0.20;
        cfg.post_driver = 0.15;
        cfg.post_shift = 0.4;
    } else {
        throw std::invalid_argument("unknown preset: " + name);
    }
    return cfg;
}

inline SimConfig first_set_config(double treat_driver, double death_driver, MatchMode mode) {
    SimConfig cfg;  // defaults already carry the first-set shared parameters
    cfg.treat_driver = treat_driver;
    cfg.death_driver = death_driver;
    switch (mode) {
        case MatchMode::prognostic:
            cfg.criterion = MatchCriterion{MatchMode::prognostic, 0.0, 1.1};
            break;
        case MatchMode::propensity:
            cfg.criterion = MatchCriterion{MatchMode::propensity, 1.1, 0.0};
            break;
        case MatchMode::double_score:
            cfg.criterion = MatchCriterion{MatchMode::double_score, 1.1, 1.1};
            break;
    }
    return cfg;
}

}  // namespace matchsurv

#endif  // MATCHSURV_SIMULATE_HPP
