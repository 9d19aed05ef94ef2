#ifndef MATCHSURV_ESTIMATORS_HPP
#define MATCHSURV_ESTIMATORS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "matchsurv/cohort.hpp"
#include "matchsurv/cox.hpp"
#include "matchsurv/matching.hpp"
#include "matchsurv/step_function.hpp"
#include "matchsurv/weights.hpp"

namespace matchsurv {

enum class CurveSide { treated, treatment_free, delta };

class HorizonMismatchError : public std::invalid_argument {
public:
    HorizonMismatchError()
        : std::invalid_argument("HorizonMismatch: curves have different tau/tau1/n") {}
};

class EvalOutOfRangeError : public std::out_of_range {
public:
    explicit EvalOutOfRangeError(double t, double tau1)
        : std::out_of_range("curve undefined at t = " + std::to_string(t) +
                            " (domain [0, " + std::to_string(tau1) + "])") {}
};

// A survival (or effect) curve on the shifted clock, defined on [0, tau1].
// For the treated / treatment-free sides the curve is exp(-cumhaz); the delta
// side stores the pointwise difference directly. Pointwise variance (of the
// sqrt(n)-scaled estimator) is attached after influence functions are
// computed; std_error(t) is then sigma(t)/sqrt(n).
class SurvivalCurve {
public:
    CurveSide side = CurveSide::treated;
    StepFunction cumhaz;      // empty for the delta side
    StepFunction delta_path;  // signed steps; delta side only
    StepFunction variance;    // sigma^2(t), signed steps; empty until attached
    std::size_t n = 0;
    double tau = 0.0;
    double tau1 = 0.0;
    bool no_events = false;         // no qualifying deaths: curve is flat
    std::size_t skipped_jumps = 0;  // death times whose weighted risk set was 0
    bool variance_attached = false;

    double cumulative_hazard(double t) const {
        check_domain(t);
        return cumhaz(t);
    }

    double survival(double t) const {
        check_domain(t);
        return std::exp(-cumhaz(t));
    }

    // Survival for the treated / treatment-free sides, difference for delta.
    double value(double t) const {
        if (side == CurveSide::delta) {
            check_domain(t);
            return delta_path(t);
        }
        return survival(t);
    }

    bool has_variance() const { return variance_attached; }

    double sigma2(double t) const {
        check_domain(t);
        return variance(t);
    }

    double std_error(double t) const {
        check_domain(t);
        if (n == 0) return 0.0;
        return std::sqrt(variance(t)) / std::sqrt(static_cast<double>(n));
    }

private:
    void check_domain(double t) const {
        if (!(t >= 0.0) || t > tau1) throw EvalOutOfRangeError(t, tau1);
    }
};

namespace detail {

// Generic weighted Nelson-Aalen accumulation. Processes expose support
// pruning and per-time evaluation; events are (shifted time, process index).
template <typename Process, typename Eval>
inline StepFunction weighted_nelson_aalen(const std::vector<const Process*>& by_support,
                                          const std::vector<std::pair<double, const Process*>>& events,
                                          Eval&& eval, std::size_t* skipped) {
    std::vector<double> times, jumps;
    std::size_t low = 0;
    std::size_t e = 0;
    while (e < events.size()) {
        const double x = events[e].first;
        // Retire processes that left the risk set before x; value() still
        // guards the boundary case of an open support end.
        while (low < by_support.size() && by_support[low]->support_end < x) ++low;
        double denom = 0.0;
        for (std::size_t j = low; j < by_support.size(); ++j)
            denom += eval(*by_support[j], x);
        double numer = 0.0;
        std::size_t e2 = e;
        for (; e2 < events.size() && events[e2].first == x; ++e2)
            numer += eval(*events[e2].second, x);
        e = e2;
        if (denom > 0.0) {
            times.push_back(x);
            jumps.push_back(numer / denom);
        } else if (skipped) {
            ++*skipped;
        }
    }
    return StepFunction(std::move(times), std::move(jumps));
}

}  // namespace detail

// Weighted Nelson-Aalen over matched treated subjects: jumps at shifted death
// times of matched treated subjects, each death contributing its own weight
// over the weighted at-risk sum.
inline SurvivalCurve estimate_S1(const Cohort& c, const MatchResult& match,
                                 const CoxFit& censor_fit, double tau, double tau1) {
    SurvivalCurve curve;
    curve.side = CurveSide::treated;
    curve.n = c.size();
    curve.tau = tau;
    curve.tau1 = tau1;

    auto ws = build_treated_weights(c, match, censor_fit, tau);
    std::vector<const TreatedWeight*> by_support;
    by_support.reserve(ws.size());
    for (const auto& w : ws) by_support.push_back(&w);
    std::sort(by_support.begin(), by_support.end(),
              [](const TreatedWeight* a, const TreatedWeight* b) {
                  if (a->support_end != b->support_end) return a->support_end < b->support_end;
                  return a->id < b->id;
              });

    std::vector<std::pair<double, const TreatedWeight*>> events;
    for (const auto& w : ws)
        if (w.death && w.death_shift > 0.0 && w.death_shift <= tau1)
            events.emplace_back(w.death_shift, &w);
    std::sort(events.begin(), events.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first < b.first;
        return a.second->id < b.second->id;
    });

    const StepFunction& base = censor_fit.baseline_cumhaz;
    curve.cumhaz = detail::weighted_nelson_aalen(
        by_support, events,
        [&base](const TreatedWeight& w, double t) { return w.value(base, t); },
        &curve.skipped_jumps);
    curve.no_events = curve.cumhaz.empty();
    return curve;
}

// Weighted Nelson-Aalen over matched pairs: jumps at shifted treatment-free
// death times of controls, a control death recurring once per matched set it
// belongs to.
inline SurvivalCurve estimate_S0(const Cohort& c, const MatchResult& match,
                                 const CoxFit& censor_fit, const CoxFit& treat_fit,
                                 double tau, double tau1) {
    SurvivalCurve curve;
    curve.side = CurveSide::treatment_free;
    curve.n = c.size();
    curve.tau = tau;
    curve.tau1 = tau1;

    auto ws = build_pair_weights(c, match, censor_fit, treat_fit, tau);
    std::vector<const PairWeight*> by_support;
    by_support.reserve(ws.size());
    for (const auto& w : ws) by_support.push_back(&w);
    std::sort(by_support.begin(), by_support.end(), [](const PairWeight* a, const PairWeight* b) {
        if (a->support_end != b->support_end) return a->support_end < b->support_end;
        if (a->control_id != b->control_id) return a->control_id < b->control_id;
        return a->treated_id < b->treated_id;
    });

    std::vector<std::pair<double, const PairWeight*>> events;
    for (const auto& w : ws)
        if (w.death && w.death_shift > 0.0 && w.death_shift <= tau1)
            events.emplace_back(w.death_shift, &w);
    std::sort(events.begin(), events.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first < b.first;
        if (a.second->control_id != b.second->control_id)
            return a.second->control_id < b.second->control_id;
        return a.second->treated_id < b.second->treated_id;
    });

    const StepFunction& cbase = censor_fit.baseline_cumhaz;
    const StepFunction& tbase = treat_fit.baseline_cumhaz;
    curve.cumhaz = detail::weighted_nelson_aalen(
        by_support, events,
        [&cbase, &tbase](const PairWeight& w, double t) { return w.value(cbase, tbase, t); },
        &curve.skipped_jumps);
    curve.no_events = curve.cumhaz.empty();
    return curve;
}

// Pointwise difference S1 - S0 on the union of the two jump grids.
inline SurvivalCurve estimate_delta(const SurvivalCurve& s1, const SurvivalCurve& s0) {
    if (s1.tau != s0.tau || s1.tau1 != s0.tau1 || s1.n != s0.n) throw HorizonMismatchError();

    std::vector<double> grid;
    grid.reserve(s1.cumhaz.size() + s0.cumhaz.size());
    grid.insert(grid.end(), s1.cumhaz.jump_times().begin(), s1.cumhaz.jump_times().end());
    grid.insert(grid.end(), s0.cumhaz.jump_times().begin(), s0.cumhaz.jump_times().end());
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

    std::vector<double> steps;
    steps.reserve(grid.size());
    double prev = 0.0;  // delta(0) = 0: both curves start at 1
    for (double t : grid) {
        const double v = s1.survival(t) - s0.survival(t);
        steps.push_back(v - prev);
        prev = v;
    }

    SurvivalCurve curve;
    curve.side = CurveSide::delta;
    curve.n = s1.n;
    curve.tau = s1.tau;
    curve.tau1 = s1.tau1;
    curve.no_events = s1.no_events && s0.no_events;
    curve.delta_path = StepFunction(std::move(grid), std::move(steps));
    return curve;
}

}  // namespace matchsurv

#endif  // MATCHSURV_ESTIMATORS_HPP
