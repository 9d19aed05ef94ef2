#ifndef MATCHSURV_VARIANCE_HPP
#define MATCHSURV_VARIANCE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "matchsurv/cohort.hpp"
#include "matchsurv/cox.hpp"
#include "matchsurv/estimators.hpp"
#include "matchsurv/matching.hpp"
#include "matchsurv/step_function.hpp"
#include "matchsurv/weights.hpp"

namespace matchsurv {

class CohortMismatchError : public std::invalid_argument {
public:
    CohortMismatchError()
        : std::invalid_argument("CohortMismatch: influence tables/curves disagree on n") {}
};

// Per-subject influence paths phi_i(.) on one side, stored per grid time for
// contiguous reduction over subjects. The paths are step functions jumping
// only at the curve's jump times; subjects that never carry weight stay 0.
struct InfluenceTable {
    std::size_t n = 0;
    std::vector<double> times;               // curve jump grid, ascending
    std::vector<double> pi;                  // weighted at-risk mean at each grid time
    std::vector<std::vector<double>> paths;  // paths[j][i] = phi_i(times[j])

    double eval(std::size_t subject, double t) const {
        auto it = std::upper_bound(times.begin(), times.end(), t);
        if (it == times.begin()) return 0.0;
        return paths[static_cast<std::size_t>(it - times.begin()) - 1][subject];
    }
};

namespace detail {

struct KahanSum {
    double sum = 0.0;
    double carry = 0.0;
    void add(double x) {
        const double y = x - carry;
        const double t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
};

inline std::size_t owner_index(const TreatedWeight& w) { return w.subject; }
inline std::size_t owner_index(const PairWeight& w) { return w.control; }

// Shared sweep for both sides: processes sorted by support end, grid = curve
// jump times. At each grid time the martingale residual of every process with
// positive weight feeds its owner's influence path.
template <typename Process, typename Eval>
inline InfluenceTable influence_sweep(std::size_t n, const std::vector<const Process*>& by_support,
                                      const StepFunction& cumhaz, Eval&& eval) {
    InfluenceTable table;
    table.n = n;
    table.times = cumhaz.jump_times();
    const std::size_t J = table.times.size();
    table.pi.assign(J, 0.0);
    table.paths.assign(J, std::vector<double>());

    std::vector<double> phi(n, 0.0);
    std::size_t low = 0;
    for (std::size_t j = 0; j < J; ++j) {
        const double u = table.times[j];
        const double dL = cumhaz.jump_sizes()[j];
        while (low < by_support.size() && by_support[low]->support_end < u) ++low;
        double denom = 0.0;
        for (std::size_t r = low; r < by_support.size(); ++r)
            denom += eval(*by_support[r], u);
        table.pi[j] = denom / static_cast<double>(n);
        if (denom > 0.0) {
            const double inv_pi = static_cast<double>(n) / denom;
            for (std::size_t r = low; r < by_support.size(); ++r) {
                const Process& w = *by_support[r];
                const double wv = eval(w, u);
                if (wv == 0.0) continue;
                const double dn = (w.death && w.death_shift == u) ? 1.0 : 0.0;
                phi[owner_index(w)] += inv_pi * wv * (dn - dL);
            }
        }
        table.paths[j] = phi;
    }
    return table;
}

}  // namespace detail

// phi_i for the treated side: integral of pi^-1 w_i dM_i over the S1 jump
// grid. Unmatched and untreated subjects keep phi identically 0.
inline InfluenceTable influence_treated(const Cohort& c, const MatchResult& match,
                                        const CoxFit& censor_fit, const SurvivalCurve& s1) {
    auto ws = build_treated_weights(c, match, censor_fit, s1.tau);
    std::vector<const TreatedWeight*> by_support;
    by_support.reserve(ws.size());
    for (const auto& w : ws) by_support.push_back(&w);
    std::sort(by_support.begin(), by_support.end(),
              [](const TreatedWeight* a, const TreatedWeight* b) {
                  if (a->support_end != b->support_end) return a->support_end < b->support_end;
                  return a->id < b->id;
              });
    const StepFunction& base = censor_fit.baseline_cumhaz;
    return detail::influence_sweep(
        c.size(), by_support, s1.cumhaz,
        [&base](const TreatedWeight& w, double t) { return w.value(base, t); });
}

// phi_i for the treatment-free side, aggregated over every matched set the
// control belongs to.
inline InfluenceTable influence_control(const Cohort& c, const MatchResult& match,
                                        const CoxFit& censor_fit, const CoxFit& treat_fit,
                                        const SurvivalCurve& s0) {
    auto ws = build_pair_weights(c, match, censor_fit, treat_fit, s0.tau);
    std::vector<const PairWeight*> by_support;
    by_support.reserve(ws.size());
    for (const auto& w : ws) by_support.push_back(&w);
    std::sort(by_support.begin(), by_support.end(), [](const PairWeight* a, const PairWeight* b) {
        if (a->support_end != b->support_end) return a->support_end < b->support_end;
        if (a->control_id != b->control_id) return a->control_id < b->control_id;
        return a->treated_id < b->treated_id;
    });
    const StepFunction& cbase = censor_fit.baseline_cumhaz;
    const StepFunction& tbase = treat_fit.baseline_cumhaz;
    return detail::influence_sweep(
        c.size(), by_support, s0.cumhaz,
        [&cbase, &tbase](const PairWeight& w, double t) { return w.value(cbase, tbase, t); });
}

struct VarianceCurves {
    StepFunction s1;     // sigma_1^2(t)
    StepFunction s0;     // sigma_0^2(t)
    StepFunction delta;  // sigma_delta^2(t)
};

// Pointwise variances of the sqrt(n)-scaled estimators on the union of both
// jump grids plus any requested times. The delta variance combines the
// per-subject terms before squaring.
inline VarianceCurves variance_curves(const InfluenceTable& phi1, const InfluenceTable& phi0,
                                      const SurvivalCurve& s1c, const SurvivalCurve& s0c,
                                      std::span<const double> extra_times = {}) {
    if (phi1.n != phi0.n || phi1.n != s1c.n || phi0.n != s0c.n) throw CohortMismatchError();
    const std::size_t n = phi1.n;

    std::vector<double> grid;
    grid.reserve(phi1.times.size() + phi0.times.size() + extra_times.size());
    grid.insert(grid.end(), phi1.times.begin(), phi1.times.end());
    grid.insert(grid.end(), phi0.times.begin(), phi0.times.end());
    for (double t : extra_times)
        if (t >= 0.0 && t <= s1c.tau1) grid.push_back(t);
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

    std::vector<double> v1, v0, vd;
    v1.reserve(grid.size());
    v0.reserve(grid.size());
    vd.reserve(grid.size());

    static const std::vector<double> kZeros;
    std::size_t j1 = 0, j0 = 0;
    for (double t : grid) {
        while (j1 < phi1.times.size() && phi1.times[j1] <= t) ++j1;
        while (j0 < phi0.times.size() && phi0.times[j0] <= t) ++j0;
        const std::vector<double>* col1 = j1 == 0 ? nullptr : &phi1.paths[j1 - 1];
        const std::vector<double>* col0 = j0 == 0 ? nullptr : &phi0.paths[j0 - 1];
        const double S1 = s1c.survival(t);
        const double S0 = s0c.survival(t);
        detail::KahanSum a2, b2, d2;
        for (std::size_t i = 0; i < n; ++i) {
            const double a = S1 * (col1 ? (*col1)[i] : 0.0);
            const double b = S0 * (col0 ? (*col0)[i] : 0.0);
            a2.add(a * a);
            b2.add(b * b);
            d2.add((b - a) * (b - a));
        }
        const double dn = static_cast<double>(n);
        v1.push_back(a2.sum / dn);
        v0.push_back(b2.sum / dn);
        vd.push_back(d2.sum / dn);
    }

    auto to_steps = [&grid](const std::vector<double>& values) {
        std::vector<double> steps(values.size());
        double prev = 0.0;
        for (std::size_t j = 0; j < values.size(); ++j) {
            steps[j] = values[j] - prev;
            prev = values[j];
        }
        return StepFunction(grid, std::move(steps));
    };

    VarianceCurves out;
    out.s1 = to_steps(v1);
    out.s0 = to_steps(v0);
    out.delta = to_steps(vd);
    return out;
}

inline void attach_variance(SurvivalCurve& s1, SurvivalCurve& s0, SurvivalCurve& delta,
                            const VarianceCurves& vc) {
    s1.variance = vc.s1;
    s0.variance = vc.s0;
    delta.variance = vc.delta;
    s1.variance_attached = s0.variance_attached = delta.variance_attached = true;
}

}  // namespace matchsurv

#endif  // MATCHSURV_VARIANCE_HPP
