#ifndef MATCHSURV_PIPELINE_HPP
#define MATCHSURV_PIPELINE_HPP

#include <stdexcept>
#include <string>
#include <vector>

#include "matchsurv/cohort.hpp"
#include "matchsurv/cox.hpp"
#include "matchsurv/estimators.hpp"
#include "matchsurv/matching.hpp"
#include "matchsurv/variance.hpp"
#include "matchsurv/weights.hpp"

namespace matchsurv {

class ConvergenceError : public std::runtime_error {
public:
    explicit ConvergenceError(HazardKind kind)
        : std::runtime_error(std::string("MaxIterationsExceeded: ") + hazard_name(kind) +
                             " model did not converge"),
          kind(kind) {}
    HazardKind kind;
};

struct AnalysisOptions {
    MatchCriterion criterion;
    double tau = 3.0;
    double tau1 = 5.0;
    std::vector<double> eval_times;  // extra variance/report times beyond the jump grids
    FitOptions fit_options;
};

struct AnalysisResult {
    CoxFit treat_fit;
    CoxFit death_fit;
    CoxFit censor_fit;
    MatchResult match;
    std::size_t treated_within_tau = 0;
    SurvivalCurve s1;
    SurvivalCurve s0;
    SurvivalCurve delta;
    std::vector<std::string> warnings;
};

namespace detail {

// A hazard model without events contributes a zero cumulative hazard; the
// pipeline degrades to the unweighted analysis on that component instead of
// refusing the cohort.
inline CoxFit fit_or_degenerate(const Cohort& c, HazardKind kind, const FitOptions& opts,
                                std::vector<std::string>& warnings) {
    try {
        CoxFit fit = fit_cox(c, kind, opts);
        if (!fit.converged) throw ConvergenceError(kind);
        return fit;
    } catch (const NoEventsError&) {
        warnings.push_back(std::string("no ") + hazard_name(kind) +
                           " events; model replaced by a zero cumulative hazard");
        return empty_cox_fit(kind, c.covariate_dim());
    }
}

}  // namespace detail

// Full estimation pass: fit the three hazard models, match, build both
// weighted curves and their difference, attach influence-function variances.
inline AnalysisResult analyze(const Cohort& c, const AnalysisOptions& opts) {
    if (!(opts.tau > 0.0)) throw std::invalid_argument("analyze: tau must be > 0");
    if (!(opts.tau1 > 0.0)) throw std::invalid_argument("analyze: tau1 must be > 0");
    opts.criterion.validate();

    AnalysisResult result;
    result.treat_fit = detail::fit_or_degenerate(c, HazardKind::treatment, opts.fit_options,
                                                 result.warnings);
    result.death_fit = detail::fit_or_degenerate(c, HazardKind::pretreatment_death,
                                                 opts.fit_options, result.warnings);
    result.censor_fit = detail::fit_or_degenerate(c, HazardKind::censoring, opts.fit_options,
                                                  result.warnings);

    result.match = run_matching(c, &result.treat_fit, &result.death_fit, opts.criterion,
                                opts.tau);
    result.treated_within_tau =
        result.match.pairs.size() + result.match.unmatched_treated.size();

    result.s1 = estimate_S1(c, result.match, result.censor_fit, opts.tau, opts.tau1);
    result.s0 = estimate_S0(c, result.match, result.censor_fit, result.treat_fit, opts.tau,
                            opts.tau1);
    result.delta = estimate_delta(result.s1, result.s0);

    if (result.s1.no_events)
        result.warnings.push_back("no post-treatment deaths in (0, tau1]; S1 is flat at 1");
    if (result.s0.no_events)
        result.warnings.push_back(
            "no treatment-free control deaths in (0, tau1]; S0 is flat at 1");
    if (result.s1.skipped_jumps > 0 || result.s0.skipped_jumps > 0)
        result.warnings.push_back("death times with zero weighted risk set were skipped");

    auto phi1 = influence_treated(c, result.match, result.censor_fit, result.s1);
    auto phi0 = influence_control(c, result.match, result.censor_fit, result.treat_fit,
                                  result.s0);
    auto vc = variance_curves(phi1, phi0, result.s1, result.s0, opts.eval_times);
    attach_variance(result.s1, result.s0, result.delta, vc);
    return result;
}

}  // namespace matchsurv

#endif  // MATCHSURV_PIPELINE_HPP
