#ifndef MATCHSURV_MATCHING_HPP
#define MATCHSURV_MATCHING_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "matchsurv/cohort.hpp"
#include "matchsurv/cox.hpp"

namespace matchsurv {

enum class MatchMode { prognostic, propensity, double_score };

inline const char* match_mode_name(MatchMode m) {
    switch (m) {
        case MatchMode::prognostic: return "prognostic";
        case MatchMode::propensity: return "propensity";
        case MatchMode::double_score: return "double";
    }
    return "?";
}

// Nearest-neighbor-within-caliper criterion. A caliper xi > 1 bounds the
// hazard ratio to the open interval (1/xi, xi); 0 means unset. The mode's own
// caliper is mandatory; the other one, if set, acts as an extra eligibility
// filter without entering the objective.
struct MatchCriterion {
    MatchMode mode = MatchMode::prognostic;
    double caliper_treat = 0.0;  // xi_T, on the treatment-hazard ratio
    double caliper_death = 0.0;  // xi_D, on the pre-treatment death-hazard ratio

    bool treat_caliper_active() const { return caliper_treat > 0.0; }
    bool death_caliper_active() const { return caliper_death > 0.0; }

    void validate() const {
        const bool need_treat =
            mode == MatchMode::propensity || mode == MatchMode::double_score;
        const bool need_death =
            mode == MatchMode::prognostic || mode == MatchMode::double_score;
        if (need_treat && !(caliper_treat > 1.0))
            throw std::invalid_argument("MatchCriterion: caliper_treat must be > 1 for " +
                                        std::string(match_mode_name(mode)) + " matching");
        if (need_death && !(caliper_death > 1.0))
            throw std::invalid_argument("MatchCriterion: caliper_death must be > 1 for " +
                                        std::string(match_mode_name(mode)) + " matching");
        if (treat_caliper_active() && !(caliper_treat > 1.0))
            throw std::invalid_argument("MatchCriterion: caliper_treat must be > 1");
        if (death_caliper_active() && !(caliper_death > 1.0))
            throw std::invalid_argument("MatchCriterion: caliper_death must be > 1");
    }
};

struct MatchedPair {
    std::int64_t treated_id = 0;
    std::int64_t control_id = 0;
    double match_time = 0.0;  // T_k
    double log_psi_treat = std::numeric_limits<double>::quiet_NaN();
    double log_psi_death = std::numeric_limits<double>::quiet_NaN();
};

struct MatchResult {
    std::vector<MatchedPair> pairs;               // one per matched treated, (T_k, id) order
    std::vector<std::int64_t> unmatched_treated;  // treated with T_k <= tau, no eligible control
    double match_rate = 1.0;                      // pairs / treated with T_k <= tau; 1 if none
};

class NotTreatedError : public std::invalid_argument {
public:
    explicit NotTreatedError(std::int64_t id)
        : std::invalid_argument("NotTreated: subject " + std::to_string(id) +
                                " has no observed treatment") {}
};

// log of the hazard ratio between candidate l and treated k; the baseline
// hazard cancels, leaving beta'(z_l - z_k).
inline double log_score_ratio(std::span<const double> beta, std::span<const double> z_l,
                              std::span<const double> z_k) {
    if (z_l.size() != beta.size()) throw DimensionError(beta.size(), z_l.size());
    if (z_k.size() != beta.size()) throw DimensionError(beta.size(), z_k.size());
    double v = 0.0;
    for (std::size_t j = 0; j < beta.size(); ++j) v += beta[j] * (z_l[j] - z_k[j]);
    return v;
}

namespace detail {

// Linear predictors for every subject under one fit, so candidate scans cost
// a subtraction instead of a dot product.
inline std::vector<double> linear_predictors(const Cohort& c, const CoxFit* fit) {
    std::vector<double> eta;
    if (!fit) return eta;
    eta.resize(c.size());
    for (std::size_t i = 0; i < c.size(); ++i) eta[i] = fit->linear_predictor(c[i].covariates);
    return eta;
}

inline std::optional<MatchedPair> find_match_impl(const Cohort& c, std::size_t k,
                                                  const std::vector<double>& eta_treat,
                                                  const std::vector<double>& eta_death,
                                                  const MatchCriterion& crit) {
    const SubjectRecord& treated = c[k];
    const double tk = treated.treat_time;
    const double log_xi_t =
        crit.treat_caliper_active() ? std::log(crit.caliper_treat) : 0.0;
    const double log_xi_d =
        crit.death_caliper_active() ? std::log(crit.caliper_death) : 0.0;

    std::size_t best = Cohort::npos;
    double best_obj = 0.0;
    double best_lt = 0.0, best_ld = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) {
        if (i == k) continue;
        const SubjectRecord& s = c[i];
        if (!at_risk_untreated_at(s, tk)) continue;
        const double lt = eta_treat.empty() ? std::numeric_limits<double>::quiet_NaN()
                                            : eta_treat[i] - eta_treat[k];
        const double ld = eta_death.empty() ? std::numeric_limits<double>::quiet_NaN()
                                            : eta_death[i] - eta_death[k];
        if (crit.treat_caliper_active() && !(std::abs(lt) < log_xi_t)) continue;
        if (crit.death_caliper_active() && !(std::abs(ld) < log_xi_d)) continue;
        double obj = 0.0;
        switch (crit.mode) {
            case MatchMode::prognostic: obj = std::abs(ld); break;
            case MatchMode::propensity: obj = std::abs(lt); break;
            case MatchMode::double_score: obj = std::abs(lt + ld); break;
        }
        if (best == Cohort::npos || obj < best_obj ||
            (obj == best_obj && s.id < c[best].id)) {
            best = i;
            best_obj = obj;
            best_lt = lt;
            best_ld = ld;
        }
    }
    if (best == Cohort::npos) return std::nullopt;
    MatchedPair pair;
    pair.treated_id = treated.id;
    pair.control_id = c[best].id;
    pair.match_time = tk;
    pair.log_psi_treat = best_lt;
    pair.log_psi_death = best_ld;
    return pair;
}

}  // namespace detail

// Best eligible control for treated subject k at its treatment time, or
// nullopt when no candidate passes every active caliper.
inline std::optional<MatchedPair> find_match(const Cohort& c, std::int64_t treated_id,
                                             const CoxFit* treat_fit, const CoxFit* death_fit,
                                             const MatchCriterion& crit) {
    crit.validate();
    const std::size_t k = c.index_of(treated_id);
    if (k == Cohort::npos || !c[k].treated) throw NotTreatedError(treated_id);
    if (crit.treat_caliper_active() && !treat_fit)
        throw std::invalid_argument("find_match: treatment-score caliper requires a treatment fit");
    if (crit.death_caliper_active() && !death_fit)
        throw std::invalid_argument("find_match: death-score caliper requires a prognostic fit");
    auto eta_t = detail::linear_predictors(c, treat_fit);
    auto eta_d = detail::linear_predictors(c, death_fit);
    return detail::find_match_impl(c, k, eta_t, eta_d, crit);
}

// 1:1 nearest-neighbor within-caliper matching with replacement over every
// treated subject with T_k <= tau, in ascending (T_k, id) order. Controls are
// never consumed, so the order only fixes the report layout.
inline MatchResult run_matching(const Cohort& c, const CoxFit* treat_fit,
                                const CoxFit* death_fit, const MatchCriterion& crit,
                                double tau) {
    crit.validate();
    if (!(tau > 0.0)) throw std::invalid_argument("run_matching: tau must be > 0");
    if (crit.treat_caliper_active() && !treat_fit)
        throw std::invalid_argument("run_matching: treatment-score caliper requires a treatment fit");
    if (crit.death_caliper_active() && !death_fit)
        throw std::invalid_argument("run_matching: death-score caliper requires a prognostic fit");

    auto eta_t = detail::linear_predictors(c, treat_fit);
    auto eta_d = detail::linear_predictors(c, death_fit);

    std::vector<std::size_t> treated;
    for (std::size_t i = 0; i < c.size(); ++i)
        if (c[i].treated && c[i].treat_time <= tau) treated.push_back(i);
    std::sort(treated.begin(), treated.end(), [&c](std::size_t a, std::size_t b) {
        if (c[a].treat_time != c[b].treat_time) return c[a].treat_time < c[b].treat_time;
        return c[a].id < c[b].id;
    });

    MatchResult result;
    for (std::size_t k : treated) {
        auto pair = detail::find_match_impl(c, k, eta_t, eta_d, crit);
        if (pair)
            result.pairs.push_back(*pair);
        else
            result.unmatched_treated.push_back(c[k].id);
    }
    result.match_rate = treated.empty()
                            ? 1.0
                            : static_cast<double>(result.pairs.size()) /
                                  static_cast<double>(treated.size());
    return result;
}

}  // namespace matchsurv

#endif  // MATCHSURV_MATCHING_HPP
