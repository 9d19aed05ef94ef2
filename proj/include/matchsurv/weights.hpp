#ifndef MATCHSURV_WEIGHTS_HPP
#define MATCHSURV_WEIGHTS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "matchsurv/cohort.hpp"
#include "matchsurv/cox.hpp"
#include "matchsurv/matching.hpp"

namespace matchsurv {

// Censoring weight process of one matched treated subject on the shifted
// clock (t = time since T_k): exp{Lambda_C(T_k + t; Z_k)} while still under
// observation, 0 afterwards.
struct TreatedWeight {
    std::size_t subject = 0;
    std::int64_t id = 0;
    double treat_time = 0.0;   // T_k
    double support_end = 0.0;  // U_k - T_k, inclusive
    double censor_risk = 1.0;  // exp(beta_C' Z_k)
    bool death = false;
    double death_shift = std::numeric_limits<double>::infinity();  // U_k - T_k if death

    double value(const StepFunction& censor_baseline, double t) const {
        if (t > support_end) return 0.0;
        return std::exp(censor_risk * censor_baseline(treat_time + t));
    }
};

// Weight process of one matched pair, owned by the control on the treated
// subject's shifted clock. The anchor term uses the treated subject's
// covariates; the two increments accrue the control's censoring and
// treatment hazards over (T_k, T_k + t].
struct PairWeight {
    std::size_t control = 0;
    std::size_t treated = 0;
    std::int64_t control_id = 0;
    std::int64_t treated_id = 0;
    double match_time = 0.0;            // T_k
    double anchor = 0.0;                // Lambda_C(T_k; Z_k)
    double censor_base_at_match = 0.0;  // baseline censoring cumhaz at T_k
    double treat_base_at_match = 0.0;   // baseline treatment cumhaz at T_k
    double censor_risk = 1.0;           // exp(beta_C' Z_i)
    double treat_risk = 1.0;            // exp(beta_T' Z_i)
    double support_end = 0.0;
    bool support_closed = true;  // closed at U_i - T_k; open at T_i - T_k when later treated
    bool death = false;          // treatment-free death of the control
    double death_shift = std::numeric_limits<double>::infinity();  // U_i - T_k if death

    double value(const StepFunction& censor_baseline, const StepFunction& treat_baseline,
                 double t) const {
        if (t > support_end || (t == support_end && !support_closed)) return 0.0;
        const double u = match_time + t;
        return std::exp(anchor +
                        censor_risk * (censor_baseline(u) - censor_base_at_match) +
                        treat_risk * (treat_baseline(u) - treat_base_at_match));
    }
};

inline std::vector<TreatedWeight> build_treated_weights(const Cohort& c,
                                                        const MatchResult& match,
                                                        const CoxFit& censor_fit,
                                                        double tau) {
    std::vector<TreatedWeight> ws;
    ws.reserve(match.pairs.size());
    for (const MatchedPair& pair : match.pairs) {
        if (pair.match_time > tau) continue;
        const std::size_t k = c.index_of(pair.treated_id);
        const SubjectRecord& s = c[k];
        TreatedWeight w;
        w.subject = k;
        w.id = s.id;
        w.treat_time = s.treat_time;
        w.support_end = s.obs_time - s.treat_time;
        w.censor_risk = censor_fit.relative_risk(s.covariates);
        w.death = s.death;
        if (s.death) w.death_shift = w.support_end;
        ws.push_back(w);
    }
    return ws;
}

inline std::vector<PairWeight> build_pair_weights(const Cohort& c, const MatchResult& match,
                                                  const CoxFit& censor_fit,
                                                  const CoxFit& treat_fit, double tau) {
    std::vector<PairWeight> ws;
    ws.reserve(match.pairs.size());
    for (const MatchedPair& pair : match.pairs) {
        if (pair.match_time > tau) continue;
        const std::size_t k = c.index_of(pair.treated_id);
        const std::size_t i = c.index_of(pair.control_id);
        const SubjectRecord& sk = c[k];
        const SubjectRecord& si = c[i];
        PairWeight w;
        w.control = i;
        w.treated = k;
        w.control_id = si.id;
        w.treated_id = sk.id;
        w.match_time = sk.treat_time;
        w.censor_base_at_match = censor_fit.baseline_cumhaz(sk.treat_time);
        w.treat_base_at_match = treat_fit.baseline_cumhaz(sk.treat_time);
        w.anchor = censor_fit.relative_risk(sk.covariates) * w.censor_base_at_match;
        w.censor_risk = censor_fit.relative_risk(si.covariates);
        w.treat_risk = treat_fit.relative_risk(si.covariates);
        if (si.treated) {
            w.support_end = si.treat_time - sk.treat_time;
            w.support_closed = false;  // treated at the same instant is no longer treatment-free
        } else {
            w.support_end = si.obs_time - sk.treat_time;
            w.support_closed = true;
            if (si.death) {
                w.death = true;
                w.death_shift = w.support_end;
            }
        }
        ws.push_back(w);
    }
    return ws;
}

// Estimated post-treatment weight for treated subject k at shifted time t,
// with every gate applied: matched, T_k <= tau, still under observation.
inline double w1_hat(const Cohort& c, std::int64_t treated_id, double t,
                     const CoxFit& censor_fit, const MatchResult& match, double tau) {
    const std::size_t k = c.index_of(treated_id);
    if (k == Cohort::npos || !c[k].treated) throw NotTreatedError(treated_id);
    const SubjectRecord& s = c[k];
    if (s.treat_time > tau) return 0.0;
    bool matched = false;
    for (const MatchedPair& pair : match.pairs)
        if (pair.treated_id == treated_id) {
            matched = true;
            break;
        }
    if (!matched) return 0.0;
    if (s.obs_time < s.treat_time + t) return 0.0;
    return std::exp(cumulative_hazard(censor_fit, s.covariates, s.treat_time + t));
}

// Estimated treatment-free weight for a matched pair at shifted time t. Zero
// once the control dies, is censored, or initiates treatment by T_k + t.
inline double w0_hat(const Cohort& c, const MatchedPair& pair, double t,
                     const CoxFit& censor_fit, const CoxFit& treat_fit, double tau) {
    const std::size_t k = c.index_of(pair.treated_id);
    const std::size_t i = c.index_of(pair.control_id);
    const SubjectRecord& sk = c[k];
    const SubjectRecord& si = c[i];
    if (sk.treat_time > tau) return 0.0;
    if (!at_risk_untreated_at(si, sk.treat_time + t)) return 0.0;
    const double a = sk.treat_time;
    const double b = sk.treat_time + t;
    return std::exp(cumulative_hazard(censor_fit, sk.covariates, a) +
                    increment_between(censor_fit, si.covariates, a, b) +
                    increment_between(treat_fit, si.covariates, a, b));
}

}  // namespace matchsurv

#endif  // MATCHSURV_WEIGHTS_HPP
