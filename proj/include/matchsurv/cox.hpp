#ifndef MATCHSURV_COX_HPP
#define MATCHSURV_COX_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "matchsurv/cohort.hpp"
#include "matchsurv/step_function.hpp"

namespace matchsurv {

// The three cause-specific hazards the pipeline models. Each defines how a
// cohort is reduced to (stop time, event flag) rows:
//   treatment          event = treatment initiation at T; at risk while U ^ T >= t
//   pretreatment_death event = death with no prior treatment at U; risk ends at U ^ T
//   censoring          event = censoring at U; at risk while U >= t
enum class HazardKind { treatment, pretreatment_death, censoring };

inline const char* hazard_name(HazardKind k) {
    switch (k) {
        case HazardKind::treatment: return "treatment";
        case HazardKind::pretreatment_death: return "pretreatment_death";
        case HazardKind::censoring: return "censoring";
    }
    return "?";
}

class NoEventsError : public std::runtime_error {
public:
    explicit NoEventsError(HazardKind kind)
        : std::runtime_error(std::string("NoEvents: no ") + hazard_name(kind) +
                             " events in cohort"),
          kind(kind) {}
    HazardKind kind;
};

class SingularInformationError : public std::runtime_error {
public:
    SingularInformationError(HazardKind kind, double rcond)
        : std::runtime_error(std::string("SingularInformation: ") + hazard_name(kind) +
                             " model information matrix has reciprocal condition number " +
                             std::to_string(rcond)),
          kind(kind),
          rcond(rcond) {}
    HazardKind kind;
    double rcond;
};

class DimensionError : public std::invalid_argument {
public:
    DimensionError(std::size_t expected, std::size_t got)
        : std::invalid_argument("DimensionMismatch: expected covariate length " +
                                std::to_string(expected) + ", got " + std::to_string(got)) {}
};

class IntervalError : public std::invalid_argument {
public:
    IntervalError(double a, double b)
        : std::invalid_argument("ReversedInterval: a = " + std::to_string(a) + " > b = " +
                                std::to_string(b)) {}
};

struct FitOptions {
    double score_tol = 1e-8;     // convergence: max|score| below this
    double step_tol = 1e-10;     // or max|delta beta| below this
    int max_iterations = 50;
    int max_step_halvings = 20;
    double min_rcond = 1e-12;    // below this the information matrix is singular
};

struct CoxFit {
    HazardKind kind = HazardKind::censoring;
    std::vector<double> beta;
    std::vector<double> beta_se;
    StepFunction baseline_cumhaz;  // Breslow, on the raw covariate scale
    std::vector<double> loglik_path;
    bool converged = false;
    std::size_t n_events = 0;

    double linear_predictor(std::span<const double> z) const {
        if (z.size() != beta.size()) throw DimensionError(beta.size(), z.size());
        double lp = 0.0;
        for (std::size_t j = 0; j < beta.size(); ++j) lp += beta[j] * z[j];
        return lp;
    }
    double relative_risk(std::span<const double> z) const {
        return std::exp(linear_predictor(z));
    }
};

// A trivial fit: beta = 0, empty baseline. Used where a model has no events
// and its cumulative hazard is identically zero.
inline CoxFit empty_cox_fit(HazardKind kind, std::size_t p) {
    CoxFit fit;
    fit.kind = kind;
    fit.beta.assign(p, 0.0);
    fit.beta_se.assign(p, 0.0);
    fit.converged = true;
    fit.n_events = 0;
    return fit;
}

// One subject reduced to the event-history row of a hazard kind.
struct HazardObservation {
    double stop = 0.0;  // end of at-risk period (risk set at t: stop >= t)
    bool event = false;
    std::size_t subject = 0;  // index into the cohort
};

// Rows in canonical (stop, id) order so downstream accumulations do not depend
// on the cohort's storage order.
inline std::vector<HazardObservation> hazard_observations(const Cohort& c, HazardKind kind) {
    std::vector<HazardObservation> rows;
    rows.reserve(c.size());
    for (std::size_t i = 0; i < c.size(); ++i) {
        const SubjectRecord& s = c[i];
        HazardObservation r;
        r.subject = i;
        switch (kind) {
            case HazardKind::treatment:
                r.stop = std::min(s.obs_time, s.treat_time_or_inf());
                r.event = s.treated;
                break;
            case HazardKind::pretreatment_death:
                r.stop = std::min(s.obs_time, s.treat_time_or_inf());
                r.event = s.death && !s.treated;
                break;
            case HazardKind::censoring:
                r.stop = s.obs_time;
                r.event = !s.death;
                break;
        }
        rows.push_back(r);
    }
    std::sort(rows.begin(), rows.end(), [&c](const HazardObservation& a, const HazardObservation& b) {
        if (a.stop != b.stop) return a.stop < b.stop;
        return c[a.subject].id < c[b.subject].id;
    });
    return rows;
}

struct PartialLikelihood {
    double loglik = 0.0;
    std::vector<double> score;  // length p
    std::vector<double> info;   // p x p, row-major (observed information)
};

namespace detail {

// Covariate means in canonical row order; subtracting them conditions the
// risk-set sums without changing loglik, score, or information.
inline std::vector<double> covariate_means(const Cohort& c,
                                           const std::vector<HazardObservation>& rows) {
    const std::size_t p = c.covariate_dim();
    std::vector<double> mean(p, 0.0);
    if (rows.empty() || p == 0) return mean;
    for (const HazardObservation& r : rows)
        for (std::size_t j = 0; j < p; ++j) mean[j] += c[r.subject].covariates[j];
    for (std::size_t j = 0; j < p; ++j) mean[j] /= static_cast<double>(rows.size());
    return mean;
}

// Breslow-tie partial likelihood with optional score/information, sweeping the
// canonical rows from the largest stop time down so risk-set sums accumulate.
inline PartialLikelihood breslow_partial_likelihood(const Cohort& c,
                                                    const std::vector<HazardObservation>& rows,
                                                    const std::vector<double>& mean,
                                                    std::span<const double> beta,
                                                    bool with_derivatives) {
    const std::size_t p = c.covariate_dim();
    PartialLikelihood out;
    out.score.assign(p, 0.0);
    out.info.assign(p * p, 0.0);

    double s0 = 0.0;
    std::vector<double> s1(p, 0.0);
    std::vector<double> s2(with_derivatives ? p * p : 0, 0.0);
    std::vector<double> zc(p, 0.0);

    std::size_t i = rows.size();
    while (i > 0) {
        // Enter every row tied at this stop time into the risk set.
        const double t = rows[i - 1].stop;
        std::size_t lo = i;
        while (lo > 0 && rows[lo - 1].stop == t) --lo;
        for (std::size_t r = lo; r < i; ++r) {
            const std::vector<double>& z = c[rows[r].subject].covariates;
            double lp = 0.0;
            for (std::size_t j = 0; j < p; ++j) lp += beta[j] * (z[j] - mean[j]);
            const double w = std::exp(lp);
            s0 += w;
            for (std::size_t j = 0; j < p; ++j) s1[j] += w * (z[j] - mean[j]);
            if (with_derivatives)
                for (std::size_t j = 0; j < p; ++j)
                    for (std::size_t k = 0; k <= j; ++k)
                        s2[j * p + k] += w * (z[j] - mean[j]) * (z[k] - mean[k]);
        }
        // Then process the events tied at this time against the full risk set.
        for (std::size_t r = lo; r < i; ++r) {
            if (!rows[r].event) continue;
            const std::vector<double>& z = c[rows[r].subject].covariates;
            double lp = 0.0;
            for (std::size_t j = 0; j < p; ++j) {
                zc[j] = z[j] - mean[j];
                lp += beta[j] * zc[j];
            }
            out.loglik += lp - std::log(s0);
            if (with_derivatives) {
                for (std::size_t j = 0; j < p; ++j) out.score[j] += zc[j] - s1[j] / s0;
                for (std::size_t j = 0; j < p; ++j)
                    for (std::size_t k = 0; k <= j; ++k)
                        out.info[j * p + k] +=
                            s2[j * p + k] / s0 - (s1[j] / s0) * (s1[k] / s0);
            }
        }
        i = lo;
    }
    if (with_derivatives)
        for (std::size_t j = 0; j < p; ++j)
            for (std::size_t k = j + 1; k < p; ++k) out.info[j * p + k] = out.info[k * p + j];
    return out;
}

// Invert a small dense matrix by Gauss-Jordan with partial pivoting.
// Returns the 1-norm reciprocal condition number (0 when singular).
inline double invert_matrix(std::vector<double> a, std::size_t p, std::vector<double>& inv) {
    inv.assign(p * p, 0.0);
    for (std::size_t j = 0; j < p; ++j) inv[j * p + j] = 1.0;

    double anorm = 0.0;
    for (std::size_t k = 0; k < p; ++k) {
        double colsum = 0.0;
        for (std::size_t j = 0; j < p; ++j) colsum += std::abs(a[j * p + k]);
        anorm = std::max(anorm, colsum);
    }

    for (std::size_t k = 0; k < p; ++k) {
        std::size_t piv = k;
        for (std::size_t r = k + 1; r < p; ++r)
            if (std::abs(a[r * p + k]) > std::abs(a[piv * p + k])) piv = r;
        if (a[piv * p + k] == 0.0) return 0.0;
        if (piv != k)
            for (std::size_t jj = 0; jj < p; ++jj) {
                std::swap(a[piv * p + jj], a[k * p + jj]);
                std::swap(inv[piv * p + jj], inv[k * p + jj]);
            }
        const double d = a[k * p + k];
        for (std::size_t jj = 0; jj < p; ++jj) {
            a[k * p + jj] /= d;
            inv[k * p + jj] /= d;
        }
        for (std::size_t r = 0; r < p; ++r) {
            if (r == k) continue;
            const double f = a[r * p + k];
            if (f == 0.0) continue;
            for (std::size_t jj = 0; jj < p; ++jj) {
                a[r * p + jj] -= f * a[k * p + jj];
                inv[r * p + jj] -= f * inv[k * p + jj];
            }
        }
    }

    double invnorm = 0.0;
    for (std::size_t k = 0; k < p; ++k) {
        double colsum = 0.0;
        for (std::size_t j = 0; j < p; ++j) colsum += std::abs(inv[j * p + k]);
        invnorm = std::max(invnorm, colsum);
    }
    if (anorm == 0.0 || invnorm == 0.0) return 0.0;
    return 1.0 / (anorm * invnorm);
}

}  // namespace detail

// Log partial likelihood (Breslow ties) with analytic score and observed
// information at an arbitrary beta.
inline PartialLikelihood eval_partial_likelihood(const Cohort& c, HazardKind kind,
                                                 std::span<const double> beta) {
    if (beta.size() != c.covariate_dim())
        throw DimensionError(c.covariate_dim(), beta.size());
    auto rows = hazard_observations(c, kind);
    auto mean = detail::covariate_means(c, rows);
    return detail::breslow_partial_likelihood(c, rows, mean, beta, true);
}

// Newton-Raphson maximum partial likelihood fit with Breslow baseline.
inline CoxFit fit_cox(const Cohort& c, HazardKind kind, const FitOptions& opts = {}) {
    const std::size_t p = c.covariate_dim();
    auto rows = hazard_observations(c, kind);
    std::size_t n_events = 0;
    for (const auto& r : rows) n_events += r.event ? 1 : 0;
    if (n_events == 0) throw NoEventsError(kind);

    auto mean = detail::covariate_means(c, rows);

    CoxFit fit;
    fit.kind = kind;
    fit.beta.assign(p, 0.0);
    fit.beta_se.assign(p, 0.0);
    fit.n_events = n_events;

    std::vector<double> beta(p, 0.0);
    PartialLikelihood cur = detail::breslow_partial_likelihood(c, rows, mean, beta, true);
    fit.loglik_path.push_back(cur.loglik);

    std::vector<double> inv;
    auto max_abs = [](const std::vector<double>& v) {
        double m = 0.0;
        for (double x : v) m = std::max(m, std::abs(x));
        return m;
    };

    bool converged = p == 0 || max_abs(cur.score) <= opts.score_tol;
    for (int iter = 0; !converged && iter < opts.max_iterations; ++iter) {
        const double rcond = detail::invert_matrix(cur.info, p, inv);
        if (rcond < opts.min_rcond) throw SingularInformationError(kind, rcond);

        std::vector<double> delta(p, 0.0);
        for (std::size_t j = 0; j < p; ++j)
            for (std::size_t k = 0; k < p; ++k) delta[j] += inv[j * p + k] * cur.score[k];

        // Near the maximum the log likelihood is flat at rounding resolution;
        // steps inside that noise floor count as non-decreasing so the score
        // can still be driven to tolerance.
        const double noise_floor = 1e-10 * (1.0 + std::abs(cur.loglik));
        double scale = 1.0;
        std::vector<double> candidate(p);
        PartialLikelihood next;
        bool accepted = false;
        for (int h = 0; h <= opts.max_step_halvings; ++h) {
            for (std::size_t j = 0; j < p; ++j) candidate[j] = beta[j] + scale * delta[j];
            next = detail::breslow_partial_likelihood(c, rows, mean, candidate, true);
            if (next.loglik >= cur.loglik - noise_floor) {
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if (!accepted) break;  // no ascent direction left; report best iterate

        const double step = scale * max_abs(delta);
        beta = candidate;
        cur = std::move(next);
        fit.loglik_path.push_back(cur.loglik);
        if (max_abs(cur.score) <= opts.score_tol || step <= opts.step_tol) converged = true;
    }
    fit.converged = converged;
    fit.beta = beta;

    if (p > 0) {
        // Standard errors from the inverse information when it exists; a fit
        // that converged at beta = 0 with degenerate covariates keeps NaN.
        const double rcond = detail::invert_matrix(cur.info, p, inv);
        if (rcond >= opts.min_rcond) {
            for (std::size_t j = 0; j < p; ++j) fit.beta_se[j] = std::sqrt(inv[j * p + j]);
        } else if (!converged) {
            throw SingularInformationError(kind, rcond);
        } else {
            fit.beta_se.assign(p, std::numeric_limits<double>::quiet_NaN());
        }
    }

    // Breslow baseline on the raw covariate scale: jump at event time u is
    // d(u) / sum_{risk set} exp(beta'z). The centered risk-set sum is rescaled
    // by exp(-beta'mean).
    double shift = 0.0;
    for (std::size_t j = 0; j < p; ++j) shift += beta[j] * mean[j];
    const double rescale = std::exp(-shift);

    std::vector<double> times, jumps;
    double s0 = 0.0;
    std::size_t i = rows.size();
    while (i > 0) {
        const double t = rows[i - 1].stop;
        std::size_t lo = i;
        while (lo > 0 && rows[lo - 1].stop == t) --lo;
        for (std::size_t r = lo; r < i; ++r) {
            const std::vector<double>& z = c[rows[r].subject].covariates;
            double lp = 0.0;
            for (std::size_t j = 0; j < p; ++j) lp += beta[j] * (z[j] - mean[j]);
            s0 += std::exp(lp);
        }
        std::size_t d = 0;
        for (std::size_t r = lo; r < i; ++r) d += rows[r].event ? 1 : 0;
        if (d > 0) {
            times.push_back(t);
            jumps.push_back(static_cast<double>(d) / s0 * rescale);
        }
        i = lo;
    }
    std::reverse(times.begin(), times.end());
    std::reverse(jumps.begin(), jumps.end());
    fit.baseline_cumhaz = StepFunction(std::move(times), std::move(jumps));
    return fit;
}

// Subject-specific cumulative hazard exp(beta'z) * Lambda0(t).
inline double cumulative_hazard(const CoxFit& fit, std::span<const double> z, double t) {
    return fit.relative_risk(z) * fit.baseline_cumhaz(t);
}

// Cumulative-hazard mass on (a, b] for a subject.
inline double increment_between(const CoxFit& fit, std::span<const double> z, double a,
                                double b) {
    if (a > b) throw IntervalError(a, b);
    return fit.relative_risk(z) * fit.baseline_cumhaz.increment(a, b);
}

}  // namespace matchsurv

#endif  // MATCHSURV_COX_HPP
