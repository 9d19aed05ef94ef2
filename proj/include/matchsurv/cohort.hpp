#ifndef MATCHSURV_COHORT_HPP
#define MATCHSURV_COHORT_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace matchsurv {

// Internal stand-in for "never treated": min(U, T) then reduces to U.
constexpr double kNeverTreated = std::numeric_limits<double>::infinity();

// One subject's observed data. Times share the study clock (t = 0 at entry).
struct SubjectRecord {
    std::int64_t id = 0;
    double obs_time = 0.0;    // U = min(death time, censoring time)
    bool death = false;       // death observed before censoring
    bool treated = false;     // treatment observed before obs_time
    double treat_time = 0.0;  // T, meaningful only when treated
    std::vector<double> covariates;

    double treat_time_or_inf() const { return treated ? treat_time : kNeverTreated; }
};

enum class CohortFault {
    duplicate_id,
    negative_time,
    treatment_after_observation,
    covariate_length_mismatch,
};

inline const char* fault_name(CohortFault f) {
    switch (f) {
        case CohortFault::duplicate_id: return "DuplicateId";
        case CohortFault::negative_time: return "NegativeTime";
        case CohortFault::treatment_after_observation: return "TreatmentAfterObservation";
        case CohortFault::covariate_length_mismatch: return "CovariateLengthMismatch";
    }
    return "?";
}

class CohortError : public std::runtime_error {
public:
    CohortError(CohortFault fault, std::int64_t subject_id, const std::string& detail)
        : std::runtime_error(std::string(fault_name(fault)) + " (subject " +
                             std::to_string(subject_id) + "): " + detail),
          fault(fault),
          subject_id(subject_id) {}

    CohortFault fault;
    std::int64_t subject_id;
};

// Validated, immutable collection of subjects.
class Cohort {
public:
    Cohort() = default;

    const std::vector<SubjectRecord>& subjects() const { return subjects_; }
    const SubjectRecord& operator[](std::size_t idx) const { return subjects_[idx]; }
    std::size_t size() const { return subjects_.size(); }
    std::size_t covariate_dim() const { return dim_; }
    double time_horizon() const { return horizon_; }

    // Index of the subject with the given id, or npos if absent.
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);
    std::size_t index_of(std::int64_t id) const {
        auto it = index_.find(id);
        return it == index_.end() ? npos : it->second;
    }

    friend Cohort validate_cohort(std::vector<SubjectRecord> subjects);

private:
    std::vector<SubjectRecord> subjects_;
    std::size_t dim_ = 0;
    double horizon_ = 0.0;
    std::unordered_map<std::int64_t, std::size_t> index_;
};

inline Cohort validate_cohort(std::vector<SubjectRecord> subjects) {
    Cohort c;
    c.index_.reserve(subjects.size());
    std::size_t dim = subjects.empty() ? 0 : subjects.front().covariates.size();
    double horizon = 0.0;
    for (std::size_t i = 0; i < subjects.size(); ++i) {
        const SubjectRecord& s = subjects[i];
        if (!std::isfinite(s.obs_time) || s.obs_time < 0.0)
            throw CohortError(CohortFault::negative_time, s.id,
                              "obs_time must be a finite nonnegative real");
        if (s.treated) {
            if (!std::isfinite(s.treat_time) || s.treat_time < 0.0)
                throw CohortError(CohortFault::negative_time, s.id,
                                  "treat_time must be a finite nonnegative real");
            if (s.treat_time >= s.obs_time)
                throw CohortError(CohortFault::treatment_after_observation, s.id,
                                  "treat_time must be strictly before obs_time");
        }
        if (s.covariates.size() != dim)
            throw CohortError(CohortFault::covariate_length_mismatch, s.id,
                              "expected " + std::to_string(dim) + " covariates, got " +
                                  std::to_string(s.covariates.size()));
        if (!c.index_.emplace(s.id, i).second)
            throw CohortError(CohortFault::duplicate_id, s.id, "id occurs more than once");
        horizon = std::max(horizon, s.obs_time);
    }
    c.subjects_ = std::move(subjects);
    c.dim_ = dim;
    c.horizon_ = horizon;
    return c;
}

// At risk and not yet treated at time t. A subject treated exactly at t is not
// an eligible control; one whose observation ends exactly at t still is.
inline bool at_risk_untreated_at(const SubjectRecord& s, double t) {
    return s.obs_time >= t && (!s.treated || s.treat_time > t);
}

inline std::vector<std::int64_t> at_risk_untreated(const Cohort& c, double t) {
    std::vector<std::int64_t> ids;
    for (const SubjectRecord& s : c.subjects())
        if (at_risk_untreated_at(s, t)) ids.push_back(s.id);
    std::sort(ids.begin(), ids.end());
    return ids;
}

}  // namespace matchsurv

#endif  // MATCHSURV_COHORT_HPP
