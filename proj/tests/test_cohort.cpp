#include <catch2/catch_amalgamated.hpp>

#include "matchsurv/cohort.hpp"

using matchsurv::Cohort;
using matchsurv::CohortError;
using matchsurv::CohortFault;
using matchsurv::SubjectRecord;
using matchsurv::validate_cohort;

namespace {

SubjectRecord subject(std::int64_t id, double u, bool death, bool treated, double t,
                      std::vector<double> z) {
    SubjectRecord s;
    s.id = id;
    s.obs_time = u;
    s.death = death;
    s.treated = treated;
    s.treat_time = t;
    s.covariates = std::move(z);
    return s;
}

}  // namespace

TEST_CASE("minimal valid record is accepted") {
    const Cohort c = validate_cohort({subject(1, 2.0, true, false, 0.0, {0.0})});
    REQUIRE(c.size() == 1);
    CHECK(c.covariate_dim() == 1);
    CHECK(c.time_horizon() == 2.0);
}

TEST_CASE("treatment at or after observation end is rejected") {
    try {
        validate_cohort({subject(1, 2.0, false, true, 2.5, {0.0})});
        FAIL("expected CohortError");
    } catch (const CohortError& e) {
        CHECK(e.fault == CohortFault::treatment_after_observation);
        CHECK(e.subject_id == 1);
    }
    CHECK_THROWS_AS(validate_cohort({subject(1, 2.0, false, true, 2.0, {0.0})}), CohortError);
}

TEST_CASE("duplicate ids are rejected") {
    try {
        validate_cohort({subject(7, 1.0, true, false, 0.0, {0.0}),
                         subject(7, 2.0, true, false, 0.0, {0.0})});
        FAIL("expected CohortError");
    } catch (const CohortError& e) {
        CHECK(e.fault == CohortFault::duplicate_id);
        CHECK(e.subject_id == 7);
    }
}

TEST_CASE("negative and non-finite times are rejected") {
    CHECK_THROWS_AS(validate_cohort({subject(1, -0.5, true, false, 0.0, {0.0})}), CohortError);
    CHECK_THROWS_AS(
        validate_cohort({subject(1, std::numeric_limits<double>::quiet_NaN(), true, false, 0.0,
                                 {0.0})}),
        CohortError);
    CHECK_THROWS_AS(validate_cohort({subject(1, 2.0, true, true, -1.0, {0.0})}), CohortError);
}

TEST_CASE("covariate length mismatch is rejected") {
    try {
        validate_cohort({subject(1, 1.0, true, false, 0.0, {0.0, 1.0}),
                         subject(2, 1.0, true, false, 0.0, {0.0})});
        FAIL("expected CohortError");
    } catch (const CohortError& e) {
        CHECK(e.fault == CohortFault::covariate_length_mismatch);
        CHECK(e.subject_id == 2);
    }
}

TEST_CASE("treatment at time zero is admissible") {
    const Cohort c = validate_cohort({subject(1, 1.0, true, true, 0.0, {0.0})});
    CHECK(c[0].treated);
    // but such a subject is not an eligible time-zero control
    CHECK(matchsurv::at_risk_untreated(c, 0.0).empty());
}

TEST_CASE("at-risk-untreated boundary conventions") {
    // observation ending exactly at t keeps the subject in the risk set
    const Cohort c1 = validate_cohort({subject(1, 3.0, true, false, 0.0, {0.0})});
    CHECK(matchsurv::at_risk_untreated(c1, 3.0) == std::vector<std::int64_t>{1});

    // already treated before t excludes it
    const Cohort c2 = validate_cohort({subject(1, 3.0, true, true, 1.0, {0.0})});
    CHECK(matchsurv::at_risk_untreated(c2, 2.0).empty());

    // treated exactly at t excludes it as well
    CHECK(matchsurv::at_risk_untreated(c2, 1.0).empty());
    CHECK(matchsurv::at_risk_untreated(c2, 0.5) == std::vector<std::int64_t>{1});
}

TEST_CASE("four-subject risk sets at the two treatment times") {
    // subject 2 treated first, subject 1 treated later, 3 survives everyone,
    // 4 leaves observation between the two treatment times
    const Cohort c = validate_cohort({
        subject(1, 5.0, true, true, 2.0, {0.0}),
        subject(2, 4.0, true, true, 1.0, {0.0}),
        subject(3, 6.0, false, false, 0.0, {0.0}),
        subject(4, 1.5, true, false, 0.0, {0.0}),
    });
    CHECK(matchsurv::at_risk_untreated(c, 1.0) == std::vector<std::int64_t>{1, 3, 4});
    CHECK(matchsurv::at_risk_untreated(c, 2.0) == std::vector<std::int64_t>{3});
}

TEST_CASE("everyone with positive treatment time is at risk at time zero") {
    const Cohort c = validate_cohort({
        subject(1, 5.0, true, true, 2.0, {0.0}),
        subject(2, 4.0, false, false, 0.0, {0.0}),
        subject(3, 0.0, true, false, 0.0, {0.0}),
    });
    CHECK(matchsurv::at_risk_untreated(c, 0.0) == std::vector<std::int64_t>{1, 2, 3});
}

TEST_CASE("index lookup by id") {
    const Cohort c = validate_cohort({subject(10, 1.0, true, false, 0.0, {}),
                                      subject(20, 2.0, true, false, 0.0, {})});
    CHECK(c.index_of(20) == 1);
    CHECK(c.index_of(99) == Cohort::npos);
}
