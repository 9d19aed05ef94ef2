#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <vector>

#include "matchsurv/estimators.hpp"
#include "matchsurv/rng.hpp"
#include "matchsurv/simulate.hpp"
#include "oracle.hpp"

using matchsurv::Cohort;
using matchsurv::CoxFit;
using matchsurv::HazardKind;
using matchsurv::MatchCriterion;
using matchsurv::MatchedPair;
using matchsurv::MatchMode;
using matchsurv::MatchResult;
using matchsurv::StepFunction;
using matchsurv::SubjectRecord;
using matchsurv::SurvivalCurve;
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

CoxFit manual_fit(HazardKind kind, std::vector<double> beta, StepFunction baseline = {}) {
    CoxFit fit;
    fit.kind = kind;
    fit.beta = std::move(beta);
    fit.beta_se.assign(fit.beta.size(), 0.0);
    fit.baseline_cumhaz = std::move(baseline);
    fit.converged = true;
    fit.n_events = fit.baseline_cumhaz.size();
    return fit;
}

MatchedPair make_pair(std::int64_t treated_id, std::int64_t control_id, double t) {
    MatchedPair p;
    p.treated_id = treated_id;
    p.control_id = control_id;
    p.match_time = t;
    return p;
}

}  // namespace

TEST_CASE("without censoring the treated curve is the classical Nelson-Aalen") {
    matchsurv::SimConfig cfg;
    cfg.n = 150;
    cfg.seed = 301;
    cfg.censor_rate = 1e-12;  // essentially no censoring
    auto [cohort, cf] = matchsurv::generate_cohort(cfg, 0);
    const CoxFit treat = matchsurv::fit_cox(cohort, HazardKind::treatment);
    const CoxFit death = matchsurv::fit_cox(cohort, HazardKind::pretreatment_death);
    const CoxFit censor = matchsurv::empty_cox_fit(HazardKind::censoring, 3);
    const MatchResult match =
        matchsurv::run_matching(cohort, &treat, &death, cfg.criterion, cfg.tau);
    REQUIRE(!match.pairs.empty());

    const SurvivalCurve s1 = matchsurv::estimate_S1(cohort, match, censor, cfg.tau, cfg.tau1);

    // shifted post-treatment sample of the matched treated subjects
    std::vector<std::pair<double, bool>> sample;
    for (const MatchedPair& pair : match.pairs) {
        const SubjectRecord& s = cohort[cohort.index_of(pair.treated_id)];
        sample.emplace_back(s.obs_time - s.treat_time, s.death);
    }
    for (double t = 0.0; t <= cfg.tau1; t += 0.25) {
        double capped = 0.0;  // classical NA over deaths in (0, tau1]
        capped = oracle::nelson_aalen(sample, std::min(t, cfg.tau1));
        CHECK_THAT(s1.cumulative_hazard(t), Catch::Matchers::WithinRel(capped, 1e-12) ||
                                                Catch::Matchers::WithinAbs(capped, 1e-15));
    }
    CHECK(s1.survival(0.0) == 1.0);
    CHECK(s1.skipped_jumps == 0);
}

TEST_CASE("single-pair cohort: one control death with constant weights") {
    const Cohort c = validate_cohort({
        subject(1, 4.0, true, true, 0.5, {0.0}),
        subject(2, 1.5, true, false, 0.0, {0.0}),  // dies at shift 1.0
    });
    const CoxFit censor = manual_fit(HazardKind::censoring, {0.0});
    const CoxFit treat = manual_fit(HazardKind::treatment, {0.0});
    MatchResult match;
    match.pairs.push_back(make_pair(1, 2, 0.5));
    match.match_rate = 1.0;

    const SurvivalCurve s0 = matchsurv::estimate_S0(c, match, censor, treat, 3.0, 5.0);
    REQUIRE(s0.cumhaz.size() == 1);
    CHECK(s0.cumhaz.jump_times()[0] == 1.0);
    CHECK(s0.cumhaz.jump_sizes()[0] == 1.0);  // w/w
    CHECK(s0.survival(1.0) == std::exp(-1.0));
    CHECK(s0.survival(0.5) == 1.0);
}

TEST_CASE("a control treated before dying contributes no treatment-free death") {
    const Cohort c = validate_cohort({
        subject(1, 4.0, true, true, 0.5, {0.0}),
        subject(2, 2.5, true, true, 1.5, {0.0}),  // treated, then dies: not a S0 event
    });
    const CoxFit censor = manual_fit(HazardKind::censoring, {0.0});
    const CoxFit treat = manual_fit(HazardKind::treatment, {0.0});
    MatchResult match;
    match.pairs.push_back(make_pair(1, 2, 0.5));

    const SurvivalCurve s0 = matchsurv::estimate_S0(c, match, censor, treat, 3.0, 5.0);
    CHECK(s0.cumhaz.empty());
    CHECK(s0.no_events);
    CHECK(s0.survival(2.0) == 1.0);
}

TEST_CASE("deaths at shifted time exactly tau1 are included; later ones are not") {
    const Cohort c = validate_cohort({
        subject(1, 5.5, true, true, 0.5, {0.0}),  // shift 5.0 == tau1
        subject(2, 6.5, true, true, 0.5, {0.0}),  // shift 6.0 > tau1
        subject(3, 9.0, false, false, 0.0, {0.0}),
    });
    const CoxFit censor = manual_fit(HazardKind::censoring, {0.0});
    MatchResult match;
    match.pairs.push_back(make_pair(1, 3, 0.5));
    match.pairs.push_back(make_pair(2, 3, 0.5));

    const SurvivalCurve s1 = matchsurv::estimate_S1(c, match, censor, 3.0, 5.0);
    REQUIRE(s1.cumhaz.size() == 1);
    CHECK(s1.cumhaz.jump_times()[0] == 5.0);
}

TEST_CASE("flat curve with a warning when there are no qualifying deaths") {
    const Cohort c = validate_cohort({
        subject(1, 4.0, false, true, 0.5, {0.0}),
        subject(2, 4.5, false, false, 0.0, {0.0}),
    });
    const CoxFit censor = manual_fit(HazardKind::censoring, {0.0});
    MatchResult match;
    match.pairs.push_back(make_pair(1, 2, 0.5));
    const SurvivalCurve s1 = matchsurv::estimate_S1(c, match, censor, 3.0, 5.0);
    CHECK(s1.no_events);
    for (double t : {0.0, 2.0, 5.0}) CHECK(s1.survival(t) == 1.0);
}

TEST_CASE("delta is the pointwise difference and starts at zero") {
    matchsurv::SimConfig cfg;
    cfg.n = 200;
    cfg.seed = 11;
    auto [cohort, cf] = matchsurv::generate_cohort(cfg, 0);
    const CoxFit treat = matchsurv::fit_cox(cohort, HazardKind::treatment);
    const CoxFit death = matchsurv::fit_cox(cohort, HazardKind::pretreatment_death);
    const CoxFit censor = matchsurv::fit_cox(cohort, HazardKind::censoring);
    const MatchResult match =
        matchsurv::run_matching(cohort, &treat, &death, cfg.criterion, cfg.tau);

    const SurvivalCurve s1 = matchsurv::estimate_S1(cohort, match, censor, cfg.tau, cfg.tau1);
    const SurvivalCurve s0 =
        matchsurv::estimate_S0(cohort, match, censor, treat, cfg.tau, cfg.tau1);
    const SurvivalCurve delta = matchsurv::estimate_delta(s1, s0);

    CHECK(delta.value(0.0) == 0.0);
    for (double t = 0.0; t <= cfg.tau1; t += 0.31)
        CHECK_THAT(delta.value(t),
                   Catch::Matchers::WithinULP(s1.survival(t) - s0.survival(t), 4));

    const SurvivalCurve self = matchsurv::estimate_delta(s1, s1);
    for (double t = 0.0; t <= cfg.tau1; t += 0.5) CHECK(self.value(t) == 0.0);

    SurvivalCurve other = s0;
    other.tau1 = cfg.tau1 + 1.0;
    CHECK_THROWS_AS(matchsurv::estimate_delta(s1, other), matchsurv::HorizonMismatchError);
}

TEST_CASE("curves are monotone, in (0, 1], and reject evaluation beyond tau1") {
    matchsurv::SimConfig cfg;
    cfg.n = 300;
    cfg.seed = 71;
    auto [cohort, cf] = matchsurv::generate_cohort(cfg, 2);
    const CoxFit treat = matchsurv::fit_cox(cohort, HazardKind::treatment);
    const CoxFit death = matchsurv::fit_cox(cohort, HazardKind::pretreatment_death);
    const CoxFit censor = matchsurv::fit_cox(cohort, HazardKind::censoring);
    const MatchResult match =
        matchsurv::run_matching(cohort, &treat, &death, cfg.criterion, cfg.tau);
    const SurvivalCurve s1 = matchsurv::estimate_S1(cohort, match, censor, cfg.tau, cfg.tau1);
    const SurvivalCurve s0 =
        matchsurv::estimate_S0(cohort, match, censor, treat, cfg.tau, cfg.tau1);

    for (const SurvivalCurve* curve : {&s1, &s0}) {
        double prev = 1.0;
        for (double t = 0.0; t <= cfg.tau1; t += 0.05) {
            const double v = curve->survival(t);
            CHECK(v > 0.0);
            CHECK(v <= prev);
            prev = v;
        }
        CHECK_THROWS_AS(curve->survival(cfg.tau1 + 0.01), matchsurv::EvalOutOfRangeError);
        CHECK_THROWS_AS(curve->survival(-0.01), matchsurv::EvalOutOfRangeError);
        CHECK(curve->survival(cfg.tau1) > 0.0);  // closed right endpoint
    }

    // every jump is an observed matched treated death / in-set control death
    for (double u : s1.cumhaz.jump_times()) {
        bool found = false;
        for (const auto& pair : match.pairs) {
            const SubjectRecord& s = cohort[cohort.index_of(pair.treated_id)];
            found = found || (s.death && s.obs_time - s.treat_time == u);
        }
        CHECK(found);
    }
    for (double u : s0.cumhaz.jump_times()) {
        bool found = false;
        for (const auto& pair : match.pairs) {
            const SubjectRecord& s = cohort[cohort.index_of(pair.control_id)];
            found = found || (!s.treated && s.death && s.obs_time - pair.match_time == u);
        }
        CHECK(found);
    }
}

TEST_CASE("estimators agree with the brute-force transcription") {
    matchsurv::SimConfig cfg;
    cfg.n = 120;
    cfg.seed = 404;
    for (int rep = 0; rep < 3; ++rep) {
        auto [cohort, cf] = matchsurv::generate_cohort(cfg, rep);
        const CoxFit treat = matchsurv::fit_cox(cohort, HazardKind::treatment);
        const CoxFit death = matchsurv::fit_cox(cohort, HazardKind::pretreatment_death);
        const CoxFit censor = matchsurv::fit_cox(cohort, HazardKind::censoring);
        const MatchResult match =
            matchsurv::run_matching(cohort, &treat, &death, cfg.criterion, cfg.tau);
        const SurvivalCurve s1 =
            matchsurv::estimate_S1(cohort, match, censor, cfg.tau, cfg.tau1);
        const SurvivalCurve s0 =
            matchsurv::estimate_S0(cohort, match, censor, treat, cfg.tau, cfg.tau1);

        const oracle::RawFit rc = oracle::raw(censor);
        const oracle::RawFit rt = oracle::raw(treat);
        for (double t = 0.25; t <= cfg.tau1; t += 0.5) {
            const double l1 = oracle::lambda1(cohort, match, rc, cfg.tau, cfg.tau1, t);
            const double l0 = oracle::lambda0(cohort, match, rc, rt, cfg.tau, cfg.tau1, t);
            CHECK_THAT(s1.cumulative_hazard(t), Catch::Matchers::WithinRel(l1, 1e-12));
            CHECK_THAT(s0.cumulative_hazard(t), Catch::Matchers::WithinRel(l0, 1e-12));
        }
    }
}

TEST_CASE("scaling every weight on one side leaves that curve unchanged") {
    // identical relative risks, so a baseline jump at time 0 multiplies every
    // weight by the same constant
    const Cohort c = validate_cohort({
        subject(1, 4.0, true, true, 0.5, {0.2}),
        subject(2, 3.5, true, true, 1.0, {0.4}),
        subject(3, 2.8, true, false, 0.0, {0.3}),
        subject(4, 6.0, false, false, 0.0, {0.1}),
    });
    MatchResult match;
    match.pairs.push_back(make_pair(1, 3, 0.5));
    match.pairs.push_back(make_pair(2, 4, 1.0));

    const CoxFit censor_plain = manual_fit(HazardKind::censoring, {0.0});
    const CoxFit censor_scaled =
        manual_fit(HazardKind::censoring, {0.0}, StepFunction({0.0}, {0.7}));
    const CoxFit treat = manual_fit(HazardKind::treatment, {0.0});

    const SurvivalCurve a = matchsurv::estimate_S1(c, match, censor_plain, 3.0, 5.0);
    const SurvivalCurve b = matchsurv::estimate_S1(c, match, censor_scaled, 3.0, 5.0);
    REQUIRE(a.cumhaz.size() == b.cumhaz.size());
    for (std::size_t i = 0; i < a.cumhaz.size(); ++i)
        CHECK_THAT(b.cumhaz.jump_sizes()[i],
                   Catch::Matchers::WithinULP(a.cumhaz.jump_sizes()[i], 4));

    const SurvivalCurve a0 = matchsurv::estimate_S0(c, match, censor_plain, treat, 3.0, 5.0);
    const SurvivalCurve b0 = matchsurv::estimate_S0(c, match, censor_scaled, treat, 3.0, 5.0);
    REQUIRE(a0.cumhaz.size() == b0.cumhaz.size());
    for (std::size_t i = 0; i < a0.cumhaz.size(); ++i)
        CHECK_THAT(b0.cumhaz.jump_sizes()[i],
                   Catch::Matchers::WithinULP(a0.cumhaz.jump_sizes()[i], 4));
}
