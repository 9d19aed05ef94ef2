#ifndef MATCHSURV_MATCHSURV_HPP
#define MATCHSURV_MATCHSURV_HPP

#include "matchsurv/cohort.hpp"
#include "matchsurv/cox.hpp"
#include "matchsurv/csv.hpp"
#include "matchsurv/estimators.hpp"
#include "matchsurv/matching.hpp"
#include "matchsurv/pipeline.hpp"
#include "matchsurv/rng.hpp"
#include "matchsurv/simulate.hpp"
#include "matchsurv/step_function.hpp"
#include "matchsurv/variance.hpp"
#include "matchsurv/weights.hpp"

#endif  // MATCHSURV_MATCHSURV_HPP
