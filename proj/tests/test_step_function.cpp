#include <catch2/catch_amalgamated.hpp>

#include "matchsurv/rng.hpp"
#include "matchsurv/step_function.hpp"

using matchsurv::Rng;
using matchsurv::StepFunction;

TEST_CASE("step_eval basics") {
    const StepFunction f({1.0, 2.0}, {0.5, 0.3});
    CHECK(f(0.9) == 0.0);
    CHECK(f(1.0) == 0.5);  // right-continuous at a jump

    // Sum of all jumps past the last time, checked by direct summation.
    double direct = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i)
        if (f.jump_times()[i] <= 5.0) direct += f.jump_sizes()[i];
    CHECK(f(5.0) == direct);
    CHECK(direct == 0.8);
}

TEST_CASE("step function with a jump at zero") {
    const StepFunction f({0.0, 1.0}, {0.25, 0.5});
    CHECK(f(0.0) == 0.25);
    CHECK(f(0.5) == 0.25);
    CHECK(f(1.0) == 0.75);
}

TEST_CASE("empty step function is identically zero") {
    const StepFunction f;
    CHECK(f(0.0) == 0.0);
    CHECK(f(100.0) == 0.0);
    CHECK(f.total() == 0.0);
}

TEST_CASE("construction rejects bad jump lists") {
    CHECK_THROWS_AS(StepFunction({2.0, 1.0}, {0.1, 0.1}), std::invalid_argument);
    CHECK_THROWS_AS(StepFunction({1.0, 1.0}, {0.1, 0.1}), std::invalid_argument);
    CHECK_THROWS_AS(StepFunction({-1.0}, {0.1}), std::invalid_argument);
    CHECK_THROWS_AS(StepFunction({1.0}, {0.1, 0.2}), std::invalid_argument);
}

TEST_CASE("increment covers (a, b]") {
    const StepFunction f({1.0, 2.0}, {0.5, 0.3});
    CHECK(f.increment(1.0, 2.0) == 0.3);  // excludes the jump at a
    CHECK(f.increment(0.0, 1.0) == 0.5);
    CHECK(f.increment(2.0, 9.0) == 0.0);
}

TEST_CASE("monotone when all jump sizes are nonnegative") {
    Rng rng(7);
    std::vector<double> times, sizes;
    double t = 0.0;
    for (int i = 0; i < 40; ++i) {
        t += rng.exponential(1.0);
        times.push_back(t);
        sizes.push_back(rng.exponential(2.0));
    }
    const StepFunction f(times, sizes);
    double prev = f(0.0);
    for (double x = 0.0; x < t + 1.0; x += 0.05) {
        const double cur = f(x);
        CHECK(cur >= prev);
        prev = cur;
    }
}

TEST_CASE("merge adds pointwise on a dense grid") {
    Rng rng(11);
    auto random_fn = [&rng](int jumps) {
        std::vector<double> times, sizes;
        double t = 0.0;
        for (int i = 0; i < jumps; ++i) {
            t += rng.exponential(1.5);
            times.push_back(t);
            sizes.push_back(rng.normal());
        }
        return StepFunction(times, sizes);
    };
    const StepFunction f = random_fn(25);
    const StepFunction g = random_fn(30);
    const StepFunction m = matchsurv::merge(f, g);
    for (double x = 0.0; x < 30.0; x += 0.083)
        CHECK_THAT(m(x), Catch::Matchers::WithinULP(f(x) + g(x), 4));
}

TEST_CASE("merge handles coincident jump times") {
    const StepFunction f({1.0, 3.0}, {0.5, 1.0});
    const StepFunction g({1.0, 2.0}, {0.25, 0.25});
    const StepFunction m = matchsurv::merge(f, g);
    REQUIRE(m.size() == 3);
    CHECK(m(1.0) == 0.75);
    CHECK(m(2.0) == 1.0);
    CHECK(m(3.0) == 2.0);
}
