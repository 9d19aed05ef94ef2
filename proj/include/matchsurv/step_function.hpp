#ifndef MATCHSURV_STEP_FUNCTION_HPP
#define MATCHSURV_STEP_FUNCTION_HPP

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <utility>
#include <vector>

namespace matchsurv {

// Right-continuous step function stored as an exact jump list:
// value(t) = sum of jump sizes at times u <= t, and 0 below the first jump.
// Immutable after construction.
class StepFunction {
public:
    StepFunction() = default;

    StepFunction(std::vector<double> jump_times, std::vector<double> jump_sizes)
        : times_(std::move(jump_times)), sizes_(std::move(jump_sizes)) {
        if (times_.size() != sizes_.size())
            throw std::invalid_argument("StepFunction: jump_times/jump_sizes length mismatch");
        for (std::size_t i = 0; i < times_.size(); ++i) {
            if (!(times_[i] >= 0.0))
                throw std::invalid_argument("StepFunction: jump times must be nonnegative reals");
            if (i > 0 && !(times_[i] > times_[i - 1]))
                throw std::invalid_argument("StepFunction: jump times must be strictly increasing");
        }
        cumulative_.resize(times_.size());
        double acc = 0.0;
        for (std::size_t i = 0; i < times_.size(); ++i) {
            acc += sizes_[i];
            cumulative_[i] = acc;
        }
    }

    double operator()(double t) const {
        auto it = std::upper_bound(times_.begin(), times_.end(), t);
        if (it == times_.begin()) return 0.0;
        return cumulative_[static_cast<std::size_t>(it - times_.begin()) - 1];
    }

    // Sum of jumps in the half-open interval (a, b], by direct summation so
    // an interval holding one jump returns that jump size exactly.
    double increment(double a, double b) const {
        auto lo = std::upper_bound(times_.begin(), times_.end(), a);
        auto hi = std::upper_bound(times_.begin(), times_.end(), b);
        double sum = 0.0;
        for (auto it = lo; it != hi; ++it)
            sum += sizes_[static_cast<std::size_t>(it - times_.begin())];
        return sum;
    }

    const std::vector<double>& jump_times() const { return times_; }
    const std::vector<double>& jump_sizes() const { return sizes_; }
    std::size_t size() const { return times_.size(); }
    bool empty() const { return times_.empty(); }
    double total() const { return cumulative_.empty() ? 0.0 : cumulative_.back(); }

private:
    std::vector<double> times_;
    std::vector<double> sizes_;
    std::vector<double> cumulative_;
};

// Union of the jump lists; coincident jump times add.
inline StepFunction merge(const StepFunction& f, const StepFunction& g) {
    std::vector<double> times;
    std::vector<double> sizes;
    times.reserve(f.size() + g.size());
    sizes.reserve(f.size() + g.size());
    std::size_t i = 0, j = 0;
    while (i < f.size() || j < g.size()) {
        const bool take_f = j >= g.size() ||
                            (i < f.size() && f.jump_times()[i] <= g.jump_times()[j]);
        const bool take_g = i >= f.size() ||
                            (j < g.size() && g.jump_times()[j] <= f.jump_times()[i]);
        if (take_f && take_g) {
            times.push_back(f.jump_times()[i]);
            sizes.push_back(f.jump_sizes()[i] + g.jump_sizes()[j]);
            ++i;
            ++j;
        } else if (take_f) {
            times.push_back(f.jump_times()[i]);
            sizes.push_back(f.jump_sizes()[i]);
            ++i;
        } else {
            times.push_back(g.jump_times()[j]);
            sizes.push_back(g.jump_sizes()[j]);
            ++j;
        }
    }
    return StepFunction(std::move(times), std::move(sizes));
}

}  // namespace matchsurv

#endif  // MATCHSURV_STEP_FUNCTION_HPP
