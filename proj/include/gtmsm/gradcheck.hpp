// Central finite-difference verification of analytic gradients.
#pragma once

#include "gtmsm/params.hpp"
#include "gtmsm/rng.hpp"

#include <functional>
#include <string>
#include <vector>

namespace gtmsm {

struct GradCheckGroupReport {
    std::string name;
    double max_rel_err = 0.0;
    int64_t checked = 0;
};

struct GradCheckReport {
    std::vector<GradCheckGroupReport> groups;
    double max_rel_err = 0.0;
    bool pass = false;
    double tolerance = 0.0;

    std::string summary() const;
};

// loss_fn(with_grad): evaluates the loss at the current parameter values;
// when with_grad is set it must also accumulate gradients into params.grad
// (on top of whatever is there — grad_check zeroes beforehand). The loss must
// be deterministic: any noise has to be drawn outside and captured.
//
// Every element is checked unless the group exceeds `max_per_group` elements
// (0 = no limit), in which case a random subsample of that size is drawn
// from `pick`.
GradCheckReport grad_check(const std::function<double(bool with_grad)>& loss_fn,
                           Params& params, double eps, double tolerance,
                           int64_t max_per_group = 0, RngStream pick = RngStream::root(0));

} // namespace gtmsm
