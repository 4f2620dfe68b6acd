#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "mplp/tensor.hpp"

namespace mplp {

struct GradCheckOptions {
    double eps = 1e-4;
    // coordinates sampled per parameter tensor; <= 0 checks every coordinate
    int64_t max_coords_per_param = 16;
    uint64_t seed = 0x5eed;
    // central differences cannot resolve gradients below roundoff noise;
    // when both the analytic and numeric values sit under this floor the
    // coordinate counts as agreeing
    double noise_floor = 1e-9;
};

/// Compares analytic gradients of `build_loss` against central differences.
///
/// `build_loss` must be a pure function of the parameter values: it is called
/// once under a fresh tape for the analytic pass and twice per sampled
/// coordinate (no tape) for the numeric pass. When sampling, half the budget
/// goes to the largest-|analytic| coordinates and half to random ones, so
/// both wrong gradients and silently-missing gradients are caught. Returns
/// the max over sampled coordinates of
/// |analytic - numeric| / (|analytic| + |numeric| + 1e-12).
/// Parameter grads are left zeroed on exit.
double finite_difference_check(const std::function<Tensor()>& build_loss,
                               const std::vector<Tensor>& params,
                               const GradCheckOptions& opts = {});

}  // namespace mplp
