#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "msvdd/tensor.hpp"

namespace msvdd::nd {

struct GradCheckOptions {
    double eps = 1e-6;
    // Coordinates checked per input; 0 checks all of them. A subset is drawn
    // deterministically from `seed` when smaller than the input.
    std::size_t max_coords_per_input = 0;
    std::uint64_t seed = 0;
    // Skip coordinates whose forward and backward one-sided differences
    // disagree by more than kink_tolerance * max(1, |central|): the step
    // straddles a non-differentiable point (ReLU, hinge, Huber corner).
    bool skip_kinks = false;
    double kink_tolerance = 1e-4;
};

struct GradCheckReport {
    double max_error = 0.0;
    std::size_t checked = 0;
    std::size_t skipped = 0;
};

using ScalarFn = std::function<Tensor(std::span<const Tensor>)>;

// Max over checked coordinates of |analytic - central difference| / max(1, |analytic|).
// f must return a scalar; eps must lie in [1e-6, 1e-3].
double grad_check(const ScalarFn& f, std::span<const Tensor> inputs, const GradCheckOptions& options = {});
GradCheckReport grad_check_report(const ScalarFn& f, std::span<const Tensor> inputs,
                                  const GradCheckOptions& options = {});

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps = 1e-6);

} // namespace msvdd::nd
