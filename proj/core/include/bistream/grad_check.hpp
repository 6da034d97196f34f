#pragma once

#include <functional>

#include "bistream/tensor.hpp"

namespace bistream {

/// Central-difference gradient of a scalar function: each element of x is
/// displaced by +/- eps in turn and the slope (f(x+) - f(x-)) / (2 eps)
/// recorded. eps must be positive.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double eps = 1e-5);

/// max_i |a_i - b_i| / max(1, |a_i|): relative where the analytic value is
/// large, absolute where it is small. Shapes must match.
double max_relative_error(const Tensor& analytic, const Tensor& reference);

}  // namespace bistream
