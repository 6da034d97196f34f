#include "bistream/grad_check.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace bistream {

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double eps) {
  if (!x.defined()) throw std::invalid_argument("finite_diff_grad: undefined tensor");
  if (!(eps > 0.0)) throw std::invalid_argument("finite_diff_grad: eps must be positive");
  const std::vector<double> base(x.values().begin(), x.values().end());
  std::vector<double> grad(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) {
    std::vector<double> probe = base;
    probe[i] = base[i] + eps;
    const double hi = f(Tensor::from(x.shape(), probe));
    probe[i] = base[i] - eps;
    const double lo = f(Tensor::from(x.shape(), std::move(probe)));
    grad[i] = (hi - lo) / (2.0 * eps);
  }
  return Tensor::from(x.shape(), std::move(grad));
}

double max_relative_error(const Tensor& analytic, const Tensor& reference) {
  if (analytic.shape() != reference.shape()) {
    throw std::invalid_argument("max_relative_error: shape mismatch " + shape_string(analytic.shape()) + " vs " +
                                shape_string(reference.shape()));
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double a = analytic[i];
    const double err = std::abs(a - reference[i]) / std::max(1.0, std::abs(a));
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace bistream
