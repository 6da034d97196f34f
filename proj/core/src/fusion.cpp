#include "bistream/fusion.hpp"

#include <cmath>
#include <ostream>
#include <stdexcept>

namespace bistream {

namespace {

double sigmoid_scalar(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

FusionScheme FusionScheme::conv(Tensor kernel, Tensor bias) {
  if (!kernel.defined() || !bias.defined()) {
    throw std::invalid_argument("fusion: Conv scheme needs a kernel and a bias");
  }
  return {Kind::Conv, std::move(kernel), std::move(bias)};
}

Tensor fuse(const Tensor& x_r, const Tensor& x_v, const FusionScheme& scheme) {
  switch (scheme.kind) {
    case FusionScheme::Kind::Sum:
      return add(x_r, x_v);
    case FusionScheme::Kind::Max:
      return emax(x_r, x_v);
    case FusionScheme::Kind::Concat:
      return concat_channels(x_r, x_v);
    case FusionScheme::Kind::Conv:
      if (!scheme.kernel.defined() || !scheme.bias.defined()) {
        throw std::invalid_argument("fuse: Conv scheme without kernel or bias");
      }
      return conv2d(concat_channels(x_r, x_v), scheme.kernel, scheme.bias);
  }
  throw std::invalid_argument("fuse: unknown scheme");
}

Tensor input_gate(const Tensor& x_v, const InputGateParams& p) {
  Tensor projected = conv2d(x_v, p.w, p.b);
  Tensor gate = sigmoid(conv2d(x_v, p.v_in, p.b_in));
  return mul(projected, gate);
}

Tensor gated_fuse(const Tensor& x_r, const Tensor& x_v, const InputGateParams& p, const FusionScheme& scheme) {
  return fuse(x_r, input_gate(x_v, p), scheme);
}

Tensor output_gate(const Tensor& x_cur, const Tensor& x_prev, const OutputGateParams& p) {
  if (x_cur.rank() != 3 || x_prev.rank() != 3) {
    throw std::invalid_argument("output_gate: feature maps must be (C, H, W), shapes are " +
                                shape_string(x_cur.shape()) + " and " + shape_string(x_prev.shape()));
  }
  Tensor guide = x_prev;
  if (x_prev.extent(1) == 2 * x_cur.extent(1) && x_prev.extent(2) == 2 * x_cur.extent(2)) {
    guide = downsample(x_prev, 2);
  } else if (x_prev.extent(1) != x_cur.extent(1) || x_prev.extent(2) != x_cur.extent(2)) {
    throw std::invalid_argument("output_gate: precedent " + shape_string(x_prev.shape()) +
                                " must match or double the resolution of " + shape_string(x_cur.shape()));
  }
  Tensor gate = sigmoid(conv2d(guide, p.v_out, p.b_out));
  return mul(x_cur, gate);
}

std::vector<GateGradientRow> gate_gradient_report(std::span<const double> xs) {
  constexpr double eps = 1e-6;
  const auto proposed = [](double x) { return sigmoid_scalar(x) * x; };
  const auto lstm = [](double x) { return std::tanh(x) * sigmoid_scalar(x); };

  std::vector<GateGradientRow> rows;
  rows.reserve(xs.size());
  for (double x : xs) {
    const double s = sigmoid_scalar(x);
    const double ds = s * (1.0 - s);
    const double t = std::tanh(x);
    const double dt = 1.0 - t * t;
    GateGradientRow row;
    row.x = x;
    row.grad_proposed = s + ds * x;
    row.grad_lstm = dt * s + t * ds;
    row.fd_proposed = (proposed(x + eps) - proposed(x - eps)) / (2.0 * eps);
    row.fd_lstm = (lstm(x + eps) - lstm(x - eps)) / (2.0 * eps);
    rows.push_back(row);
  }
  return rows;
}

void write_gate_gradient_csv(std::ostream& out, std::span<const GateGradientRow> rows) {
  out << "x,grad_proposed,grad_lstm,fd_proposed,fd_lstm\n";
  const auto old_precision = out.precision(17);
  for (const GateGradientRow& r : rows) {
    out << r.x << ',' << r.grad_proposed << ',' << r.grad_lstm << ',' << r.fd_proposed << ',' << r.fd_lstm << '\n';
  }
  out.precision(old_precision);
  if (!out) throw std::runtime_error("gate gradient CSV write failed");
}

}  // namespace bistream
