#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include "bistream/autodiff.hpp"
#include "bistream/tensor.hpp"

namespace bistream {

/// How two same-resolution feature maps are merged. Sum and Max need equal
/// channel counts; Concat stacks channels; Conv stacks channels and then
/// applies a learned convolution, so its kernel must accept the combined
/// channel count.
struct FusionScheme {
  enum class Kind { Sum, Max, Concat, Conv };

  Kind kind = Kind::Sum;
  Tensor kernel;  // Conv only: (C_out, C_a + C_b, k, k)
  Tensor bias;    // Conv only: (C_out)

  static FusionScheme sum() { return {Kind::Sum, {}, {}}; }
  static FusionScheme max() { return {Kind::Max, {}, {}}; }
  static FusionScheme concat() { return {Kind::Concat, {}, {}}; }
  static FusionScheme conv(Tensor kernel, Tensor bias);
};

/// Parameters of the multiplicative input gate: a feature projection
/// (w, b) modulated by a sigmoid gate projection (v_in, b_in). Both are
/// convolutions over the same input, so their output channel counts must
/// agree.
struct InputGateParams {
  Tensor w, b;
  Tensor v_in, b_in;
};

/// Parameters of the output gate that conditions a stage on its coarser
/// predecessor.
struct OutputGateParams {
  Tensor v_out, b_out;
};

/// Merges x_r and x_v under the chosen scheme.
Tensor fuse(const Tensor& x_r, const Tensor& x_v, const FusionScheme& scheme);

/// conv(x_v; w, b) * sigmoid(conv(x_v; v_in, b_in)), elementwise.
Tensor input_gate(const Tensor& x_v, const InputGateParams& p);

/// fuse(x_r, input_gate(x_v, p), scheme). Exactly that composition, so the
/// two spellings are interchangeable bit for bit.
Tensor gated_fuse(const Tensor& x_r, const Tensor& x_v, const InputGateParams& p, const FusionScheme& scheme);

/// x_cur * sigmoid(conv(pool(x_prev); v_out, b_out)). x_prev either
/// matches x_cur's resolution or is exactly twice as large in both spatial
/// extents, in which case it is average-pooled by 2 first.
Tensor output_gate(const Tensor& x_cur, const Tensor& x_prev, const OutputGateParams& p);

/// One sample of the scalar gate comparison: the derivative of the
/// product gate y = sigmoid(x) * x against the derivative of the
/// LSTM-style pair y = tanh(x) * sigmoid(x), each with a central
/// finite-difference counterpart at eps = 1e-6.
struct GateGradientRow {
  double x;
  double grad_proposed;
  double grad_lstm;
  double fd_proposed;
  double fd_lstm;
};

/// Evaluates both gate derivatives at every sample point.
std::vector<GateGradientRow> gate_gradient_report(std::span<const double> xs);

/// CSV with header "x,grad_proposed,grad_lstm,fd_proposed,fd_lstm".
void write_gate_gradient_csv(std::ostream& out, std::span<const GateGradientRow> rows);

}  // namespace bistream
