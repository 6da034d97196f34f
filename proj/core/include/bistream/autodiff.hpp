#pragma once

#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <vector>

#include "bistream/tensor.hpp"

namespace bistream {

namespace detail {

/// Backward rule of one recorded node. `out_grad` is the gradient of the
/// scalar objective with respect to the node's output; `input_grads[i]` is
/// the accumulation buffer of the i-th input, already zero-initialised, or
/// an empty span when that input is an untracked constant. Rules must add
/// into the buffers, never overwrite, so shared inputs accumulate.
using BackwardFn = std::function<void(std::span<const double> out_grad,
                                      std::span<const std::span<double>> input_grads)>;

struct TapeState {
  struct Node {
    std::vector<int> inputs;  // node ids; -1 marks an untracked input
    std::size_t size = 0;     // element count of the node's output
    bool leaf = false;
    BackwardFn backward;
  };
  std::vector<Node> nodes;
  std::vector<std::vector<double>> grads;  // parallel to nodes; empty = no gradient yet
  bool has_grads = false;
};

/// Builds the op result and appends a node when any input is tracked.
/// Inputs recorded on two different tapes raise invalid_argument.
Tensor record(std::vector<std::size_t> shape, std::shared_ptr<const std::vector<double>> values,
              std::initializer_list<const Tensor*> inputs, BackwardFn backward);
Tensor record(std::vector<std::size_t> shape, std::vector<double> values,
              std::initializer_list<const Tensor*> inputs, BackwardFn backward);

}  // namespace detail

/// Records operations for reverse-mode differentiation.
///
/// Leaves enter through var(); every op whose inputs include a tracked
/// tensor appends a node, so node ids grow in execution order and the
/// recorded graph is acyclic by construction. Destroying the Tape object
/// does not invalidate outstanding tensors: they share ownership of the
/// recording.
class Tape {
 public:
  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  /// Registers the tensor's values as a differentiable leaf and returns
  /// the tracked handle.
  Tensor var(const Tensor& value);

  /// Leaves plus recorded op outputs.
  std::size_t node_count() const;

 private:
  std::shared_ptr<detail::TapeState> state_;
};

/// Reverse accumulation from a tracked single-element tensor. Resets any
/// previous gradients on the tape, seeds the output with 1 and sweeps the
/// nodes in reverse id order. Afterwards every leaf reports a gradient;
/// leaves the objective does not depend on report zeros.
void backward(const Tensor& scalar_output);

// --- differentiable operations -----------------------------------------
// All ops accept tracked and plain tensors alike, validate shapes with
// invalid_argument, and are pure: equal inputs give bit-identical outputs.

/// Elementwise sum; shapes must match exactly.
Tensor add(const Tensor& a, const Tensor& b);

/// Elementwise product; shapes must match exactly.
Tensor mul(const Tensor& a, const Tensor& b);

/// Elementwise maximum; on ties the gradient routes to the first operand.
Tensor emax(const Tensor& a, const Tensor& b);

/// Concatenates two (C, H, W) tensors along the channel axis.
Tensor concat_channels(const Tensor& a, const Tensor& b);

/// 2-D convolution with zero padding that preserves the spatial extents.
/// x is (C_in, H, W), w is (C_out, C_in, k, k) with k in {1, 3}, b is
/// (C_out); the result is (C_out, H, W).
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b);

/// Elementwise logistic function 1 / (1 + exp(-x)).
Tensor sigmoid(const Tensor& x);

/// Elementwise hyperbolic tangent.
Tensor tanh(const Tensor& x);

/// Softmax over all spatial positions of a single-channel map, shape
/// (H, W) or (1, H, W). Stabilised by subtracting the maximum, so the
/// result is positive and sums to 1.
Tensor softmax_spatial(const Tensor& x);

/// Average pooling by an integer factor; both spatial extents must be
/// divisible by it. Accepts (C, H, W) or (H, W).
Tensor downsample(const Tensor& x, std::size_t factor);

/// Nearest-neighbour upsampling by an integer factor; the adjoint of the
/// replication is a block sum. Accepts (C, H, W) or (H, W).
Tensor upsample_nearest(const Tensor& x, std::size_t factor);

/// Replicates a single-channel map (H, W) or (1, H, W) to `count`
/// channels.
Tensor repeat_channels(const Tensor& x, std::size_t count);

/// Multiplies every element by a constant.
Tensor scale(const Tensor& x, double factor);

/// Sum of all elements as a single-element tensor of shape (1).
Tensor sum(const Tensor& x);

}  // namespace bistream
