#pragma once

#include "bistream/tensor.hpp"

namespace bistream {

/// Parameters of one attention edge: w_beta/b_beta reduce the high-level
/// map to single-channel logits; w_low/b_low project the low-level map to
/// the high-level channel count.
struct AttentionParams {
  Tensor w_beta, b_beta;
  Tensor w_low, b_low;
};

/// Single-channel map of non-negative weights that sum to 1 (within 1e-9).
/// The constructor enforces both properties.
class AttentionMap {
 public:
  explicit AttentionMap(Tensor values);
  const Tensor& values() const { return values_; }

 private:
  Tensor values_;
};

/// softmax over all positions of tanh(conv(x_j; w_beta, b_beta)), the
/// attention distribution of one high-level stage.
AttentionMap location_attention(const Tensor& x_j, const AttentionParams& p);

/// Adds the attention-weighted low-level contribution to x_j:
/// x_j + down(conv(x_m; w_low, b_low) * up(alpha)), where up/down bridge
/// the resolution gap between x_m and x_j (the spatial ratio must be the
/// same integer on both axes).
Tensor apply_mla(const Tensor& x_j, const Tensor& x_m, const AttentionMap& alpha, const AttentionParams& p);

}  // namespace bistream
