#include "bistream/attention.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "bistream/autodiff.hpp"

namespace bistream {

AttentionMap::AttentionMap(Tensor values) : values_(std::move(values)) {
  if (!values_.defined()) throw std::invalid_argument("attention map: undefined tensor");
  const bool single_channel = values_.rank() == 2 || (values_.rank() == 3 && values_.extent(0) == 1);
  if (!single_channel) {
    throw std::invalid_argument("attention map must be single-channel, shape is " + shape_string(values_.shape()));
  }
  double total = 0.0;
  for (double v : values_.values()) {
    if (v < 0.0) throw std::invalid_argument("attention map has a negative weight " + std::to_string(v));
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument("attention map weights sum to " + std::to_string(total) + ", expected 1");
  }
}

AttentionMap location_attention(const Tensor& x_j, const AttentionParams& p) {
  if (p.w_beta.rank() != 4 || p.w_beta.extent(0) != 1) {
    throw std::invalid_argument("location_attention: logits kernel must have one output channel, shape is " +
                                shape_string(p.w_beta.shape()));
  }
  Tensor logits = tanh(conv2d(x_j, p.w_beta, p.b_beta));
  return AttentionMap(softmax_spatial(logits));
}

Tensor apply_mla(const Tensor& x_j, const Tensor& x_m, const AttentionMap& alpha, const AttentionParams& p) {
  if (x_j.rank() != 3 || x_m.rank() != 3) {
    throw std::invalid_argument("apply_mla: feature maps must be (C, H, W), shapes are " + shape_string(x_j.shape()) +
                                " and " + shape_string(x_m.shape()));
  }
  const std::size_t hj = x_j.extent(1), wj = x_j.extent(2);
  const std::size_t hm = x_m.extent(1), wm = x_m.extent(2);
  if (hm % hj != 0 || wm % wj != 0 || hm / hj != wm / wj || hm / hj == 0) {
    throw std::invalid_argument("apply_mla: low-level resolution " + shape_string(x_m.shape()) +
                                " is not an integer multiple of " + shape_string(x_j.shape()));
  }
  const Tensor& a = alpha.values();
  const std::size_t ha = a.rank() == 2 ? a.extent(0) : a.extent(1);
  const std::size_t wa = a.rank() == 2 ? a.extent(1) : a.extent(2);
  if (ha != hj || wa != wj) {
    throw std::invalid_argument("apply_mla: attention map " + shape_string(a.shape()) +
                                " does not match the high-level resolution " + shape_string(x_j.shape()));
  }
  const std::size_t factor = hm / hj;

  Tensor projected = conv2d(x_m, p.w_low, p.b_low);
  if (projected.extent(0) != x_j.extent(0)) {
    throw std::invalid_argument("apply_mla: projection yields " + std::to_string(projected.extent(0)) +
                                " channels, x_j has " + std::to_string(x_j.extent(0)));
  }
  Tensor spread = factor == 1 ? a : upsample_nearest(a, factor);
  Tensor weighted = mul(projected, repeat_channels(spread, projected.extent(0)));
  Tensor pooled = factor == 1 ? weighted : downsample(weighted, factor);
  return add(x_j, pooled);
}

}  // namespace bistream
