#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bistream/autodiff.hpp"
#include "bistream/fusion.hpp"
#include "bistream/metrics.hpp"
#include "bistream/tensor.hpp"

namespace bistream {

enum class BranchStyle { PlainChain, Residual };

/// Structure of one encoder branch: five stages, each a 3x3 convolution
/// followed by tanh, with 2x downsampling in front of stages 2..5.
/// Residual style adds a skip connection around every stage (a 1x1
/// projection where the channel count changes, identity elsewhere);
/// PlainChain does not — the structural difference between the two
/// branches is the point of the architecture.
struct BranchSpec {
  BranchStyle style = BranchStyle::PlainChain;
  std::array<std::size_t, 5> widths{8, 16, 24, 24, 24};
};

struct ConvParam {
  Tensor w;  // (C_out, C_in, k, k)
  Tensor b;  // (C_out)
};

/// The two-branch network. One branch encodes the image through a plain
/// chain, the other through residual stages gated on the fused stream;
/// each stage fuses both views through an input gate plus a learned 1x1
/// fusion convolution. The two deepest fused maps receive attention-
/// weighted contributions from the two shallowest ones, and a progressive
/// 2x-upsampling decoder reduces to a single sigmoid channel at the input
/// resolution.
struct BiStreamNet {
  std::size_t input_channels = 3;
  BranchSpec branch_v;  // PlainChain
  BranchSpec branch_r;  // Residual

  std::array<ConvParam, 5> plain_stages;
  std::array<ConvParam, 5> residual_stages;
  std::array<std::optional<ConvParam>, 5> residual_skips;  // 1x1 where widths change
  std::array<InputGateParams, 5> input_gates;              // stages 1..5
  std::array<OutputGateParams, 4> output_gates;            // stages 2..5
  std::array<ConvParam, 5> fusion_convs;                   // 1x1, 2C -> C
  std::array<ConvParam, 2> attention_logits;               // j in {4, 5}
  std::array<std::array<ConvParam, 2>, 2> attention_low;   // [j][m], m in {1, 2}
  std::array<ConvParam, 4> decoder;                        // 3x3, coarse to fine
};

/// Deterministic parameter initialisation: every weight and bias is drawn
/// uniformly from [-s, s] with s = 1/sqrt(fan_in) of its layer, from one
/// mt19937_64 stream, so equal seeds give bit-identical networks. The
/// stage-4 and stage-5 widths must agree (the decoder merges those maps
/// by addition).
BiStreamNet build(std::uint64_t seed, const std::array<std::size_t, 5>& widths = {8, 16, 24, 24, 24},
                  std::size_t input_channels = 3);

/// Visits every parameter tensor in a fixed order with a stable name.
/// This order is the single source of truth for initialisation, updates,
/// counting and checkpoints.
void for_each_parameter(BiStreamNet& net, const std::function<void(const std::string&, Tensor&)>& fn);
void for_each_parameter(const BiStreamNet& net, const std::function<void(const std::string&, const Tensor&)>& fn);

std::size_t parameter_count(const BiStreamNet& net);

/// Differentiable forward pass feeding separate images to the residual
/// and plain branches. Both must be (input_channels, H, W) with H and W
/// positive multiples of 16. The result is (1, H, W), strictly inside
/// (0, 1).
Tensor forward_dual(const BiStreamNet& net, const Tensor& image_residual, const Tensor& image_plain);

/// Differentiable forward pass on one image (both branches see it).
Tensor forward_tensor(const BiStreamNet& net, const Tensor& image);

/// Forward pass as a saliency map.
SaliencyMap forward(const BiStreamNet& net, const Tensor& image);

struct InferenceResult {
  SaliencyMap saliency;
  Tensor plain_stage5;     // (1, H/16, W/16) channel mean of the plain branch
  Tensor residual_stage5;  // (1, H/16, W/16) channel mean of the residual branch, before gating
};

/// Forward pass plus each branch's stage-5 response projected to one
/// channel (mean over channels, before gating and fusion) for qualitative
/// inspection of what the two encoders attend to.
InferenceResult infer(const BiStreamNet& net, const Tensor& image);

/// Mean binary cross entropy, -mean(t log p + (1-t) log(1-p)), with the
/// prediction clamped to [1e-7, 1 - 1e-7]. The target is treated as a
/// constant. Shapes must match.
Tensor bce_loss(const Tensor& pred, const Tensor& target);
double bce_loss(const SaliencyMap& pred, const GroundTruthMask& gt);

struct TrainConfig {
  double learning_rate = 1e-2;
  double momentum = 0.99;
  double weight_decay = 5e-4;
  std::size_t batch_size = 2;
  std::size_t iterations = 20;
  std::uint64_t seed = 1;
};

struct TrainSample {
  Tensor image;  // (C, H, W)
  Tensor mask;   // (1, H, W), binary
};

struct TrainResult {
  std::vector<double> loss_history;  // batch loss per iteration, before the update
};

/// Mini-batch SGD with momentum and decoupled weight decay:
///   v <- momentum * v + g;  p <- p - lr * v - wd * p
/// so a zero learning rate leaves only the decay term. Samples are drawn
/// by reshuffling the dataset each epoch with a seeded Fisher-Yates pass;
/// the whole run is a pure function of (net, dataset, cfg).
TrainResult train(BiStreamNet& net, std::span<const TrainSample> dataset, const TrainConfig& cfg);

/// Deterministic synthetic task: a bright disc on a dark field, with the
/// disc position and radius varied per sample. Images are (3, size, size)
/// and masks mark the disc.
std::vector<TrainSample> make_blob_dataset(std::size_t count, std::size_t size, std::uint64_t seed);

/// Versioned text container of every named parameter in traversal order,
/// each entry one name line followed by the tensor text form (rank-4
/// kernels are flattened to (C_out * C_in, k, k); the loader restores the
/// structural shape). Values round-trip exactly.
void save_checkpoint(std::ostream& out, const BiStreamNet& net);
void save_checkpoint(const std::filesystem::path& path, const BiStreamNet& net);
BiStreamNet load_checkpoint(std::istream& in);
BiStreamNet load_checkpoint(const std::filesystem::path& path);

/// CSV "iter,loss" with one row per training iteration.
void write_loss_csv(std::ostream& out, std::span<const double> losses);

}  // namespace bistream
