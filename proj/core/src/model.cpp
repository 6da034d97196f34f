#include "bistream/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <stdexcept>

#include "bistream/attention.hpp"

namespace bistream {

namespace {

constexpr double kBceEps = 1e-7;

// Portable uniform draw in [0, 1): 53 top bits of one mt19937_64 output.
double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

// Visits every convolution (weight + bias) in the canonical order. This
// order defines parameter names, initialisation, updates and checkpoints.
template <typename Net, typename Fn>
void visit_convs(Net& net, Fn&& fn) {
  for (std::size_t i = 0; i < 5; ++i) {
    fn("plain.s" + std::to_string(i + 1), net.plain_stages[i].w, net.plain_stages[i].b);
  }
  for (std::size_t i = 0; i < 5; ++i) {
    fn("res.s" + std::to_string(i + 1), net.residual_stages[i].w, net.residual_stages[i].b);
    if (net.residual_skips[i]) {
      fn("res.s" + std::to_string(i + 1) + ".skip", net.residual_skips[i]->w, net.residual_skips[i]->b);
    }
  }
  for (std::size_t i = 0; i < 5; ++i) {
    fn("gate_in.s" + std::to_string(i + 1) + ".proj", net.input_gates[i].w, net.input_gates[i].b);
    fn("gate_in.s" + std::to_string(i + 1) + ".gate", net.input_gates[i].v_in, net.input_gates[i].b_in);
  }
  for (std::size_t i = 0; i < 4; ++i) {
    fn("gate_out.s" + std::to_string(i + 2), net.output_gates[i].v_out, net.output_gates[i].b_out);
  }
  for (std::size_t i = 0; i < 5; ++i) {
    fn("fuse.s" + std::to_string(i + 1), net.fusion_convs[i].w, net.fusion_convs[i].b);
  }
  for (std::size_t jj = 0; jj < 2; ++jj) {
    const std::string j = std::to_string(jj + 4);
    fn("att.j" + j + ".logits", net.attention_logits[jj].w, net.attention_logits[jj].b);
    for (std::size_t m = 0; m < 2; ++m) {
      fn("att.j" + j + ".m" + std::to_string(m + 1), net.attention_low[jj][m].w, net.attention_low[jj][m].b);
    }
  }
  for (std::size_t d = 0; d < 4; ++d) {
    fn("dec." + std::to_string(d + 1), net.decoder[d].w, net.decoder[d].b);
  }
}

ConvParam make_conv(std::size_t c_out, std::size_t c_in, std::size_t k) {
  return {Tensor::zeros({c_out, c_in, k, k}), Tensor::zeros({c_out})};
}

void validate_image(const BiStreamNet& net, const Tensor& image, const char* what) {
  if (image.rank() != 3 || image.extent(0) != net.input_channels) {
    throw std::invalid_argument(std::string(what) + ": expected (" + std::to_string(net.input_channels) +
                                ", H, W), shape is " + shape_string(image.shape()));
  }
  const std::size_t h = image.extent(1), w = image.extent(2);
  if (h == 0 || w == 0 || h % 16 != 0 || w % 16 != 0) {
    throw std::invalid_argument(std::string(what) + ": spatial extents must be positive multiples of 16, shape is " +
                                shape_string(image.shape()));
  }
}

struct ForwardTrace {
  Tensor output;
  Tensor plain5;     // plain branch stage-5 features
  Tensor residual5;  // residual branch stage-5 features, before gating
};

ForwardTrace run_forward(const BiStreamNet& net, const Tensor& image_residual, const Tensor& image_plain) {
  validate_image(net, image_residual, "forward");
  validate_image(net, image_plain, "forward");
  if (image_residual.shape() != image_plain.shape()) {
    throw std::invalid_argument("forward: branch inputs differ, " + shape_string(image_residual.shape()) + " vs " +
                                shape_string(image_plain.shape()));
  }

  ForwardTrace trace;
  std::array<Tensor, 5> stream;
  Tensor v_feat;
  for (std::size_t i = 0; i < 5; ++i) {
    const Tensor v_in = i == 0 ? image_plain : downsample(v_feat, 2);
    v_feat = tanh(conv2d(v_in, net.plain_stages[i].w, net.plain_stages[i].b));

    const Tensor r_in = i == 0 ? image_residual : downsample(stream[i - 1], 2);
    Tensor r_feat = tanh(conv2d(r_in, net.residual_stages[i].w, net.residual_stages[i].b));
    const Tensor skip =
        net.residual_skips[i] ? conv2d(r_in, net.residual_skips[i]->w, net.residual_skips[i]->b) : r_in;
    r_feat = add(r_feat, skip);

    if (i == 4) {
      trace.plain5 = v_feat;
      trace.residual5 = r_feat;
    }
    if (i > 0) r_feat = output_gate(r_feat, stream[i - 1], net.output_gates[i - 1]);
    stream[i] = gated_fuse(r_feat, v_feat, net.input_gates[i],
                           FusionScheme::conv(net.fusion_convs[i].w, net.fusion_convs[i].b));
  }

  // The two deepest fused maps pull attention-weighted detail from the
  // two shallowest ones; the attention distribution of each deep stage is
  // computed once, before its updates.
  for (std::size_t jj = 0; jj < 2; ++jj) {
    const std::size_t j = 3 + jj;
    const AttentionParams logits{net.attention_logits[jj].w, net.attention_logits[jj].b, {}, {}};
    const AttentionMap alpha = location_attention(stream[j], logits);
    for (std::size_t m = 0; m < 2; ++m) {
      const AttentionParams edge{net.attention_logits[jj].w, net.attention_logits[jj].b,
                                 net.attention_low[jj][m].w, net.attention_low[jj][m].b};
      stream[j] = apply_mla(stream[j], stream[m], alpha, edge);
    }
  }

  Tensor d = add(upsample_nearest(stream[4], 2), stream[3]);
  d = tanh(conv2d(d, net.decoder[0].w, net.decoder[0].b));
  d = tanh(conv2d(upsample_nearest(d, 2), net.decoder[1].w, net.decoder[1].b));
  d = tanh(conv2d(upsample_nearest(d, 2), net.decoder[2].w, net.decoder[2].b));
  d = conv2d(upsample_nearest(d, 2), net.decoder[3].w, net.decoder[3].b);
  trace.output = sigmoid(d);
  return trace;
}

// (C, H, W) -> (1, H, W) mean over channels; value-level, never recorded.
Tensor channel_mean(const Tensor& t) {
  const std::size_t c = t.extent(0), h = t.extent(1), w = t.extent(2);
  std::vector<double> out(h * w, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < h * w; ++i) out[i] += t[ch * h * w + i];
  }
  for (double& v : out) v /= static_cast<double>(c);
  return Tensor::from({1, h, w}, std::move(out));
}

SaliencyMap to_map(const Tensor& output) {
  const std::size_t h = output.extent(1), w = output.extent(2);
  return {h, w, std::vector<double>(output.values().begin(), output.values().end())};
}

void fisher_yates(std::vector<std::size_t>& order, std::mt19937_64& rng) {
  for (std::size_t i = order.size(); i-- > 1;) {
    const std::size_t j = static_cast<std::size_t>(rng() % (i + 1));
    std::swap(order[i], order[j]);
  }
}

}  // namespace

BiStreamNet build(std::uint64_t seed, const std::array<std::size_t, 5>& widths, std::size_t input_channels) {
  for (std::size_t w : widths) {
    if (w == 0) throw std::invalid_argument("build: zero stage width");
  }
  if (input_channels == 0) throw std::invalid_argument("build: zero input channels");
  if (widths[3] != widths[4]) {
    throw std::invalid_argument("build: stage-4 and stage-5 widths must agree, got " + std::to_string(widths[3]) +
                                " and " + std::to_string(widths[4]));
  }

  BiStreamNet net;
  net.input_channels = input_channels;
  net.branch_v = {BranchStyle::PlainChain, widths};
  net.branch_r = {BranchStyle::Residual, widths};

  for (std::size_t i = 0; i < 5; ++i) {
    const std::size_t c_in = i == 0 ? input_channels : widths[i - 1];
    const std::size_t c = widths[i];
    net.plain_stages[i] = make_conv(c, c_in, 3);
    net.residual_stages[i] = make_conv(c, c_in, 3);
    if (c_in != c) net.residual_skips[i] = make_conv(c, c_in, 1);
    net.input_gates[i] = {Tensor::zeros({c, c, 1, 1}), Tensor::zeros({c}), Tensor::zeros({c, c, 1, 1}),
                          Tensor::zeros({c})};
    if (i > 0) net.output_gates[i - 1] = {Tensor::zeros({c, widths[i - 1], 1, 1}), Tensor::zeros({c})};
    net.fusion_convs[i] = make_conv(c, 2 * c, 1);
  }
  for (std::size_t jj = 0; jj < 2; ++jj) {
    const std::size_t c_j = widths[3 + jj];
    net.attention_logits[jj] = make_conv(1, c_j, 1);
    for (std::size_t m = 0; m < 2; ++m) net.attention_low[jj][m] = make_conv(c_j, widths[m], 1);
  }
  net.decoder[0] = make_conv(widths[3], widths[4], 3);
  net.decoder[1] = make_conv(widths[2], widths[3], 3);
  net.decoder[2] = make_conv(widths[1], widths[2], 3);
  net.decoder[3] = make_conv(1, widths[1], 3);

  std::mt19937_64 rng(seed);
  visit_convs(net, [&rng](const std::string&, Tensor& w, Tensor& b) {
    const std::size_t fan_in = w.extent(1) * w.extent(2) * w.extent(3);
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<double> wv(w.size()), bv(b.size());
    for (double& v : wv) v = (2.0 * unit_uniform(rng) - 1.0) * bound;
    for (double& v : bv) v = (2.0 * unit_uniform(rng) - 1.0) * bound;
    w = Tensor::from(w.shape(), std::move(wv));
    b = Tensor::from(b.shape(), std::move(bv));
  });
  return net;
}

void for_each_parameter(BiStreamNet& net, const std::function<void(const std::string&, Tensor&)>& fn) {
  visit_convs(net, [&fn](const std::string& name, Tensor& w, Tensor& b) {
    fn(name + ".w", w);
    fn(name + ".b", b);
  });
}

void for_each_parameter(const BiStreamNet& net, const std::function<void(const std::string&, const Tensor&)>& fn) {
  visit_convs(net, [&fn](const std::string& name, const Tensor& w, const Tensor& b) {
    fn(name + ".w", w);
    fn(name + ".b", b);
  });
}

std::size_t parameter_count(const BiStreamNet& net) {
  std::size_t total = 0;
  for_each_parameter(net, [&total](const std::string&, const Tensor& t) { total += t.size(); });
  return total;
}

Tensor forward_dual(const BiStreamNet& net, const Tensor& image_residual, const Tensor& image_plain) {
  return run_forward(net, image_residual, image_plain).output;
}

Tensor forward_tensor(const BiStreamNet& net, const Tensor& image) {
  return run_forward(net, image, image).output;
}

SaliencyMap forward(const BiStreamNet& net, const Tensor& image) { return to_map(forward_tensor(net, image)); }

InferenceResult infer(const BiStreamNet& net, const Tensor& image) {
  const ForwardTrace trace = run_forward(net, image, image);
  return {to_map(trace.output), channel_mean(trace.plain5), channel_mean(trace.residual5)};
}

Tensor bce_loss(const Tensor& pred, const Tensor& target) {
  if (!pred.defined() || !target.defined()) throw std::invalid_argument("bce_loss: undefined tensor");
  if (pred.shape() != target.shape()) {
    throw std::invalid_argument("bce_loss: shape mismatch " + shape_string(pred.shape()) + " vs " +
                                shape_string(target.shape()));
  }
  const std::size_t n = pred.size();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = std::clamp(pred[i], kBceEps, 1.0 - kBceEps);
    const double t = target[i];
    acc -= t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
  }
  acc /= static_cast<double>(n);
  return detail::record(
      {1}, std::vector<double>{acc}, {&pred},
      [n, pd = detail::TensorAccess::data(pred), td = detail::TensorAccess::data(target)](
          std::span<const double> g, std::span<const std::span<double>> gi) {
        if (gi[0].empty()) return;
        const double scale = g[0] / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
          const double p = (*pd)[i];
          if (p <= kBceEps || p >= 1.0 - kBceEps) continue;  // flat inside the clamp
          const double t = (*td)[i];
          gi[0][i] += scale * (-(t / p) + (1.0 - t) / (1.0 - p));
        }
      });
}

double bce_loss(const SaliencyMap& pred, const GroundTruthMask& gt) {
  if (pred.height() != gt.height() || pred.width() != gt.width()) {
    throw std::invalid_argument("bce_loss: prediction is " + std::to_string(pred.height()) + "x" +
                                std::to_string(pred.width()) + ", annotation is " + std::to_string(gt.height()) +
                                "x" + std::to_string(gt.width()));
  }
  const Tensor p = Tensor::from({pred.height(), pred.width()},
                                std::vector<double>(pred.values().begin(), pred.values().end()));
  std::vector<double> t(gt.values().size());
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = gt.values()[i];
  return bce_loss(p, Tensor::from({gt.height(), gt.width()}, std::move(t)))[0];
}

TrainResult train(BiStreamNet& net, std::span<const TrainSample> dataset, const TrainConfig& cfg) {
  if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
  if (!(cfg.learning_rate >= 0.0) || !(cfg.weight_decay >= 0.0)) {
    throw std::invalid_argument("train: learning rate and weight decay must be non-negative");
  }
  if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0)) {
    throw std::invalid_argument("train: momentum must lie in [0, 1)");
  }
  if (cfg.batch_size == 0 || cfg.iterations == 0) {
    throw std::invalid_argument("train: batch size and iteration count must be positive");
  }

  std::vector<Tensor*> params;
  for_each_parameter(net, [&params](const std::string&, Tensor& t) { params.push_back(&t); });
  std::vector<std::vector<double>> velocity(params.size());
  for (std::size_t k = 0; k < params.size(); ++k) velocity[k].assign(params[k]->size(), 0.0);

  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::size_t cursor = order.size();  // forces a shuffle before the first draw

  TrainResult result;
  result.loss_history.reserve(cfg.iterations);
  std::vector<std::size_t> batch;
  for (std::size_t iter = 0; iter < cfg.iterations; ++iter) {
    batch.clear();
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      if (cursor == order.size()) {
        fisher_yates(order, rng);
        cursor = 0;
      }
      batch.push_back(order[cursor++]);
    }

    Tape tape;
    BiStreamNet bound = net;
    for_each_parameter(bound, [&tape](const std::string&, Tensor& t) { t = tape.var(t); });
    Tensor loss;
    for (std::size_t idx : batch) {
      const Tensor sample_loss = bce_loss(forward_tensor(bound, dataset[idx].image), dataset[idx].mask);
      loss = loss.defined() ? add(loss, sample_loss) : sample_loss;
    }
    loss = scale(loss, 1.0 / static_cast<double>(batch.size()));
    result.loss_history.push_back(loss[0]);
    backward(loss);

    std::size_t k = 0;
    for_each_parameter(bound, [&](const std::string&, Tensor& tracked) {
      const Tensor grad = tracked.grad().value();
      std::vector<double> updated(params[k]->values().begin(), params[k]->values().end());
      for (std::size_t e = 0; e < updated.size(); ++e) {
        velocity[k][e] = cfg.momentum * velocity[k][e] + grad[e];
        updated[e] -= cfg.learning_rate * velocity[k][e] + cfg.weight_decay * updated[e];
      }
      *params[k] = Tensor::from(params[k]->shape(), std::move(updated));
      ++k;
    });
  }
  return result;
}

std::vector<TrainSample> make_blob_dataset(std::size_t count, std::size_t size, std::uint64_t seed) {
  if (count == 0) throw std::invalid_argument("make_blob_dataset: count must be positive");
  if (size == 0) throw std::invalid_argument("make_blob_dataset: size must be positive");
  std::mt19937_64 rng(seed);
  std::vector<TrainSample> samples;
  samples.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const double s = static_cast<double>(size);
    const double cx = (0.3 + 0.4 * unit_uniform(rng)) * s;
    const double cy = (0.3 + 0.4 * unit_uniform(rng)) * s;
    const double radius = (0.14 + 0.08 * unit_uniform(rng)) * s;
    const double r2 = radius * radius;

    std::vector<double> image(3 * size * size);
    std::vector<double> mask(size * size);
    for (std::size_t y = 0; y < size; ++y) {
      for (std::size_t x = 0; x < size; ++x) {
        const double dx = (static_cast<double>(x) + 0.5) - cx;
        const double dy = (static_cast<double>(y) + 0.5) - cy;
        const bool inside = dx * dx + dy * dy <= r2;
        mask[y * size + x] = inside ? 1.0 : 0.0;
        for (std::size_t c = 0; c < 3; ++c) {
          image[(c * size + y) * size + x] =
              inside ? 0.9 - 0.03 * static_cast<double>(c) : 0.1 + 0.02 * static_cast<double>(c);
        }
      }
    }
    samples.push_back({Tensor::from({3, size, size}, std::move(image)), Tensor::from({1, size, size}, std::move(mask))});
  }
  return samples;
}

namespace {

constexpr const char* kCheckpointTag = "bistream-checkpoint v1";

}  // namespace

void save_checkpoint(std::ostream& out, const BiStreamNet& net) {
  out << kCheckpointTag << '\n';
  out << net.input_channels;
  for (std::size_t w : net.branch_v.widths) out << ' ' << w;
  out << '\n';
  std::size_t entries = 0;
  for_each_parameter(net, [&entries](const std::string&, const Tensor&) { ++entries; });
  out << entries << '\n';
  for_each_parameter(net, [&out](const std::string& name, const Tensor& t) {
    out << name << '\n';
    // Rank-4 kernels travel as (C_out * C_in, k, k); the loader knows the
    // structural shape and restores it.
    std::vector<std::size_t> shape = t.shape();
    if (shape.size() == 4) shape = {shape[0] * shape[1], shape[2], shape[3]};
    write_tensor_text(out, Tensor::from(shape, std::vector<double>(t.values().begin(), t.values().end())));
  });
  if (!out) throw std::runtime_error("checkpoint write failed");
}

void save_checkpoint(const std::filesystem::path& path, const BiStreamNet& net) {
  std::ofstream out(path);
  if (!out) throw std::invalid_argument("cannot create " + path.string());
  save_checkpoint(out, net);
}

BiStreamNet load_checkpoint(std::istream& in) {
  std::string tag;
  if (!std::getline(in, tag)) throw std::invalid_argument("checkpoint: empty stream");
  if (tag != kCheckpointTag) throw std::invalid_argument("checkpoint: unsupported version line '" + tag + "'");
  std::size_t input_channels = 0;
  std::array<std::size_t, 5> widths{};
  if (!(in >> input_channels >> widths[0] >> widths[1] >> widths[2] >> widths[3] >> widths[4])) {
    throw std::invalid_argument("checkpoint: malformed layout line");
  }
  std::size_t entries = 0;
  if (!(in >> entries)) throw std::invalid_argument("checkpoint: missing entry count");

  BiStreamNet net = build(0, widths, input_channels);
  std::size_t seen = 0;
  for_each_parameter(net, [&](const std::string& name, Tensor& t) {
    std::string entry_name;
    if (!(in >> entry_name)) throw std::invalid_argument("checkpoint: truncated before entry '" + name + "'");
    if (entry_name != name) {
      throw std::invalid_argument("checkpoint: entry '" + entry_name + "' where '" + name + "' was expected");
    }
    const Tensor stored = read_tensor_text(in);
    if (stored.size() != t.size()) {
      throw std::invalid_argument("checkpoint: entry '" + name + "' holds " + std::to_string(stored.size()) +
                                  " values, expected " + std::to_string(t.size()));
    }
    t = Tensor::from(t.shape(), std::vector<double>(stored.values().begin(), stored.values().end()));
    ++seen;
  });
  if (seen != entries) {
    throw std::invalid_argument("checkpoint: entry count " + std::to_string(entries) + " does not match the " +
                                std::to_string(seen) + " parameters of the layout");
  }
  return net;
}

BiStreamNet load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open checkpoint " + path.string());
  return load_checkpoint(in);
}

void write_loss_csv(std::ostream& out, std::span<const double> losses) {
  out << "iter,loss\n";
  const auto old_precision = out.precision(17);
  for (std::size_t i = 0; i < losses.size(); ++i) out << i << ',' << losses[i] << '\n';
  out.precision(old_precision);
  if (!out) throw std::runtime_error("loss history write failed");
}

}  // namespace bistream
