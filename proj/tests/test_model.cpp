#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "bistream/autodiff.hpp"
#include "bistream/model.hpp"

using namespace bistream;

namespace {

constexpr std::array<std::size_t, 5> kMiniWidths{2, 2, 3, 3, 3};

bool bit_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] != b[i]) return false;
  }
  return true;
}

bool nets_bit_equal(const BiStreamNet& a, const BiStreamNet& b) {
  std::vector<const Tensor*> pa, pb;
  for_each_parameter(a, [&pa](const std::string&, const Tensor& t) { pa.push_back(&t); });
  for_each_parameter(b, [&pb](const std::string&, const Tensor& t) { pb.push_back(&t); });
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (!bit_equal(*pa[i], *pb[i])) return false;
  }
  return true;
}

// Closed-form parameter count, written out layer by layer against the
// documented architecture rather than by walking the net.
std::size_t expected_parameter_count(const std::array<std::size_t, 5>& w, std::size_t ic) {
  const auto conv = [](std::size_t co, std::size_t ci, std::size_t k) { return co * ci * k * k + co; };
  std::size_t total = 0;
  for (std::size_t i = 0; i < 5; ++i) {
    const std::size_t ci = i == 0 ? ic : w[i - 1];
    total += conv(w[i], ci, 3);          // plain trunk
    total += conv(w[i], ci, 3);          // residual trunk
    if (ci != w[i]) total += conv(w[i], ci, 1);  // residual projection skip
    total += 2 * conv(w[i], w[i], 1);    // input gate: projection + gate
    if (i > 0) total += conv(w[i], w[i - 1], 1);  // output gate
    total += conv(w[i], 2 * w[i], 1);    // fusion of the two branch views
  }
  for (std::size_t jj = 0; jj < 2; ++jj) {
    total += conv(1, w[3 + jj], 1);                            // attention logits
    for (std::size_t m = 0; m < 2; ++m) total += conv(w[3 + jj], w[m], 1);  // low-level projections
  }
  total += conv(w[3], w[4], 3) + conv(w[2], w[3], 3) + conv(w[1], w[2], 3) + conv(1, w[1], 3);  // decoder
  return total;
}

}  // namespace

TEST_CASE("construction validates the layout") {
  CHECK_THROWS_AS(build(0, {8, 16, 24, 24, 0}), std::invalid_argument);
  CHECK_THROWS_AS(build(0, {8, 16, 24, 24, 16}), std::invalid_argument);  // decoder adds stages 4+5
  CHECK_THROWS_AS(build(0, {8, 16, 24, 24, 24}, 0), std::invalid_argument);
}

TEST_CASE("parameter count matches the closed form") {
  const BiStreamNet net = build(1);
  CHECK(parameter_count(net) == expected_parameter_count({8, 16, 24, 24, 24}, 3));
  CHECK(parameter_count(net) == 56723);

  const BiStreamNet mini = build(1, kMiniWidths);
  CHECK(parameter_count(mini) == expected_parameter_count(kMiniWidths, 3));
  CHECK(parameter_count(mini) == 1160);

  // Same seed, same bits; different seed, different bits.
  CHECK(nets_bit_equal(net, build(1)));
  CHECK_FALSE(nets_bit_equal(net, build(2)));
}

TEST_CASE("initialisation respects the fan-in bound") {
  const BiStreamNet net = build(5);
  for_each_parameter(net, [](const std::string& name, const Tensor& t) {
    CAPTURE(name);
    for (double v : t.values()) CHECK(std::abs(v) <= 1.0);  // fan_in >= 1
  });
  // A 3x3 kernel over 24 channels must respect 1/sqrt(216).
  const double bound = 1.0 / std::sqrt(216.0);
  for (double v : net.decoder[0].w.values()) CHECK(std::abs(v) <= bound);
}

TEST_CASE("forward produces a sigmoid map at the input resolution") {
  const BiStreamNet net = build(3, kMiniWidths);
  const Tensor image = Tensor::full({3, 16, 32}, 0.5);
  const Tensor out = forward_tensor(net, image);
  REQUIRE(out.shape() == std::vector<std::size_t>{1, 16, 32});
  for (double v : out.values()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
  CHECK(bit_equal(out, forward_tensor(net, image)));  // pure function

  CHECK_THROWS_AS(forward_tensor(net, Tensor::full({3, 15, 16}, 0.5)), std::invalid_argument);
  CHECK_THROWS_AS(forward_tensor(net, Tensor::full({1, 16, 16}, 0.5)), std::invalid_argument);
  CHECK_THROWS_AS(forward_dual(net, Tensor::full({3, 16, 16}, 0.5), Tensor::full({3, 32, 32}, 0.5)),
                  std::invalid_argument);
}

TEST_CASE("inference exposes the saliency map and both branch projections") {
  const BiStreamNet net = build(4, kMiniWidths);
  const Tensor image = Tensor::full({3, 32, 32}, 0.25);
  const InferenceResult result = infer(net, image);
  const SaliencyMap direct = forward(net, image);
  CHECK(result.saliency.height() == 32);
  CHECK(result.saliency.width() == 32);
  for (std::size_t i = 0; i < direct.values().size(); ++i) {
    CHECK(result.saliency.values()[i] == direct.values()[i]);
  }
  CHECK(result.plain_stage5.shape() == std::vector<std::size_t>{1, 2, 2});
  CHECK(result.residual_stage5.shape() == std::vector<std::size_t>{1, 2, 2});
}

TEST_CASE("bce loss closed forms") {
  const Tensor half = Tensor::full({2, 2}, 0.5);
  const Tensor target = Tensor::from({2, 2}, {1.0, 0.0, 1.0, 1.0});
  CHECK(bce_loss(half, target)[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  const Tensor match = Tensor::from({2}, {1.0, 0.0});
  CHECK(bce_loss(match, match)[0] <= 1e-6);  // clamp keeps it finite, near zero

  CHECK_THROWS_AS(bce_loss(half, Tensor::from({2}, {1.0, 0.0})), std::invalid_argument);

  const SaliencyMap pred(1, 2, {0.5, 0.5});
  const GroundTruthMask gt(1, 2, {1, 0});
  CHECK(bce_loss(pred, gt) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("bce gradient matches the analytic derivative") {
  Tape tape;
  const Tensor pred = tape.var(Tensor::from({3}, {0.3, 0.6, 0.9}));
  const Tensor target = Tensor::from({3}, {1.0, 0.0, 1.0});
  backward(bce_loss(pred, target));
  const Tensor g = pred.grad().value();
  // d/dp of -(t log p + (1-t) log(1-p)) / n = (-t/p + (1-t)/(1-p)) / n.
  CHECK(g[0] == doctest::Approx((-1.0 / 0.3) / 3.0).epsilon(1e-12));
  CHECK(g[1] == doctest::Approx((1.0 / 0.4) / 3.0).epsilon(1e-12));
  CHECK(g[2] == doctest::Approx((-1.0 / 0.9) / 3.0).epsilon(1e-12));
}

TEST_CASE("synthetic blob task is deterministic and well-formed") {
  const std::vector<TrainSample> a = make_blob_dataset(3, 32, 9);
  const std::vector<TrainSample> b = make_blob_dataset(3, 32, 9);
  REQUIRE(a.size() == 3);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(bit_equal(a[i].image, b[i].image));
    CHECK(bit_equal(a[i].mask, b[i].mask));
    CHECK(a[i].image.shape() == std::vector<std::size_t>{3, 32, 32});
    CHECK(a[i].mask.shape() == std::vector<std::size_t>{1, 32, 32});
    double fg = 0.0;
    for (double v : a[i].mask.values()) {
      CHECK((v == 0.0 || v == 1.0));
      fg += v;
    }
    CHECK(fg > 0.0);            // the disc is visible
    CHECK(fg < 32.0 * 32.0 / 2);  // and clearly smaller than the field
    for (double v : a[i].image.values()) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("training is reproducible and a zero-rate run only decays") {
  const std::vector<TrainSample> data = make_blob_dataset(2, 16, 2);

  TrainConfig cfg;
  cfg.iterations = 3;
  cfg.batch_size = 2;

  BiStreamNet net_a = build(1, kMiniWidths);
  BiStreamNet net_b = build(1, kMiniWidths);
  const TrainResult ra = train(net_a, data, cfg);
  const TrainResult rb = train(net_b, data, cfg);
  CHECK(ra.loss_history == rb.loss_history);
  CHECK(nets_bit_equal(net_a, net_b));
  CHECK(ra.loss_history.size() == 3);

  // lr = 0, wd = 0: the parameters must not move at all.
  BiStreamNet frozen = build(1, kMiniWidths);
  const BiStreamNet reference = build(1, kMiniWidths);
  TrainConfig still;
  still.learning_rate = 0.0;
  still.weight_decay = 0.0;
  still.iterations = 2;
  train(frozen, data, still);
  CHECK(nets_bit_equal(frozen, reference));

  // lr = 0 with weight decay: every parameter shrinks by exactly (1 - wd).
  BiStreamNet decayed = build(1, kMiniWidths);
  TrainConfig decay_only;
  decay_only.learning_rate = 0.0;
  decay_only.weight_decay = 0.125;
  decay_only.iterations = 1;
  train(decayed, data, decay_only);
  std::vector<const Tensor*> before, after;
  for_each_parameter(reference, [&before](const std::string&, const Tensor& t) { before.push_back(&t); });
  for_each_parameter(decayed, [&after](const std::string&, const Tensor& t) { after.push_back(&t); });
  for (std::size_t k = 0; k < before.size(); ++k) {
    for (std::size_t e = 0; e < before[k]->size(); ++e) {
      CHECK((*after[k])[e] == doctest::Approx((*before[k])[e] * 0.875).epsilon(1e-12));
    }
  }

  CHECK_THROWS_AS(train(net_a, {}, cfg), std::invalid_argument);
  TrainConfig bad = cfg;
  bad.momentum = 1.0;
  CHECK_THROWS_AS(train(net_a, data, bad), std::invalid_argument);
  bad = cfg;
  bad.learning_rate = -1.0;
  CHECK_THROWS_AS(train(net_a, data, bad), std::invalid_argument);
}

TEST_CASE("a short run already reduces the blob loss") {
  const std::vector<TrainSample> data = make_blob_dataset(2, 16, 4);
  BiStreamNet net = build(1, kMiniWidths);
  TrainConfig cfg;
  cfg.iterations = 8;
  cfg.batch_size = 2;
  const TrainResult result = train(net, data, cfg);
  CHECK(result.loss_history.back() < result.loss_history.front());
}

TEST_CASE("closing the input gates silences the plain branch") {
  BiStreamNet net = build(6, kMiniWidths);
  for (InputGateParams& gate : net.input_gates) {
    gate.b_in = Tensor::full(gate.b_in.shape(), -30.0);
  }
  const Tensor residual_view = Tensor::full({3, 16, 16}, 0.4);
  const Tensor plain_a = Tensor::full({3, 16, 16}, 0.1);
  const Tensor plain_b = Tensor::full({3, 16, 16}, 0.9);
  const Tensor out_a = forward_dual(net, residual_view, plain_a);
  const Tensor out_b = forward_dual(net, residual_view, plain_b);
  double worst = 0.0;
  for (std::size_t i = 0; i < out_a.size(); ++i) worst = std::max(worst, std::abs(out_a[i] - out_b[i]));
  CHECK(worst < 1e-6);

  // Control: with the gates open the plain branch must matter.
  const BiStreamNet open = build(6, kMiniWidths);
  const Tensor open_a = forward_dual(open, residual_view, plain_a);
  const Tensor open_b = forward_dual(open, residual_view, plain_b);
  double open_diff = 0.0;
  for (std::size_t i = 0; i < open_a.size(); ++i) open_diff = std::max(open_diff, std::abs(open_a[i] - open_b[i]));
  CHECK(open_diff > 1e-6);
}

TEST_CASE("checkpoints restore the exact parameters") {
  const std::vector<TrainSample> data = make_blob_dataset(2, 16, 8);
  BiStreamNet net = build(7, kMiniWidths);
  TrainConfig cfg;
  cfg.iterations = 2;
  train(net, data, cfg);  // move off the initialisation

  std::stringstream buffer;
  save_checkpoint(buffer, net);
  const BiStreamNet restored = load_checkpoint(buffer);
  CHECK(nets_bit_equal(net, restored));
  CHECK(restored.input_channels == 3);
  CHECK(restored.branch_v.widths == kMiniWidths);

  // Serialisation itself is deterministic.
  std::stringstream again;
  save_checkpoint(again, net);
  std::stringstream first;
  save_checkpoint(first, net);
  CHECK(again.str() == first.str());

  // The restored net behaves identically.
  const Tensor image = Tensor::full({3, 16, 16}, 0.3);
  CHECK(bit_equal(forward_tensor(net, image), forward_tensor(restored, image)));

  std::stringstream truncated(buffer.str().substr(0, 200));
  CHECK_THROWS_AS(load_checkpoint(truncated), std::invalid_argument);
  std::stringstream wrong_tag("bogus header\n");
  CHECK_THROWS_AS(load_checkpoint(wrong_tag), std::invalid_argument);
}

TEST_CASE("loss history CSV layout") {
  std::ostringstream out;
  const double losses[] = {0.7, 0.5};
  write_loss_csv(out, losses);
  const std::string text = out.str();
  CHECK(text.substr(0, 10) == "iter,loss\n");
  CHECK(text.find("0,0.69999999999999996") != std::string::npos);
  CHECK(std::count(text.begin(), text.end(), '\n') == 3);
}
