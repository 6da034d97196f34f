#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "bistream/autodiff.hpp"
#include "bistream/fusion.hpp"
#include "bistream/tensor.hpp"

using namespace bistream;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  std::vector<double> v(n);
  for (double& x : v) x = -2.0 + 4.0 * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
  return Tensor::from(std::move(shape), std::move(v));
}

InputGateParams random_gate(std::size_t c, std::mt19937_64& rng) {
  return {random_tensor({c, c, 1, 1}, rng), random_tensor({c}, rng), random_tensor({c, c, 1, 1}, rng),
          random_tensor({c}, rng)};
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] != b[i]) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("fusion schemes compute the expected merges") {
  const Tensor a = Tensor::from({1, 1, 2}, {1.0, -3.0});
  const Tensor b = Tensor::from({1, 1, 2}, {0.5, 2.0});
  CHECK(fuse(a, b, FusionScheme::sum())[0] == 1.5);
  CHECK(fuse(a, b, FusionScheme::max())[1] == 2.0);
  const Tensor cat = fuse(a, b, FusionScheme::concat());
  CHECK(cat.shape() == std::vector<std::size_t>{2, 1, 2});
  CHECK(cat[2] == 0.5);

  // Conv scheme (1x1, summing kernel, zero bias) reduces to the sum.
  const FusionScheme conv = FusionScheme::conv(Tensor::ones({1, 2, 1, 1}), Tensor::zeros({1}));
  const Tensor merged = fuse(a, b, conv);
  CHECK(merged[0] == doctest::Approx(1.5).epsilon(1e-15));
  CHECK(merged[1] == doctest::Approx(-1.0).epsilon(1e-15));

  CHECK_THROWS_AS(fuse(a, Tensor::from({2, 1, 2}, {1, 2, 3, 4}), FusionScheme::sum()), std::invalid_argument);
  CHECK_THROWS_AS(FusionScheme::conv(Tensor::ones({1, 2, 1, 1}), Tensor{}), std::invalid_argument);
}

TEST_CASE("input gate is the literal projection-times-sigmoid composition") {
  std::mt19937_64 rng(3);
  const std::size_t c = 3;
  const Tensor x = random_tensor({c, 4, 4}, rng);
  const InputGateParams p = random_gate(c, rng);
  const Tensor gated = input_gate(x, p);
  const Tensor manual = mul(conv2d(x, p.w, p.b), sigmoid(conv2d(x, p.v_in, p.b_in)));
  CHECK(bit_equal(gated, manual));
}

TEST_CASE("gated_fuse is interchangeable with fuse after input_gate") {
  std::mt19937_64 rng(11);
  for (int n = 0; n < 25; ++n) {
    const std::size_t c = 1 + static_cast<std::size_t>(rng() % 4);
    const Tensor x_r = random_tensor({c, 4, 4}, rng);
    const Tensor x_v = random_tensor({c, 4, 4}, rng);
    const InputGateParams p = random_gate(c, rng);
    const FusionScheme schemes[4] = {
        FusionScheme::sum(), FusionScheme::max(), FusionScheme::concat(),
        FusionScheme::conv(random_tensor({c, 2 * c, 1, 1}, rng), random_tensor({c}, rng))};
    for (const FusionScheme& scheme : schemes) {
      CHECK(bit_equal(gated_fuse(x_r, x_v, p, scheme), fuse(x_r, input_gate(x_v, p), scheme)));
    }
  }
}

TEST_CASE("output gate pools a double-resolution precedent") {
  std::mt19937_64 rng(5);
  const std::size_t c = 2;
  const Tensor cur = random_tensor({c, 2, 2}, rng);
  const Tensor prev_same = random_tensor({c, 2, 2}, rng);
  const Tensor prev_big = random_tensor({c, 4, 4}, rng);
  const OutputGateParams p{random_tensor({c, c, 1, 1}, rng), random_tensor({c}, rng)};

  const Tensor gated_same = output_gate(cur, prev_same, p);
  CHECK(bit_equal(gated_same, mul(cur, sigmoid(conv2d(prev_same, p.v_out, p.b_out)))));

  const Tensor gated_big = output_gate(cur, prev_big, p);
  CHECK(bit_equal(gated_big, mul(cur, sigmoid(conv2d(downsample(prev_big, 2), p.v_out, p.b_out)))));

  CHECK_THROWS_AS(output_gate(cur, random_tensor({c, 8, 8}, rng), p), std::invalid_argument);
  CHECK_THROWS_AS(output_gate(cur, random_tensor({c, 4, 2}, rng), p), std::invalid_argument);
}

TEST_CASE("gate derivative table matches its closed forms and the FD oracle") {
  const double xs[] = {-10.0, -2.0, 0.0, 2.0, 10.0};
  const std::vector<GateGradientRow> rows = gate_gradient_report(xs);
  REQUIRE(rows.size() == 5);

  for (const GateGradientRow& row : rows) {
    const double s = 1.0 / (1.0 + std::exp(-row.x));
    const double th = std::tanh(row.x);
    const double expected_proposed = s + s * (1.0 - s) * row.x;
    const double expected_lstm = (1.0 - th * th) * s + th * s * (1.0 - s);
    CHECK(row.grad_proposed == doctest::Approx(expected_proposed).epsilon(1e-12));
    CHECK(row.grad_lstm == doctest::Approx(expected_lstm).epsilon(1e-12));
    CHECK(std::abs(row.grad_proposed - row.fd_proposed) <= 1e-6);
    CHECK(std::abs(row.grad_lstm - row.fd_lstm) <= 1e-6);
  }

  // x = 0: both gates pass exactly half the signal through.
  CHECK(std::abs(rows[2].grad_proposed - 0.5) <= 1e-9);
  CHECK(std::abs(rows[2].grad_lstm - 0.5) <= 1e-9);
  // x = 2: the multiplicative gate amplifies, the squashed pair damps.
  CHECK(rows[3].grad_proposed == doctest::Approx(1.0907842487848955).epsilon(1e-9));
  CHECK(rows[3].grad_lstm == doctest::Approx(0.16344575214742046).epsilon(1e-9));
  // x = 10: the squashed pair has all but vanished.
  CHECK(rows[4].grad_proposed > 0.99);
  CHECK(rows[4].grad_lstm < 1e-3);
}

TEST_CASE("gate derivative CSV layout") {
  const double xs[] = {0.0, 1.0};
  const std::vector<GateGradientRow> rows = gate_gradient_report(xs);
  std::ostringstream out;
  write_gate_gradient_csv(out, rows);
  const std::string text = out.str();
  CHECK(text.substr(0, text.find('\n')) == "x,grad_proposed,grad_lstm,fd_proposed,fd_lstm");
  CHECK(std::count(text.begin(), text.end(), '\n') == 3);
}
