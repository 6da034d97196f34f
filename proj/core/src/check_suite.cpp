#include "bistream/check_suite.hpp"

#include <cmath>
#include <functional>
#include <ostream>
#include <random>

#include "bistream/attention.hpp"
#include "bistream/autodiff.hpp"
#include "bistream/fusion.hpp"
#include "bistream/grad_check.hpp"
#include "bistream/model.hpp"

namespace bistream {

namespace {

double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

Tensor random_tensor(std::mt19937_64& rng, std::vector<std::size_t> shape, double lo = -2.0, double hi = 2.0) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  std::vector<double> values(n);
  for (double& v : values) v = lo + (hi - lo) * unit_uniform(rng);
  return Tensor::from(std::move(shape), std::move(values));
}

Tensor random_binary(std::mt19937_64& rng, std::vector<std::size_t> shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  std::vector<double> values(n);
  for (double& v : values) v = unit_uniform(rng) < 0.5 ? 0.0 : 1.0;
  return Tensor::from(std::move(shape), std::move(values));
}

// Keeps elementwise-max inputs away from ties, where the derivative
// genuinely jumps and a finite difference cannot agree.
void separate_ties(std::mt19937_64& rng, const Tensor& a, Tensor& b) {
  std::vector<double> values(b.values().begin(), b.values().end());
  for (std::size_t i = 0; i < values.size(); ++i) {
    while (std::abs(a[i] - values[i]) <= 1e-3) values[i] = -2.0 + 4.0 * unit_uniform(rng);
  }
  b = Tensor::from(b.shape(), std::move(values));
}

using Objective = std::function<Tensor(const std::vector<Tensor>&)>;

// Compares the taped gradient of a scalar objective against central
// differences for every input; reports the worst relative error.
CheckResult check(const std::string& name, double tolerance, std::vector<Tensor> inputs, const Objective& objective,
                  double eps = 1e-5) {
  Tape tape;
  std::vector<Tensor> tracked;
  tracked.reserve(inputs.size());
  for (const Tensor& t : inputs) tracked.push_back(tape.var(t));
  backward(objective(tracked));

  double worst = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const Tensor analytic = tracked[i].grad().value();
    const Tensor fd = finite_diff_grad(
        [&](const Tensor& probe) {
          std::vector<Tensor> args = inputs;
          args[i] = probe;
          return objective(args)[0];
        },
        inputs[i], eps);
    worst = std::max(worst, max_relative_error(analytic, fd));
  }
  return {name, worst, tolerance, worst < tolerance};
}

// Contracts a tensor with a fixed random weighting; a plain sum would let
// structurally cancelling gradients (softmax, attention) pass unchecked.
Objective weighted(std::function<Tensor(const std::vector<Tensor>&)> op, Tensor weights) {
  return [op = std::move(op), weights = std::move(weights)](const std::vector<Tensor>& args) {
    return sum(mul(op(args), weights));
  };
}

CheckResult check_network(std::mt19937_64& rng) {
  const BiStreamNet net = build(rng(), {2, 2, 3, 3, 3}, 3);
  const Tensor image = random_tensor(rng, {3, 16, 16}, 0.0, 1.0);
  const Tensor mask = random_binary(rng, {1, 16, 16});

  Tape tape;
  BiStreamNet bound = net;
  for_each_parameter(bound, [&tape](const std::string&, Tensor& t) { t = tape.var(t); });
  backward(bce_loss(forward_tensor(bound, image), mask));
  std::vector<Tensor> analytic;
  for_each_parameter(bound, [&analytic](const std::string&, Tensor& t) { analytic.push_back(t.grad().value()); });

  std::vector<Tensor> params;
  for_each_parameter(net, [&params](const std::string&, const Tensor& t) { params.push_back(t); });

  double worst = 0.0;
  for (std::size_t target = 0; target < params.size(); ++target) {
    const Tensor fd = finite_diff_grad(
        [&](const Tensor& probe) {
          BiStreamNet copy = net;
          std::size_t k = 0;
          for_each_parameter(copy, [&](const std::string&, Tensor& t) {
            if (k == target) t = probe;
            ++k;
          });
          return bce_loss(forward_tensor(copy, image), mask)[0];
        },
        params[target], 1e-5);
    worst = std::max(worst, max_relative_error(analytic[target], fd));
  }
  return {"network end-to-end (3x16x16 miniature)", worst, 1e-3, worst < 1e-3};
}

}  // namespace

std::vector<CheckResult> run_gradient_checks(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<CheckResult> results;

  {
    Tensor a = random_tensor(rng, {3, 4, 5}), b = random_tensor(rng, {3, 4, 5});
    Tensor r = random_tensor(rng, {3, 4, 5});
    results.push_back(check("add", 1e-6, {a, b}, weighted([](const auto& in) { return add(in[0], in[1]); }, r)));
  }
  {
    Tensor a = random_tensor(rng, {3, 4, 5}), b = random_tensor(rng, {3, 4, 5});
    Tensor r = random_tensor(rng, {3, 4, 5});
    results.push_back(check("mul", 1e-4, {a, b}, weighted([](const auto& in) { return mul(in[0], in[1]); }, r)));
  }
  {
    Tensor a = random_tensor(rng, {3, 4, 5}), b = random_tensor(rng, {3, 4, 5});
    separate_ties(rng, a, b);
    Tensor r = random_tensor(rng, {3, 4, 5});
    results.push_back(check("emax", 1e-4, {a, b}, weighted([](const auto& in) { return emax(in[0], in[1]); }, r)));
  }
  {
    Tensor a = random_tensor(rng, {2, 3, 3}), b = random_tensor(rng, {3, 3, 3});
    Tensor r = random_tensor(rng, {5, 3, 3});
    results.push_back(check("concat_channels", 1e-6, {a, b},
                            weighted([](const auto& in) { return concat_channels(in[0], in[1]); }, r)));
  }
  {
    Tensor x = random_tensor(rng, {3, 5, 5}), w = random_tensor(rng, {2, 3, 1, 1}), b = random_tensor(rng, {2});
    Tensor r = random_tensor(rng, {2, 5, 5});
    results.push_back(check("conv2d k=1", 1e-4, {x, w, b},
                            weighted([](const auto& in) { return conv2d(in[0], in[1], in[2]); }, r)));
  }
  {
    Tensor x = random_tensor(rng, {2, 5, 5}), w = random_tensor(rng, {3, 2, 3, 3}), b = random_tensor(rng, {3});
    Tensor r = random_tensor(rng, {3, 5, 5});
    results.push_back(check("conv2d k=3", 1e-4, {x, w, b},
                            weighted([](const auto& in) { return conv2d(in[0], in[1], in[2]); }, r)));
  }
  {
    Tensor x = random_tensor(rng, {1});
    results.push_back(check("sigmoid scalar", 1e-6, {x}, [](const auto& in) { return sigmoid(in[0]); }));
    Tensor y = random_tensor(rng, {1});
    results.push_back(check("tanh scalar", 1e-6, {y}, [](const auto& in) { return tanh(in[0]); }));
  }
  {
    Tensor x = random_tensor(rng, {2, 4, 4});
    Tensor r = random_tensor(rng, {2, 4, 4});
    results.push_back(check("sigmoid", 1e-4, {x}, weighted([](const auto& in) { return sigmoid(in[0]); }, r)));
    Tensor y = random_tensor(rng, {2, 4, 4});
    results.push_back(check("tanh", 1e-4, {y}, weighted([](const auto& in) { return tanh(in[0]); }, r)));
  }
  {
    Tensor x = random_tensor(rng, {1, 4, 4});
    Tensor r = random_tensor(rng, {1, 4, 4});
    results.push_back(
        check("softmax_spatial", 1e-4, {x}, weighted([](const auto& in) { return softmax_spatial(in[0]); }, r)));
  }
  {
    Tensor x = random_tensor(rng, {2, 6, 6});
    Tensor r = random_tensor(rng, {2, 3, 3});
    results.push_back(
        check("downsample x2", 1e-5, {x}, weighted([](const auto& in) { return downsample(in[0], 2); }, r)));
  }
  {
    Tensor x = random_tensor(rng, {2, 3, 3});
    Tensor r = random_tensor(rng, {2, 6, 6});
    results.push_back(check("upsample_nearest x2", 1e-5, {x},
                            weighted([](const auto& in) { return upsample_nearest(in[0], 2); }, r)));
  }
  {
    Tensor x = random_tensor(rng, {1, 4, 4});
    Tensor r = random_tensor(rng, {3, 4, 4});
    results.push_back(check("repeat_channels", 1e-6, {x},
                            weighted([](const auto& in) { return repeat_channels(in[0], 3); }, r)));
  }
  {
    Tensor x = random_tensor(rng, {2, 3, 3});
    Tensor r = random_tensor(rng, {2, 3, 3});
    results.push_back(check("scale", 1e-6, {x}, weighted([](const auto& in) { return scale(in[0], 1.7); }, r)));
  }
  {
    Tensor x = random_tensor(rng, {2, 5, 5}), w = random_tensor(rng, {2, 2, 3, 3}), b = random_tensor(rng, {2});
    Tensor r = random_tensor(rng, {2, 5, 5});
    results.push_back(check("sigmoid(conv2d)", 1e-4, {x, w, b},
                            weighted([](const auto& in) { return sigmoid(conv2d(in[0], in[1], in[2])); }, r)));
  }
  {
    Tensor x = random_tensor(rng, {3, 4, 4});
    Tensor w = random_tensor(rng, {3, 3, 1, 1}), b = random_tensor(rng, {3});
    Tensor v = random_tensor(rng, {3, 3, 1, 1}), vb = random_tensor(rng, {3});
    Tensor r = random_tensor(rng, {3, 4, 4});
    results.push_back(check("input_gate", 1e-4, {x, w, b, v, vb},
                            weighted(
                                [](const auto& in) {
                                  return input_gate(in[0], {in[1], in[2], in[3], in[4]});
                                },
                                r)));
  }
  {
    Tensor cur = random_tensor(rng, {3, 4, 4}), prev = random_tensor(rng, {2, 8, 8});
    Tensor v = random_tensor(rng, {3, 2, 1, 1}), vb = random_tensor(rng, {3});
    Tensor r = random_tensor(rng, {3, 4, 4});
    results.push_back(check("output_gate (pooled precedent)", 1e-4, {cur, prev, v, vb},
                            weighted(
                                [](const auto& in) {
                                  return output_gate(in[0], in[1], {in[2], in[3]});
                                },
                                r)));
  }
  {
    Tensor a = random_tensor(rng, {3, 4, 4}), b = random_tensor(rng, {3, 4, 4});
    Tensor r = random_tensor(rng, {3, 4, 4});
    results.push_back(check("fuse Sum", 1e-4, {a, b},
                            weighted([](const auto& in) { return fuse(in[0], in[1], FusionScheme::sum()); }, r)));
    Tensor bm = random_tensor(rng, {3, 4, 4});
    separate_ties(rng, a, bm);
    results.push_back(check("fuse Max", 1e-4, {a, bm},
                            weighted([](const auto& in) { return fuse(in[0], in[1], FusionScheme::max()); }, r)));
    Tensor rc = random_tensor(rng, {6, 4, 4});
    results.push_back(check("fuse Concat", 1e-4, {a, b},
                            weighted([](const auto& in) { return fuse(in[0], in[1], FusionScheme::concat()); }, rc)));
    Tensor k = random_tensor(rng, {2, 6, 1, 1}), kb = random_tensor(rng, {2});
    Tensor rk = random_tensor(rng, {2, 4, 4});
    results.push_back(check("fuse Conv", 1e-4, {a, b, k, kb},
                            weighted(
                                [](const auto& in) {
                                  return fuse(in[0], in[1], FusionScheme::conv(in[2], in[3]));
                                },
                                rk)));
  }
  {
    Tensor xr = random_tensor(rng, {3, 4, 4}), xv = random_tensor(rng, {3, 4, 4});
    Tensor w = random_tensor(rng, {3, 3, 1, 1}), b = random_tensor(rng, {3});
    Tensor v = random_tensor(rng, {3, 3, 1, 1}), vb = random_tensor(rng, {3});
    Tensor k = random_tensor(rng, {3, 6, 1, 1}), kb = random_tensor(rng, {3});
    Tensor r = random_tensor(rng, {3, 4, 4});
    results.push_back(check("gated_fuse", 1e-4, {xr, xv, w, b, v, vb, k, kb},
                            weighted(
                                [](const auto& in) {
                                  return gated_fuse(in[0], in[1], {in[2], in[3], in[4], in[5]},
                                                    FusionScheme::conv(in[6], in[7]));
                                },
                                r)));
  }
  {
    Tensor xj = random_tensor(rng, {3, 4, 4}), xm = random_tensor(rng, {2, 8, 8});
    Tensor wb = random_tensor(rng, {1, 3, 1, 1}), bb = random_tensor(rng, {1});
    Tensor wl = random_tensor(rng, {3, 2, 1, 1}), bl = random_tensor(rng, {3});
    Tensor r = random_tensor(rng, {3, 4, 4});
    results.push_back(check("attention path", 1e-4, {xj, xm, wb, bb, wl, bl},
                            weighted(
                                [](const auto& in) {
                                  const AttentionParams p{in[2], in[3], in[4], in[5]};
                                  return apply_mla(in[0], in[1], location_attention(in[0], p), p);
                                },
                                r)));
  }
  {
    Tensor pred = random_tensor(rng, {1, 4, 4}, 0.05, 0.95);
    Tensor target = random_binary(rng, {1, 4, 4});
    results.push_back(
        check("bce_loss", 1e-5, {pred}, [target](const auto& in) { return bce_loss(in[0], target); }));
  }
  results.push_back(check_network(rng));
  return results;
}

void write_check_table(std::ostream& out, const std::vector<CheckResult>& results) {
  for (const CheckResult& r : results) {
    out << (r.pass ? "PASS" : "FAIL") << "  " << r.name << "  max_rel_err=" << r.max_rel_err
        << "  tol=" << r.tolerance << '\n';
  }
}

}  // namespace bistream
