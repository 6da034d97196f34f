#include "bistream/autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

namespace bistream {

using detail::TapeState;
using detail::TensorAccess;

namespace {

using DataPtr = std::shared_ptr<const std::vector<double>>;

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                                shape_string(b.shape()));
  }
}

void check_defined(const char* op, const Tensor& t) {
  if (!t.defined()) throw std::invalid_argument(std::string(op) + ": undefined tensor");
}

// Spatial layout of a (H, W) or (C, H, W) tensor.
struct Chw {
  std::size_t c, h, w;
};

Chw spatial_layout(const char* op, const Tensor& t) {
  check_defined(op, t);
  if (t.rank() == 2) return {1, t.extent(0), t.extent(1)};
  if (t.rank() == 3) return {t.extent(0), t.extent(1), t.extent(2)};
  throw std::invalid_argument(std::string(op) + ": expected rank 2 or 3, shape is " + shape_string(t.shape()));
}

}  // namespace

namespace detail {

Tensor record(std::vector<std::size_t> shape, std::shared_ptr<const std::vector<double>> values,
              std::initializer_list<const Tensor*> inputs, BackwardFn backward) {
  std::shared_ptr<TapeState> tape;
  for (const Tensor* t : inputs) {
    const auto& owner = TensorAccess::tape(*t);
    if (!owner) continue;
    if (tape && tape != owner) throw std::invalid_argument("operands are recorded on different tapes");
    tape = owner;
  }
  if (!tape) return TensorAccess::tracked(std::move(shape), std::move(values), nullptr, -1);

  TapeState::Node node;
  node.size = values->size();
  node.inputs.reserve(inputs.size());
  for (const Tensor* t : inputs) {
    node.inputs.push_back(TensorAccess::tape(*t) ? TensorAccess::node(*t) : -1);
  }
  node.backward = std::move(backward);
  tape->nodes.push_back(std::move(node));
  const int id = static_cast<int>(tape->nodes.size()) - 1;
  return TensorAccess::tracked(std::move(shape), std::move(values), tape, id);
}

Tensor record(std::vector<std::size_t> shape, std::vector<double> values,
              std::initializer_list<const Tensor*> inputs, BackwardFn backward) {
  return record(std::move(shape), std::make_shared<const std::vector<double>>(std::move(values)), inputs,
                std::move(backward));
}

}  // namespace detail

Tape::Tape() : state_(std::make_shared<TapeState>()) {}

Tensor Tape::var(const Tensor& value) {
  check_defined("Tape::var", value);
  TapeState::Node node;
  node.size = value.size();
  node.leaf = true;
  state_->nodes.push_back(std::move(node));
  const int id = static_cast<int>(state_->nodes.size()) - 1;
  return TensorAccess::tracked(value.shape(), TensorAccess::data(value), state_, id);
}

std::size_t Tape::node_count() const { return state_->nodes.size(); }

void backward(const Tensor& scalar_output) {
  if (scalar_output.size() != 1) {
    throw std::invalid_argument("backward: output must hold one element, shape is " +
                                shape_string(scalar_output.shape()));
  }
  const auto& tape = TensorAccess::tape(scalar_output);
  if (!tape) throw std::invalid_argument("backward: output is not recorded on a tape");

  TapeState& st = *tape;
  st.grads.assign(st.nodes.size(), {});
  st.has_grads = false;
  const int out = TensorAccess::node(scalar_output);
  st.grads[out] = {1.0};

  std::vector<std::span<double>> input_grads;
  for (int id = out; id >= 0; --id) {
    const TapeState::Node& node = st.nodes[id];
    if (st.grads[id].empty() || !node.backward) continue;
    input_grads.clear();
    input_grads.reserve(node.inputs.size());
    for (int in_id : node.inputs) {
      if (in_id < 0) {
        input_grads.emplace_back();
        continue;
      }
      std::vector<double>& buf = st.grads[in_id];
      if (buf.empty()) buf.assign(st.nodes[in_id].size, 0.0);
      input_grads.emplace_back(buf);
    }
    node.backward(st.grads[id], input_grads);
  }
  // Leaves the objective never touched still report a (zero) gradient.
  for (std::size_t i = 0; i < st.nodes.size(); ++i) {
    if (st.nodes[i].leaf && st.grads[i].empty()) st.grads[i].assign(st.nodes[i].size, 0.0);
  }
  st.has_grads = true;
}

std::optional<Tensor> Tensor::grad() const {
  if (!tape_ || node_ < 0) return std::nullopt;
  if (!tape_->has_grads) return std::nullopt;
  const std::vector<double>& g = tape_->grads[static_cast<std::size_t>(node_)];
  if (g.empty()) return std::nullopt;
  return Tensor::from(shape_, g);
}

// --- elementwise ops ----------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  check_defined("add", a);
  check_defined("add", b);
  check_same_shape("add", a, b);
  const std::size_t n = a.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
  return detail::record(a.shape(), std::move(out), {&a, &b},
                        [n](std::span<const double> g, std::span<const std::span<double>> gi) {
                          for (std::size_t i = 0; i < n; ++i) {
                            if (!gi[0].empty()) gi[0][i] += g[i];
                            if (!gi[1].empty()) gi[1][i] += g[i];
                          }
                        });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_defined("mul", a);
  check_defined("mul", b);
  check_same_shape("mul", a, b);
  const std::size_t n = a.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
  return detail::record(a.shape(), std::move(out), {&a, &b},
                        [n, av = TensorAccess::data(a), bv = TensorAccess::data(b)](
                            std::span<const double> g, std::span<const std::span<double>> gi) {
                          for (std::size_t i = 0; i < n; ++i) {
                            if (!gi[0].empty()) gi[0][i] += g[i] * (*bv)[i];
                            if (!gi[1].empty()) gi[1][i] += g[i] * (*av)[i];
                          }
                        });
}

Tensor emax(const Tensor& a, const Tensor& b) {
  check_defined("emax", a);
  check_defined("emax", b);
  check_same_shape("emax", a, b);
  const std::size_t n = a.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] >= b[i] ? a[i] : b[i];
  return detail::record(a.shape(), std::move(out), {&a, &b},
                        [n, av = TensorAccess::data(a), bv = TensorAccess::data(b)](
                            std::span<const double> g, std::span<const std::span<double>> gi) {
                          for (std::size_t i = 0; i < n; ++i) {
                            if ((*av)[i] >= (*bv)[i]) {
                              if (!gi[0].empty()) gi[0][i] += g[i];
                            } else if (!gi[1].empty()) {
                              gi[1][i] += g[i];
                            }
                          }
                        });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  check_defined("concat_channels", a);
  check_defined("concat_channels", b);
  if (a.rank() != 3 || b.rank() != 3) {
    throw std::invalid_argument("concat_channels: expected rank 3, shapes are " + shape_string(a.shape()) +
                                " and " + shape_string(b.shape()));
  }
  if (a.extent(1) != b.extent(1) || a.extent(2) != b.extent(2)) {
    throw std::invalid_argument("concat_channels: spatial mismatch " + shape_string(a.shape()) + " vs " +
                                shape_string(b.shape()));
  }
  const std::size_t na = a.size(), nb = b.size();
  std::vector<double> out;
  out.reserve(na + nb);
  out.insert(out.end(), a.values().begin(), a.values().end());
  out.insert(out.end(), b.values().begin(), b.values().end());
  return detail::record({a.extent(0) + b.extent(0), a.extent(1), a.extent(2)}, std::move(out), {&a, &b},
                        [na, nb](std::span<const double> g, std::span<const std::span<double>> gi) {
                          if (!gi[0].empty()) {
                            for (std::size_t i = 0; i < na; ++i) gi[0][i] += g[i];
                          }
                          if (!gi[1].empty()) {
                            for (std::size_t i = 0; i < nb; ++i) gi[1][i] += g[na + i];
                          }
                        });
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b) {
  check_defined("conv2d", x);
  check_defined("conv2d", w);
  check_defined("conv2d", b);
  if (x.rank() != 3) throw std::invalid_argument("conv2d: input must be (C, H, W), shape is " + shape_string(x.shape()));
  if (w.rank() != 4) {
    throw std::invalid_argument("conv2d: kernel must be (C_out, C_in, k, k), shape is " + shape_string(w.shape()));
  }
  const std::size_t c_out = w.extent(0), c_in = w.extent(1), k = w.extent(2);
  if (w.extent(3) != k) throw std::invalid_argument("conv2d: kernel window must be square, shape is " + shape_string(w.shape()));
  if (k != 1 && k != 3) throw std::invalid_argument("conv2d: kernel size must be 1 or 3, got " + std::to_string(k));
  if (x.extent(0) != c_in) {
    throw std::invalid_argument("conv2d: input has " + std::to_string(x.extent(0)) + " channels, kernel expects " +
                                std::to_string(c_in));
  }
  if (b.rank() != 1 || b.extent(0) != c_out) {
    throw std::invalid_argument("conv2d: bias must be (" + std::to_string(c_out) + "), shape is " +
                                shape_string(b.shape()));
  }
  const std::size_t h = x.extent(1), wd = x.extent(2);
  const long long pad = static_cast<long long>((k - 1) / 2);

  std::span<const double> xv = x.values(), wv = w.values(), bv = b.values();
  std::vector<double> out(c_out * h * wd);
  for (std::size_t oc = 0; oc < c_out; ++oc) {
    for (std::size_t oy = 0; oy < h; ++oy) {
      for (std::size_t ox = 0; ox < wd; ++ox) {
        double acc = bv[oc];
        for (std::size_t ic = 0; ic < c_in; ++ic) {
          for (std::size_t ky = 0; ky < k; ++ky) {
            const long long iy = static_cast<long long>(oy) + static_cast<long long>(ky) - pad;
            if (iy < 0 || iy >= static_cast<long long>(h)) continue;
            for (std::size_t kx = 0; kx < k; ++kx) {
              const long long ix = static_cast<long long>(ox) + static_cast<long long>(kx) - pad;
              if (ix < 0 || ix >= static_cast<long long>(wd)) continue;
              acc += xv[(ic * h + static_cast<std::size_t>(iy)) * wd + static_cast<std::size_t>(ix)] *
                     wv[((oc * c_in + ic) * k + ky) * k + kx];
            }
          }
        }
        out[(oc * h + oy) * wd + ox] = acc;
      }
    }
  }

  auto backward = [c_out, c_in, k, h, wd, pad, xd = TensorAccess::data(x), wdata = TensorAccess::data(w)](
                      std::span<const double> g, std::span<const std::span<double>> gi) {
    const std::vector<double>& xv = *xd;
    const std::vector<double>& wv = *wdata;
    const bool want_x = !gi[0].empty(), want_w = !gi[1].empty(), want_b = !gi[2].empty();
    for (std::size_t oc = 0; oc < c_out; ++oc) {
      for (std::size_t oy = 0; oy < h; ++oy) {
        for (std::size_t ox = 0; ox < wd; ++ox) {
          const double go = g[(oc * h + oy) * wd + ox];
          if (want_b) gi[2][oc] += go;
          if (!want_x && !want_w) continue;
          for (std::size_t ic = 0; ic < c_in; ++ic) {
            for (std::size_t ky = 0; ky < k; ++ky) {
              const long long iy = static_cast<long long>(oy) + static_cast<long long>(ky) - pad;
              if (iy < 0 || iy >= static_cast<long long>(h)) continue;
              for (std::size_t kx = 0; kx < k; ++kx) {
                const long long ix = static_cast<long long>(ox) + static_cast<long long>(kx) - pad;
                if (ix < 0 || ix >= static_cast<long long>(wd)) continue;
                const std::size_t xi = (ic * h + static_cast<std::size_t>(iy)) * wd + static_cast<std::size_t>(ix);
                const std::size_t wi = ((oc * c_in + ic) * k + ky) * k + kx;
                if (want_x) gi[0][xi] += go * wv[wi];
                if (want_w) gi[1][wi] += go * xv[xi];
              }
            }
          }
        }
      }
    }
  };
  return detail::record({c_out, h, wd}, std::move(out), {&x, &w, &b}, std::move(backward));
}

namespace {

// Unary elementwise op whose derivative is a function of the output.
template <typename Fwd, typename DFromY>
Tensor unary_from_output(const char* op, const Tensor& x, Fwd f, DFromY dfy) {
  check_defined(op, x);
  const std::size_t n = x.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = f(x[i]);
  auto data = std::make_shared<const std::vector<double>>(std::move(out));
  return detail::record(x.shape(), data, {&x},
                        [n, data, dfy](std::span<const double> g, std::span<const std::span<double>> gi) {
                          if (gi[0].empty()) return;
                          for (std::size_t i = 0; i < n; ++i) gi[0][i] += g[i] * dfy((*data)[i]);
                        });
}

}  // namespace

Tensor sigmoid(const Tensor& x) {
  return unary_from_output(
      "sigmoid", x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); }, [](double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& x) {
  return unary_from_output(
      "tanh", x, [](double v) { return std::tanh(v); }, [](double y) { return 1.0 - y * y; });
}

Tensor softmax_spatial(const Tensor& x) {
  const Chw d = spatial_layout("softmax_spatial", x);
  if (d.c != 1) {
    throw std::invalid_argument("softmax_spatial: single-channel map required, shape is " + shape_string(x.shape()));
  }
  const std::size_t n = x.size();
  if (n == 0) throw std::invalid_argument("softmax_spatial: empty map");
  double m = x[0];
  for (std::size_t i = 1; i < n; ++i) m = std::max(m, x[i]);
  std::vector<double> out(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = std::exp(x[i] - m);
    total += out[i];
  }
  for (std::size_t i = 0; i < n; ++i) out[i] /= total;
  auto data = std::make_shared<const std::vector<double>>(std::move(out));
  return detail::record(x.shape(), data, {&x},
                        [n, data](std::span<const double> g, std::span<const std::span<double>> gi) {
                          if (gi[0].empty()) return;
                          double dot = 0.0;
                          for (std::size_t i = 0; i < n; ++i) dot += g[i] * (*data)[i];
                          for (std::size_t i = 0; i < n; ++i) gi[0][i] += (g[i] - dot) * (*data)[i];
                        });
}

Tensor downsample(const Tensor& x, std::size_t factor) {
  const Chw d = spatial_layout("downsample", x);
  if (factor == 0) throw std::invalid_argument("downsample: factor must be positive");
  if (d.h % factor != 0 || d.w % factor != 0) {
    throw std::invalid_argument("downsample: extents " + shape_string(x.shape()) + " not divisible by " +
                                std::to_string(factor));
  }
  const std::size_t oh = d.h / factor, ow = d.w / factor;
  const double inv = 1.0 / (static_cast<double>(factor) * static_cast<double>(factor));
  std::vector<double> out(d.c * oh * ow);
  std::span<const double> xv = x.values();
  for (std::size_t c = 0; c < d.c; ++c) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double acc = 0.0;
        for (std::size_t fy = 0; fy < factor; ++fy) {
          for (std::size_t fx = 0; fx < factor; ++fx) {
            acc += xv[(c * d.h + oy * factor + fy) * d.w + ox * factor + fx];
          }
        }
        out[(c * oh + oy) * ow + ox] = acc * inv;
      }
    }
  }
  std::vector<std::size_t> oshape =
      x.rank() == 2 ? std::vector<std::size_t>{oh, ow} : std::vector<std::size_t>{d.c, oh, ow};
  return detail::record(std::move(oshape), std::move(out), {&x},
                        [d, oh, ow, factor, inv](std::span<const double> g, std::span<const std::span<double>> gi) {
                          if (gi[0].empty()) return;
                          for (std::size_t c = 0; c < d.c; ++c) {
                            for (std::size_t oy = 0; oy < oh; ++oy) {
                              for (std::size_t ox = 0; ox < ow; ++ox) {
                                const double go = g[(c * oh + oy) * ow + ox] * inv;
                                for (std::size_t fy = 0; fy < factor; ++fy) {
                                  for (std::size_t fx = 0; fx < factor; ++fx) {
                                    gi[0][(c * d.h + oy * factor + fy) * d.w + ox * factor + fx] += go;
                                  }
                                }
                              }
                            }
                          }
                        });
}

Tensor upsample_nearest(const Tensor& x, std::size_t factor) {
  const Chw d = spatial_layout("upsample_nearest", x);
  if (factor == 0) throw std::invalid_argument("upsample_nearest: factor must be positive");
  const std::size_t oh = d.h * factor, ow = d.w * factor;
  std::vector<double> out(d.c * oh * ow);
  std::span<const double> xv = x.values();
  for (std::size_t c = 0; c < d.c; ++c) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        out[(c * oh + oy) * ow + ox] = xv[(c * d.h + oy / factor) * d.w + ox / factor];
      }
    }
  }
  std::vector<std::size_t> oshape =
      x.rank() == 2 ? std::vector<std::size_t>{oh, ow} : std::vector<std::size_t>{d.c, oh, ow};
  return detail::record(std::move(oshape), std::move(out), {&x},
                        [d, oh, ow, factor](std::span<const double> g, std::span<const std::span<double>> gi) {
                          if (gi[0].empty()) return;
                          for (std::size_t c = 0; c < d.c; ++c) {
                            for (std::size_t oy = 0; oy < oh; ++oy) {
                              for (std::size_t ox = 0; ox < ow; ++ox) {
                                gi[0][(c * d.h + oy / factor) * d.w + ox / factor] += g[(c * oh + oy) * ow + ox];
                              }
                            }
                          }
                        });
}

Tensor repeat_channels(const Tensor& x, std::size_t count) {
  const Chw d = spatial_layout("repeat_channels", x);
  if (d.c != 1) {
    throw std::invalid_argument("repeat_channels: single-channel map required, shape is " + shape_string(x.shape()));
  }
  if (count == 0) throw std::invalid_argument("repeat_channels: count must be positive");
  const std::size_t plane = d.h * d.w;
  std::vector<double> out(count * plane);
  std::span<const double> xv = x.values();
  for (std::size_t c = 0; c < count; ++c) {
    for (std::size_t i = 0; i < plane; ++i) out[c * plane + i] = xv[i];
  }
  return detail::record({count, d.h, d.w}, std::move(out), {&x},
                        [count, plane](std::span<const double> g, std::span<const std::span<double>> gi) {
                          if (gi[0].empty()) return;
                          for (std::size_t c = 0; c < count; ++c) {
                            for (std::size_t i = 0; i < plane; ++i) gi[0][i] += g[c * plane + i];
                          }
                        });
}

Tensor scale(const Tensor& x, double factor) {
  check_defined("scale", x);
  const std::size_t n = x.size();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] * factor;
  return detail::record(x.shape(), std::move(out), {&x},
                        [n, factor](std::span<const double> g, std::span<const std::span<double>> gi) {
                          if (gi[0].empty()) return;
                          for (std::size_t i = 0; i < n; ++i) gi[0][i] += g[i] * factor;
                        });
}

Tensor sum(const Tensor& x) {
  check_defined("sum", x);
  const std::size_t n = x.size();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return detail::record({1}, std::vector<double>{acc}, {&x},
                        [n](std::span<const double> g, std::span<const std::span<double>> gi) {
                          if (gi[0].empty()) return;
                          for (std::size_t i = 0; i < n; ++i) gi[0][i] += g[0];
                        });
}

}  // namespace bistream
