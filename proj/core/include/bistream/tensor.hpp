#pragma once

#include <cstddef>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace bistream {

namespace detail {
struct TapeState;
struct TensorAccess;
}  // namespace detail

/// Dense multi-dimensional array of 64-bit reals in row-major order.
///
/// Feature maps are (channels, height, width); convolution kernels are
/// (out_channels, in_channels, k, k); biases are rank-1. Values are
/// immutable after construction and copies share storage, so tensors are
/// cheap to pass by value and safe to read from several threads.
///
/// A tensor produced while a Tape is recording (see autodiff.hpp) keeps a
/// handle to that tape; grad() reads the gradient accumulated by the last
/// backward() run for as long as the tape is alive.
class Tensor {
 public:
  Tensor() = default;

  /// Builds a tensor from explicit extents and row-major values.
  /// The value count must equal the product of the extents.
  static Tensor from(std::vector<std::size_t> shape, std::vector<double> values);
  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor ones(std::vector<std::size_t> shape);
  static Tensor full(std::vector<std::size_t> shape, double value);

  bool defined() const { return data_ != nullptr; }
  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_ ? data_->size() : 0; }
  std::size_t extent(std::size_t axis) const;

  std::span<const double> values() const;
  double operator[](std::size_t i) const { return (*data_)[i]; }
  double at(std::size_t h, std::size_t w) const;
  double at(std::size_t c, std::size_t h, std::size_t w) const;

  /// True when the tensor participates in gradient recording.
  bool requires_grad() const { return tape_ != nullptr; }

  /// Gradient of the last backward() pass, same shape as the tensor.
  /// Empty before backward() runs or for untracked tensors.
  std::optional<Tensor> grad() const;

 private:
  std::vector<std::size_t> shape_;
  std::shared_ptr<const std::vector<double>> data_;
  std::shared_ptr<detail::TapeState> tape_;
  int node_ = -1;

  friend struct detail::TensorAccess;
};

/// Formats extents as "(2, 3, 4)" for error messages.
std::string shape_string(std::span<const std::size_t> shape);

/// Writes the text form: a "C H W" header line followed by row-major
/// whitespace-separated decimals. Tensors of rank 1 or 2 are padded with
/// leading unit extents. Values keep 17 significant digits and therefore
/// round-trip exactly.
void write_tensor_text(std::ostream& out, const Tensor& t);

/// Reads the text form produced by write_tensor_text. Always yields a
/// rank-3 tensor.
Tensor read_tensor_text(std::istream& in);

namespace detail {

// Internal bridge between the value layer and the autodiff layer.
struct TensorAccess {
  static const std::shared_ptr<const std::vector<double>>& data(const Tensor& t) { return t.data_; }
  static const std::shared_ptr<TapeState>& tape(const Tensor& t) { return t.tape_; }
  static int node(const Tensor& t) { return t.node_; }
  static Tensor tracked(std::vector<std::size_t> shape,
                        std::shared_ptr<const std::vector<double>> data,
                        std::shared_ptr<TapeState> tape, int node);
};

}  // namespace detail

}  // namespace bistream
