#include "bistream/tensor.hpp"

#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace bistream {

namespace {

std::size_t checked_element_count(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) {
    if (e != 0 && n > std::numeric_limits<std::size_t>::max() / e) {
      throw std::invalid_argument("tensor shape " + shape_string(shape) + " overflows element count");
    }
    n *= e;
  }
  return n;
}

}  // namespace

Tensor Tensor::from(std::vector<std::size_t> shape, std::vector<double> values) {
  const std::size_t n = checked_element_count(shape);
  if (values.size() != n) {
    throw std::invalid_argument("tensor shape " + shape_string(shape) + " needs " + std::to_string(n) +
                                " values, got " + std::to_string(values.size()));
  }
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::make_shared<const std::vector<double>>(std::move(values));
  return t;
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::ones(std::vector<std::size_t> shape) { return full(std::move(shape), 1.0); }

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
  const std::size_t n = checked_element_count(shape);
  return from(std::move(shape), std::vector<double>(n, value));
}

std::size_t Tensor::extent(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw std::invalid_argument("axis " + std::to_string(axis) + " out of range for shape " + shape_string(shape_));
  }
  return shape_[axis];
}

std::span<const double> Tensor::values() const {
  if (!data_) return {};
  return {data_->data(), data_->size()};
}

double Tensor::at(std::size_t h, std::size_t w) const {
  if (rank() != 2) throw std::invalid_argument("at(h, w) needs rank 2, shape is " + shape_string(shape_));
  if (h >= shape_[0] || w >= shape_[1]) throw std::invalid_argument("index out of range");
  return (*data_)[h * shape_[1] + w];
}

double Tensor::at(std::size_t c, std::size_t h, std::size_t w) const {
  if (rank() != 3) throw std::invalid_argument("at(c, h, w) needs rank 3, shape is " + shape_string(shape_));
  if (c >= shape_[0] || h >= shape_[1] || w >= shape_[2]) throw std::invalid_argument("index out of range");
  return (*data_)[(c * shape_[1] + h) * shape_[2] + w];
}

Tensor detail::TensorAccess::tracked(std::vector<std::size_t> shape,
                                     std::shared_ptr<const std::vector<double>> data,
                                     std::shared_ptr<TapeState> tape, int node) {
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::move(data);
  t.tape_ = std::move(tape);
  t.node_ = node;
  return t;
}

std::string shape_string(std::span<const std::size_t> shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  s += ")";
  return s;
}

void write_tensor_text(std::ostream& out, const Tensor& t) {
  if (!t.defined()) throw std::invalid_argument("cannot serialize an undefined tensor");
  if (t.rank() < 1 || t.rank() > 3) {
    throw std::invalid_argument("text form holds rank 1 to 3, shape is " + shape_string(t.shape()));
  }
  std::size_t dims[3] = {1, 1, 1};
  for (std::size_t i = 0; i < t.rank(); ++i) dims[3 - t.rank() + i] = t.shape()[i];

  out << dims[0] << ' ' << dims[1] << ' ' << dims[2] << '\n';
  const auto old_precision = out.precision(17);
  std::span<const double> v = t.values();
  std::size_t i = 0;
  for (std::size_t c = 0; c < dims[0]; ++c) {
    for (std::size_t h = 0; h < dims[1]; ++h) {
      for (std::size_t w = 0; w < dims[2]; ++w, ++i) {
        if (w) out << ' ';
        out << v[i];
      }
      out << '\n';
    }
  }
  out.precision(old_precision);
  if (!out) throw std::runtime_error("tensor write failed");
}

Tensor read_tensor_text(std::istream& in) {
  long long c = 0, h = 0, w = 0;
  if (!(in >> c >> h >> w)) throw std::invalid_argument("tensor text: malformed header, expected \"C H W\"");
  if (c < 0 || h < 0 || w < 0) throw std::invalid_argument("tensor text: negative extent in header");
  std::vector<std::size_t> shape{static_cast<std::size_t>(c), static_cast<std::size_t>(h),
                                 static_cast<std::size_t>(w)};
  const std::size_t n = static_cast<std::size_t>(c) * static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  std::vector<double> values(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(in >> values[i])) {
      throw std::invalid_argument("tensor text: expected " + std::to_string(n) + " values, failed at value " +
                                  std::to_string(i));
    }
  }
  return Tensor::from(std::move(shape), std::move(values));
}

}  // namespace bistream
