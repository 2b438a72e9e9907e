#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "envae/errors.hpp"

namespace envae {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

/// Dense row-major array of doubles. A rank-0 tensor (empty shape) is a scalar.
///
/// Tensor is a plain value; gradient tracking lives on a Tape, which hands out
/// Var handles that pair a recorded node with its Tensor value.
class Tensor {
 public:
  Tensor() : data_(1, 0.0) {}

  explicit Tensor(Shape shape, double fill = 0.0) : shape_(std::move(shape)), data_(numel(shape_), fill) {
    check_dims();
  }

  Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_dims();
    if (data_.size() != numel(shape_)) {
      throw DimensionError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                           to_string(shape_));
    }
  }

  static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

  static Tensor vector(std::initializer_list<double> values) {
    return Tensor(Shape{values.size()}, std::vector<double>(values));
  }

  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw DimensionError("ragged matrix literal");
      data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor(Shape{r, c}, std::move(data));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  const double& operator[](std::size_t i) const noexcept { return data_[i]; }

  double& at(std::size_t r, std::size_t c) { return data_[r * shape_.back() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * shape_.back() + c]; }

  double item() const {
    if (data_.size() != 1) throw ContractError("item() on tensor of shape " + to_string(shape_));
    return data_[0];
  }

  Tensor reshaped(Shape shape) const {
    if (numel(shape) != data_.size()) {
      throw DimensionError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
    }
    return Tensor(std::move(shape), data_);
  }

  /// Row `i` of a rank-2 tensor as a rank-1 tensor.
  Tensor row(std::size_t i) const {
    if (rank() != 2 || i >= shape_[0]) throw DimensionError("row() needs a matrix and a valid index");
    const std::size_t c = shape_[1];
    return Tensor(Shape{c}, std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(i * c),
                                                 data_.begin() + static_cast<std::ptrdiff_t>((i + 1) * c)));
  }

  /// Rows [begin, end) along the first axis.
  Tensor rows(std::size_t begin, std::size_t end) const {
    if (rank() == 0 || begin > end || end > shape_[0]) throw DimensionError("rows(): bad range");
    const std::size_t stride = shape_[0] ? data_.size() / shape_[0] : 0;
    Shape s = shape_;
    s[0] = end - begin;
    return Tensor(std::move(s), std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(begin * stride),
                                                    data_.begin() + static_cast<std::ptrdiff_t>(end * stride)));
  }

  bool all_finite() const noexcept {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  void check_dims() const {
    for (std::size_t d : shape_)
      if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + to_string(shape_));
  }

  Shape shape_;
  std::vector<double> data_;
};

/// Stack rank-1 tensors of equal length into a matrix.
inline Tensor stack_rows(std::span<const Tensor> rows) {
  if (rows.empty()) throw DimensionError("stack_rows of nothing");
  const std::size_t c = rows.front().size();
  std::vector<double> data;
  data.reserve(rows.size() * c);
  for (const auto& r : rows) {
    if (r.size() != c) throw DimensionError("stack_rows: ragged rows");
    data.insert(data.end(), r.data().begin(), r.data().end());
  }
  return Tensor(Shape{rows.size(), c}, std::move(data));
}

/// Output shape of a broadcast of `a` and `b` (trailing dimensions aligned,
/// a dimension of 1 stretches). Throws DimensionError when incompatible.
inline Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r);
  for (std::size_t i = 0; i < r; ++i) {
    const std::size_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    const std::size_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw DimensionError("shapes " + to_string(a) + " and " + to_string(b) + " do not broadcast");
    }
    out[i] = std::max(da, db);
  }
  return out;
}

namespace detail {

/// For each flat index of `out`, the flat index into an operand of shape `in`
/// broadcast to `out`.
inline std::vector<std::size_t> broadcast_index(const Shape& in, const Shape& out) {
  const std::size_t total = numel(out);
  std::vector<std::size_t> idx(total);
  const std::size_t n_in = numel(in);
  if (in == out) {
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return idx;
  }
  // Suffix case: `in` equals the trailing dimensions of `out`.
  if (in.size() <= out.size() && std::equal(in.begin(), in.end(), out.end() - static_cast<std::ptrdiff_t>(in.size()))) {
    for (std::size_t i = 0; i < total; ++i) idx[i] = i % n_in;
    return idx;
  }
  const std::size_t r = out.size();
  std::vector<std::size_t> in_stride(r, 0);
  std::size_t s = 1;
  for (std::size_t k = 0; k < in.size(); ++k) {
    const std::size_t axis = in.size() - 1 - k;
    const std::size_t oaxis = r - 1 - k;
    in_stride[oaxis] = in[axis] == 1 ? 0 : s;
    s *= in[axis];
  }
  std::vector<std::size_t> counter(r, 0);
  std::size_t pos = 0;
  for (std::size_t i = 0; i < total; ++i) {
    idx[i] = pos;
    for (std::size_t k = r; k-- > 0;) {
      ++counter[k];
      pos += in_stride[k];
      if (counter[k] < out[k]) break;
      pos -= in_stride[k] * counter[k];
      counter[k] = 0;
    }
  }
  return idx;
}

}  // namespace detail

inline Tensor broadcast_to(const Tensor& t, const Shape& shape) {
  if (broadcast_shape(t.shape(), shape) != shape) {
    throw DimensionError("cannot broadcast " + to_string(t.shape()) + " to " + to_string(shape));
  }
  const auto idx = detail::broadcast_index(t.shape(), shape);
  Tensor out(shape);
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = t[idx[i]];
  return out;
}

/// Sum `grad` (shaped like a broadcast result) back down to `shape`.
inline Tensor reduce_to(const Tensor& grad, const Shape& shape) {
  if (grad.shape() == shape) return grad;
  const Shape& g = grad.shape();
  if (!shape.empty() && shape.size() <= g.size() &&
      std::equal(shape.begin(), shape.end(), g.end() - static_cast<std::ptrdiff_t>(shape.size()))) {
    Tensor out(shape);
    const std::size_t inner = out.size();
    for (std::size_t base = 0; base < grad.size(); base += inner)
      for (std::size_t k = 0; k < inner; ++k) out[k] += grad[base + k];
    return out;
  }
  const auto idx = detail::broadcast_index(shape, grad.shape());
  Tensor out(shape);
  for (std::size_t i = 0; i < idx.size(); ++i) out[idx[i]] += grad[i];
  return out;
}

}  // namespace envae
