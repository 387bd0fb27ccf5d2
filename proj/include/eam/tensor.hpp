#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

namespace eam {

using Index = Eigen::Index;

template <class S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S>
using VecX = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <class S>
using ArrX = Eigen::Array<S, Eigen::Dynamic, 1>;
template <class S>
using RowMajorMap = Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <class S>
using ConstRowMajorMap =
    Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

/// Base class for all errors thrown by this library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Dimension mismatch; carries the name of the offending axis.
class ShapeError : public Error {
 public:
  ShapeError(std::string axis, const std::string& msg)
      : Error("shape error on axis '" + axis + "': " + msg), axis_(std::move(axis)) {}
  const std::string& axis() const { return axis_; }

 private:
  std::string axis_;
};

class ValueError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Extents of a rank-4 tensor: (batch, channel, height, width).
struct Shape4 {
  Index n = 0;
  Index c = 0;
  Index h = 0;
  Index w = 0;

  Index count() const { return n * c * h * w; }
  bool operator==(const Shape4&) const = default;

  std::string str() const {
    std::ostringstream os;
    os << "(" << n << "," << c << "," << h << "," << w << ")";
    return os.str();
  }
};

/// Dense rank-4 tensor, row-major with channel-major layout within a sample:
/// element (i, ch, y, x) lives at ((i*c + ch)*h + y)*w + x.
template <class S>
class Tensor4 {
 public:
  using Scalar = S;

  Tensor4() = default;

  explicit Tensor4(Shape4 shape, S fill = S(0)) : shape_(shape) {
    check_extents(shape);
    data_.setConstant(shape.count(), fill);
  }

  static Tensor4 zeros(Shape4 shape) { return Tensor4(shape, S(0)); }

  static Tensor4 zeros_like(const Tensor4& other) { return Tensor4(other.shape_, S(0)); }

  const Shape4& shape() const { return shape_; }
  Index size() const { return data_.size(); }
  bool empty() const { return data_.size() == 0; }

  ArrX<S>& array() { return data_; }
  const ArrX<S>& array() const { return data_; }
  S* data() { return data_.data(); }
  const S* data() const { return data_.data(); }

  Index offset(Index i, Index ch, Index y, Index x) const {
    return ((i * shape_.c + ch) * shape_.h + y) * shape_.w + x;
  }

  S& operator()(Index i, Index ch, Index y, Index x) { return data_[offset(i, ch, y, x)]; }
  S operator()(Index i, Index ch, Index y, Index x) const { return data_[offset(i, ch, y, x)]; }

  S* plane(Index i, Index ch) { return data_.data() + offset(i, ch, 0, 0); }
  const S* plane(Index i, Index ch) const { return data_.data() + offset(i, ch, 0, 0); }

  /// Channels-by-pixels view of one sample, shape (c, h*w).
  ConstRowMajorMap<S> sample(Index i) const {
    return ConstRowMajorMap<S>(data_.data() + offset(i, 0, 0, 0), shape_.c, shape_.h * shape_.w);
  }
  RowMajorMap<S> sample(Index i) {
    return RowMajorMap<S>(data_.data() + offset(i, 0, 0, 0), shape_.c, shape_.h * shape_.w);
  }

  bool all_finite() const {
    for (Index k = 0; k < data_.size(); ++k) {
      if (!std::isfinite(static_cast<double>(data_[k]))) return false;
    }
    return true;
  }

 private:
  static void check_extents(const Shape4& s) {
    if (s.n < 1) throw ShapeError("batch", "extent must be >= 1, got " + std::to_string(s.n));
    if (s.c < 1) throw ShapeError("channel", "extent must be >= 1, got " + std::to_string(s.c));
    if (s.h < 1) throw ShapeError("height", "extent must be >= 1, got " + std::to_string(s.h));
    if (s.w < 1) throw ShapeError("width", "extent must be >= 1, got " + std::to_string(s.w));
  }

  Shape4 shape_{};
  ArrX<S> data_{};
};

/// Scalar precision used by the training/CLI pipeline. Gradient checking
/// always instantiates the double-precision templates regardless.
#ifdef EAM_TRAIN_DOUBLE
using real = double;
#else
using real = float;
#endif

}  // namespace eam
