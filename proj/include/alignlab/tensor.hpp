#pragma once

// Dense row-major tensor on a flat scalar buffer, with Eigen views for the
// linear-algebra heavy paths. Scalar type is a template parameter so the
// trainer can run float32 while the gradient checker re-runs the identical
// code in float64.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace alignlab {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (std::int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

template <typename S>
struct Tensor {
  using MatrixType = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MapType = Eigen::Map<MatrixType>;
  using ConstMapType = Eigen::Map<const MatrixType>;
  // Max-aligned storage keeps Eigen's vectorized kernels from peeling a
  // pointer-dependent scalar prologue, so reduction order (and hence the
  // low-order bits of every result) does not depend on where the heap placed
  // the buffer. Same-seed runs stay bitwise reproducible across processes.
  using Buffer = std::vector<S, Eigen::aligned_allocator<S>>;

  Shape shape;
  Buffer data;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(std::move(s)), data(static_cast<std::size_t>(shape_numel(shape)), S(0)) {}
  Tensor(Shape s, Buffer values) : shape(std::move(s)), data(std::move(values)) {
    if (static_cast<std::int64_t>(data.size()) != shape_numel(shape))
      throw std::invalid_argument("Tensor: " + std::to_string(data.size()) +
                                  " values do not fill shape " + shape_str(shape));
  }

  static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
  static Tensor full(Shape s, S v) {
    Tensor t(std::move(s));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }
  static Tensor row(std::initializer_list<S> values) {
    Tensor t;
    t.shape = {1, static_cast<std::int64_t>(values.size())};
    t.data.assign(values);
    return t;
  }

  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
  int ndim() const { return static_cast<int>(shape.size()); }
  std::int64_t dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

  // 2-d accessors. Most of the pipeline lives on matrices; 4-d image tensors
  // are only touched by the conv/pool ops, which index the flat buffer.
  std::int64_t rows() const { return require_2d("rows"), shape[0]; }
  std::int64_t cols() const { return require_2d("cols"), shape[1]; }
  S& at(std::int64_t r, std::int64_t c) { return data[static_cast<std::size_t>(r * shape[1] + c)]; }
  S at(std::int64_t r, std::int64_t c) const { return data[static_cast<std::size_t>(r * shape[1] + c)]; }

  MapType mat() {
    require_2d("mat");
    return MapType(data.data(), shape[0], shape[1]);
  }
  ConstMapType mat() const {
    require_2d("mat");
    return ConstMapType(data.data(), shape[0], shape[1]);
  }
  // Flattened [rows, cols] view with the caller's factorization of the shape;
  // used to treat [B,H,W,C] as [B*H*W, C] and similar reinterpretations.
  MapType mat_as(std::int64_t r, std::int64_t c) {
    check_view(r, c);
    return MapType(data.data(), r, c);
  }
  ConstMapType mat_as(std::int64_t r, std::int64_t c) const {
    check_view(r, c);
    return ConstMapType(data.data(), r, c);
  }

  void set_zero() { std::fill(data.begin(), data.end(), S(0)); }

  bool all_finite() const {
    for (S v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  template <typename T>
  Tensor<T> cast() const {
    Tensor<T> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<T>(data[i]);
    return out;
  }

 private:
  void require_2d(const char* what) const {
    if (shape.size() != 2)
      throw std::logic_error(std::string("Tensor::") + what + ": needs a 2-d tensor, have " + shape_str(shape));
  }
  void check_view(std::int64_t r, std::int64_t c) const {
    if (r * c != numel())
      throw std::logic_error("Tensor view " + std::to_string(r) + "x" + std::to_string(c) +
                             " does not cover shape " + shape_str(shape));
  }
};

}  // namespace alignlab
