#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace feudal {

/// Dense row-major array of 64-bit floats. The single value carrier for
/// activations, parameters and gradients throughout the library.
///
/// Invariant: numel(shape) == data.size(). Exported ops keep every entry
/// finite; see assert_finite().
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<std::size_t> shape_, std::vector<double> data_)
      : shape(std::move(shape_)), data(std::move(data_)) {
    if (numel() != data.size()) {
      throw std::invalid_argument("Tensor: shape/data size mismatch");
    }
  }

  static Tensor zeros(std::vector<std::size_t> shape) {
    std::size_t n = 1;
    for (std::size_t s : shape) n *= s;
    return Tensor(std::move(shape), std::vector<double>(n, 0.0));
  }

  static Tensor full(std::vector<std::size_t> shape, double v) {
    std::size_t n = 1;
    for (std::size_t s : shape) n *= s;
    return Tensor(std::move(shape), std::vector<double>(n, v));
  }

  static Tensor vec(std::vector<double> values) {
    std::size_t n = values.size();
    return Tensor({n}, std::move(values));
  }

  std::size_t numel() const {
    std::size_t n = 1;
    for (std::size_t s : shape) n *= s;
    return n;
  }

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }

  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  // 2-D access; first shape entry is the row count.
  double& at(std::size_t row, std::size_t col) {
    return data[row * shape[1] + col];
  }
  double at(std::size_t row, std::size_t col) const {
    return data[row * shape[1] + col];
  }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
};

inline bool all_finite(const Tensor& t) {
  for (double v : t.data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

inline void assert_finite(const Tensor& t, const char* what) {
  if (!all_finite(t)) {
    throw std::runtime_error(std::string("non-finite values in ") + what);
  }
}

inline double dot(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("dot: size mismatch");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a.data[i] * b.data[i];
  return acc;
}

inline double norm2(const Tensor& a) { return std::sqrt(dot(a, a)); }

// y += s * x
inline void axpy(double s, const Tensor& x, Tensor& y) {
  if (x.size() != y.size()) {
    throw std::invalid_argument("axpy: size mismatch");
  }
  for (std::size_t i = 0; i < x.size(); ++i) y.data[i] += s * x.data[i];
}

inline void scale(Tensor& x, double s) {
  for (double& v : x.data) v *= s;
}

}  // namespace feudal
