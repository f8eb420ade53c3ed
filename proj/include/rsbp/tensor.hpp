#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace rsbp {

// Dense row-major n-d array. float for training runs, double for
// gradient-check / verification mode.
template <typename T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> v;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    v.assign(count(shape), T(0));
  }

  static size_t count(const std::vector<int>& s) {
    size_t n = 1;
    for (int d : s) {
      if (d < 0) throw std::invalid_argument("Tensor: negative dim");
      n *= static_cast<size_t>(d);
    }
    return n;
  }

  size_t size() const { return v.size(); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  int rank() const { return static_cast<int>(shape.size()); }

  T& operator[](size_t i) { return v[i]; }
  T operator[](size_t i) const { return v[i]; }

  // Rank-specific indexers; row-major.
  T& at2(int a, int b) { return v[static_cast<size_t>(a) * dim(1) + b]; }
  T at2(int a, int b) const { return v[static_cast<size_t>(a) * dim(1) + b]; }
  T& at3(int a, int b, int c) {
    return v[(static_cast<size_t>(a) * dim(1) + b) * dim(2) + c];
  }
  T at3(int a, int b, int c) const {
    return v[(static_cast<size_t>(a) * dim(1) + b) * dim(2) + c];
  }
  T& at4(int a, int b, int c, int d) {
    return v[((static_cast<size_t>(a) * dim(1) + b) * dim(2) + c) * dim(3) + d];
  }
  T at4(int a, int b, int c, int d) const {
    return v[((static_cast<size_t>(a) * dim(1) + b) * dim(2) + c) * dim(3) + d];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (T x : v)
      if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
  }

  std::string shape_str() const {
    std::string s = "(";
    for (size_t i = 0; i < shape.size(); ++i)
      s += (i ? "," : "") + std::to_string(shape[i]);
    return s + ")";
  }
};

template <typename T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                a.shape_str() + " vs " + b.shape_str());
}

template <typename T>
void check_finite(const Tensor<T>& t, const char* where) {
  if (!t.all_finite())
    throw std::runtime_error(std::string(where) + ": non-finite values");
}

}  // namespace rsbp
