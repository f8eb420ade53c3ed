#pragma once

#include <cmath>
#include <stdexcept>

#include "rsbp/image.hpp"
#include "rsbp/tensor.hpp"

namespace rsbp::train {

// Soft-saturating transfer applied to HU values before the squared
// error: f(x) = x / (|x| + 2000). Odd, monotone, range (-1, 1); maps
// 2000 HU to 0.5 so dense materials stop dominating the loss.
template <typename T>
T transfer_f(T x) {
  return x / (std::abs(x) + T(2000));
}

template <typename T>
T transfer_f_prime(T x) {
  const T s = std::abs(x) + T(2000);
  return T(2000) / (s * s);
}

struct LossValue {
  double sum = 0.0;   // unnormalized squared norm
  double mean = 0.0;  // per-pixel mean (the form the optimizer consumes)
};

// Both tensors carry HU values and must already be cropped to the same
// (valid) region.
template <typename T>
LossValue loss_forward(const Tensor<T>& x_true, const Tensor<T>& x_hat) {
  check_same_shape(x_true, x_hat, "loss_forward");
  if (x_true.size() == 0) throw std::invalid_argument("loss_forward: empty");
  double sum = 0.0;
  for (size_t i = 0; i < x_true.size(); ++i) {
    const double e = transfer_f(static_cast<double>(x_true.v[i])) -
                     transfer_f(static_cast<double>(x_hat.v[i]));
    sum += e * e;
  }
  return {sum, sum / static_cast<double>(x_true.size())};
}

// Gradient of the loss with respect to x_hat (HU domain).
template <typename T>
Tensor<T> loss_backward(const Tensor<T>& x_true, const Tensor<T>& x_hat,
                        bool mean_form) {
  check_same_shape(x_true, x_hat, "loss_backward");
  Tensor<T> g(x_hat.shape);
  const T scale = mean_form ? T(1) / static_cast<T>(x_hat.size()) : T(1);
  for (size_t i = 0; i < x_hat.size(); ++i) {
    const T e = transfer_f(x_hat.v[i]) - transfer_f(x_true.v[i]);
    g.v[i] = scale * T(2) * e * transfer_f_prime(x_hat.v[i]);
  }
  return g;
}

// Image-level convenience for single reconstructions.
inline LossValue loss_forward(const Image& x_true, const Image& x_hat) {
  require_unit(x_true, Unit::HU, "loss_forward truth");
  require_unit(x_hat, Unit::HU, "loss_forward estimate");
  if (x_true.n != x_hat.n)
    throw std::invalid_argument("loss_forward: image size mismatch");
  Tensor<double> t({1, x_true.n, x_true.n, 1}), h(t.shape);
  t.v.assign(x_true.data.begin(), x_true.data.end());
  h.v.assign(x_hat.data.begin(), x_hat.data.end());
  return loss_forward(t, h);
}

}  // namespace rsbp::train
