#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "rsbp/nn/nn_core.hpp"

namespace rsbp::train {

// Standard bias-corrected Adam over the trainable entries of a
// ParamStore. Moments are kept in the store's element type.
template <typename T>
struct AdamState {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-7;
  long long step = 0;
  std::vector<Tensor<T>> m, v;  // parallel to trainable entries
  std::vector<std::string> names;

  static AdamState init(const nn::ParamStore<T>& ps, double lr) {
    AdamState st;
    st.lr = lr;
    for (const auto& e : ps.entries())
      if (e.trainable) {
        st.m.emplace_back(e.value.shape);
        st.v.emplace_back(e.value.shape);
        st.names.push_back(e.name);
      }
    return st;
  }
};

template <typename T>
void adam_step(nn::ParamStore<T>& ps, AdamState<T>& st) {
  st.step += 1;
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  size_t k = 0;
  for (auto& e : ps.entries()) {
    if (!e.trainable) continue;
    if (k >= st.m.size() || st.names[k] != e.name ||
        !st.m[k].same_shape(e.value))
      throw std::invalid_argument("adam_step: state does not match parameters");
    Tensor<T>& m = st.m[k];
    Tensor<T>& v = st.v[k];
    ++k;
    for (size_t i = 0; i < e.value.size(); ++i) {
      const double g = static_cast<double>(e.grad.v[i]);
      const double mi = st.beta1 * static_cast<double>(m.v[i]) +
                        (1.0 - st.beta1) * g;
      const double vi = st.beta2 * static_cast<double>(v.v[i]) +
                        (1.0 - st.beta2) * g * g;
      m.v[i] = static_cast<T>(mi);
      v.v[i] = static_cast<T>(vi);
      const double mhat = mi / bc1;
      const double vhat = vi / bc2;
      e.value.v[i] =
          static_cast<T>(static_cast<double>(e.value.v[i]) -
                         st.lr * mhat / (std::sqrt(vhat) + st.eps));
    }
  }
  if (k != st.m.size())
    throw std::invalid_argument("adam_step: state/parameter count mismatch");
}

}  // namespace rsbp::train
