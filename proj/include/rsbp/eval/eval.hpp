#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "rsbp/eval/iterative.hpp"
#include "rsbp/image.hpp"
#include "rsbp/metrics.hpp"
#include "rsbp/nn/model.hpp"
#include "rsbp/phantom.hpp"
#include "rsbp/physics.hpp"
#include "rsbp/projector.hpp"
#include "rsbp/rng.hpp"
#include "rsbp/sbp.hpp"

namespace rsbp::eval {

enum class Method { fbp, iterative, fbp_cnn, sbp_cnn, rsbp_cnn };

inline const char* method_name(Method m) {
  switch (m) {
    case Method::fbp: return "fbp";
    case Method::iterative: return "iterative-baseline";
    case Method::fbp_cnn: return "fbp_cnn";
    case Method::sbp_cnn: return "sbp_cnn";
    case Method::rsbp_cnn: return "rsbp_cnn";
  }
  throw std::logic_error("method_name: unreachable");
}

inline Method method_from_name(const std::string& s) {
  for (Method m : {Method::fbp, Method::iterative, Method::fbp_cnn,
                   Method::sbp_cnn, Method::rsbp_cnn})
    if (s == method_name(m)) return m;
  throw std::invalid_argument("unknown method '" + s + "'");
}

inline bool method_is_neural(Method m) {
  return m == Method::fbp_cnn || m == Method::sbp_cnn || m == Method::rsbp_cnn;
}

// One held-out phantom with its (noise-seeded) measurement. Every method
// scores against the same EvalItem list, so all methods consume
// bit-identical sinograms.
struct EvalItem {
  Image truth;    // HU
  Sinogram sino;
};

inline std::vector<EvalItem> build_eval_items(
    const std::vector<PhantomSpec>& specs, const ViewGeometry& g,
    const PhysicsConstants& phys, bool noise_enabled,
    std::uint64_t noise_seed_root) {
  std::vector<EvalItem> items;
  items.reserve(specs.size());
  const CounterRng root(noise_seed_root);
  for (size_t i = 0; i < specs.size(); ++i) {
    EvalItem it;
    it.truth = generate_phantom(specs[i]);
    it.sino = simulate_sinogram(it.truth, g, phys,
                                NoiseSpec{noise_enabled, root.bits(i)});
    items.push_back(std::move(it));
  }
  return items;
}

// Neural reconstruction at full image size: assembles the method's input
// from the sinogram, runs the network in inference mode, and returns the
// HU image (side n - 2*margin from the valid-padding trim).
template <typename T>
Image reconstruct_neural(const nn::ModelConfig& mc, nn::ParamStore<T>& ps,
                         const Sinogram& sino, const ViewGeometry& g,
                         const PhysicsConstants& phys, bool filtered_sbp) {
  if (g.n_views != mc.n_views)
    throw std::invalid_argument("reconstruct_neural: geometry has " +
                                std::to_string(g.n_views) + " views, model " +
                                std::to_string(mc.n_views));
  const int n = g.n_pixels;
  const T s = T(1) / T(1000);  // HU -> water units
  Tensor<T> x;
  if (mc.variant == nn::ModelVariant::fbp_cnn) {
    const Image fbp = fbp_reconstruction_hu(sino, g, phys);
    x = Tensor<T>({1, n, n, 1});
    for (size_t i = 0; i < fbp.data.size(); ++i)
      x.v[i] = static_cast<T>(fbp.data[i]) * s;
  } else {
    const SbpTensor sbp = build_sbp(sino, g, phys, filtered_sbp);
    if (mc.variant == nn::ModelVariant::rsbp_cnn) {
      x = Tensor<T>({1, mc.n_views, n, n});
      for (int j = 0; j < mc.n_views; ++j) {
        const Image& z = sbp.slices[static_cast<size_t>(j)];
        for (int r = 0; r < n; ++r)
          for (int c = 0; c < n; ++c)
            x.at4(0, j, r, c) = static_cast<T>(z.at(r, c)) * s;
      }
    } else {
      x = Tensor<T>({1, n, n, mc.n_views});
      for (int j = 0; j < mc.n_views; ++j) {
        const Image& z = sbp.slices[static_cast<size_t>(j)];
        for (int r = 0; r < n; ++r)
          for (int c = 0; c < n; ++c)
            x.at4(0, r, c, j) = static_cast<T>(z.at(r, c)) * s;
      }
    }
  }
  nn::RenormSchedule<T> sched;  // inference: running statistics only
  Tensor<T> y = nn::model_forward(mc, x, ps, nn::RunMode::infer, sched);
  Image out(y.dim(1), Unit::HU);
  for (int r = 0; r < out.n; ++r)
    for (int c = 0; c < out.n; ++c)
      out.at(r, c) = static_cast<double>(y.at4(0, r, c, 0)) * 1000.0;
  return out;
}

// Evaluation knobs shared across methods so comparisons stay fair.
struct EvalConfig {
  int crop_margin = 0;          // common valid region: central (n-2m) crop
  int iterative_iters = 200;
  double iterative_reg = 1.0;
  bool filtered_sbp = true;
};

template <typename T>
struct MethodParams {
  nn::ModelConfig model;
  nn::ParamStore<T>* params = nullptr;  // mutable: forward passes touch
                                        // normalization buffers in training
};

template <typename T>
MethodResult evaluate_method(Method method, const std::vector<EvalItem>& items,
                             const ViewGeometry& g, const PhysicsConstants& phys,
                             const EvalConfig& cfg,
                             const MethodParams<T>* net = nullptr) {
  if (method_is_neural(method) && (!net || !net->params))
    throw std::invalid_argument(std::string("evaluate_method: method '") +
                                method_name(method) +
                                "' needs trained parameters");
  if (cfg.crop_margin < 0 || 2 * cfg.crop_margin >= g.n_pixels)
    throw std::invalid_argument("evaluate_method: crop margin too large");

  std::vector<double> scores;
  scores.reserve(items.size());
  for (const EvalItem& item : items) {
    Image recon(1, Unit::HU);
    switch (method) {
      case Method::fbp:
        recon = fbp_reconstruction_hu(item.sino, g, phys);
        break;
      case Method::iterative:
        recon = iterative_baseline(item.sino, g, phys, cfg.iterative_iters,
                                   cfg.iterative_reg);
        break;
      default:
        recon = reconstruct_neural<T>(net->model, *net->params, item.sino, g,
                                      phys, cfg.filtered_sbp);
        break;
    }
    const int target_n = g.n_pixels - 2 * cfg.crop_margin;
    if (recon.n < target_n)
      throw std::invalid_argument(
          "evaluate_method: crop margin smaller than the method's own margin");
    const Image truth_c = center_crop(item.truth, cfg.crop_margin);
    const Image recon_c = center_crop(recon, (recon.n - target_n) / 2);
    scores.push_back(nrmse(truth_c, recon_c));
  }
  return MethodResult::from_samples(method_name(method), std::move(scores));
}

}  // namespace rsbp::eval
