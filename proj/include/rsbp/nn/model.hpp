#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "rsbp/nn/conv_lstm.hpp"
#include "rsbp/nn/unet.hpp"

namespace rsbp::nn {

// The three reconstructor variants. All share the same U-Net head; they
// differ in how the view data reaches it:
//   fbp_cnn  — full filtered backprojection image, one stem convolution
//   sbp_cnn  — all single-view backprojections stacked as channels, stem
//   rsbp_cnn — single-view backprojections consumed sequentially by a
//              convolutional LSTM; the final hidden tensor feeds the U-Net
enum class ModelVariant { fbp_cnn, sbp_cnn, rsbp_cnn };

inline const char* variant_name(ModelVariant v) {
  switch (v) {
    case ModelVariant::fbp_cnn: return "fbp_cnn";
    case ModelVariant::sbp_cnn: return "sbp_cnn";
    case ModelVariant::rsbp_cnn: return "rsbp_cnn";
  }
  return "?";
}

inline ModelVariant variant_from_name(const std::string& s) {
  if (s == "fbp_cnn") return ModelVariant::fbp_cnn;
  if (s == "sbp_cnn") return ModelVariant::sbp_cnn;
  if (s == "rsbp_cnn") return ModelVariant::rsbp_cnn;
  throw std::invalid_argument("unknown model variant: " + s);
}

struct ModelConfig {
  ModelVariant variant = ModelVariant::rsbp_cnn;
  int n_views = 16;  // M; sequence length / channel count of the view data
  int hidden = 16;   // C_hidden
  bool peephole = false;
  UnetConfig unet;   // unet.in_channels is forced to hidden

  void validate() const {
    if (n_views < 1 || hidden < 1)
      throw std::invalid_argument("model: n_views and hidden must be positive");
    unet.validate();
  }

  int stem_in_channels() const {
    switch (variant) {
      case ModelVariant::fbp_cnn: return 1;
      case ModelVariant::sbp_cnn: return n_views;
      case ModelVariant::rsbp_cnn: return 1;  // per-step slice channels
    }
    return 0;
  }
};

// Expected input shapes (batched):
//   fbp_cnn  — (B, H, W, 1)
//   sbp_cnn  — (B, H, W, M)
//   rsbp_cnn — (B, M, H, W)
template <typename T>
void check_model_input(const ModelConfig& cfg, const Tensor<T>& x) {
  switch (cfg.variant) {
    case ModelVariant::fbp_cnn:
      if (x.rank() != 4 || x.dim(3) != 1)
        throw std::invalid_argument("fbp_cnn expects (B,H,W,1) input");
      return;
    case ModelVariant::sbp_cnn:
      if (x.rank() != 4 || x.dim(3) != cfg.n_views)
        throw std::invalid_argument("sbp_cnn expects (B,H,W," +
                                    std::to_string(cfg.n_views) + ") input");
      return;
    case ModelVariant::rsbp_cnn:
      if (x.rank() != 4 || x.dim(1) != cfg.n_views)
        throw std::invalid_argument("rsbp_cnn expects (B," +
                                    std::to_string(cfg.n_views) + ",H,W) input");
      return;
  }
}

template <typename T>
ParamStore<T> make_model_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ParamStore<T> ps;
  SeqRng rng(seed, 0x494e4954ULL);
  if (cfg.variant == ModelVariant::rsbp_cnn) {
    const int cin = 1 + cfg.hidden;
    Tensor<T>& w = ps.add("lstm.w", {3, 3, cin, 4 * cfg.hidden});
    init_uniform_fan_in(w, 9 * cin, rng);
    Tensor<T>& b = ps.add("lstm.b", {4 * cfg.hidden});
    // Forget-gate bias starts at +1 so early training does not wipe the
    // cell state.
    for (int ch = 0; ch < cfg.hidden; ++ch) b.v[cfg.hidden + ch] = T(1);
    if (cfg.peephole) {
      ps.add("lstm.pi", {cfg.hidden});
      ps.add("lstm.pf", {cfg.hidden});
      ps.add("lstm.po", {cfg.hidden});
    }
  } else {
    Tensor<T>& w = ps.add("stem.w", {3, 3, cfg.stem_in_channels(), cfg.hidden});
    init_uniform_fan_in(w, 9 * cfg.stem_in_channels(), rng);
    ps.add("stem.b", {cfg.hidden});
  }
  UnetConfig ucfg = cfg.unet;
  ucfg.in_channels = cfg.hidden;
  register_unet_params(ps, ucfg, rng);
  return ps;
}

template <typename T>
ConvLstmPeephole<T> peephole_view(const ModelConfig& cfg,
                                  const ParamStore<T>& ps) {
  ConvLstmPeephole<T> p;
  if (cfg.peephole) {
    p.p_i = &ps.value("lstm.pi");
    p.p_f = &ps.value("lstm.pf");
    p.p_o = &ps.value("lstm.po");
  }
  return p;
}

template <typename T>
struct ModelCache {
  std::vector<ConvLstmStepCache<T>> steps;  // rsbp_cnn
  Tensor<T> stem_in;                        // fbp_cnn / sbp_cnn
  UnetCache<T> unet;
  bool valid = false;
};

namespace detail {

// Extracts view t of a (B,M,H,W) sequence as a (B,H,W,1) tensor.
template <typename T>
Tensor<T> sequence_slice(const Tensor<T>& x, int t) {
  const int b_n = x.dim(0), m = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor<T> y({b_n, h, w, 1});
  for (int b = 0; b < b_n; ++b)
    std::memcpy(&y.v[static_cast<size_t>(b) * h * w],
                &x.v[(static_cast<size_t>(b) * m + t) * h * w],
                sizeof(T) * h * w);
  return y;
}

}  // namespace detail

// Runs the variant's front end (LSTM or stem convolution) and returns the
// C_hidden-channel tensor that feeds the U-Net.
template <typename T>
Tensor<T> model_front_forward(const ModelConfig& cfg, const Tensor<T>& x,
                              ParamStore<T>& ps, ModelCache<T>* cache) {
  if (cfg.variant == ModelVariant::rsbp_cnn) {
    ConvLstmState<T> state =
        ConvLstmState<T>::zeros(x.dim(0), x.dim(2), x.dim(3), cfg.hidden);
    const ConvLstmPeephole<T> peep = peephole_view(cfg, ps);
    if (cache) cache->steps.resize(cfg.n_views);
    for (int t = 0; t < cfg.n_views; ++t) {
      Tensor<T> xt = detail::sequence_slice(x, t);
      state = conv_lstm_step(xt, state, ps.value("lstm.w"), ps.value("lstm.b"),
                             peep, cache ? &cache->steps[t] : nullptr);
    }
    check_finite(state.h, "conv_lstm");
    return state.h;
  }
  if (cache) cache->stem_in = x;
  Tensor<T> z = conv2d_forward(x, ps.value("stem.w"), ps.value("stem.b"),
                               Padding::same);
  check_finite(z, "stem");
  return z;
}

template <typename T>
Tensor<T> model_forward(const ModelConfig& cfg, const Tensor<T>& x,
                        ParamStore<T>& ps, RunMode mode,
                        const RenormSchedule<T>& sched,
                        ModelCache<T>* cache = nullptr) {
  cfg.validate();
  check_model_input(cfg, x);
  if (mode == RunMode::train && !cache)
    throw std::logic_error("model_forward: train mode requires a cache");
  Tensor<T> hidden = model_front_forward(cfg, x, ps, cache);
  UnetConfig ucfg = cfg.unet;
  ucfg.in_channels = cfg.hidden;
  Tensor<T> y = unet_forward(hidden, ucfg, ps, mode, sched,
                             cache ? &cache->unet : nullptr);
  check_finite(y, "model output");
  if (cache) cache->valid = true;
  return y;
}

// Accumulates parameter gradients for the upstream gradient dy; forward
// must have run in train mode with the same cache.
template <typename T>
void model_backward(const ModelConfig& cfg, const Tensor<T>& dy,
                    ParamStore<T>& ps, ModelCache<T>& cache) {
  if (!cache.valid)
    throw std::logic_error("model_backward: no cached forward pass");
  UnetConfig ucfg = cfg.unet;
  ucfg.in_channels = cfg.hidden;
  Tensor<T> dhidden = unet_backward(dy, ucfg, ps, cache.unet);

  if (cfg.variant == ModelVariant::rsbp_cnn) {
    const ConvLstmPeephole<T> peep = peephole_view(cfg, ps);
    Tensor<T>* dpi = cfg.peephole ? &ps.grad("lstm.pi") : nullptr;
    Tensor<T>* dpf = cfg.peephole ? &ps.grad("lstm.pf") : nullptr;
    Tensor<T>* dpo = cfg.peephole ? &ps.grad("lstm.po") : nullptr;
    Tensor<T> dh = std::move(dhidden);
    Tensor<T> dc(dh.shape);
    for (int t = cfg.n_views - 1; t >= 0; --t) {
      const Tensor<T> zeros_c =
          t == 0 ? Tensor<T>(cache.steps[0].c.shape) : Tensor<T>();
      const Tensor<T>& c_prev = t == 0 ? zeros_c : cache.steps[t - 1].c;
      ConvLstmStepGrads<T> g = conv_lstm_step_backward(
          dh, dc, c_prev, cache.steps[t], ps.value("lstm.w"), peep,
          ps.grad("lstm.w"), ps.grad("lstm.b"), dpi, dpf, dpo);
      dh = std::move(g.dh_prev);
      dc = std::move(g.dc_prev);
    }
  } else {
    conv2d_backward(cache.stem_in, ps.value("stem.w"), dhidden, Padding::same,
                    ps.grad("stem.w"), ps.grad("stem.b"));
  }
}

// Evaluation-only mode: applies the U-Net to the hidden state after every
// LSTM step, showing how the reconstruction evolves as views arrive.
template <typename T>
std::vector<Tensor<T>> model_forward_per_step(const ModelConfig& cfg,
                                              const Tensor<T>& x,
                                              ParamStore<T>& ps,
                                              const RenormSchedule<T>& sched) {
  if (cfg.variant != ModelVariant::rsbp_cnn)
    throw std::invalid_argument("per-step evaluation requires rsbp_cnn");
  check_model_input(cfg, x);
  UnetConfig ucfg = cfg.unet;
  ucfg.in_channels = cfg.hidden;
  ConvLstmState<T> state =
      ConvLstmState<T>::zeros(x.dim(0), x.dim(2), x.dim(3), cfg.hidden);
  const ConvLstmPeephole<T> peep = peephole_view(cfg, ps);
  std::vector<Tensor<T>> outs;
  outs.reserve(cfg.n_views);
  for (int t = 0; t < cfg.n_views; ++t) {
    Tensor<T> xt = detail::sequence_slice(x, t);
    state = conv_lstm_step(xt, state, ps.value("lstm.w"), ps.value("lstm.b"),
                           peep, static_cast<ConvLstmStepCache<T>*>(nullptr));
    outs.push_back(
        unet_forward(state.h, ucfg, ps, RunMode::infer, sched,
                     static_cast<UnetCache<T>*>(nullptr)));
  }
  return outs;
}

}  // namespace rsbp::nn
