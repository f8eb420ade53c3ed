#pragma once

#include <algorithm>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rsbp/nn/layers.hpp"
#include "rsbp/nn/nn_core.hpp"
#include "rsbp/tensor.hpp"

namespace rsbp::nn {

enum class RunMode { train, infer };

// Valid-padding U-Net. Per encoder level: block_convs 3x3 valid
// convolutions (each followed by batch renormalization and ReLU), then
// 2x2 max-pool. The bottleneck carries max(1, block_convs/2)
// convolutions. Per decoder level: nearest-neighbor 2x upsample, concat
// with the center-cropped skip, then block_convs convolutions. A final
// 3x3 same-padding convolution (no normalization, no activation) maps to
// one channel. Widths start at width0 and double per level.
struct UnetConfig {
  int depth = 2;
  int width0 = 32;
  int block_convs = 2;
  int in_channels = 16;

  int bottleneck_convs() const { return std::max(1, block_convs / 2); }
  int width(int level) const { return width0 << level; }

  void validate() const {
    if (depth < 1 || width0 < 1 || block_convs < 1 || in_channels < 1)
      throw std::invalid_argument("unet: config fields must be positive");
  }
};

// Per-side margin consumed by valid padding; output side = input - 2*margin.
inline int output_margin(int depth, int block_convs = 2) {
  const int bc = std::max(1, block_convs / 2);
  return 2 * block_convs * ((1 << depth) - 1) + bc * (1 << depth);
}

namespace detail {

// Walks one spatial side through the network; returns the output side or
// a failure description.
struct SideWalk {
  int out = -1;
  std::string fail;
};

inline SideWalk walk_side(int n, const UnetConfig& cfg) {
  SideWalk r;
  int s = n;
  auto conv = [&](const char* where) {
    if (s < 3) {
      r.fail = std::string(where) + " convolution input " + std::to_string(s) +
               " < 3";
      return false;
    }
    s -= 2;
    return true;
  };
  for (int l = 0; l < cfg.depth; ++l) {
    for (int i = 0; i < cfg.block_convs; ++i)
      if (!conv("encoder")) return r;
    if (s < 2 || s % 2) {
      r.fail = "pool input " + std::to_string(s) + " not even";
      return r;
    }
    s /= 2;
  }
  for (int i = 0; i < cfg.bottleneck_convs(); ++i)
    if (!conv("bottleneck")) return r;
  for (int l = cfg.depth - 1; l >= 0; --l) {
    s *= 2;
    for (int i = 0; i < cfg.block_convs; ++i)
      if (!conv("decoder")) return r;
  }
  if (s < 1) {
    r.fail = "empty output";
    return r;
  }
  r.out = s;
  return r;
}

inline int min_input_side(const UnetConfig& cfg) {
  const int cap = 8 * output_margin(cfg.depth, cfg.block_convs) + 64;
  for (int n = 1; n <= cap; ++n)
    if (walk_side(n, cfg).out > 0) return n;
  return cap;
}

inline int checked_side(int n, const UnetConfig& cfg, const char* axis) {
  SideWalk w = walk_side(n, cfg);
  if (w.out < 0)
    throw std::invalid_argument(
        "unet: input " + std::string(axis) + "=" + std::to_string(n) +
        " unusable (" + w.fail + "); minimum valid side is " +
        std::to_string(min_input_side(cfg)) + " (margin " +
        std::to_string(output_margin(cfg.depth, cfg.block_convs)) +
        " per side; pooled sizes must stay even)");
  return w.out;
}

}  // namespace detail

// -------------------------------------------- parameter registration

namespace detail {

template <typename T>
void add_conv_brn(ParamStore<T>& ps, const std::string& prefix, int cin,
                  int cout, bool with_brn, SeqRng& rng) {
  Tensor<T>& w = ps.add(prefix + ".w", {3, 3, cin, cout});
  init_uniform_fan_in(w, 9 * cin, rng);
  ps.add(prefix + ".b", {cout});
  if (with_brn) {
    Tensor<T>& gamma = ps.add(prefix + ".gamma", {cout});
    std::fill(gamma.v.begin(), gamma.v.end(), T(1));
    ps.add(prefix + ".beta", {cout});
    ps.add(prefix + ".rmean", {cout}, /*trainable=*/false);
    Tensor<T>& rvar = ps.add(prefix + ".rvar", {cout}, /*trainable=*/false);
    std::fill(rvar.v.begin(), rvar.v.end(), T(1));
  }
}

}  // namespace detail

template <typename T>
void register_unet_params(ParamStore<T>& ps, const UnetConfig& cfg, SeqRng& rng,
                          const std::string& root = "unet") {
  cfg.validate();
  for (int l = 0; l < cfg.depth; ++l) {
    const int cin0 = l == 0 ? cfg.in_channels : cfg.width(l - 1);
    for (int i = 0; i < cfg.block_convs; ++i)
      detail::add_conv_brn(ps, root + ".enc" + std::to_string(l) + ".c" +
                                   std::to_string(i),
                           i == 0 ? cin0 : cfg.width(l), cfg.width(l), true, rng);
  }
  for (int i = 0; i < cfg.bottleneck_convs(); ++i)
    detail::add_conv_brn(ps, root + ".bot.c" + std::to_string(i),
                         i == 0 ? cfg.width(cfg.depth - 1) : cfg.width(cfg.depth),
                         cfg.width(cfg.depth), true, rng);
  for (int l = cfg.depth - 1; l >= 0; --l) {
    const int deep = l == cfg.depth - 1 ? cfg.width(cfg.depth) : cfg.width(l + 1);
    for (int i = 0; i < cfg.block_convs; ++i)
      detail::add_conv_brn(ps, root + ".dec" + std::to_string(l) + ".c" +
                                   std::to_string(i),
                           i == 0 ? deep + cfg.width(l) : cfg.width(l),
                           cfg.width(l), true, rng);
  }
  detail::add_conv_brn(ps, root + ".out", cfg.width(0), 1, false, rng);
}

// ------------------------------------------------------------- forward

template <typename T>
struct ConvBlockCache {
  Tensor<T> x_in;      // convolution input
  BrnCache<T> brn;
  Tensor<T> relu_out;  // block output (doubles as the ReLU mask)
};

template <typename T>
struct UnetCache {
  std::vector<std::vector<ConvBlockCache<T>>> enc, dec;
  std::vector<ConvBlockCache<T>> bot;
  std::vector<std::vector<std::uint8_t>> pool_argmax;
  std::vector<int> concat_deep_channels;  // per decoder level
  Tensor<T> final_in;
};

namespace detail {

template <typename T>
Tensor<T> conv_block_forward(const Tensor<T>& x, ParamStore<T>& ps,
                             const std::string& prefix, RunMode mode,
                             const RenormSchedule<T>& sched,
                             ConvBlockCache<T>* cache) {
  Tensor<T> z = conv2d_forward(x, ps.value(prefix + ".w"),
                               ps.value(prefix + ".b"), Padding::valid);
  Tensor<T> n;
  if (mode == RunMode::train) {
    if (!cache) throw std::logic_error("conv_block_forward: train needs cache");
    cache->x_in = x;
    n = batch_renorm_forward_train(z, ps.value(prefix + ".gamma"),
                                   ps.value(prefix + ".beta"),
                                   ps.value(prefix + ".rmean"),
                                   ps.value(prefix + ".rvar"), sched, cache->brn);
  } else {
    n = batch_renorm_forward_infer(z, ps.value(prefix + ".gamma"),
                                   ps.value(prefix + ".beta"),
                                   ps.value(prefix + ".rmean"),
                                   ps.value(prefix + ".rvar"), sched.eps);
  }
  check_finite(n, "unet block");
  Tensor<T> y = relu_forward(n);
  if (cache) cache->relu_out = y;
  return y;
}

template <typename T>
Tensor<T> conv_block_backward(const Tensor<T>& dy, ParamStore<T>& ps,
                              const std::string& prefix,
                              ConvBlockCache<T>& cache) {
  Tensor<T> dn = relu_backward(dy, cache.relu_out);
  Tensor<T> dz = batch_renorm_backward(dn, ps.value(prefix + ".gamma"), cache.brn,
                                       ps.grad(prefix + ".gamma"),
                                       ps.grad(prefix + ".beta"));
  return conv2d_backward(cache.x_in, ps.value(prefix + ".w"), dz, Padding::valid,
                         ps.grad(prefix + ".w"), ps.grad(prefix + ".b"));
}

}  // namespace detail

template <typename T>
Tensor<T> unet_forward(const Tensor<T>& x, const UnetConfig& cfg,
                       ParamStore<T>& ps, RunMode mode,
                       const RenormSchedule<T>& sched,
                       UnetCache<T>* cache = nullptr,
                       const std::string& root = "unet") {
  cfg.validate();
  if (x.rank() != 4) throw std::invalid_argument("unet: rank-4 input required");
  if (x.dim(3) != cfg.in_channels)
    throw std::invalid_argument("unet: expected " +
                                std::to_string(cfg.in_channels) +
                                " input channels, got " + std::to_string(x.dim(3)));
  detail::checked_side(x.dim(1), cfg, "H");
  detail::checked_side(x.dim(2), cfg, "W");
  if (mode == RunMode::train && !cache)
    throw std::logic_error("unet: train mode requires a cache");

  if (cache) {
    cache->enc.assign(cfg.depth, {});
    cache->dec.assign(cfg.depth, {});
    cache->bot.clear();
    cache->pool_argmax.assign(cfg.depth, {});
    cache->concat_deep_channels.assign(cfg.depth, 0);
  }

  std::vector<Tensor<T>> skips(cfg.depth);
  Tensor<T> cur = x;
  for (int l = 0; l < cfg.depth; ++l) {
    if (cache) cache->enc[l].resize(cfg.block_convs);
    for (int i = 0; i < cfg.block_convs; ++i)
      cur = detail::conv_block_forward(
          cur, ps, root + ".enc" + std::to_string(l) + ".c" + std::to_string(i),
          mode, sched, cache ? &cache->enc[l][i] : nullptr);
    skips[l] = cur;
    std::vector<std::uint8_t> argmax;
    cur = maxpool2_forward(cur, argmax);
    if (cache) cache->pool_argmax[l] = std::move(argmax);
  }

  if (cache) cache->bot.resize(cfg.bottleneck_convs());
  for (int i = 0; i < cfg.bottleneck_convs(); ++i)
    cur = detail::conv_block_forward(cur, ps, root + ".bot.c" + std::to_string(i),
                                     mode, sched, cache ? &cache->bot[i] : nullptr);

  for (int l = cfg.depth - 1; l >= 0; --l) {
    cur = upsample2_forward(cur);
    Tensor<T> skip = center_crop(skips[l], cur.dim(1), cur.dim(2));
    if (cache) cache->concat_deep_channels[l] = cur.dim(3);
    cur = concat_channels(cur, skip);
    if (cache) cache->dec[l].resize(cfg.block_convs);
    for (int i = 0; i < cfg.block_convs; ++i)
      cur = detail::conv_block_forward(
          cur, ps, root + ".dec" + std::to_string(l) + ".c" + std::to_string(i),
          mode, sched, cache ? &cache->dec[l][i] : nullptr);
  }

  if (cache) cache->final_in = cur;
  return conv2d_forward(cur, ps.value(root + ".out.w"), ps.value(root + ".out.b"),
                        Padding::same);
}

// Returns the gradient with respect to the U-Net input tensor.
template <typename T>
Tensor<T> unet_backward(const Tensor<T>& dy, const UnetConfig& cfg,
                        ParamStore<T>& ps, UnetCache<T>& cache,
                        const std::string& root = "unet") {
  Tensor<T> dcur =
      conv2d_backward(cache.final_in, ps.value(root + ".out.w"), dy,
                      Padding::same, ps.grad(root + ".out.w"),
                      ps.grad(root + ".out.b"));

  std::vector<Tensor<T>> dskips(cfg.depth);
  for (int l = 0; l < cfg.depth; ++l) {
    for (int i = cfg.block_convs - 1; i >= 0; --i)
      dcur = detail::conv_block_backward(
          dcur, ps, root + ".dec" + std::to_string(l) + ".c" + std::to_string(i),
          cache.dec[l][i]);
    Tensor<T> ddeep, dskip_crop;
    split_channels_backward(dcur, cache.concat_deep_channels[l], ddeep,
                            dskip_crop);
    const Tensor<T>& skip = cache.enc[l].back().relu_out;
    dskips[l] = center_crop_backward(dskip_crop, skip.dim(1), skip.dim(2));
    dcur = upsample2_backward(ddeep);
  }

  for (int i = cfg.bottleneck_convs() - 1; i >= 0; --i)
    dcur = detail::conv_block_backward(dcur, ps, root + ".bot.c" + std::to_string(i),
                                       cache.bot[i]);

  for (int l = cfg.depth - 1; l >= 0; --l) {
    dcur = maxpool2_backward(dcur, cache.pool_argmax[l]);
    for (size_t i = 0; i < dcur.size(); ++i) dcur.v[i] += dskips[l].v[i];
    for (int i = cfg.block_convs - 1; i >= 0; --i)
      dcur = detail::conv_block_backward(
          dcur, ps, root + ".enc" + std::to_string(l) + ".c" + std::to_string(i),
          cache.enc[l][i]);
  }
  return dcur;
}

}  // namespace rsbp::nn
