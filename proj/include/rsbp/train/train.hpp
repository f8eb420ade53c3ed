#pragma once

#include <cstdio>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "rsbp/image.hpp"
#include "rsbp/nn/model.hpp"
#include "rsbp/phantom.hpp"
#include "rsbp/physics.hpp"
#include "rsbp/projector.hpp"
#include "rsbp/rng.hpp"
#include "rsbp/sbp.hpp"
#include "rsbp/train/adam.hpp"
#include "rsbp/train/loss.hpp"

namespace rsbp::train {

// One training/evaluation sample: ground truth plus the two derived
// network inputs. The SBP tensor serves both the recurrent and the
// stacked-channel variants; the FBP image serves the single-image one.
struct TrainItem {
  Image truth;    // HU
  SbpTensor sbp;  // HU slices, one per view
  Image fbp;      // HU
};

inline TrainItem make_train_item(const Image& truth_hu, const ViewGeometry& g,
                                 const PhysicsConstants& phys,
                                 const NoiseSpec& noise, bool filtered = true) {
  TrainItem item;
  item.truth = truth_hu;
  Sinogram sino = simulate_sinogram(truth_hu, g, phys, noise);
  item.sbp = build_sbp(sino, g, phys, filtered);
  item.fbp = fbp_reconstruction_hu(sino, g, phys);
  return item;
}

inline std::vector<TrainItem> build_items(const std::vector<PhantomSpec>& specs,
                                          const ViewGeometry& g,
                                          const PhysicsConstants& phys,
                                          bool noise_enabled,
                                          std::uint64_t noise_seed_root,
                                          bool filtered = true) {
  std::vector<TrainItem> items;
  items.reserve(specs.size());
  const CounterRng root(noise_seed_root);
  for (size_t i = 0; i < specs.size(); ++i) {
    const Image truth = generate_phantom(specs[i]);
    items.push_back(make_train_item(truth, g, phys,
                                    NoiseSpec{noise_enabled, root.bits(i)},
                                    filtered));
  }
  return items;
}

// ------------------------------------------------------- patch sampling

struct PatchLoc {
  int top = 0, left = 0;
};

// Uniform in-bounds patch offset, reproducible per (rng stream, draw).
inline PatchLoc sample_patch_loc(const CounterRng& rng, std::uint64_t draw,
                                 int image_n, int patch_in) {
  if (patch_in < 1 || patch_in > image_n)
    throw std::invalid_argument("sample_patch: patch " + std::to_string(patch_in) +
                                " does not fit image " + std::to_string(image_n));
  const CounterRng d = rng.fork(draw);
  const std::uint64_t range = static_cast<std::uint64_t>(image_n - patch_in + 1);
  return {static_cast<int>(d.below(0, range)),
          static_cast<int>(d.below(1, range))};
}

inline Image crop_image(const Image& img, int top, int left, int size) {
  if (top < 0 || left < 0 || size < 1 || top + size > img.n || left + size > img.n)
    throw std::invalid_argument("crop_image: window out of range");
  Image out(size, img.unit);
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c) out.at(r, c) = img.at(top + r, left + c);
  return out;
}

// Input patch plus the concentric ground-truth crop; the target center
// coincides with the patch center.
struct SbpPatch {
  SbpTensor input;  // HU slices, side patch_in
  Image target;     // HU, side patch_out
};

inline SbpPatch sample_patch(const SbpTensor& sbp, const Image& truth,
                             const CounterRng& rng, std::uint64_t draw,
                             int patch_in, int patch_out) {
  if ((patch_in - patch_out) % 2 || patch_out > patch_in)
    throw std::invalid_argument("sample_patch: patch_out must be patch_in - 2*margin");
  const PatchLoc loc = sample_patch_loc(rng, draw, truth.n, patch_in);
  const int off = (patch_in - patch_out) / 2;
  return {crop_patch(sbp, loc.top, loc.left, patch_in),
          crop_image(truth, loc.top + off, loc.left + off, patch_out)};
}

// --------------------------------------------------------- training loop

struct TrainConfig {
  nn::ModelConfig model;
  int epochs = 20;
  int batch_size = 4;
  int patch_in = 68;
  int patch_out = 36;
  std::uint64_t seed = 0;
  double lr = 2e-4;
  int max_steps = 0;  // 0 = bounded by epochs only
  int checkpoint_interval = 0;
  double r_max_final = 3.0;
  double d_max_final = 5.0;
  bool filtered_sbp = true;

  void validate() const {
    model.validate();
    const int margin =
        nn::output_margin(model.unet.depth, model.unet.block_convs);
    if (patch_in - patch_out != 2 * margin)
      throw std::invalid_argument(
          "train: patch_in - patch_out must equal 2*margin = " +
          std::to_string(2 * margin));
    if (epochs < 1 || batch_size < 1)
      throw std::invalid_argument("train: epochs and batch_size must be >= 1");
  }
};

struct StepRecord {
  int step = 0;   // 1-based optimization step
  int epoch = 0;  // 1-based epoch
  double loss_mean = 0.0;
  double loss_sum = 0.0;
};

inline std::string history_csv(const std::vector<StepRecord>& h) {
  std::string out = "step,epoch,loss\n";
  char buf[96];
  for (const StepRecord& r : h) {
    std::snprintf(buf, sizeof(buf), "%d,%d,%.17g\n", r.step, r.epoch, r.loss_mean);
    out += buf;
  }
  return out;
}

// Seeded epoch ordering; a permutation of [0, n).
inline std::vector<int> epoch_order(std::uint64_t seed, int epoch, int n) {
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  const CounterRng rng =
      CounterRng(seed).fork(0x53485546ULL).fork(static_cast<std::uint64_t>(epoch));
  for (int i = 0; i < n - 1; ++i) {
    const int j = i + static_cast<int>(rng.below(i, static_cast<std::uint64_t>(n - i)));
    std::swap(order[i], order[j]);
  }
  return order;
}

template <typename T>
struct TrainResult {
  nn::ParamStore<T> params;
  std::vector<StepRecord> history;
};

namespace detail {

// Batch assembly: crops the per-item inputs at the sampled locations and
// scales HU to water units for the network.
template <typename T>
Tensor<T> assemble_input(const nn::ModelConfig& mc,
                             const std::vector<const TrainItem*>& items,
                             const std::vector<PatchLoc>& locs, int p) {
  const int b_n = static_cast<int>(items.size());
  const double s = 1.0 / 1000.0;  // HU -> water units
  if (mc.variant == nn::ModelVariant::rsbp_cnn) {
    Tensor<T> x({b_n, mc.n_views, p, p});
    for (int b = 0; b < b_n; ++b)
      for (int j = 0; j < mc.n_views; ++j) {
        const Image& z = items[b]->sbp.slices[static_cast<size_t>(j)];
        for (int r = 0; r < p; ++r)
          for (int c = 0; c < p; ++c)
            x.at4(b, j, r, c) =
                static_cast<T>(s * z.at(locs[b].top + r, locs[b].left + c));
      }
    return x;
  }
  if (mc.variant == nn::ModelVariant::sbp_cnn) {
    Tensor<T> x({b_n, p, p, mc.n_views});
    for (int b = 0; b < b_n; ++b)
      for (int j = 0; j < mc.n_views; ++j) {
        const Image& z = items[b]->sbp.slices[static_cast<size_t>(j)];
        for (int r = 0; r < p; ++r)
          for (int c = 0; c < p; ++c)
            x.at4(b, r, c, j) =
                static_cast<T>(s * z.at(locs[b].top + r, locs[b].left + c));
      }
    return x;
  }
  Tensor<T> x({b_n, p, p, 1});
  for (int b = 0; b < b_n; ++b)
    for (int r = 0; r < p; ++r)
      for (int c = 0; c < p; ++c)
        x.at4(b, r, c, 0) =
            static_cast<T>(s * items[b]->fbp.at(locs[b].top + r, locs[b].left + c));
  return x;
}

template <typename T>
Tensor<T> assemble_target(const std::vector<const TrainItem*>& items,
                              const std::vector<PatchLoc>& locs, int p_in,
                              int p_out) {
  const int b_n = static_cast<int>(items.size());
  const int off = (p_in - p_out) / 2;
  Tensor<T> t({b_n, p_out, p_out, 1});
  for (int b = 0; b < b_n; ++b)
    for (int r = 0; r < p_out; ++r)
      for (int c = 0; c < p_out; ++c)
        t.at4(b, r, c, 0) = static_cast<T>(
            items[b]->truth.at(locs[b].top + off + r, locs[b].left + off + c));
  return t;
}

}  // namespace detail

// Renormalization clip schedule: ramps from the plain-normalization
// degenerate values to the final ones over the first third of training,
// but over no more than 2000 steps — long runs should leave the warm-up
// regime on the same schedule as short ones.
template <typename T>
nn::RenormSchedule<T> renorm_at(int step, int planned_total, double r_max_final,
                                double d_max_final) {
  nn::RenormSchedule<T> s;
  const int ramp = std::max(1, std::min(planned_total / 3, 2000));
  const double f = std::min(1.0, static_cast<double>(step) / ramp);
  s.r_max = static_cast<T>(1.0 + (r_max_final - 1.0) * f);
  s.d_max = static_cast<T>(d_max_final * f);
  return s;
}

template <typename T>
TrainResult<T> train_loop(
    const std::vector<TrainItem>& data, const TrainConfig& cfg,
    const std::function<void(int, const nn::ParamStore<T>&)>& checkpoint_cb = {},
    const std::function<void(const StepRecord&)>& progress_cb = {}) {
  cfg.validate();
  if (data.empty()) throw std::invalid_argument("train: empty dataset");

  TrainResult<T> result;
  result.params = nn::make_model_params<T>(cfg.model, CounterRng(cfg.seed).bits(0));
  AdamState<T> adam = AdamState<T>::init(result.params, cfg.lr);
  const CounterRng patch_rng = CounterRng(cfg.seed).fork(0x50415443ULL);

  const int n = static_cast<int>(data.size());
  const int batches_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  int planned_total = cfg.epochs * batches_per_epoch;
  if (cfg.max_steps > 0) planned_total = std::min(planned_total, cfg.max_steps);

  int step = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const std::vector<int> order = epoch_order(cfg.seed, epoch, n);
    for (int bstart = 0; bstart < n; bstart += cfg.batch_size) {
      if (cfg.max_steps > 0 && step >= cfg.max_steps) return result;
      const int bsz = std::min(cfg.batch_size, n - bstart);

      std::vector<const TrainItem*> items(bsz);
      std::vector<PatchLoc> locs(bsz);
      for (int b = 0; b < bsz; ++b) {
        items[b] = &data[static_cast<size_t>(order[bstart + b])];
        locs[b] = sample_patch_loc(
            patch_rng, static_cast<std::uint64_t>(step) * cfg.batch_size + b,
            items[b]->truth.n, cfg.patch_in);
      }

      Tensor<T> x =
          detail::assemble_input<T>(cfg.model, items, locs, cfg.patch_in);
      Tensor<T> target =
          detail::assemble_target<T>(items, locs, cfg.patch_in, cfg.patch_out);

      const nn::RenormSchedule<T> sched =
          renorm_at<T>(step, planned_total, cfg.r_max_final, cfg.d_max_final);
      nn::ModelCache<T> cache;
      result.params.zero_grad();
      Tensor<T> out =
          nn::model_forward(cfg.model, x, result.params, nn::RunMode::train,
                            sched, &cache);

      // Network output is in water units; the loss lives in HU.
      Tensor<T> out_hu(out.shape);
      for (size_t i = 0; i < out.size(); ++i)
        out_hu.v[i] = out.v[i] * T(1000);
      const LossValue lv = loss_forward(target, out_hu);
      if (!std::isfinite(lv.mean))
        throw std::runtime_error(
            "train: loss diverged at step " + std::to_string(step + 1) +
            " (epoch " + std::to_string(epoch) + "), last finite loss " +
            std::to_string(result.history.empty()
                               ? -1.0
                               : result.history.back().loss_mean));
      Tensor<T> dout = loss_backward(target, out_hu, /*mean_form=*/true);
      for (size_t i = 0; i < dout.size(); ++i) dout.v[i] *= T(1000);
      nn::model_backward(cfg.model, dout, result.params, cache);
      adam_step(result.params, adam);

      ++step;
      result.history.push_back({step, epoch, lv.mean, lv.sum});
      if (progress_cb) progress_cb(result.history.back());
      if (checkpoint_cb && cfg.checkpoint_interval > 0 &&
          step % cfg.checkpoint_interval == 0)
        checkpoint_cb(step, result.params);
    }
  }
  return result;
}

}  // namespace rsbp::train
