// Acceptance gate: ten numbered end-to-end checks covering the whole
// pipeline, each printing a single pass/fail line with the measured
// quantities and its runtime. Tolerances are pinned in the code.
//
//   acceptance            run all checks
//   acceptance --only K   run check K alone
//   acceptance --list     print the check list
//
// Exit status is 0 iff every executed check passes.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "rsbp/eval/eval.hpp"
#include "rsbp/io/container.hpp"
#include "rsbp/train/train.hpp"
#include "test_util.hpp"

using namespace rsbp;
using rsbp::testutil::chord_length;
using rsbp::testutil::dot;
using rsbp::testutil::make_disk;
using rsbp::testutil::norm2;
using rsbp::testutil::random_image;
using rsbp::testutil::rel_l2_diff;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof(buf), f, ap);
  va_end(ap);
  return buf;
}

Tensor<double> rand_t(std::vector<int> shape, std::uint64_t seed, double lo,
                      double hi) {
  Tensor<double> t(std::move(shape));
  SeqRng rng(seed, 0);
  for (auto& v : t.v) v = rng.uniform(lo, hi);
  return t;
}

// ------------------------------------------------------------------ 1

Outcome check_adjointness() {
  double worst = 0.0;
  int trials = 0;
  for (int n : {16, 32, 64}) {
    for (int m : {8, 16}) {
      ViewGeometry g(n, m);
      for (int trial = 0; trial < 20; ++trial) {
        const std::uint64_t tag = static_cast<std::uint64_t>(
            n * 100000 + m * 1000 + trial);
        const Image x = random_image(n, 10000 + tag, Unit::HU, -1.0, 1.0);
        SeqRng rng(20000 + tag, 1);
        double lhs = 0.0;
        Image acc(n, Unit::HU);
        double ax_sq = 0.0, y_sq = 0.0;
        for (int j = 0; j < m; ++j) {
          Projection y(j, n);
          for (double& v : y.values) v = rng.uniform(-1.0, 1.0);
          const Projection ax = radon_single_view(x, g, j);
          lhs += dot(ax.values, y.values);
          ax_sq += dot(ax.values, ax.values);
          y_sq += dot(y.values, y.values);
          const Image bp = backproject_single_view(y, g);
          for (size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += bp.data[i];
        }
        const double rhs = dot(x.data, acc.data);
        const double scale = std::sqrt(ax_sq) * std::sqrt(y_sq) + 1e-300;
        worst = std::max(worst, std::abs(lhs - rhs) / scale);
        ++trials;
      }
    }
  }
  return {worst < 1e-10,
          fmt("max relative adjoint defect %.2e over %d trials "
              "(N in {16,32,64}, M in {8,16}); tolerance 1e-10",
              worst, trials)};
}

// ------------------------------------------------------------------ 2

Outcome check_chord_lengths() {
  const int n = 256;
  const double r = 80.0;
  ViewGeometry g(n, 4);
  const Image disk = make_disk(n, r, 1.0);
  const double cen = 0.5 * (n - 1);
  double worst = 0.0;
  int checked = 0;
  for (int j = 0; j < g.n_views; ++j) {
    const Projection p = radon_single_view(disk, g, j);
    for (int k = 0; k < n; ++k) {
      const double s = k - cen;
      if (std::abs(s) > 0.8 * r) continue;  // interior detectors only
      const double expect = chord_length(r, s);
      worst = std::max(worst,
                       std::abs(p.values[static_cast<size_t>(k)] - expect) /
                           expect);
      ++checked;
    }
  }
  return {worst <= 0.02,
          fmt("disk chord lengths at N=256: max relative error %.4f over %d "
              "interior detectors x 4 angles; tolerance 0.02",
              worst, checked)};
}

// ------------------------------------------------------------------ 3

Outcome check_dense_view_fbp() {
  const int n = 128;
  ViewGeometry g(n, 180);
  PhysicsConstants phys;
  const Image truth = make_disk(n, 40.0, 1000.0);
  const Sinogram sino = simulate_sinogram(truth, g, phys, NoiseSpec{false, 0});
  const Image rec = fbp_reconstruction_hu(sino, g, phys);
  const double cen = 0.5 * (n - 1);
  double num = 0.0, den = 0.0;
  for (int row = 0; row < n; ++row)
    for (int col = 0; col < n; ++col) {
      const double dy = row - cen, dx = col - cen;
      if (dx * dx + dy * dy > cen * cen) continue;
      const double d = rec.at(row, col) - truth.at(row, col);
      num += d * d;
      den += truth.at(row, col) * truth.at(row, col);
    }
  const double err = std::sqrt(num / den);
  return {err < 0.05,
          fmt("dense-view FBP (N=128, M=180, noiseless disk): NRMSE %.4f on "
              "the inscribed support; tolerance 0.05",
              err)};
}

// ------------------------------------------------------------------ 4

Outcome check_sbp_completeness() {
  const int n = 32, m = 8;
  ViewGeometry g(n, m);
  PhysicsConstants phys;
  const double mix = phys.mu * phys.pitch / phys.hu_water;
  double worst_sum = 0.0, worst_reproj = 0.0;
  for (int i = 0; i < 10; ++i) {
    const Image phantom =
        generate_phantom({n, 2, 6, -200.0, 2200.0, false, 900u + static_cast<std::uint64_t>(i)});
    const Sinogram sino = simulate_sinogram(phantom, g, phys, NoiseSpec{false, 0});
    const SbpTensor t = build_sbp(sino, g, phys);

    Image acc(n, Unit::Water1);
    for (int j = 0; j < m; ++j)
      for (size_t p = 0; p < acc.data.size(); ++p)
        acc.data[p] += mix * t.slices[static_cast<size_t>(j)].data[p];
    const Image full = fbp_full(sino, g);
    worst_sum = std::max(worst_sum, rel_l2_diff(acc.data, full.data));

    for (int j = 0; j < m; ++j) {
      const Projection rec =
          recover_projection_from_slice(t.slices[static_cast<size_t>(j)], g, phys, j);
      worst_reproj = std::max(
          worst_reproj,
          rel_l2_diff(sino.columns[static_cast<size_t>(j)].values, rec.values));
    }
  }
  const bool pass = worst_sum < 1e-6 && worst_reproj < 1e-6;
  return {pass,
          fmt("10 sinograms (N=32, M=8): slice-sum vs full FBP rel err %.2e, "
              "per-view re-projection rel err %.2e; tolerance 1e-6 each",
              worst_sum, worst_reproj)};
}

// ------------------------------------------------------------------ 5

Outcome check_noise_model() {
  const int n = 32;
  ViewGeometry g(n, 1);
  PhysicsConstants phys;
  const Image disk = make_disk(n, 8.0, 1000.0);
  const Projection clean = noiseless_projection(disk, g, phys, 0);

  // The simulator must draw from the documented stream: one fork per view,
  // one counter per detector.
  for (std::uint64_t d = 0; d < 20; ++d) {
    const Sinogram s = simulate_sinogram(disk, g, phys, NoiseSpec{true, d});
    for (int k = 0; k < n; ++k) {
      const double sigma = std::sqrt(
          noise_variance(clean.values[static_cast<size_t>(k)], phys));
      const double expect =
          clean.values[static_cast<size_t>(k)] +
          sigma * CounterRng(d).fork(0).normal(static_cast<std::uint64_t>(k));
      if (s.columns[0].values[static_cast<size_t>(k)] != expect)
        return {false, fmt("simulator deviates from its documented noise "
                           "stream at seed %llu detector %d",
                           static_cast<unsigned long long>(d), k)};
    }
  }

  // Empirical per-detector variance over 1e5 independent measurements.
  const int draws = 100000;
  double worst = 0.0;
  for (int k = 0; k < n; ++k) {
    const double ell = clean.values[static_cast<size_t>(k)];
    const double expect_var = noise_variance(ell, phys);
    const double sigma = std::sqrt(expect_var);
    double sum = 0.0, sumsq = 0.0;
    for (int d = 0; d < draws; ++d) {
      const double x =
          ell + sigma * CounterRng(static_cast<std::uint64_t>(d))
                            .fork(0)
                            .normal(static_cast<std::uint64_t>(k));
      sum += x;
      sumsq += x * x;
    }
    const double mean = sum / draws;
    const double var = sumsq / draws - mean * mean;
    worst = std::max(worst, std::abs(var - expect_var) / expect_var);
  }
  return {worst <= 0.05,
          fmt("empirical variance over 1e5 draws: max relative deviation "
              "%.4f from exp(l)/lambda0 across %d detectors; tolerance 0.05",
              worst, n)};
}

// ------------------------------------------------------------------ 6

// Central finite differences against the analytic gradients; the error is
// measured relative to max(|fd|, |analytic|, 1e-3 * gmax) so that entries
// whose true gradient vanishes by cancellation are judged against the
// surrounding gradient scale instead of pure rounding noise.
double fd_worst(Tensor<double>& param, const Tensor<double>& analytic,
                const std::function<double()>& objective, double gmax,
                double h = 1e-6) {
  double worst = 0.0;
  for (size_t i = 0; i < param.size(); ++i) {
    const double v = param.v[i];
    param.v[i] = v + h;
    const double fp = objective();
    param.v[i] = v - h;
    const double fm = objective();
    param.v[i] = v;
    const double fd = (fp - fm) / (2 * h);
    const double a = analytic.v[i];
    const double denom =
        std::max({std::abs(fd), std::abs(a), 1e-3 * gmax, 1e-12});
    worst = std::max(worst, std::abs(fd - a) / denom);
  }
  return worst;
}

double tensor_dot(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a.v[i] * b.v[i];
  return s;
}

double gmax_of(const std::vector<const Tensor<double>*>& grads) {
  double g = 0.0;
  for (const auto* t : grads)
    for (const double v : t->v) g = std::max(g, std::abs(v));
  return g;
}

Outcome check_gradients() {
  double layer_worst = 0.0;

  {  // conv2d, both paddings
    for (const nn::Padding pad : {nn::Padding::valid, nn::Padding::same}) {
      Tensor<double> x = rand_t({2, 6, 6, 3}, 50, -1.0, 1.0);
      Tensor<double> w = rand_t({3, 3, 3, 4}, 51, -0.5, 0.5);
      Tensor<double> b = rand_t({4}, 52, -0.2, 0.2);
      const Tensor<double> y0 = nn::conv2d_forward(x, w, b, pad);
      const Tensor<double> wobj = rand_t(y0.shape, 53, -1.0, 1.0);
      const auto obj = [&]() {
        return tensor_dot(nn::conv2d_forward(x, w, b, pad), wobj);
      };
      Tensor<double> dw(w.shape), db(b.shape);
      const Tensor<double> dx = nn::conv2d_backward(x, w, wobj, pad, dw, db);
      const double gmax = gmax_of({&dx, &dw, &db});
      layer_worst = std::max(layer_worst, fd_worst(x, dx, obj, gmax));
      layer_worst = std::max(layer_worst, fd_worst(w, dw, obj, gmax));
      layer_worst = std::max(layer_worst, fd_worst(b, db, obj, gmax));
    }
  }

  {  // batch renorm (training mode, generic r/d held constant)
    Tensor<double> x = rand_t({3, 4, 4, 2}, 60, -2.0, 2.0);
    Tensor<double> gamma = rand_t({2}, 61, 0.5, 1.5);
    Tensor<double> beta = rand_t({2}, 62, -0.5, 0.5);
    const Tensor<double> rm = rand_t({2}, 63, -0.3, 0.3);
    const Tensor<double> rv = rand_t({2}, 64, 0.8, 1.2);
    const std::vector<double> r_fix = {1.3, 0.8}, d_fix = {0.4, -0.6};
    const nn::RenormSchedule<double> sched;
    const auto run = [&](nn::BrnCache<double>* cache) {
      Tensor<double> rm_c = rm, rv_c = rv;  // forward mutates running stats
      nn::BrnCache<double> local;
      return nn::batch_renorm_forward_train(x, gamma, beta, rm_c, rv_c, sched,
                                            cache ? *cache : local, &r_fix,
                                            &d_fix);
    };
    nn::BrnCache<double> cache;
    const Tensor<double> y0 = run(&cache);
    const Tensor<double> wobj = rand_t(y0.shape, 65, -1.0, 1.0);
    const auto obj = [&]() { return tensor_dot(run(nullptr), wobj); };
    Tensor<double> dgamma(gamma.shape), dbeta(beta.shape);
    const Tensor<double> dx =
        nn::batch_renorm_backward(wobj, gamma, cache, dgamma, dbeta);
    const double gmax = gmax_of({&dx, &dgamma, &dbeta});
    layer_worst = std::max(layer_worst, fd_worst(x, dx, obj, gmax));
    layer_worst = std::max(layer_worst, fd_worst(gamma, dgamma, obj, gmax));
    layer_worst = std::max(layer_worst, fd_worst(beta, dbeta, obj, gmax));
  }

  {  // ConvLSTM single step with peepholes
    const int hid = 2;
    Tensor<double> x = rand_t({2, 5, 5, 3}, 70, -1.0, 1.0);
    Tensor<double> w = rand_t({3, 3, 3 + hid, 4 * hid}, 71, -0.4, 0.4);
    Tensor<double> b = rand_t({4 * hid}, 72, -0.2, 0.2);
    Tensor<double> pi = rand_t({hid}, 73, -0.3, 0.3);
    Tensor<double> pf = rand_t({hid}, 74, -0.3, 0.3);
    Tensor<double> po = rand_t({hid}, 75, -0.3, 0.3);
    nn::ConvLstmState<double> prev;
    prev.h = rand_t({2, 5, 5, hid}, 76, -0.5, 0.5);
    prev.c = rand_t({2, 5, 5, hid}, 77, -0.5, 0.5);
    const nn::ConvLstmPeephole<double> peep{&pi, &pf, &po};
    const auto fwd = [&](nn::ConvLstmStepCache<double>* cache) {
      return nn::conv_lstm_step(x, prev, w, b, peep, cache);
    };
    nn::ConvLstmStepCache<double> cache;
    const nn::ConvLstmState<double> s1 = fwd(&cache);
    const Tensor<double> wh = rand_t(s1.h.shape, 78, -1.0, 1.0);
    const Tensor<double> wc = rand_t(s1.c.shape, 79, -1.0, 1.0);
    const auto obj = [&]() {
      const nn::ConvLstmState<double> s = fwd(nullptr);
      return tensor_dot(s.h, wh) + tensor_dot(s.c, wc);
    };
    Tensor<double> dw(w.shape), db(b.shape), dpi(pi.shape), dpf(pf.shape),
        dpo(po.shape);
    const nn::ConvLstmStepGrads<double> gr = nn::conv_lstm_step_backward(
        wh, wc, prev.c, cache, w, peep, dw, db, &dpi, &dpf, &dpo);
    const double gmax =
        gmax_of({&gr.dx, &gr.dh_prev, &gr.dc_prev, &dw, &db, &dpi, &dpf, &dpo});
    layer_worst = std::max(layer_worst, fd_worst(x, gr.dx, obj, gmax));
    layer_worst = std::max(layer_worst, fd_worst(prev.h, gr.dh_prev, obj, gmax));
    layer_worst = std::max(layer_worst, fd_worst(prev.c, gr.dc_prev, obj, gmax));
    layer_worst = std::max(layer_worst, fd_worst(w, dw, obj, gmax));
    layer_worst = std::max(layer_worst, fd_worst(b, db, obj, gmax));
    layer_worst = std::max(layer_worst, fd_worst(pi, dpi, obj, gmax));
    layer_worst = std::max(layer_worst, fd_worst(pf, dpf, obj, gmax));
    layer_worst = std::max(layer_worst, fd_worst(po, dpo, obj, gmax));
  }

  {  // loss transfer (inputs kept away from the |x| kink at 0)
    Tensor<double> x_true = rand_t({12}, 80, 200.0, 2500.0);
    Tensor<double> x_hat = rand_t({12}, 81, 200.0, 2500.0);
    const auto obj = [&]() {
      return rsbp::train::loss_forward(x_true, x_hat).mean;
    };
    const Tensor<double> dxh =
        rsbp::train::loss_backward(x_true, x_hat, /*mean_form=*/true);
    double gmax = 0.0;
    for (const double v : dxh.v) gmax = std::max(gmax, std::abs(v));
    layer_worst = std::max(layer_worst, fd_worst(x_hat, dxh, obj, gmax, 1e-2));
  }

  double unet_worst = 0.0;
  {  // U-Net on a minimal configuration
    const nn::UnetConfig ucfg{1, 4, 1, 2};
    nn::ParamStore<double> ps;
    SeqRng init_rng(42, 0x494e4954ULL);
    nn::register_unet_params(ps, ucfg, init_rng);
    Tensor<double> x = rand_t({2, 12, 12, 2}, 90, -1.0, 1.0);
    const nn::RenormSchedule<double> sched;  // degenerate: r=1, d=0
    const auto fwd = [&](nn::UnetCache<double>* cache) {
      return nn::unet_forward(x, ucfg, ps, cache ? nn::RunMode::train
                                                 : nn::RunMode::infer,
                              sched, cache);
    };
    nn::UnetCache<double> cache;
    const Tensor<double> y0 = fwd(&cache);
    const Tensor<double> wobj = rand_t(y0.shape, 91, -1.0, 1.0);
    // Training-mode statistics are batch statistics with r=1, d=0, so a
    // fresh inference pass cannot serve as the objective; rerun training
    // mode with a scratch cache instead (running buffers are refreshed
    // from the same batch every call, so the objective is stable).
    const auto obj = [&]() {
      nn::UnetCache<double> scratch;
      return tensor_dot(
          nn::unet_forward(x, ucfg, ps, nn::RunMode::train, sched, &scratch),
          wobj);
    };
    ps.zero_grad();
    nn::unet_backward(wobj, ucfg, ps, cache);
    std::vector<const Tensor<double>*> grads;
    for (const auto& e : ps.entries())
      if (e.trainable && e.name.rfind("unet", 0) == 0) grads.push_back(&e.grad);
    const double gmax = gmax_of(grads);
    for (auto& e : ps.entries()) {
      if (!e.trainable || e.name.rfind("unet", 0) != 0) continue;
      unet_worst = std::max(unet_worst, fd_worst(e.value, e.grad, obj, gmax));
    }
  }

  double model_worst = 0.0;
  {  // full recurrent model, every trainable parameter
    nn::ModelConfig mc;
    mc.variant = nn::ModelVariant::rsbp_cnn;
    mc.n_views = 3;
    mc.hidden = 3;
    mc.peephole = true;
    mc.unet = nn::UnetConfig{1, 4, 1, 3};
    nn::ParamStore<double> ps = nn::make_model_params<double>(mc, 7);
    Tensor<double> x = rand_t({1, 3, 12, 12}, 92, -1.0, 1.0);
    const nn::RenormSchedule<double> sched;
    nn::ModelCache<double> cache;
    const Tensor<double> y0 =
        nn::model_forward(mc, x, ps, nn::RunMode::train, sched, &cache);
    const Tensor<double> wobj = rand_t(y0.shape, 93, -1.0, 1.0);
    const auto obj = [&]() {
      nn::ModelCache<double> scratch;
      return tensor_dot(
          nn::model_forward(mc, x, ps, nn::RunMode::train, sched, &scratch),
          wobj);
    };
    ps.zero_grad();
    nn::model_backward(mc, wobj, ps, cache);
    std::vector<const Tensor<double>*> grads;
    for (const auto& e : ps.entries())
      if (e.trainable) grads.push_back(&e.grad);
    const double gmax = gmax_of(grads);
    for (auto& e : ps.entries()) {
      if (!e.trainable) continue;
      model_worst = std::max(model_worst, fd_worst(e.value, e.grad, obj, gmax));
    }
  }

  const bool pass =
      layer_worst < 1e-5 && unet_worst < 1e-5 && model_worst < 1e-4;
  return {pass,
          fmt("max FD rel err: layers %.2e (<1e-5), U-Net %.2e (<1e-5), "
              "full recurrent model %.2e (<1e-4), float64",
              layer_worst, unet_worst, model_worst)};
}

// ------------------------------------------------------------------ 7/8

std::vector<PhantomSpec> desk_specs(int n, int count, std::uint64_t root) {
  std::vector<PhantomSpec> specs;
  specs.reserve(static_cast<size_t>(count));
  const CounterRng rng(root);
  for (int i = 0; i < count; ++i)
    specs.push_back(
        {n, 3, 8, -200.0, 2200.0, false, rng.bits(static_cast<std::uint64_t>(i))});
  return specs;
}

train::TrainConfig desk_train_config(nn::ModelVariant variant, int max_steps,
                                     int n_items) {
  nn::ModelConfig mc;
  mc.variant = variant;
  mc.n_views = 16;
  mc.hidden = 16;
  mc.unet = nn::UnetConfig{2, 16, 2, 16};
  train::TrainConfig cfg;
  cfg.model = mc;
  cfg.batch_size = 4;
  cfg.lr = 2e-4;
  cfg.patch_in = 64;
  cfg.patch_out = 32;
  cfg.seed = 11;
  cfg.max_steps = max_steps;
  const int steps_per_epoch = (n_items + cfg.batch_size - 1) / cfg.batch_size;
  cfg.epochs = (max_steps + steps_per_epoch - 1) / steps_per_epoch;
  return cfg;
}

Outcome check_training_smoke() {
  const int n = 64, m = 16;
  ViewGeometry g(n, m);
  PhysicsConstants phys;
  const auto items =
      train::build_items(desk_specs(n, 200, 2024), g, phys, true, 515);
  const train::TrainConfig cfg =
      desk_train_config(nn::ModelVariant::rsbp_cnn, 500, 200);
  const auto res = train::train_loop<float>(items, cfg);
  if (res.history.size() < 100)
    return {false, fmt("expected >=100 steps, got %zu", res.history.size())};
  auto mean_over = [&](size_t begin, size_t end) {
    double s = 0.0;
    for (size_t i = begin; i < end; ++i) s += res.history[i].loss_mean;
    return s / static_cast<double>(end - begin);
  };
  const double lead = mean_over(0, 50);
  const double trail = mean_over(res.history.size() - 50, res.history.size());
  return {trail <= 0.5 * lead,
          fmt("recurrent variant, 500 steps on 200 phantoms (N=64, M=16, "
              "depth 2, hidden 16, batch 4, lr 2e-4): leading-50 mean loss "
              "%.5f, trailing-50 %.5f, ratio %.3f (required <= 0.5)",
              lead, trail, trail / lead)};
}

Outcome check_method_ordering() {
  const int n = 64, m = 16, steps = 2000;
  ViewGeometry g(n, m);
  PhysicsConstants phys;
  const auto train_items =
      train::build_items(desk_specs(n, 200, 2024), g, phys, true, 515);
  const auto eval_items =
      eval::build_eval_items(desk_specs(n, 100, 8088), g, phys, true, 616);

  eval::EvalConfig ecfg;
  ecfg.crop_margin = nn::output_margin(2, 2);

  std::map<nn::ModelVariant, double> mean_of;
  std::string per_variant;
  for (const auto variant :
       {nn::ModelVariant::fbp_cnn, nn::ModelVariant::sbp_cnn,
        nn::ModelVariant::rsbp_cnn}) {
    const train::TrainConfig cfg = desk_train_config(variant, steps, 200);
    auto res = train::train_loop<float>(train_items, cfg);
    eval::MethodParams<float> net{cfg.model, &res.params};
    const eval::Method method =
        variant == nn::ModelVariant::fbp_cnn   ? eval::Method::fbp_cnn
        : variant == nn::ModelVariant::sbp_cnn ? eval::Method::sbp_cnn
                                               : eval::Method::rsbp_cnn;
    const MethodResult r =
        eval::evaluate_method<float>(method, eval_items, g, phys, ecfg, &net);
    mean_of[variant] = r.mean;
    per_variant += fmt("%s %.4f, ", nn::variant_name(variant), r.mean);
  }
  const MethodResult raw = eval::evaluate_method<double>(
      eval::Method::fbp, eval_items, g, phys, ecfg);

  const double r_rsbp = mean_of[nn::ModelVariant::rsbp_cnn];
  const double r_fbpc = mean_of[nn::ModelVariant::fbp_cnn];
  const double r_sbpc = mean_of[nn::ModelVariant::sbp_cnn];
  const bool beats_fbp_cnn = r_rsbp < r_fbpc && (r_fbpc - r_rsbp) / r_fbpc >= 0.05;
  const bool close_to_sbp = r_rsbp <= r_sbpc + 0.01;
  const bool both_beat_raw = r_fbpc < raw.mean && r_sbpc < raw.mean;
  return {beats_fbp_cnn && close_to_sbp && both_beat_raw,
          fmt("mean NRMSE over 100 held-out phantoms at 16 views: %sraw fbp "
              "%.4f | need recurrent < fbp_cnn by >=5%% (got %.1f%%), "
              "recurrent <= sbp_cnn + 0.01, both cnn < raw",
              per_variant.c_str(), raw.mean,
              100.0 * (r_fbpc - r_rsbp) / std::max(r_fbpc, 1e-12))};
}

// ------------------------------------------------------------------ 9

Outcome check_metric_exactness() {
  Image t(1, Unit::HU), h(1, Unit::HU);
  t.data = {5.0};
  h.data = {5.0};
  const bool zero_ok = nrmse(t, h) == 0.0;
  h.data = {0.0};
  const bool one_ok = nrmse(t, h) == 1.0;
  Image tt(2, Unit::HU), hh(2, Unit::HU);
  tt.data = {3.0, 4.0, 0.0, 0.0};
  hh.data = {3.0, 0.0, 0.0, 0.0};
  const double e08 = nrmse(tt, hh);
  const bool eight_ok = e08 == 0.8;

  const std::vector<double> samples = {0.4985, 0.3812, 0.3750, 0.3351, 0.52};
  const MethodResult r = MethodResult::from_samples("x", samples);
  const double mean =
      std::accumulate(samples.begin(), samples.end(), 0.0) / samples.size();
  double var = 0.0;
  for (const double s : samples) var += (s - mean) * (s - mean);
  const double stddev = std::sqrt(var / samples.size());
  const bool agg_ok =
      std::abs(r.mean - mean) < 1e-12 && std::abs(r.stddev - stddev) < 1e-12;
  const std::string table =
      render_table({MethodResult::from_samples("fbp", {0.4, 0.6})});
  const bool table_ok = table.find("0.500 / 0.100") != std::string::npos;

  const bool pass = zero_ok && one_ok && eight_ok && agg_ok && table_ok;
  return {pass,
          fmt("unit cases 0/1/0.8 %s (0.8 case gave %.17g); mean/std "
              "recomputation within 1e-12 %s; table formatting %s",
              (zero_ok && one_ok && eight_ok) ? "exact" : "WRONG", e08,
              agg_ok ? "ok" : "WRONG", table_ok ? "ok" : "WRONG")};
}

// ------------------------------------------------------------------ 10

Outcome check_serialization() {
  // Tensor containers: bit-exact round trips for both dtypes, ranks 1-4.
  for (const auto& shape :
       {std::vector<int>{9}, {4, 5}, {2, 3, 4}, {2, 2, 3, 3}}) {
    Tensor<double> td = rand_t(shape, 500, -10.0, 10.0);
    const Tensor<double> back =
        io::decode_container<double>(io::encode_container(td, {{"k", "v"}}));
    if (back.shape != td.shape ||
        std::memcmp(back.v.data(), td.v.data(), td.size() * 8) != 0)
      return {false, "float64 container round trip is not bit-exact"};
    Tensor<float> tf(shape);
    SeqRng rng(501, 0);
    for (auto& v : tf.v) v = static_cast<float>(rng.uniform(-10.0, 10.0));
    const Tensor<float> backf =
        io::decode_container<float>(io::encode_container(tf, {}));
    if (std::memcmp(backf.v.data(), tf.v.data(), tf.size() * 4) != 0)
      return {false, "float32 container round trip is not bit-exact"};
  }

  // Model parameters: every entry restored bitwise.
  nn::ModelConfig mc;
  mc.variant = nn::ModelVariant::rsbp_cnn;
  mc.n_views = 4;
  mc.hidden = 3;
  mc.unet = nn::UnetConfig{1, 4, 1, 3};
  nn::ParamStore<double> ps = nn::make_model_params<double>(mc, 1234);
  nn::ParamStore<double> back;
  io::decode_checkpoint<double>(io::encode_checkpoint(mc, ps), back);
  for (size_t i = 0; i < ps.entries().size(); ++i) {
    const auto& a = ps.entries()[i];
    const auto& b = back.entries()[i];
    if (a.name != b.name || a.value.shape != b.value.shape ||
        std::memcmp(a.value.v.data(), b.value.v.data(), a.value.size() * 8) != 0)
      return {false, "checkpoint round trip altered entry " + a.name};
  }

  // Checkpoint-reload evaluation equals in-memory evaluation bitwise
  // (float64 verify mode).
  const int n = 16;
  ViewGeometry g(n, 4);
  PhysicsConstants phys;
  const auto items =
      eval::build_eval_items(desk_specs(n, 3, 31415), g, phys, true, 99);
  eval::EvalConfig ecfg;
  ecfg.crop_margin = 4;
  eval::MethodParams<double> live{mc, &ps};
  const MethodResult a = eval::evaluate_method<double>(
      eval::Method::rsbp_cnn, items, g, phys, ecfg, &live);
  eval::MethodParams<double> reloaded{mc, &back};
  const MethodResult b = eval::evaluate_method<double>(
      eval::Method::rsbp_cnn, items, g, phys, ecfg, &reloaded);
  if (a.nrmses.size() != b.nrmses.size() ||
      std::memcmp(a.nrmses.data(), b.nrmses.data(), a.nrmses.size() * 8) != 0)
    return {false, "reloaded checkpoint changed evaluation results"};

  return {true,
          fmt("containers and model parameters round-trip bit-exact; "
              "reloaded-checkpoint evaluation matches in-memory evaluation "
              "bitwise on %zu images",
              a.nrmses.size())};
}

// ---------------------------------------------------------------------

struct Criterion {
  int id;
  const char* title;
  Outcome (*fn)();
};

const Criterion kCriteria[] = {
    {1, "projector adjointness", check_adjointness},
    {2, "analytic disk projection", check_chord_lengths},
    {3, "dense-view FBP self-consistency", check_dense_view_fbp},
    {4, "backprojection stack completeness", check_sbp_completeness},
    {5, "measurement noise model", check_noise_model},
    {6, "gradient finite-difference suite", check_gradients},
    {7, "training smoke", check_training_smoke},
    {8, "method ordering at desk scale", check_method_ordering},
    {9, "metric exactness", check_metric_exactness},
    {10, "serialization round trips", check_serialization},
};

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--list") {
      for (const auto& c : kCriteria)
        std::printf("%2d. %s\n", c.id, c.title);
      return 0;
    }
    if (a == "--only" && i + 1 < argc) {
      only = std::atoi(argv[++i]);
    } else {
      std::fprintf(stderr, "usage: acceptance [--only K | --list]\n");
      return 2;
    }
  }

  int failures = 0, ran = 0;
  for (const auto& c : kCriteria) {
    if (only != 0 && c.id != only) continue;
    ++ran;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double dt =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    std::printf("[%s] %2d. %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", c.id,
                c.title, o.detail.c_str(), dt);
    std::fflush(stdout);
    if (!o.pass) ++failures;
  }
  if (ran == 0) {
    std::fprintf(stderr, "no such criterion: %d\n", only);
    return 2;
  }
  if (only == 0)
    std::printf("%d/%d acceptance criteria passed\n",
                static_cast<int>(std::size(kCriteria)) - failures,
                static_cast<int>(std::size(kCriteria)));
  return failures == 0 ? 0 : 1;
}
