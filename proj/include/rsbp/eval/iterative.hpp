#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "rsbp/image.hpp"
#include "rsbp/physics.hpp"
#include "rsbp/projector.hpp"

namespace rsbp::eval {

// Simplified regularized iterative reconstruction: gradient descent with
// Armijo backtracking on
//
//   F(x) = 1/2 ||W^{1/2}((mu p) A x - y)||^2 + reg_weight * Q(x)
//
// over the water-unit image x. W = diag(lambda0 * exp(-y)) is the inverse
// of the heteroscedastic noise variance evaluated at the measured data,
// and Q is a quadratic 8-neighbor smoothness penalty with diagonal pairs
// down-weighted by 1/sqrt(2). Descent starts from the analytic (FBP)
// reconstruction, the usual warm start for statistical solvers.
struct IterativeReport {
  std::vector<double> objective;  // F at x0 and after each accepted step
  bool line_search_ok = true;     // false: stopped early, kept last iterate
};

namespace detail {

// Q(x) = sum over unordered neighbor pairs w_ik (x_i - x_k)^2 and its
// gradient dQ/dx_i = 2 sum_k w_ik (x_i - x_k).
inline double smoothness(const Image& x, Image* grad) {
  const int n = x.n;
  const double wd = 1.0 / std::sqrt(2.0);
  double q = 0.0;
  auto pair = [&](int r0, int c0, int r1, int c1, double w) {
    const double d = x.at(r0, c0) - x.at(r1, c1);
    q += w * d * d;
    if (grad) {
      grad->at(r0, c0) += 2.0 * w * d;
      grad->at(r1, c1) -= 2.0 * w * d;
    }
  };
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      if (c + 1 < n) pair(r, c, r, c + 1, 1.0);
      if (r + 1 < n) pair(r, c, r + 1, c, 1.0);
      if (r + 1 < n && c + 1 < n) pair(r, c, r + 1, c + 1, wd);
      if (r + 1 < n && c > 0) pair(r, c, r + 1, c - 1, wd);
    }
  return q;
}

struct DataEval {
  double value = 0.0;        // 1/2 ||W^{1/2} r||^2
  Sinogram weighted_resid;   // W r, ready for the adjoint
};

inline DataEval data_term(const Image& x_water, const Sinogram& y,
                          const std::vector<std::vector<double>>& weights,
                          const ViewGeometry& g, const PhysicsConstants& phys,
                          bool want_resid) {
  const double s = phys.mu * phys.pitch;
  DataEval out;
  if (want_resid) out.weighted_resid.columns.resize(y.columns.size());
  for (int j = 0; j < g.n_views; ++j) {
    Projection p = radon_single_view(x_water, g, j);
    const auto& yj = y.columns[static_cast<size_t>(j)].values;
    const auto& wj = weights[static_cast<size_t>(j)];
    if (want_resid) {
      out.weighted_resid.columns[static_cast<size_t>(j)] =
          Projection(j, g.n_pixels);
    }
    for (int k = 0; k < g.n_pixels; ++k) {
      const double r = s * p.values[static_cast<size_t>(k)] -
                       yj[static_cast<size_t>(k)];
      out.value += 0.5 * wj[static_cast<size_t>(k)] * r * r;
      if (want_resid)
        out.weighted_resid.columns[static_cast<size_t>(j)]
            .values[static_cast<size_t>(k)] =
            wj[static_cast<size_t>(k)] * r;
    }
  }
  return out;
}

}  // namespace detail

inline Image iterative_baseline(const Sinogram& y, const ViewGeometry& g,
                                const PhysicsConstants& phys, int iters,
                                double reg_weight,
                                IterativeReport* report = nullptr) {
  if (iters < 1) throw std::invalid_argument("iterative_baseline: iters >= 1");
  if (reg_weight < 0)
    throw std::invalid_argument("iterative_baseline: reg_weight >= 0");
  if (y.n_views() != g.n_views || y.n_detectors() != g.n_pixels)
    throw std::invalid_argument("iterative_baseline: sinogram/geometry mismatch");
  phys.validate();

  // Inverse-variance weights at the measurement.
  std::vector<std::vector<double>> weights(y.columns.size());
  for (size_t j = 0; j < y.columns.size(); ++j) {
    weights[j].resize(y.columns[j].values.size());
    for (size_t k = 0; k < weights[j].size(); ++k)
      weights[j][k] = phys.lambda0 * std::exp(-y.columns[j].values[k]);
  }

  const double s = phys.mu * phys.pitch;
  // Warm start: full FBP of the measurements, rescaled to water units.
  Image x = fbp_full(y, g);
  for (double& v : x.data) v /= s;
  const int n = g.n_pixels;

  auto objective_and_grad = [&](const Image& xi, Image* grad_out) {
    detail::DataEval de =
        detail::data_term(xi, y, weights, g, phys, grad_out != nullptr);
    double f = de.value;
    if (grad_out) {
      Image g_data(n, Unit::Water1);
      for (int j = 0; j < g.n_views; ++j) {
        const Image bp = backproject_single_view(
            de.weighted_resid.columns[static_cast<size_t>(j)], g);
        for (size_t i = 0; i < g_data.data.size(); ++i)
          g_data.data[i] += s * bp.data[i];
      }
      Image g_reg(n, Unit::Water1);
      f += reg_weight * detail::smoothness(xi, &g_reg);
      for (size_t i = 0; i < grad_out->data.size(); ++i)
        grad_out->data[i] = g_data.data[i] + reg_weight * g_reg.data[i];
    } else {
      f += reg_weight * detail::smoothness(xi, nullptr);
    }
    return f;
  };

  Image grad(n, Unit::Water1);
  double f = objective_and_grad(x, &grad);
  if (report) {
    report->objective.clear();
    report->objective.push_back(f);
    report->line_search_ok = true;
  }

  const double armijo_c = 1e-4;
  double t = 1.0;
  for (int it = 0; it < iters; ++it) {
    double gn2 = 0.0;
    for (double gv : grad.data) gn2 += gv * gv;
    if (gn2 == 0.0) break;

    bool accepted = false;
    Image trial(n, Unit::Water1);
    double f_trial = 0.0;
    for (int bt = 0; bt < 60; ++bt) {
      for (size_t i = 0; i < x.data.size(); ++i)
        trial.data[i] = x.data[i] - t * grad.data[i];
      f_trial = objective_and_grad(trial, nullptr);
      if (f_trial <= f - armijo_c * t * gn2) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      if (report) report->line_search_ok = false;
      break;  // keep the last iterate
    }
    x = trial;
    f = objective_and_grad(x, &grad);
    if (report) report->objective.push_back(f);
    t *= 2.0;
  }

  Image out(n, Unit::HU);
  for (size_t i = 0; i < x.data.size(); ++i)
    out.data[i] = phys.hu_water * x.data[i];
  return out;
}

}  // namespace rsbp::eval
