#pragma once

#include <cmath>
#include <vector>

#include "rsbp/image.hpp"

namespace rsbp {

// Parallel-beam projector family. Discretization: the sample lattice for
// view j is the pixel grid rigidly rotated by theta_j about the image
// center; values are read with bilinear interpolation and are 0 outside
// the grid. Detector k sits at signed offset (k - (N-1)/2) pixels from
// the rotation center, and rays are sampled at N unit steps, so line
// integrals come out in pixel-length units. The adjoint scatters with
// the transposed interpolation weights, which makes <Ax,p> == <x,A^T p>
// up to rounding.

namespace detail {

inline void check_view(const ViewGeometry& geom, int j) {
  if (j < 0 || j >= geom.n_views)
    throw std::invalid_argument("view index " + std::to_string(j) +
                                " out of range [0," +
                                std::to_string(geom.n_views) + ")");
}

inline void check_image(const Image& img, const ViewGeometry& geom) {
  if (img.n != geom.n_pixels)
    throw std::invalid_argument("image side " + std::to_string(img.n) +
                                " != geometry n_pixels " +
                                std::to_string(geom.n_pixels));
}

inline void check_projection(const Projection& p, const ViewGeometry& geom) {
  if (static_cast<int>(p.values.size()) != geom.n_pixels)
    throw std::invalid_argument("projection length " +
                                std::to_string(p.values.size()) +
                                " != geometry n_pixels " +
                                std::to_string(geom.n_pixels));
}

}  // namespace detail

inline Projection radon_single_view(const Image& image, const ViewGeometry& geom,
                                    int j) {
  detail::check_image(image, geom);
  detail::check_view(geom, j);
  const int n = geom.n_pixels;
  const double cen = 0.5 * (n - 1);
  const double ct = std::cos(geom.angles[static_cast<size_t>(j)]);
  const double st = std::sin(geom.angles[static_cast<size_t>(j)]);

  Projection proj(j, n);
  for (int k = 0; k < n; ++k) {
    const double u = k - cen;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
      const double v = i - cen;
      const double x = cen + u * ct - v * st;  // column
      const double y = cen + u * st + v * ct;  // row
      if (x <= -1.0 || x >= n || y <= -1.0 || y >= n) continue;
      const int x0 = static_cast<int>(std::floor(x));
      const int y0 = static_cast<int>(std::floor(y));
      const double fx = x - x0;
      const double fy = y - y0;
      if (y0 >= 0 && x0 >= 0) sum += (1 - fy) * (1 - fx) * image.at(y0, x0);
      if (y0 >= 0 && x0 + 1 < n) sum += (1 - fy) * fx * image.at(y0, x0 + 1);
      if (y0 + 1 < n && x0 >= 0) sum += fy * (1 - fx) * image.at(y0 + 1, x0);
      if (y0 + 1 < n && x0 + 1 < n) sum += fy * fx * image.at(y0 + 1, x0 + 1);
    }
    proj.values[static_cast<size_t>(k)] = sum;
  }
  return proj;
}

inline Sinogram radon_full(const Image& image, const ViewGeometry& geom) {
  Sinogram sino;
  sino.columns.reserve(static_cast<size_t>(geom.n_views));
  for (int j = 0; j < geom.n_views; ++j)
    sino.columns.push_back(radon_single_view(image, geom, j));
  return sino;
}

inline Image backproject_single_view(const Projection& proj,
                                     const ViewGeometry& geom) {
  detail::check_projection(proj, geom);
  detail::check_view(geom, proj.view_index);
  const int n = geom.n_pixels;
  const double cen = 0.5 * (n - 1);
  const double ct = std::cos(geom.angles[static_cast<size_t>(proj.view_index)]);
  const double st = std::sin(geom.angles[static_cast<size_t>(proj.view_index)]);

  Image out(n, Unit::Water1);
  for (int k = 0; k < n; ++k) {
    const double u = k - cen;
    const double val = proj.values[static_cast<size_t>(k)];
    if (val == 0.0) continue;
    for (int i = 0; i < n; ++i) {
      const double v = i - cen;
      const double x = cen + u * ct - v * st;
      const double y = cen + u * st + v * ct;
      if (x <= -1.0 || x >= n || y <= -1.0 || y >= n) continue;
      const int x0 = static_cast<int>(std::floor(x));
      const int y0 = static_cast<int>(std::floor(y));
      const double fx = x - x0;
      const double fy = y - y0;
      if (y0 >= 0 && x0 >= 0) out.at(y0, x0) += (1 - fy) * (1 - fx) * val;
      if (y0 >= 0 && x0 + 1 < n) out.at(y0, x0 + 1) += (1 - fy) * fx * val;
      if (y0 + 1 < n && x0 >= 0) out.at(y0 + 1, x0) += fy * (1 - fx) * val;
      if (y0 + 1 < n && x0 + 1 < n) out.at(y0 + 1, x0 + 1) += fy * fx * val;
    }
  }
  return out;
}

// Band-limited Ram-Lak tap at integer lag k (unit detector pitch):
// 1/4 at 0, 0 at even lags, -1/(pi^2 k^2) at odd lags.
inline double ramp_tap(int k) {
  if (k == 0) return 0.25;
  if (k % 2 == 0) return 0.0;
  const double pk = 3.14159265358979323846 * k;
  return -1.0 / (pk * pk);
}

// Direct spatial-domain convolution with the band-limited ramp kernel,
// truncated to the detector row extent.
inline Projection ramp_filter(const Projection& proj) {
  const int n = static_cast<int>(proj.values.size());
  std::vector<double> taps(static_cast<size_t>(n), 0.0);
  for (int k = 0; k < n; ++k) taps[static_cast<size_t>(k)] = ramp_tap(k);

  Projection out(proj.view_index, n);
  for (int k = 0; k < n; ++k) {
    double acc = 0.0;
    for (int m = 0; m < n; ++m)
      acc += taps[static_cast<size_t>(std::abs(k - m))] *
             proj.values[static_cast<size_t>(m)];
    out.values[static_cast<size_t>(k)] = acc;
  }
  return out;
}

// One summand of full FBP: (pi/M) * A_j^T(ramp(y_j)).
inline Image fbp_single_view(const Projection& proj, const ViewGeometry& geom) {
  Image img = backproject_single_view(ramp_filter(proj), geom);
  const double w = 3.14159265358979323846 / geom.n_views;
  for (double& v : img.data) v *= w;
  return img;
}

inline Image fbp_full(const Sinogram& sino, const ViewGeometry& geom) {
  if (sino.n_views() != geom.n_views)
    throw std::invalid_argument("sinogram has " + std::to_string(sino.n_views()) +
                                " views, geometry expects " +
                                std::to_string(geom.n_views));
  Image acc(geom.n_pixels, Unit::Water1);
  for (int j = 0; j < geom.n_views; ++j) {
    const Image part = fbp_single_view(sino.columns[static_cast<size_t>(j)], geom);
    for (size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += part.data[i];
  }
  return acc;
}

}  // namespace rsbp
