#pragma once

#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "rsbp/image.hpp"
#include "rsbp/physics.hpp"
#include "rsbp/projector.hpp"

namespace rsbp {

// Stacked Back Projection: one single-view FBP image per view, inverse
// physics scaling applied so slices are in HU. Summing the slices scaled
// by (mu*p/1000) reproduces full FBP of the sinogram.
struct SbpTensor {
  std::vector<Image> slices;  // HU-tagged, length M, each N x N
  ViewGeometry geom;

  int n_views() const { return static_cast<int>(slices.size()); }
  int n_pixels() const { return slices.empty() ? 0 : slices[0].n; }
};

// Z_j = (1000/(mu*p)) * fbp_single_view(y_j). With filtered=false the
// ramp is skipped and slices are plain (pi/M-weighted) backprojections,
// kept as an ablation switch.
inline SbpTensor build_sbp(const Sinogram& sino, const ViewGeometry& geom,
                           const PhysicsConstants& phys, bool filtered = true) {
  if (sino.n_views() != geom.n_views)
    throw std::invalid_argument("build_sbp: sinogram has " +
                                std::to_string(sino.n_views()) +
                                " views, geometry expects " +
                                std::to_string(geom.n_views));
  phys.validate();
  const double inv_scale = phys.hu_water / (phys.mu * phys.pitch);
  const double view_weight = 3.14159265358979323846 / geom.n_views;

  SbpTensor t;
  t.geom = geom;
  t.slices.reserve(static_cast<size_t>(geom.n_views));
  for (int j = 0; j < geom.n_views; ++j) {
    const Projection& y = sino.columns[static_cast<size_t>(j)];
    Image z = filtered ? fbp_single_view(y, geom)
                       : backproject_single_view(y, geom);
    const double s = filtered ? inv_scale : inv_scale * view_weight;
    for (double& v : z.data) v *= s;
    z.unit = Unit::HU;
    t.slices.push_back(std::move(z));
  }
  return t;
}

// Full-FBP reconstruction of a measured sinogram, in HU. The sinogram
// holds mu*p-scaled line integrals of the water-unit image, so inverting
// the Radon transform alone leaves a factor mu*p; this undoes it and the
// water normalization in one step.
inline Image fbp_reconstruction_hu(const Sinogram& sino, const ViewGeometry& geom,
                                   const PhysicsConstants& phys) {
  phys.validate();
  Image img = fbp_full(sino, geom);
  const double s = phys.hu_water / (phys.mu * phys.pitch);
  for (double& v : img.data) v *= s;
  img.unit = Unit::HU;
  return img;
}

inline Image normalize_for_network(const Image& img) {
  require_unit(img, Unit::HU, "normalize_for_network");
  Image out = img;
  out.unit = Unit::Water1;
  for (double& v : out.data) v /= 1000.0;
  return out;
}

inline Image denormalize_to_hu(const Image& img) {
  require_unit(img, Unit::Water1, "denormalize_to_hu");
  Image out = img;
  out.unit = Unit::HU;
  for (double& v : out.data) v *= 1000.0;
  return out;
}

inline SbpTensor normalize_for_network(const SbpTensor& t) {
  SbpTensor out;
  out.geom = t.geom;
  out.slices.reserve(t.slices.size());
  for (const Image& z : t.slices) out.slices.push_back(normalize_for_network(z));
  return out;
}

inline SbpTensor denormalize_to_hu(const SbpTensor& t) {
  SbpTensor out;
  out.geom = t.geom;
  out.slices.reserve(t.slices.size());
  for (const Image& z : t.slices) out.slices.push_back(denormalize_to_hu(z));
  return out;
}

// Same crop applied to every slice; view order preserved.
inline SbpTensor crop_patch(const SbpTensor& t, int top, int left, int size) {
  const int n = t.n_pixels();
  if (size < 1 || top < 0 || left < 0 || top + size > n || left + size > n)
    throw std::invalid_argument("crop_patch: window [" + std::to_string(top) +
                                "," + std::to_string(left) + ")+" +
                                std::to_string(size) + " out of bounds for side " +
                                std::to_string(n));
  SbpTensor out;
  out.geom = t.geom;
  out.slices.reserve(t.slices.size());
  for (const Image& z : t.slices) {
    Image c(size, z.unit);
    for (int r = 0; r < size; ++r)
      for (int q = 0; q < size; ++q) c.at(r, q) = z.at(top + r, left + q);
    out.slices.push_back(std::move(c));
  }
  return out;
}

// Exact linear inversion of the slice construction: re-project the slice
// at its own angle, unmix the ray overlap (A_j A_j^T), deconvolve the
// ramp, and undo the physics scaling. Recovers y_j from Z_j on noiseless
// data, which is the operational form of "the SBP keeps all sinogram
// information".
inline Projection recover_projection_from_slice(const Image& slice,
                                                const ViewGeometry& geom,
                                                const PhysicsConstants& phys,
                                                int j, bool filtered = true) {
  const int n = geom.n_pixels;
  Image raw = slice;  // strip unit tag for the raw operator
  raw.unit = Unit::Water1;
  Projection reproj = radon_single_view(raw, geom, j);

  // Gram matrix of the single-view projector, column by column.
  Eigen::MatrixXd gram(n, n);
  for (int k = 0; k < n; ++k) {
    Projection unit(j, n);
    unit.values[static_cast<size_t>(k)] = 1.0;
    const Projection col = radon_single_view(backproject_single_view(unit, geom), geom, j);
    for (int r = 0; r < n; ++r) gram(r, k) = col.values[static_cast<size_t>(r)];
  }

  Eigen::VectorXd rhs(n);
  for (int k = 0; k < n; ++k) rhs(k) = reproj.values[static_cast<size_t>(k)];
  const double inv_scale = phys.hu_water / (phys.mu * phys.pitch);
  const double view_weight = 3.14159265358979323846 / geom.n_views;
  Eigen::VectorXd filtered_y =
      gram.colPivHouseholderQr().solve(rhs) / (inv_scale * view_weight);

  Projection out(j, n);
  if (filtered) {
    Eigen::MatrixXd ramp(n, n);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) ramp(r, c) = ramp_tap(r - c);
    Eigen::VectorXd y = ramp.colPivHouseholderQr().solve(filtered_y);
    for (int k = 0; k < n; ++k) out.values[static_cast<size_t>(k)] = y(k);
  } else {
    for (int k = 0; k < n; ++k) out.values[static_cast<size_t>(k)] = filtered_y(k);
  }
  return out;
}

}  // namespace rsbp
