#pragma once

#include <cmath>
#include <cstdint>

#include "rsbp/image.hpp"
#include "rsbp/projector.hpp"
#include "rsbp/rng.hpp"

namespace rsbp {

// Forward-model constants: y_j = (mu*p) * A_j(x/1000) + w_j, with
// w_j ~ N(0, diag(exp(l)/lambda0)) on the scaled line integrals l.
struct PhysicsConstants {
  double mu = 0.17;       // water X-ray density, 1/cm (~100 keV)
  double pitch = 0.186;   // pixel pitch, cm
  double lambda0 = 1600;  // empty-scan photon count
  double hu_water = 1000;

  void validate() const {
    if (!(mu > 0) || !(pitch > 0) || !(lambda0 > 0) || !(hu_water > 0))
      throw std::invalid_argument("PhysicsConstants: all constants must be > 0");
  }
};

struct NoiseSpec {
  bool enabled = false;
  std::uint64_t seed = 0;
};

inline Image scale_to_water_units(const Image& image_hu) {
  require_unit(image_hu, Unit::HU, "scale_to_water_units");
  Image out = image_hu;
  out.unit = Unit::Water1;
  for (double& v : out.data) v /= 1000.0;
  return out;
}

inline Projection noiseless_projection(const Image& image_hu,
                                       const ViewGeometry& geom,
                                       const PhysicsConstants& phys, int j) {
  require_unit(image_hu, Unit::HU, "noiseless_projection");
  phys.validate();
  Projection p = radon_single_view(scale_to_water_units(image_hu), geom, j);
  const double mp = phys.mu * phys.pitch;
  for (double& v : p.values) v *= mp;
  return p;
}

// Variance of one measurement given its scaled line integral.
inline double noise_variance(double line_integral, const PhysicsConstants& phys) {
  return std::exp(line_integral) / phys.lambda0;
}

// Noise stream is keyed by (seed, view, detector): per-view results do
// not depend on evaluation order.
inline Sinogram simulate_sinogram(const Image& image_hu, const ViewGeometry& geom,
                                  const PhysicsConstants& phys,
                                  const NoiseSpec& noise) {
  Sinogram sino;
  sino.columns.reserve(static_cast<size_t>(geom.n_views));
  const CounterRng root(noise.seed);
  for (int j = 0; j < geom.n_views; ++j) {
    Projection p = noiseless_projection(image_hu, geom, phys, j);
    if (noise.enabled) {
      const CounterRng view_rng = root.fork(static_cast<std::uint64_t>(j));
      for (int k = 0; k < geom.n_pixels; ++k) {
        const double sigma =
            std::sqrt(noise_variance(p.values[static_cast<size_t>(k)], phys));
        p.values[static_cast<size_t>(k)] +=
            sigma * view_rng.normal(static_cast<std::uint64_t>(k));
      }
    }
    sino.columns.push_back(std::move(p));
  }
  return sino;
}

}  // namespace rsbp
