#pragma once

#include <cmath>
#include <vector>

#include "rsbp/image.hpp"
#include "rsbp/rng.hpp"

namespace rsbp::testutil {

// Area-sampled disk: pixel value = coverage fraction * value, estimated
// on a sub x sub grid. Keeps projections close to the continuous chord
// lengths instead of a staircase.
inline Image make_disk(int n, double radius, double value, Unit unit = Unit::HU,
                       int sub = 8) {
  Image img(n, unit);
  const double cen = 0.5 * (n - 1);
  const double r2 = radius * radius;
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      int inside = 0;
      for (int sr = 0; sr < sub; ++sr)
        for (int sc = 0; sc < sub; ++sc) {
          const double y = r + (sr + 0.5) / sub - 0.5 - cen;
          const double x = c + (sc + 0.5) / sub - 0.5 - cen;
          if (x * x + y * y <= r2) ++inside;
        }
      img.at(r, c) = value * inside / (sub * sub);
    }
  }
  return img;
}

inline Image random_image(int n, std::uint64_t seed, Unit unit = Unit::HU,
                          double lo = 0.0, double hi = 1.0) {
  Image img(n, unit);
  SeqRng rng(seed, 0xABCDEF);
  for (double& v : img.data) v = rng.uniform(lo, hi);
  return img;
}

inline double chord_length(double radius, double offset) {
  const double d = radius * radius - offset * offset;
  return d > 0 ? 2.0 * std::sqrt(d) : 0.0;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

inline double rel_l2_diff(const std::vector<double>& a,
                          const std::vector<double>& b) {
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += a[i] * a[i];
  }
  return std::sqrt(num) / (std::sqrt(den) + 1e-300);
}

}  // namespace rsbp::testutil
