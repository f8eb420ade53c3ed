#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "rsbp/image.hpp"
#include "rsbp/rng.hpp"

namespace rsbp {

// Procedural baggage-like phantoms: overlapping ellipses and rotated
// rectangles with uniform densities, air background, everything inside
// the inscribed circle of the grid. Edges are area-sampled on a 4x4
// subgrid so projections of generated objects track the continuous
// geometry instead of a staircase.

struct PhantomSpec {
  int n_pixels = 64;
  int n_objects_min = 3;
  int n_objects_max = 8;
  double density_min_hu = -200.0;
  double density_max_hu = 2200.0;
  bool container = false;  // thin high-density rectangle outline
  std::uint64_t seed = 0;

  void validate() const {
    if (n_pixels < 2) throw std::invalid_argument("PhantomSpec: n_pixels < 2");
    if (n_objects_min < 0 || n_objects_min > n_objects_max)
      throw std::invalid_argument("PhantomSpec: bad object count range");
  }
};

inline constexpr double kHuMin = -1000.0;
inline constexpr double kHuMax = 3000.0;

namespace detail {

struct Shape {
  // 0 = ellipse, 1 = rectangle; both defined by center, half-axes and
  // rotation. Membership is evaluated in the shape frame.
  int kind = 0;
  double cx = 0, cy = 0, ax = 1, ay = 1, ct = 1, st = 0;
  double density = 0;

  bool contains(double x, double y) const {
    const double dx = x - cx;
    const double dy = y - cy;
    const double u = (ct * dx + st * dy) / ax;
    const double v = (-st * dx + ct * dy) / ay;
    if (kind == 0) return u * u + v * v <= 1.0;
    return std::abs(u) <= 1.0 && std::abs(v) <= 1.0;
  }
};

// Later shapes overwrite earlier ones; boundary pixels blend by the
// subpixel coverage fraction of the newest shape.
inline void paint(Image& img, const Shape& s) {
  constexpr int kSub = 4;
  const int n = img.n;
  const double reach = std::max(s.ax, s.ay);
  const int r0 = std::max(0, static_cast<int>(std::floor(s.cy - reach - 1)));
  const int r1 = std::min(n - 1, static_cast<int>(std::ceil(s.cy + reach + 1)));
  const int c0 = std::max(0, static_cast<int>(std::floor(s.cx - reach - 1)));
  const int c1 = std::min(n - 1, static_cast<int>(std::ceil(s.cx + reach + 1)));
  for (int r = r0; r <= r1; ++r) {
    for (int c = c0; c <= c1; ++c) {
      int inside = 0;
      for (int sr = 0; sr < kSub; ++sr)
        for (int sc = 0; sc < kSub; ++sc) {
          const double y = r + (sr + 0.5) / kSub - 0.5;
          const double x = c + (sc + 0.5) / kSub - 0.5;
          if (s.contains(x, y)) ++inside;
        }
      if (inside == 0) continue;
      const double alpha = static_cast<double>(inside) / (kSub * kSub);
      img.at(r, c) = alpha * s.density + (1.0 - alpha) * img.at(r, c);
    }
  }
}

}  // namespace detail

inline Image generate_phantom(const PhantomSpec& spec) {
  spec.validate();
  Image img(spec.n_pixels, Unit::HU);
  SeqRng rng(spec.seed, /*stream=*/0x7048414eULL);  // phantom stream

  const double cen = 0.5 * (spec.n_pixels - 1);
  const double rmax = 0.5 * (spec.n_pixels - 1);

  std::vector<detail::Shape> shapes;
  if (spec.container) {
    // Outline drawn as outer shell overwritten by an interior air core.
    detail::Shape outer;
    outer.kind = 1;
    outer.cx = cen;
    outer.cy = cen;
    outer.ax = 0.62 * rmax;
    outer.ay = 0.62 * rmax;
    outer.density = 2400.0;
    detail::Shape inner = outer;
    const double wall = std::max(1.5, 0.04 * rmax);
    inner.ax -= wall;
    inner.ay -= wall;
    inner.density = 0.0;
    shapes.push_back(outer);
    shapes.push_back(inner);
  }

  const int span = spec.n_objects_max - spec.n_objects_min;
  const int count =
      spec.n_objects_min +
      (span > 0 ? static_cast<int>(rng.below(static_cast<std::uint64_t>(span + 1)))
                : 0);
  for (int i = 0; i < count; ++i) {
    detail::Shape s;
    s.kind = rng.uniform01() < 0.5 ? 0 : 1;
    s.ax = rng.uniform(0.04, 0.30) * rmax;
    s.ay = rng.uniform(0.04, 0.30) * rmax;
    // Keep the whole shape inside the inscribed circle: the farthest
    // point from the center is at most |c| + hypot(ax, ay).
    const double reach = std::hypot(s.ax, s.ay);
    const double budget = std::max(0.0, rmax - reach);
    const double rho = budget * std::sqrt(rng.uniform01());
    const double phi = rng.uniform(0.0, 6.283185307179586);
    s.cx = cen + rho * std::cos(phi);
    s.cy = cen + rho * std::sin(phi);
    const double theta = rng.uniform(0.0, 3.141592653589793);
    s.ct = std::cos(theta);
    s.st = std::sin(theta);
    s.density = std::clamp(rng.uniform(spec.density_min_hu, spec.density_max_hu),
                           kHuMin, kHuMax);
    shapes.push_back(s);
  }

  for (const auto& s : shapes) detail::paint(img, s);
  return img;
}

// Deterministic disjoint train/test split: item i gets its own seed
// derived from the spec's master seed.
inline std::pair<std::vector<PhantomSpec>, std::vector<PhantomSpec>>
generate_dataset(const PhantomSpec& spec, int count, double split_ratio) {
  spec.validate();
  if (count < 2) throw std::invalid_argument("generate_dataset: count must be >= 2");
  if (!(split_ratio > 0.0 && split_ratio < 1.0))
    throw std::invalid_argument("generate_dataset: split_ratio must be in (0,1)");

  const int n_train = static_cast<int>(std::lround(split_ratio * count));
  const CounterRng rng = CounterRng(spec.seed).fork(0x5345454453ULL);  // item seeds

  std::vector<PhantomSpec> train, test;
  train.reserve(static_cast<size_t>(n_train));
  test.reserve(static_cast<size_t>(count - n_train));
  for (int i = 0; i < count; ++i) {
    PhantomSpec item = spec;
    item.seed = rng.bits(static_cast<std::uint64_t>(i));
    (i < n_train ? train : test).push_back(item);
  }
  return {std::move(train), std::move(test)};
}

}  // namespace rsbp
