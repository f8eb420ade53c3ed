#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace rsbp {

// Unit tag for attenuation images. HU is the modified Hounsfield
// convention (air = 0, water = 1000); Water1 has water = 1.
enum class Unit : std::uint8_t { HU = 0, Water1 = 1 };

inline const char* unit_name(Unit u) {
  return u == Unit::HU ? "HU" : "water1";
}

inline Unit unit_from_name(const std::string& s) {
  if (s == "HU") return Unit::HU;
  if (s == "water1") return Unit::Water1;
  throw std::invalid_argument("unknown unit tag: " + s);
}

// Square 2D attenuation image, row-major.
struct Image {
  int n = 0;
  Unit unit = Unit::HU;
  std::vector<double> data;

  Image() = default;
  Image(int n_, Unit u) : n(n_), unit(u), data(static_cast<size_t>(n_) * n_, 0.0) {
    if (n_ < 1) throw std::invalid_argument("Image: side must be >= 1");
  }

  double& at(int r, int c) { return data[static_cast<size_t>(r) * n + c]; }
  double at(int r, int c) const { return data[static_cast<size_t>(r) * n + c]; }
  size_t size() const { return data.size(); }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

inline void require_unit(const Image& img, Unit u, const char* op) {
  if (img.unit != u)
    throw std::invalid_argument(std::string(op) + ": expected " + unit_name(u) +
                                " image, got " + unit_name(img.unit));
}

// Line integrals for one view.
struct Projection {
  int view_index = 0;
  std::vector<double> values;

  Projection() = default;
  Projection(int j, int n) : view_index(j), values(static_cast<size_t>(n), 0.0) {}
};

// Ordered stack of per-view projections; columns[j].view_index == j.
struct Sinogram {
  std::vector<Projection> columns;

  int n_views() const { return static_cast<int>(columns.size()); }
  int n_detectors() const {
    return columns.empty() ? 0 : static_cast<int>(columns[0].values.size());
  }
};

// Parallel-beam acquisition geometry: N detectors (= image side) and M
// equi-spaced view angles theta_j = j*pi/M over the half turn.
struct ViewGeometry {
  int n_pixels = 0;
  int n_views = 0;
  std::vector<double> angles;

  ViewGeometry() = default;
  ViewGeometry(int n, int m) : n_pixels(n), n_views(m) {
    if (n < 2) throw std::invalid_argument("ViewGeometry: n_pixels must be >= 2");
    if (m < 1) throw std::invalid_argument("ViewGeometry: n_views must be >= 1");
    angles.resize(static_cast<size_t>(m));
    for (int j = 0; j < m; ++j)
      angles[static_cast<size_t>(j)] = j * 3.14159265358979323846 / m;
  }
};

// Center crop of width (n - 2*margin); shared by loss targets and metrics.
inline Image center_crop(const Image& img, int margin) {
  if (margin < 0 || 2 * margin >= img.n)
    throw std::invalid_argument("center_crop: margin out of range");
  const int m = img.n - 2 * margin;
  Image out(m, img.unit);
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < m; ++c) out.at(r, c) = img.at(r + margin, c + margin);
  return out;
}

}  // namespace rsbp
