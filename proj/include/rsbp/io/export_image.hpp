#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "rsbp/image.hpp"

namespace rsbp::io {

// Linear display window [lo, hi] HU -> byte, clamped outside and rounded
// half away from zero: 1000 HU under the default 0..2000 window maps to
// 127.5 and therefore to 128.
inline unsigned char window_byte(double hu, double lo, double hi) {
  const double t = (hu - lo) / (hi - lo) * 255.0;
  const double clamped = t < 0.0 ? 0.0 : (t > 255.0 ? 255.0 : t);
  return static_cast<unsigned char>(std::round(clamped));
}

// 8-bit binary PGM (P5) with the display window applied.
inline std::vector<unsigned char> encode_pgm(const Image& img_hu,
                                             double lo = 0.0,
                                             double hi = 2000.0) {
  require_unit(img_hu, Unit::HU, "encode_pgm");
  if (!(lo < hi)) throw std::invalid_argument("encode_pgm: need lo < hi");
  const std::string header =
      "P5\n" + std::to_string(img_hu.n) + " " + std::to_string(img_hu.n) +
      "\n255\n";
  std::vector<unsigned char> out(header.begin(), header.end());
  out.reserve(out.size() + img_hu.data.size());
  for (const double v : img_hu.data) out.push_back(window_byte(v, lo, hi));
  return out;
}

}  // namespace rsbp::io
