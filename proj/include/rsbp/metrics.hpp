#pragma once

#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "rsbp/image.hpp"

namespace rsbp {

// NRMSE = ||x_true - x_hat||_2 / ||x_true||_2. Both images must already
// be cropped to the region under comparison and carry the same unit.
inline double nrmse(const Image& x_true, const Image& x_hat) {
  if (x_true.n != x_hat.n)
    throw std::invalid_argument("nrmse: shape mismatch " +
                                std::to_string(x_true.n) + " vs " +
                                std::to_string(x_hat.n));
  if (x_true.unit != x_hat.unit)
    throw std::invalid_argument("nrmse: unit mismatch");
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < x_true.data.size(); ++i) {
    const double d = x_true.data[i] - x_hat.data[i];
    num += d * d;
    den += x_true.data[i] * x_true.data[i];
  }
  if (den == 0.0)
    throw std::invalid_argument("nrmse: ground truth has zero norm");
  return std::sqrt(num / den);
}

struct MethodResult {
  std::string method;
  std::vector<double> nrmses;
  double mean = 0.0;
  double stddev = 0.0;  // population convention

  static MethodResult from_samples(std::string name, std::vector<double> xs) {
    MethodResult r;
    r.method = std::move(name);
    r.nrmses = std::move(xs);
    if (!r.nrmses.empty()) {
      double s = 0.0;
      for (double x : r.nrmses) s += x;
      r.mean = s / static_cast<double>(r.nrmses.size());
      double q = 0.0;
      for (double x : r.nrmses) q += (x - r.mean) * (x - r.mean);
      r.stddev = std::sqrt(q / static_cast<double>(r.nrmses.size()));
    }
    return r;
  }
};

// Aligned text table, mean/std to 3 decimals.
inline std::string render_table(const std::vector<MethodResult>& results) {
  size_t w = 6;  // "method"
  for (const auto& r : results) w = std::max(w, r.method.size());
  char buf[64];
  std::ostringstream out;
  std::snprintf(buf, sizeof(buf), "%-*s | %-13s | %s\n", static_cast<int>(w),
                "method", "mean / std", "n");
  out << buf << std::string(w, '-') << "-+---------------+----\n";
  for (const auto& r : results) {
    std::snprintf(buf, sizeof(buf), "%-*s | %.3f / %.3f | %zu\n",
                  static_cast<int>(w), r.method.c_str(), r.mean, r.stddev,
                  r.nrmses.size());
    out << buf;
  }
  return out.str();
}

// Full-precision decimal so a parse-back reproduces the value exactly.
inline std::string exact_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

inline std::string per_image_csv(const std::vector<MethodResult>& results) {
  std::string s = "method,image_id,nrmse\n";
  for (const auto& r : results)
    for (size_t i = 0; i < r.nrmses.size(); ++i)
      s += r.method + "," + std::to_string(i) + "," + exact_double(r.nrmses[i]) + "\n";
  return s;
}

inline std::string summary_csv(const std::vector<MethodResult>& results) {
  std::string s = "method,mean,std,n\n";
  for (const auto& r : results)
    s += r.method + "," + exact_double(r.mean) + "," + exact_double(r.stddev) +
         "," + std::to_string(r.nrmses.size()) + "\n";
  return s;
}

}  // namespace rsbp
