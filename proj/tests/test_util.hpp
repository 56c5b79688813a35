#pragma once

// Shared helpers for the test suites: sample statistics and the
// Kolmogorov-Smirnov distance against an exact CDF.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "codi/common.hpp"

namespace testutil {

inline double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double variance(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

inline double covariance(const std::vector<double>& a,
                         const std::vector<double>& b) {
  const double ma = mean(a), mb = mean(b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - ma) * (b[i] - mb);
  return s / static_cast<double>(a.size() - 1);
}

inline double ks_distance(std::vector<double> samples,
                          const std::function<double(double)>& cdf) {
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double f = cdf(samples[i]);
    d = std::max(d, std::abs(f - static_cast<double>(i) / n));
    d = std::max(d, std::abs(f - static_cast<double>(i + 1) / n));
  }
  return d;
}

inline double normal_cdf(double x, double mu = 0.0, double sd = 1.0) {
  return 0.5 * std::erfc(-(x - mu) / (sd * std::sqrt(2.0)));
}

// Column extraction from a batch of vectors.
inline std::vector<double> column(const std::vector<codi::Vec>& batch, int d) {
  std::vector<double> out;
  out.reserve(batch.size());
  for (const auto& v : batch) out.push_back(v[d]);
  return out;
}

}  // namespace testutil
