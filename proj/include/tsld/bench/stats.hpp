#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "tsld/errors.hpp"

namespace tsld::stats {

inline double mean(std::span<const double> x) {
  if (x.empty()) throw InputError("mean of empty sample");
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

/// Unbiased sample variance.
inline double variance(std::span<const double> x) {
  if (x.size() < 2) throw InputError("variance needs at least two values");
  const double m = mean(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size() - 1);
}

inline double stddev(std::span<const double> x) { return std::sqrt(variance(x)); }

inline double median(std::vector<double> x) {
  if (x.empty()) throw InputError("median of empty sample");
  std::sort(x.begin(), x.end());
  const std::size_t n = x.size();
  return n % 2 ? x[n / 2] : 0.5 * (x[n / 2 - 1] + x[n / 2]);
}

inline double normal_cdf(double x, double mu = 0.0, double sigma = 1.0) {
  return 0.5 * std::erfc(-(x - mu) / (sigma * std::numbers::sqrt2));
}

/// Kolmogorov-Smirnov statistic of a sample against N(mu, sigma^2).
inline double ks_statistic_normal(std::vector<double> x, double mu = 0.0, double sigma = 1.0) {
  if (x.empty()) throw InputError("KS test on empty sample");
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = normal_cdf(x[i], mu, sigma);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

/// Asymptotic p-value of the one-sample KS statistic (Kolmogorov distribution
/// with the Stephens small-sample correction).
inline double ks_p_value(double d, std::size_t n) {
  const double sn = std::sqrt(static_cast<double>(n));
  const double lambda = (sn + 0.12 + 0.11 / sn) * d;
  if (lambda < 1e-3) return 1.0;
  double p = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
    p += term;
    if (std::abs(term) < 1e-12) break;
  }
  return std::clamp(p, 0.0, 1.0);
}

/// Lag-k autocorrelation pooled over many sequences: the sample covariance of
/// pairs k steps apart over the pooled variance, both taken around the pooled
/// mean.
inline double lag_autocorrelation(const std::vector<std::vector<double>>& sequences, std::size_t lag) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& s : sequences) {
    for (double v : s) total += v;
    count += s.size();
  }
  if (count < 2) throw InputError("autocorrelation needs at least two observations");
  const double m = total / static_cast<double>(count);
  double num = 0.0, den = 0.0;
  std::size_t pairs = 0;
  for (const auto& s : sequences) {
    for (std::size_t t = 0; t < s.size(); ++t) {
      den += (s[t] - m) * (s[t] - m);
      if (t + lag < s.size()) {
        num += (s[t] - m) * (s[t + lag] - m);
        ++pairs;
      }
    }
  }
  if (den == 0.0 || pairs == 0) return 0.0;
  return (num / static_cast<double>(pairs)) / (den / static_cast<double>(count));
}

inline double lag1_autocorrelation(const std::vector<std::vector<double>>& sequences) {
  return lag_autocorrelation(sequences, 1);
}

}  // namespace tsld::stats
