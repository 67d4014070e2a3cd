#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "tsld/numkit/random.hpp"
#include "tsld/seqnets/time_series.hpp"

namespace tsld {

/// Exact 1-Wasserstein distance between two empirical distributions on the
/// line: the integral over u in (0, 1) of |F^{-1}(u) - G^{-1}(u)|. Sample sizes
/// may differ.
inline double wasserstein_1d(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw InputError("wasserstein_1d needs non-empty samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double u = 0.0, total = 0.0;
  while (i < a.size() && j < b.size()) {
    const double next_a = static_cast<double>(i + 1) / na;
    const double next_b = static_cast<double>(j + 1) / nb;
    const double next = std::min(next_a, next_b);
    total += (next - u) * std::abs(a[i] - b[j]);
    u = next;
    // Advance whichever quantile block ends here (both on a tie).
    if (next_a <= next) ++i;
    if (next_b <= next) ++j;
  }
  return total;
}

/// Sliced 1-Wasserstein distance between two sets of series, each flattened to
/// a T*D vector: the mean over `projections` random unit directions of the
/// exact 1-D distance between the projected samples.
inline double wasserstein_eval(std::span<const TimeSeries> real, std::span<const TimeSeries> generated,
                               std::size_t projections, std::uint64_t seed) {
  if (real.empty() || generated.empty()) throw InputError("wasserstein_eval needs non-empty datasets");
  if (projections < 1) throw ConfigError("wasserstein_eval needs at least one projection");
  const std::size_t T = real[0].steps(), D = real[0].dim();
  auto check = [&](std::span<const TimeSeries> set) {
    for (const auto& s : set) {
      if (s.steps() != T || s.dim() != D) throw InputError("wasserstein_eval: series shapes differ");
    }
  };
  check(real);
  check(generated);
  const std::size_t n = T * D;
  Rng rng(seed);
  double total = 0.0;
  for (std::size_t p = 0; p < projections; ++p) {
    std::vector<double> dir = rng.normal_vector(n);
    double norm = 0.0;
    for (double v : dir) norm += v * v;
    norm = std::sqrt(norm);
    for (double& v : dir) v /= norm;
    auto project = [&](std::span<const TimeSeries> set) {
      std::vector<double> out;
      out.reserve(set.size());
      for (const auto& s : set) {
        double acc = 0.0;
        for (std::size_t k = 0; k < n; ++k) acc += dir[k] * s.values()[k];
        out.push_back(acc);
      }
      return out;
    };
    total += wasserstein_1d(project(real), project(generated));
  }
  return total / static_cast<double>(projections);
}

}  // namespace tsld
