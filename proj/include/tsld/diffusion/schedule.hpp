#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "tsld/errors.hpp"

namespace tsld {

enum class BackwardVariance {
  /// sigma^i = beta^i
  beta,
  /// sigma^i = beta^i (1 - abar^{i-1}) / (1 - abar^i) for i >= 2, beta^1 at i = 1
  posterior,
};

inline BackwardVariance backward_variance_from_string(const std::string& s) {
  if (s == "beta") return BackwardVariance::beta;
  if (s == "posterior") return BackwardVariance::posterior;
  throw ConfigError("unknown backward variance '" + s + "'");
}

inline const char* to_string(BackwardVariance v) {
  return v == BackwardVariance::beta ? "beta" : "posterior";
}

/// Variance schedule of a length-L diffusion chain. Steps are 1-based.
class NoiseSchedule {
 public:
  NoiseSchedule() = default;

  /// Linear beta schedule from beta_start to beta_end.
  static NoiseSchedule linear(std::size_t steps, double beta_start, double beta_end,
                              BackwardVariance variance = BackwardVariance::posterior) {
    if (steps < 1) throw ConfigError("schedule needs L >= 1");
    if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0)) {
      throw ConfigError("schedule needs 0 < beta_start <= beta_end < 1");
    }
    std::vector<double> betas(steps);
    for (std::size_t i = 0; i < steps; ++i) {
      const double frac = steps == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(steps - 1);
      betas[i] = beta_start + frac * (beta_end - beta_start);
    }
    return NoiseSchedule(std::move(betas), variance);
  }

  NoiseSchedule(std::vector<double> betas, BackwardVariance variance) : variance_(variance) {
    if (betas.empty()) throw ConfigError("schedule needs L >= 1");
    const std::size_t L = betas.size();
    beta_.assign(L + 1, 0.0);
    alpha_.assign(L + 1, 1.0);
    alpha_bar_.assign(L + 1, 1.0);
    sigma_.assign(L + 1, 0.0);
    for (std::size_t i = 1; i <= L; ++i) {
      const double b = betas[i - 1];
      if (!(b > 0.0 && b < 1.0)) throw ConfigError("every beta must lie in (0, 1)");
      beta_[i] = b;
      alpha_[i] = 1.0 - b;
      alpha_bar_[i] = alpha_bar_[i - 1] * alpha_[i];
    }
    for (std::size_t i = 1; i <= L; ++i) {
      if (variance == BackwardVariance::beta || i == 1) {
        sigma_[i] = beta_[i];
      } else {
        sigma_[i] = beta_[i] * (1.0 - alpha_bar_[i - 1]) / (1.0 - alpha_bar_[i]);
      }
    }
  }

  std::size_t steps() const noexcept { return beta_.size() - 1; }
  BackwardVariance variance_kind() const noexcept { return variance_; }

  double beta(std::size_t i) const { return beta_.at(checked(i, 1)); }
  double alpha(std::size_t i) const { return alpha_.at(checked(i, 1)); }

  /// Cumulative product of alpha up to i. abar^0 = 1 (no noise).
  double alpha_bar(std::size_t i) const { return alpha_bar_.at(checked(i, 0)); }

  /// Variance of the backward kernel at step i.
  double sigma(std::size_t i) const { return sigma_.at(checked(i, 1)); }

 private:
  std::size_t checked(std::size_t i, std::size_t lo) const {
    if (i < lo || i > steps()) {
      throw ContractError("diffusion step " + std::to_string(i) + " outside [" +
                          std::to_string(lo) + ", " + std::to_string(steps()) + "]");
    }
    return i;
  }

  BackwardVariance variance_ = BackwardVariance::posterior;
  std::vector<double> beta_, alpha_, alpha_bar_, sigma_;
};

}  // namespace tsld
