#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "tsld/numkit/random.hpp"
#include "tsld/numkit/tensor.hpp"

namespace tsld {

/// Uniform initialization in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
inline Parameter make_param(std::string name, std::vector<std::size_t> shape, std::size_t fan_in,
                            Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  for (double& v : t.values()) v = rng.uniform(-bound, bound);
  return {std::move(name), std::move(t)};
}

inline Parameter zero_param(std::string name, std::vector<std::size_t> shape) {
  return {std::move(name), Tensor(std::move(shape))};
}

struct AdamSettings {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Global gradient-norm clip; 0 disables clipping.
  double clip_norm = 0.0;
};

class Adam {
 public:
  Adam() = default;
  explicit Adam(AdamSettings settings) : settings_(settings) {}

  void step(std::span<Parameter* const> params, std::span<const Tensor> grads) {
    if (params.size() != grads.size()) throw ShapeError("Adam: parameter/gradient count mismatch");
    if (first_.empty()) {
      for (const Parameter* p : params) {
        first_.emplace_back(p->value.shape());
        second_.emplace_back(p->value.shape());
      }
    }
    if (first_.size() != params.size()) throw ShapeError("Adam: parameter list changed");
    double factor = 1.0;
    if (settings_.clip_norm > 0.0) {
      double sq = 0.0;
      for (const Tensor& g : grads) {
        for (double v : g.values()) sq += v * v;
      }
      const double norm = std::sqrt(sq);
      if (norm > settings_.clip_norm) factor = settings_.clip_norm / norm;
    }
    ++steps_;
    const double c1 = 1.0 - std::pow(settings_.beta1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(settings_.beta2, static_cast<double>(steps_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto w = params[k]->value.values();
      const auto g = grads[k].values();
      auto m = first_[k].values();
      auto v = second_[k].values();
      if (g.size() != w.size()) throw ShapeError("Adam: gradient shape mismatch for " + params[k]->name);
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = g[i] * factor;
        m[i] = settings_.beta1 * m[i] + (1.0 - settings_.beta1) * gi;
        v[i] = settings_.beta2 * v[i] + (1.0 - settings_.beta2) * gi * gi;
        w[i] -= settings_.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + settings_.epsilon);
      }
    }
  }

  const AdamSettings& settings() const noexcept { return settings_; }
  std::size_t steps() const noexcept { return steps_; }
  const std::vector<Tensor>& first_moments() const noexcept { return first_; }
  const std::vector<Tensor>& second_moments() const noexcept { return second_; }

  void restore(std::size_t steps, std::vector<Tensor> first, std::vector<Tensor> second) {
    steps_ = steps;
    first_ = std::move(first);
    second_ = std::move(second);
  }

 private:
  AdamSettings settings_;
  std::size_t steps_ = 0;
  std::vector<Tensor> first_;
  std::vector<Tensor> second_;
};

}  // namespace tsld
