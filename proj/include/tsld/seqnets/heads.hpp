#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "tsld/numkit/adam.hpp"
#include "tsld/numkit/ops.hpp"
#include "tsld/seqnets/time_series.hpp"

namespace tsld {

inline constexpr double kLogScaleMin = -7.0;
inline constexpr double kLogScaleMax = 7.0;

struct PosteriorSample {
  std::vector<double> z;
  std::vector<double> mean;
  std::vector<double> stddev;
};

struct PosteriorVars {
  Var z;
  Var mean;
  Var log_stddev;
};

/// Reparameterized Gaussian posterior: mu = W_mu v, sigma = exp(W_sigma v),
/// z = mu + sigma * eps. No biases, so zeroing both matrices yields N(0, I).
class VariationalHead {
 public:
  VariationalHead() = default;

  VariationalHead(std::size_t latent, Rng& rng)
      : w_mean_(make_param("vi.w_mean", {latent, latent}, latent, rng)),
        w_scale_(make_param("vi.w_scale", {latent, latent}, latent, rng)) {}

  std::size_t latent_dim() const noexcept { return w_mean_.value.rows(); }

  PosteriorVars sample(Tape& tape, Var v, std::span<const double> eps) const {
    if (eps.size() != latent_dim()) throw ShapeError("vi_sample: noise has wrong length");
    Var mean = matvec(tape.param(w_mean_), v);
    Var log_sd = clamp(matvec(tape.param(w_scale_), v), kLogScaleMin, kLogScaleMax);
    Var z = mean + exp(log_sd) * tape.input(eps);
    return {z, mean, log_sd};
  }

  PosteriorSample sample(std::span<const double> v, std::span<const double> eps) const {
    Tape tape;
    auto s = sample(tape, tape.input(v), eps);
    std::vector<double> sd = exp(s.log_stddev).value().storage();
    return {s.z.value().storage(), s.mean.value().storage(), std::move(sd)};
  }

  /// Forces q(z|X) = N(0, I) for every input.
  void force_collapsed() {
    for (double& w : w_mean_.value.values()) w = 0.0;
    for (double& w : w_scale_.value.values()) w = 0.0;
  }

  std::vector<Parameter*> parameters() { return {&w_mean_, &w_scale_}; }
  std::vector<const Parameter*> parameters() const { return {&w_mean_, &w_scale_}; }

 private:
  Parameter w_mean_, w_scale_;
};

struct GaussianVars {
  Var mean;
  Var log_stddev;
};

/// Maps a decoder representation h_t to a diagonal Gaussian over x_t.
class GenerationHead {
 public:
  GenerationHead() = default;

  GenerationHead(std::size_t rep_dim, std::size_t dim, Rng& rng)
      : w_mean_(make_param("gen.w_mean", {dim, rep_dim}, rep_dim, rng)),
        b_mean_(zero_param("gen.b_mean", {dim})),
        w_scale_(make_param("gen.w_scale", {dim, rep_dim}, rep_dim, rng)),
        b_scale_(zero_param("gen.b_scale", {dim})) {}

  std::size_t dim() const noexcept { return w_mean_.value.rows(); }
  std::size_t rep_dim() const noexcept { return w_mean_.value.cols(); }

  GaussianVars distribution(Tape& tape, Var h) const {
    Var mean = affine(tape.param(w_mean_), h, tape.param(b_mean_));
    Var log_sd = clamp(affine(tape.param(w_scale_), h, tape.param(b_scale_)), kLogScaleMin,
                       kLogScaleMax);
    return {mean, log_sd};
  }

  /// ln p(x_t | z, x_1..x_{t-1}) for every step, with representations aligned
  /// to the targets (reps[t] predicts row t).
  std::vector<Var> step_log_likelihoods(Tape& tape, std::span<const Var> reps,
                                        const TimeSeries& targets) const {
    if (reps.size() != targets.steps() || targets.dim() != dim()) {
      throw ShapeError("gen_log_likelihood: representations do not align with targets");
    }
    std::vector<Var> terms;
    terms.reserve(reps.size());
    for (std::size_t t = 0; t < reps.size(); ++t) {
      auto d = distribution(tape, reps[t]);
      terms.push_back(gaussian_log_density(tape.input(targets.row(t)), d.mean, d.log_stddev));
    }
    return terms;
  }

  /// sum_t ln p(x_t | z, x_1..x_{t-1}).
  Var log_likelihood(Tape& tape, std::span<const Var> reps, const TimeSeries& targets) const {
    return add_n(step_log_likelihoods(tape, reps, targets));
  }

  /// Zeroes every projection: mean 0 and unit standard deviation.
  void zero_projection() {
    for (auto* p : parameters()) {
      for (double& w : p->value.values()) w = 0.0;
    }
  }

  std::vector<Parameter*> parameters() { return {&w_mean_, &b_mean_, &w_scale_, &b_scale_}; }
  std::vector<const Parameter*> parameters() const {
    return {&w_mean_, &b_mean_, &w_scale_, &b_scale_};
  }

 private:
  Parameter w_mean_, b_mean_, w_scale_, b_scale_;
};

}  // namespace tsld
