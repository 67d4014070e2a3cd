#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "tsld/diffusion/schedule.hpp"
#include "tsld/frameworks/config.hpp"
#include "tsld/seqnets/autoencoder.hpp"

namespace tsld {

/// KL(N(mu, diag sigma^2) || N(0, I)) = 1/2 sum (sigma^2 + mu^2 - 1 - 2 ln sigma).
inline double kl_diag_gaussian(std::span<const double> mean, std::span<const double> stddev) {
  if (mean.size() != stddev.size()) throw ShapeError("kl_diag_gaussian: mean and stddev differ in length");
  double kl = 0.0;
  for (std::size_t k = 0; k < mean.size(); ++k) {
    if (!(stddev[k] > 0.0)) throw ContractError("kl_diag_gaussian: stddev must be positive");
    kl += stddev[k] * stddev[k] + mean[k] * mean[k] - 1.0 - 2.0 * std::log(stddev[k]);
  }
  return 0.5 * kl;
}

/// Differentiable KL term from a mean and a log standard deviation.
inline Var kl_diag_gaussian(Var mean, Var log_stddev) {
  const double n = static_cast<double>(mean.size());
  Var var_term = sum(exp(scale(log_stddev, 2.0)));
  Var mean_term = sum(square(mean));
  return scale(shift(var_term + mean_term - scale(sum(log_stddev), 2.0), -n), 0.5);
}

struct VaeLossTerms {
  Var loss;            // -log_likelihood + anneal_weight * kl
  Var log_likelihood;  // ln p_gen(X | z)
  Var kl;
};

/// Negative ELBO with a weighted KL term. `decoder_inputs` is X itself unless
/// inputs are masked; the likelihood always scores the unmasked X.
inline VaeLossTerms vae_loss(Tape& tape, const Autoencoder& model, const TimeSeries& x,
                             const TimeSeries& decoder_inputs, std::span<const double> eps,
                             double anneal_weight) {
  if (!(anneal_weight >= 0.0 && anneal_weight <= 1.0)) {
    throw ContractError("vae_loss: anneal weight must lie in [0, 1]");
  }
  Var v = model.encoder.encode(tape, x);
  auto post = model.vi_head.sample(tape, v, eps);
  Var ll = gen_log_likelihood(tape, model.decoder, model.gen_head, post.z, decoder_inputs, x);
  Var kl = kl_diag_gaussian(post.mean, post.log_stddev);
  return {scale(ll, -1.0) + scale(kl, anneal_weight), ll, kl};
}

inline VaeLossTerms vae_loss(Tape& tape, const Autoencoder& model, const TimeSeries& x,
                             std::span<const double> eps, double anneal_weight = 1.0) {
  return vae_loss(tape, model, x, x, eps, anneal_weight);
}

/// Copy of `x` with each observation x_t zeroed independently with
/// probability `ratio`.
inline TimeSeries mask_inputs(const TimeSeries& x, double ratio, Rng& rng) {
  if (!(ratio >= 0.0 && ratio < 1.0)) throw ContractError("mask_inputs: ratio must lie in [0, 1)");
  TimeSeries out = x;
  if (ratio == 0.0) return out;
  for (std::size_t t = 0; t < x.steps(); ++t) {
    if (rng.uniform() < ratio) {
      for (std::size_t d = 0; d < x.dim(); ++d) out.at(t, d) = 0.0;
    }
  }
  return out;
}

/// z^i = sqrt(abar^i) v + sqrt(1 - abar^i) eps, differentiable in v.
inline Var noised_latent(Tape& tape, const NoiseSchedule& s, Var v, std::size_t i,
                         std::span<const double> eps) {
  if (eps.size() != v.size()) throw ShapeError("forward noise has wrong length");
  const double ab = s.alpha_bar(i);
  const double b = std::sqrt(1.0 - ab);
  std::vector<double> noise(eps.begin(), eps.end());
  for (double& e : noise) e *= b;
  return scale(v, std::sqrt(ab)) + tape.input(noise);
}

/// Weight abar^(gamma j) of the inference loss, with abar^0 = 1.
inline double inference_weight(const NoiseSchedule& s, const NewFrameworkConfig& cfg, std::size_t j) {
  return s.alpha_bar(cfg.weight_mult * j);
}

/// Weight 1 - abar^ceil(k / eta) of the collapse-simulation penalty.
inline double collapse_weight(const NoiseSchedule& s, const NewFrameworkConfig& cfg, std::size_t k) {
  return 1.0 - s.alpha_bar((k + cfg.eta_div - 1) / cfg.eta_div);
}

struct FrameworkLoss {
  Var loss;
  Var log_likelihood;
  double weight = 0.0;
};

/// -abar^(gamma j) ln p_gen(X | z = z^j) with z^j drawn around the encoder
/// output v.
inline FrameworkLoss loss_vi(Tape& tape, const Autoencoder& model, const NoiseSchedule& s,
                             const NewFrameworkConfig& cfg, Var v, const TimeSeries& x,
                             std::size_t j, std::span<const double> eps) {
  if (j > cfg.inference_horizon) throw ContractError("loss_vi: j exceeds the inference horizon N");
  Var z = noised_latent(tape, s, v, j, eps);
  Var ll = gen_log_likelihood(tape, model.decoder, model.gen_head, z, x);
  const double w = inference_weight(s, cfg, j);
  return {scale(ll, -w), ll, w};
}

inline FrameworkLoss loss_vi(Tape& tape, const Autoencoder& model, const NoiseSchedule& s,
                             const NewFrameworkConfig& cfg, const TimeSeries& x, std::size_t j,
                             std::span<const double> eps) {
  return loss_vi(tape, model, s, cfg, model.encoder.encode(tape, x), x, j, eps);
}

/// sum_d ln N(x_d; 0, 1)
inline double standard_normal_log_density(std::span<const double> x) {
  constexpr double half_log_2pi = 0.91893853320467274178;
  double s = 0.0;
  for (double v : x) s += -half_log_2pi - 0.5 * v * v;
  return s;
}

/// +(1 - abar^ceil(k / eta)) ln p_gen(X | z = z^k): penalizes a decoder that
/// still explains X well from a mostly-noise latent. Under the
/// standard-normal floor each step's log-density is replaced by
/// max(ln p(x_t | ...), ln N(x_t; 0, I)).
inline FrameworkLoss loss_cs(Tape& tape, const Autoencoder& model, const NoiseSchedule& s,
                             const NewFrameworkConfig& cfg, Var v, const TimeSeries& x,
                             std::size_t k, std::span<const double> eps) {
  if (k < cfg.collapse_onset) throw ContractError("loss_cs: k is below the collapse onset M");
  if (k > s.steps()) throw ContractError("loss_cs: k exceeds L");
  Var z = noised_latent(tape, s, v, k, eps);
  auto reps = model.decoder.represent(tape, z, x);
  auto steps = model.gen_head.step_log_likelihoods(tape, reps, x);
  if (cfg.floor == CollapseFloor::standard_normal) {
    for (std::size_t t = 0; t < steps.size(); ++t) steps[t] = maximum(steps[t], standard_normal_log_density(x.row(t)));
  }
  Var ll = add_n(steps);
  const double w = collapse_weight(s, cfg, k);
  return {scale(ll, w), ll, w};
}

inline FrameworkLoss loss_cs(Tape& tape, const Autoencoder& model, const NoiseSchedule& s,
                             const NewFrameworkConfig& cfg, const TimeSeries& x, std::size_t k,
                             std::span<const double> eps) {
  return loss_cs(tape, model, s, cfg, model.encoder.encode(tape, x), x, k, eps);
}

}  // namespace tsld
