#pragma once

#include <cmath>
#include <concepts>
#include <span>
#include <vector>

#include "tsld/diffusion/reverse_model.hpp"
#include "tsld/diffusion/schedule.hpp"
#include "tsld/numkit/random.hpp"

namespace tsld {

/// Anything that predicts the injected noise from (z^i, i).
template <class M>
concept NoisePredictor = requires(const M& m, std::span<const double> z, std::size_t i) {
  { m.predict(z, i) } -> std::convertible_to<std::vector<double>>;
};

/// z^i = sqrt(abar^i) z^0 + sqrt(1 - abar^i) eps. i = 0 returns z^0.
inline std::vector<double> forward_sample(const NoiseSchedule& s, std::span<const double> z0,
                                          std::size_t i, std::span<const double> eps) {
  if (eps.size() != z0.size()) throw ShapeError("forward_sample: noise has wrong length");
  const double ab = s.alpha_bar(i);
  const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
  std::vector<double> out(z0.size());
  for (std::size_t k = 0; k < z0.size(); ++k) out[k] = a * z0[k] + b * eps[k];
  return out;
}

/// One application of the single-step forward kernel:
/// z^i = sqrt(1 - beta^i) z^{i-1} + sqrt(beta^i) eps.
inline std::vector<double> forward_step(const NoiseSchedule& s, std::span<const double> prev,
                                        std::size_t i, std::span<const double> eps) {
  const double a = std::sqrt(s.alpha(i)), b = std::sqrt(s.beta(i));
  std::vector<double> out(prev.size());
  for (std::size_t k = 0; k < prev.size(); ++k) out[k] = a * prev[k] + b * eps[k];
  return out;
}

/// || eps - eps_back(sqrt(abar^i) z0 + sqrt(1 - abar^i) eps, i) ||^2
template <NoisePredictor M>
double ddpm_loss(const NoiseSchedule& s, const M& model, std::span<const double> z0, std::size_t i,
                 std::span<const double> eps) {
  if (i < 1) throw ContractError("ddpm_loss needs i >= 1");
  const auto zi = forward_sample(s, z0, i, eps);
  const std::vector<double> pred = model.predict(zi, i);
  double loss = 0.0;
  for (std::size_t k = 0; k < eps.size(); ++k) loss += (eps[k] - pred[k]) * (eps[k] - pred[k]);
  return loss;
}

/// Differentiable form of ddpm_loss for training the reverse model.
inline Var ddpm_loss(Tape& tape, const NoiseSchedule& s, const ReverseModel& model,
                     std::span<const double> z0, std::size_t i, std::span<const double> eps) {
  if (i < 1) throw ContractError("ddpm_loss needs i >= 1");
  Var zi = tape.input(forward_sample(s, z0, i, eps));
  return sq_norm(tape.input(eps) - model.predict(tape, zi, i));
}

/// Mean of the backward kernel:
/// (1 / sqrt(alpha^i)) (z^i - beta^i eps_back(z^i, i) / sqrt(1 - abar^i)).
template <NoisePredictor M>
std::vector<double> reverse_mean(const NoiseSchedule& s, const M& model, std::span<const double> zi,
                                 std::size_t i) {
  const double beta = s.beta(i);
  const double inv_sqrt_alpha = 1.0 / std::sqrt(s.alpha(i));
  const double coef = beta / std::sqrt(1.0 - s.alpha_bar(i));
  const std::vector<double> pred = model.predict(zi, i);
  std::vector<double> mean(zi.size());
  for (std::size_t k = 0; k < zi.size(); ++k) mean[k] = inv_sqrt_alpha * (zi[k] - coef * pred[k]);
  return mean;
}

/// z^{i-1} = mu_back(z^i, i) + sqrt(sigma^i) eps.
template <NoisePredictor M>
std::vector<double> reverse_step(const NoiseSchedule& s, const M& model, std::span<const double> zi,
                                 std::size_t i, std::span<const double> eps) {
  if (eps.size() != zi.size()) throw ShapeError("reverse_step: noise has wrong length");
  auto mean = reverse_mean(s, model, zi, i);
  const double sd = std::sqrt(s.sigma(i));
  for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += sd * eps[k];
  return mean;
}

/// Draws z^L ~ N(0, I) and runs the reverse chain down to z^{stop}.
template <NoisePredictor M>
std::vector<double> sample_to_step(const NoiseSchedule& s, const M& model, std::size_t latent_dim,
                                   std::size_t stop, Rng& rng) {
  if (stop > s.steps()) throw ContractError("sample_to_step: stop step beyond L");
  std::vector<double> z = rng.normal_vector(latent_dim);
  for (std::size_t i = s.steps(); i > stop; --i) {
    const auto eps = rng.normal_vector(latent_dim);
    z = reverse_step(s, model, z, i, eps);
  }
  return z;
}

}  // namespace tsld
