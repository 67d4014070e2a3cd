#pragma once

#include <vector>

#include "tsld/diffusion/ddpm.hpp"
#include "tsld/frameworks/config.hpp"
#include "tsld/seqnets/autoencoder.hpp"

namespace tsld {

struct GeneratedSample {
  std::vector<double> z;   // latent handed to the decoder
  std::size_t stop = 0;    // reverse-chain step the latent was taken from
  TimeSeries series;
};

/// New framework: i ~ U{0, N}, z = z^i from the reverse chain stopped at i,
/// then an autoregressive draw of T steps given z.
inline GeneratedSample sample_new(const Autoencoder& model, const ReverseModel& prior,
                                  const NoiseSchedule& s, const NewFrameworkConfig& cfg,
                                  std::size_t steps, Rng& rng) {
  const std::size_t stop = rng.uniform_int(0, cfg.inference_horizon);
  auto z = sample_to_step(s, prior, model.latent_dim(), stop, rng);
  auto x = autoregressive_sample(model.decoder, model.gen_head, z, steps, rng);
  return {std::move(z), stop, std::move(x)};
}

/// Latent diffusion: a full reverse-chain sample z^0 fed to the decoder.
inline GeneratedSample sample_latent_diffusion(const Autoencoder& model, const ReverseModel& prior,
                                               const NoiseSchedule& s, std::size_t steps, Rng& rng) {
  auto z = sample_to_step(s, prior, model.latent_dim(), 0, rng);
  auto x = autoregressive_sample(model.decoder, model.gen_head, z, steps, rng);
  return {std::move(z), 0, std::move(x)};
}

inline GeneratedSample sample_variant(Variant variant, const Autoencoder& model,
                                      const ReverseModel& prior, const NoiseSchedule& s,
                                      const NewFrameworkConfig& cfg, std::size_t steps, Rng& rng) {
  return variant == Variant::new_framework ? sample_new(model, prior, s, cfg, steps, rng)
                                           : sample_latent_diffusion(model, prior, s, steps, rng);
}

/// Makes q(z | X) = N(0, I) for every X.
inline void force_collapsed_posterior(VariationalHead& head) { head.force_collapsed(); }

}  // namespace tsld
