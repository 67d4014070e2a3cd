#pragma once

#include <span>
#include <vector>

#include "tsld/seqnets/decoder.hpp"
#include "tsld/seqnets/encoder.hpp"
#include "tsld/seqnets/heads.hpp"

namespace tsld {

struct AutoencoderShape {
  std::size_t steps = 12;
  std::size_t dim = 1;
  std::size_t latent = 16;
  std::size_t hidden = 64;
  Backbone backbone = Backbone::recurrent;
  bool skip_latent = false;
};

/// Encoder, variational head, autoregressive decoder and generation head.
struct Autoencoder {
  Encoder encoder;
  VariationalHead vi_head;
  Decoder decoder;
  GenerationHead gen_head;

  Autoencoder() = default;

  Autoencoder(const AutoencoderShape& s, Rng& rng)
      : encoder(s.steps, s.dim, s.hidden, s.latent, rng),
        vi_head(s.latent, rng),
        decoder(DecoderShape{s.backbone, s.dim, s.latent, s.hidden, s.hidden, s.skip_latent}, rng),
        gen_head(s.hidden, s.dim, rng) {}

  std::size_t latent_dim() const { return encoder.latent_dim(); }
  std::size_t steps() const { return encoder.steps(); }
  std::size_t dim() const { return encoder.dim(); }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out;
    for (auto* p : encoder.parameters()) out.push_back(p);
    for (auto* p : vi_head.parameters()) out.push_back(p);
    for (auto* p : decoder.parameters()) out.push_back(p);
    for (auto* p : gen_head.parameters()) out.push_back(p);
    return out;
  }
};

/// sum_t ln p_gen(x_t | z, x_1..x_{t-1}) with teacher forcing. `inputs` feed the
/// decoder and `targets` are scored; they differ only when inputs are masked.
inline Var gen_log_likelihood(Tape& tape, const Decoder& dec, const GenerationHead& head, Var z,
                              const TimeSeries& inputs, const TimeSeries& targets) {
  auto reps = dec.represent(tape, z, inputs);
  return head.log_likelihood(tape, reps, targets);
}

inline Var gen_log_likelihood(Tape& tape, const Decoder& dec, const GenerationHead& head, Var z,
                              const TimeSeries& x) {
  return gen_log_likelihood(tape, dec, head, z, x, x);
}

/// Draws x_t ~ p_gen(x_t | z, x_1..x_{t-1}) sequentially with the supplied
/// standard-normal noise (steps x dim, row-major). Zero noise yields the mode path.
inline TimeSeries autoregressive_sample(const Decoder& dec, const GenerationHead& head,
                                        std::span<const double> z, std::size_t steps,
                                        std::span<const double> noise) {
  if (steps < 1) throw InputError("autoregressive_sample needs T >= 1");
  const std::size_t D = head.dim();
  if (noise.size() != steps * D) throw ShapeError("sampling noise must have T*D entries");
  Tape tape;
  auto stream = dec.start(tape, tape.input(z));
  TimeSeries out(steps, D);
  Var h = stream.first();
  for (std::size_t t = 0; t < steps; ++t) {
    if (t > 0) h = stream.next(tape.input(out.row(t - 1)));
    auto dist = head.distribution(tape, h);
    const Tensor& mean = dist.mean.value();
    const Tensor& log_sd = dist.log_stddev.value();
    for (std::size_t d = 0; d < D; ++d) {
      out.at(t, d) = mean[d] + std::exp(log_sd[d]) * noise[t * D + d];
    }
  }
  return out;
}

inline TimeSeries autoregressive_sample(const Decoder& dec, const GenerationHead& head,
                                        std::span<const double> z, std::size_t steps, Rng& rng) {
  if (steps < 1) throw InputError("autoregressive_sample needs T >= 1");
  const auto noise = rng.normal_vector(steps * head.dim());
  return autoregressive_sample(dec, head, z, steps, noise);
}

}  // namespace tsld
