#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "tsld/diffusion/schedule.hpp"
#include "tsld/numkit/adam.hpp"
#include "tsld/numkit/ops.hpp"

namespace tsld {

/// Noise-prediction network eps_back(z^i, i): sqrt(1 - abar^i) z^i plus a
/// learned correction. The fixed term is the exact predictor for unit-Gaussian
/// latents and keeps every reverse step contracting for latents far outside
/// the training data, where the tanh layers saturate. The correction is three
/// dense layers with tanh activations over [z^i ; sinusoidal embedding of i]
/// plus a learned linear path from z^i.
class ReverseModel {
 public:
  ReverseModel() = default;

  ReverseModel(std::size_t latent, std::size_t hidden, std::size_t embed, const NoiseSchedule& schedule, Rng& rng)
      : embed_(embed),
        w1_(make_param("eps.w1", {hidden, latent + embed}, latent + embed, rng)),
        b1_(make_param("eps.b1", {hidden}, latent + embed, rng)),
        w2_(make_param("eps.w2", {hidden, hidden}, hidden, rng)),
        b2_(make_param("eps.b2", {hidden}, hidden, rng)),
        w3_(make_param("eps.w3", {latent, hidden}, hidden, rng)),
        b3_(zero_param("eps.b3", {latent})),
        skip_(make_param("eps.skip", {latent, latent}, latent, rng)) {
    noise_scale_.reserve(schedule.steps());
    for (std::size_t i = 1; i <= schedule.steps(); ++i) noise_scale_.push_back(std::sqrt(1.0 - schedule.alpha_bar(i)));
  }

  std::size_t steps() const noexcept { return noise_scale_.size(); }

  std::size_t latent_dim() const noexcept { return w3_.value.rows(); }

  Tensor embedding(std::size_t step) const {
    Tensor e({embed_});
    for (std::size_t k = 0; k < embed_; ++k) {
      const double freq =
          std::pow(10000.0, -static_cast<double>(2 * (k / 2)) / static_cast<double>(embed_));
      const double arg = static_cast<double>(step) * freq;
      e[k] = (k % 2 == 0) ? std::sin(arg) : std::cos(arg);
    }
    return e;
  }

  Var predict(Tape& tape, Var z, std::size_t step) const {
    if (z.size() != latent_dim()) throw ShapeError("reverse model latent has wrong dimension");
    if (step < 1 || step > steps()) throw ContractError("reverse model step outside its schedule");
    Var in = concat(z, tape.input(embedding(step)));
    Var h1 = tanh(affine(tape.param(w1_), in, tape.param(b1_)));
    Var h2 = tanh(affine(tape.param(w2_), h1, tape.param(b2_)));
    Var correction = affine(tape.param(w3_), h2, tape.param(b3_)) + matvec(tape.param(skip_), z);
    return scale(z, noise_scale_[step - 1]) + correction;
  }

  std::vector<double> predict(std::span<const double> z, std::size_t step) const {
    Tape tape;
    return predict(tape, tape.input(z), step).value().storage();
  }

  std::vector<Parameter*> parameters() { return {&w1_, &b1_, &w2_, &b2_, &w3_, &b3_, &skip_}; }

 private:
  std::size_t embed_ = 0;
  std::vector<double> noise_scale_;  // sqrt(1 - abar^i), i = 1..L
  Parameter w1_, b1_, w2_, b2_, w3_, b3_, skip_;
};

}  // namespace tsld
