#pragma once

#include <vector>

#include "tsld/numkit/adam.hpp"
#include "tsld/numkit/ops.hpp"
#include "tsld/seqnets/time_series.hpp"

namespace tsld {

/// Summarizes a whole window X (T x D) into a latent vector v with a one
/// hidden layer tanh network over the flattened window.
class Encoder {
 public:
  Encoder() = default;

  Encoder(std::size_t steps, std::size_t dim, std::size_t hidden, std::size_t latent, Rng& rng)
      : steps_(steps),
        dim_(dim),
        w1_(make_param("enc.w1", {hidden, steps * dim}, steps * dim, rng)),
        b1_(make_param("enc.b1", {hidden}, steps * dim, rng)),
        w2_(make_param("enc.w2", {latent, hidden}, hidden, rng)),
        b2_(zero_param("enc.b2", {latent})) {}

  std::size_t steps() const noexcept { return steps_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t latent_dim() const noexcept { return w2_.value.rows(); }
  std::size_t hidden_dim() const noexcept { return w1_.value.rows(); }

  Var encode(Tape& tape, const TimeSeries& x) const {
    check(x);
    Var in = tape.input(x.values());
    Var hidden = tanh(affine(tape.param(w1_), in, tape.param(b1_)));
    return affine(tape.param(w2_), hidden, tape.param(b2_));
  }

  std::vector<double> encode(const TimeSeries& x) const {
    Tape tape;
    return encode(tape, x).value().storage();
  }

  /// Zeroes the output projection (v is then 0 for every input).
  void zero_output_projection() {
    for (double& w : w2_.value.values()) w = 0.0;
    for (double& b : b2_.value.values()) b = 0.0;
  }

  std::vector<Parameter*> parameters() { return {&w1_, &b1_, &w2_, &b2_}; }
  std::vector<const Parameter*> parameters() const { return {&w1_, &b1_, &w2_, &b2_}; }

 private:
  void check(const TimeSeries& x) const {
    if (x.steps() != steps_ || x.dim() != dim_) {
      throw ShapeError("encoder expects " + std::to_string(steps_) + "x" + std::to_string(dim_) +
                       " windows, got " + std::to_string(x.steps()) + "x" +
                       std::to_string(x.dim()));
    }
    x.validate();
  }

  std::size_t steps_ = 0;
  std::size_t dim_ = 0;
  Parameter w1_, b1_, w2_, b2_;
};

}  // namespace tsld
