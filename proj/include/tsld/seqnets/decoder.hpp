#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "tsld/numkit/adam.hpp"
#include "tsld/numkit/ops.hpp"
#include "tsld/seqnets/time_series.hpp"

namespace tsld {

enum class Backbone { recurrent, attention };

inline const char* to_string(Backbone b) {
  return b == Backbone::recurrent ? "recurrent" : "attention";
}

inline Backbone backbone_from_string(const std::string& s) {
  if (s == "recurrent" || s == "lstm") return Backbone::recurrent;
  if (s == "attention" || s == "transformer") return Backbone::attention;
  throw ConfigError("unknown backbone '" + s + "'");
}

struct DecoderShape {
  Backbone backbone = Backbone::recurrent;
  std::size_t dim = 1;      // D
  std::size_t latent = 1;   // d_z
  std::size_t hidden = 64;  // LSTM state size or attention width
  std::size_t rep = 64;     // dimension of h_t
  /// Re-feed z as an extra input at every recurrent step.
  bool skip_latent = false;
};

/// Autoregressive decoder h_t = f(z, x_1, ..., x_{t-1}).
///
/// Recurrent backbone: z sets the initial LSTM state through a learned affine
/// map, x_0 is the zero vector, s_t = LSTM(s_{t-1}, x_{t-1}) and
/// h_t = W2 tanh(W1 s_t). Attention backbone: z is token 0, x_j is token j, a
/// single causal self-attention layer produces s_{t-1} and h_t = W2 tanh(W1 s_{t-1}).
class Decoder {
 public:
  /// Incremental evaluation over one sequence on one tape.
  class Stream {
   public:
    /// h_1, which depends on z only.
    Var first() {
      if (started_) throw ContractError("decoder stream already started");
      started_ = true;
      if (dec_->shape_.backbone == Backbone::recurrent) {
        return recurrent_step(tape_->input(Tensor::zeros(dec_->shape_.dim)));
      }
      return attention_step(dec_->token_latent(*tape_, z_));
    }

    /// h_t given x_{t-1}.
    Var next(Var x_prev) {
      if (!started_) throw ContractError("call first() before next()");
      if (x_prev.size() != dec_->shape_.dim) throw ShapeError("decoder input has wrong dimension");
      ++position_;
      if (dec_->shape_.backbone == Backbone::recurrent) return recurrent_step(x_prev);
      return attention_step(dec_->token_observation(*tape_, x_prev, position_));
    }

   private:
    friend class Decoder;

    Stream(const Decoder& dec, Tape& tape, Var z) : dec_(&dec), tape_(&tape), z_(z) {
      if (z.size() != dec.shape_.latent) throw ShapeError("decoder latent has wrong dimension");
      if (dec.shape_.backbone == Backbone::recurrent) {
        Var init = affine(tape.param(dec.init_w_), z, tape.param(dec.init_b_));
        hidden_ = slice(init, 0, dec.shape_.hidden);
        cell_ = slice(init, dec.shape_.hidden, dec.shape_.hidden);
      }
    }

    Var recurrent_step(Var x) {
      const std::size_t H = dec_->shape_.hidden;
      Var in = dec_->shape_.skip_latent ? concat(std::vector<Var>{hidden_, x, z_})
                                         : concat(hidden_, x);
      Var gates = affine(tape_->param(dec_->lstm_w_), in, tape_->param(dec_->lstm_b_));
      Var i = sigmoid(slice(gates, 0, H));
      Var f = sigmoid(slice(gates, H, H));
      Var g = tanh(slice(gates, 2 * H, H));
      Var o = sigmoid(slice(gates, 3 * H, H));
      cell_ = f * cell_ + i * g;
      hidden_ = o * tanh(cell_);
      return dec_->project(*tape_, hidden_);
    }

    Var attention_step(Var token) {
      const Decoder& d = *dec_;
      keys_.push_back(matvec(tape_->param(d.key_w_), token));
      vals_.push_back(matvec(tape_->param(d.value_w_), token));
      Var query = matvec(tape_->param(d.query_w_), token);
      Var scores = scale(matvec(stack_rows(keys_), query),
                         1.0 / std::sqrt(static_cast<double>(d.shape_.hidden)));
      Var attended = matvec_t(stack_rows(vals_), softmax(scores));
      return d.project(*tape_, token + attended);
    }

    const Decoder* dec_;
    Tape* tape_;
    Var z_;
    bool started_ = false;
    std::size_t position_ = 0;
    Var hidden_, cell_;
    std::vector<Var> keys_, vals_;
  };

  Decoder() = default;

  Decoder(DecoderShape shape, Rng& rng) : shape_(shape) {
    if (shape.backbone == Backbone::attention && shape.skip_latent) {
      throw ConfigError("skip connections apply to the recurrent backbone only");
    }
    const std::size_t H = shape.hidden;
    if (shape.backbone == Backbone::recurrent) {
      init_w_ = make_param("dec.init_w", {2 * H, shape.latent}, shape.latent, rng);
      init_b_ = make_param("dec.init_b", {2 * H}, shape.latent, rng);
      const std::size_t in = H + shape.dim + (shape.skip_latent ? shape.latent : 0);
      lstm_w_ = make_param("dec.lstm_w", {4 * H, in}, in, rng);
      lstm_b_ = make_param("dec.lstm_b", {4 * H}, in, rng);
    } else {
      latent_proj_ = make_param("dec.latent_proj", {H, shape.latent}, shape.latent, rng);
      input_proj_ = make_param("dec.input_proj", {H, shape.dim}, shape.dim, rng);
      input_bias_ = make_param("dec.input_bias", {H}, shape.dim, rng);
      query_w_ = make_param("dec.query_w", {H, H}, H, rng);
      key_w_ = make_param("dec.key_w", {H, H}, H, rng);
      value_w_ = make_param("dec.value_w", {H, H}, H, rng);
    }
    proj1_ = make_param("dec.proj1", {H, H}, H, rng);
    proj2_ = make_param("dec.proj2", {shape.rep, H}, H, rng);
  }

  const DecoderShape& shape() const noexcept { return shape_; }
  std::size_t rep_dim() const noexcept { return shape_.rep; }

  Stream start(Tape& tape, Var z) const { return Stream(*this, tape, z); }

  /// Teacher-forced h_1..h_steps from z and the prefix x_1..x_{steps-1}.
  std::vector<Var> represent(Tape& tape, Var z, std::span<const Var> prefix,
                             std::size_t steps) const {
    if (steps < 1) throw InputError("decoder needs at least one step");
    if (prefix.size() + 1 < steps) throw ShapeError("decoder prefix shorter than steps - 1");
    Stream s = start(tape, z);
    std::vector<Var> reps;
    reps.reserve(steps);
    reps.push_back(s.first());
    for (std::size_t t = 1; t < steps; ++t) reps.push_back(s.next(prefix[t - 1]));
    return reps;
  }

  /// Teacher-forced representations for every step of `inputs` (x_T is unused).
  std::vector<Var> represent(Tape& tape, Var z, const TimeSeries& inputs) const {
    if (inputs.dim() != shape_.dim) throw ShapeError("decoder input series has wrong dimension");
    std::vector<Var> prefix;
    prefix.reserve(inputs.steps());
    for (std::size_t t = 0; t + 1 < inputs.steps(); ++t) prefix.push_back(tape.input(inputs.row(t)));
    return represent(tape, z, prefix, inputs.steps());
  }

  std::vector<Parameter*> parameters() {
    if (shape_.backbone == Backbone::recurrent) {
      return {&init_w_, &init_b_, &lstm_w_, &lstm_b_, &proj1_, &proj2_};
    }
    return {&latent_proj_, &input_proj_, &input_bias_, &query_w_, &key_w_, &value_w_,
            &proj1_, &proj2_};
  }

  std::vector<const Parameter*> parameters() const {
    std::vector<const Parameter*> out;
    for (Parameter* p : const_cast<Decoder*>(this)->parameters()) out.push_back(p);
    return out;
  }

 private:
  Var project(Tape& tape, Var state) const {
    return matvec(tape.param(proj2_), tanh(matvec(tape.param(proj1_), state)));
  }

  Tensor position_encoding(std::size_t pos) const {
    const std::size_t H = shape_.hidden;
    Tensor pe({H});
    for (std::size_t k = 0; k < H; ++k) {
      const double freq = std::pow(10000.0, -static_cast<double>(2 * (k / 2)) / static_cast<double>(H));
      pe[k] = (k % 2 == 0) ? std::sin(static_cast<double>(pos) * freq)
                           : std::cos(static_cast<double>(pos) * freq);
    }
    return pe;
  }

  Var token_latent(Tape& tape, Var z) const {
    return matvec(tape.param(latent_proj_), z) + tape.input(position_encoding(0));
  }

  Var token_observation(Tape& tape, Var x, std::size_t pos) const {
    return affine(tape.param(input_proj_), x, tape.param(input_bias_)) +
           tape.input(position_encoding(pos));
  }

  DecoderShape shape_;
  Parameter init_w_, init_b_, lstm_w_, lstm_b_;
  Parameter latent_proj_, input_proj_, input_bias_, query_w_, key_w_, value_w_;
  Parameter proj1_, proj2_;
};

}  // namespace tsld
