#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "tsld/diffusion/ddpm.hpp"
#include "tsld/frameworks/losses.hpp"
#include "tsld/numkit/grad.hpp"

namespace tsld {

struct TrainSettings {
  std::size_t batch_size = 8;
  AdamSettings adam;
};

/// Loss components of one update, averaged over the batch. For the new
/// framework `primary` is the inference loss and `secondary` the
/// collapse-simulation loss; for the baselines they are the negative
/// log-likelihood and the unweighted KL.
struct StepStats {
  double loss = 0.0;
  double primary = 0.0;
  double secondary = 0.0;
};

namespace detail {

inline void accumulate(std::vector<Tensor>& acc, const std::vector<Tensor>& g) {
  if (acc.empty()) {
    acc = g;
    return;
  }
  for (std::size_t k = 0; k < acc.size(); ++k) {
    auto a = acc[k].values();
    const auto b = g[k].values();
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  }
}

inline void average(std::vector<Tensor>& acc, std::size_t n) {
  const double inv = 1.0 / static_cast<double>(n);
  for (auto& t : acc) {
    for (double& v : t.values()) v *= inv;
  }
}

}  // namespace detail

/// Resumable autoencoder trainer for every variant. Holds the optimizer and
/// random state; the model and data are borrowed and must outlive it.
class AutoencoderTrainer {
 public:
  AutoencoderTrainer(Autoencoder& model, std::span<const TimeSeries> data, NoiseSchedule schedule,
                     Variant variant, NewFrameworkConfig framework, BaselineConfig baseline,
                     TrainSettings settings, std::uint64_t seed)
      : model_(&model),
        data_(data),
        schedule_(std::move(schedule)),
        variant_(variant),
        framework_(framework),
        baseline_(baseline),
        settings_(settings),
        adam_(settings.adam),
        rng_(seed),
        params_(model.parameters()) {
    if (data.empty()) throw ConfigError("training set is empty");
    if (settings.batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (variant == Variant::new_framework) {
      framework_.validate();
      if (framework_.schedule_length != schedule_.steps()) {
        throw ConfigError("new framework L does not match the noise schedule length");
      }
    } else {
      baseline_.variant = variant;
      baseline_.validate();
    }
    const bool wants_skip = variant == Variant::skip_conn;
    if (model.decoder.shape().skip_latent != wants_skip) {
      throw ConfigError(wants_skip ? "skip_conn variant needs a skip-latent decoder"
                                   : "skip-latent decoder is reserved for the skip_conn variant");
    }
  }

  /// Fractional passes over the training set completed so far.
  double epochs() const {
    return static_cast<double>(step_ * settings_.batch_size) / static_cast<double>(data_.size());
  }

  /// KL weight used by the next update.
  double anneal_weight() const {
    if (variant_ != Variant::kl_anneal) return 1.0;
    return kl_anneal_weight(epochs(), baseline_.anneal_epochs);
  }

  StepStats step() {
    std::vector<Tensor> grads;
    StepStats stats;
    try {
      for (std::size_t b = 0; b < settings_.batch_size; ++b) {
        const TimeSeries& x = data_[rng_.uniform_int(0, data_.size() - 1)];
        Tape tape;
        Var loss;
        if (variant_ == Variant::new_framework) {
          Var v = model_->encoder.encode(tape, x);
          const std::size_t j = rng_.uniform_int(0, framework_.inference_horizon);
          const auto eps_j = rng_.normal_vector(v.size());
          const std::size_t k = rng_.uniform_int(framework_.collapse_onset, schedule_.steps());
          const auto eps_k = rng_.normal_vector(v.size());
          auto vi = loss_vi(tape, *model_, schedule_, framework_, v, x, j, eps_j);
          auto cs = loss_cs(tape, *model_, schedule_, framework_, v, x, k, eps_k);
          loss = vi.loss + cs.loss;
          stats.primary += vi.loss.item();
          stats.secondary += cs.loss.item();
        } else {
          const auto eps = rng_.normal_vector(model_->latent_dim());
          const TimeSeries inputs =
              variant_ == Variant::var_mask ? mask_inputs(x, baseline_.mask_ratio, rng_) : x;
          auto terms = vae_loss(tape, *model_, x, inputs, eps, anneal_weight());
          loss = terms.loss;
          stats.primary -= terms.log_likelihood.item();
          stats.secondary += terms.kl.item();
        }
        stats.loss += loss.item();
        tape.backward(loss);
        detail::accumulate(grads, collect_grads(tape, params_));
      }
    } catch (const NumericError& e) {
      throw TrainingError(std::string("autoencoder training diverged: ") + e.what(), step_, last_loss_);
    }
    const double n = static_cast<double>(settings_.batch_size);
    stats.loss /= n;
    stats.primary /= n;
    stats.secondary /= n;
    if (!std::isfinite(stats.loss)) {
      throw TrainingError("autoencoder loss is not finite", step_, last_loss_);
    }
    detail::average(grads, settings_.batch_size);
    adam_.step(params_, grads);
    ++step_;
    last_loss_ = stats.loss;
    return stats;
  }

  /// Runs `count` updates, reporting each to `observer` if given.
  void run(std::size_t count, const std::function<void(std::size_t, const StepStats&)>& observer = {}) {
    for (std::size_t i = 0; i < count; ++i) {
      const StepStats s = step();
      if (observer) observer(step_, s);
    }
  }

  std::size_t steps() const noexcept { return step_; }
  Variant variant() const noexcept { return variant_; }
  Rng& rng() noexcept { return rng_; }
  Adam& optimizer() noexcept { return adam_; }
  const Adam& optimizer() const noexcept { return adam_; }

  /// Restores counters after loading a checkpoint (model, optimizer moments
  /// and random state are restored through their own accessors).
  void restore_progress(std::size_t steps, double last_loss) {
    step_ = steps;
    last_loss_ = last_loss;
  }
  double last_loss() const noexcept { return last_loss_; }

 private:
  Autoencoder* model_;
  std::span<const TimeSeries> data_;
  NoiseSchedule schedule_;
  Variant variant_;
  NewFrameworkConfig framework_;
  BaselineConfig baseline_;
  TrainSettings settings_;
  Adam adam_;
  Rng rng_;
  std::vector<Parameter*> params_;
  std::size_t step_ = 0;
  double last_loss_ = 0.0;
};

/// Latent training targets for the diffusion model: a diagonal Gaussian per
/// series. The new framework uses the deterministic encoder outputs (zero
/// spread); the baselines draw from the variational posterior.
struct LatentSet {
  std::vector<std::vector<double>> mean;
  std::vector<std::vector<double>> stddev;

  std::size_t size() const { return mean.size(); }

  std::vector<double> draw(std::size_t idx, Rng& rng) const {
    std::vector<double> z = mean[idx];
    if (!stddev.empty()) {
      for (std::size_t k = 0; k < z.size(); ++k) z[k] += stddev[idx][k] * rng.normal();
    }
    return z;
  }
};

/// Encoder outputs v = encode(X) for every series.
inline LatentSet encoder_latents(const Autoencoder& model, std::span<const TimeSeries> data) {
  LatentSet out;
  for (const auto& x : data) out.mean.push_back(model.encoder.encode(x));
  return out;
}

/// Posterior parameters of q(z | X) for every series.
inline LatentSet posterior_latents(const Autoencoder& model, std::span<const TimeSeries> data) {
  LatentSet out;
  const std::vector<double> zero(model.latent_dim(), 0.0);
  for (const auto& x : data) {
    auto s = model.vi_head.sample(model.encoder.encode(x), zero);
    out.mean.push_back(std::move(s.mean));
    out.stddev.push_back(std::move(s.stddev));
  }
  return out;
}

inline LatentSet latents_for(Variant variant, const Autoencoder& model, std::span<const TimeSeries> data) {
  return variant == Variant::new_framework ? encoder_latents(model, data)
                                           : posterior_latents(model, data);
}

/// Resumable trainer for the noise-prediction network on a fixed latent set.
class DiffusionTrainer {
 public:
  DiffusionTrainer(ReverseModel& model, LatentSet latents, NoiseSchedule schedule,
                   TrainSettings settings, std::uint64_t seed)
      : model_(&model),
        latents_(std::move(latents)),
        schedule_(std::move(schedule)),
        settings_(settings),
        adam_(settings.adam),
        rng_(seed),
        params_(model.parameters()) {
    if (latents_.size() == 0) throw ConfigError("no latents to train the diffusion model on");
    if (settings.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  }

  double step() {
    std::vector<Tensor> grads;
    double total = 0.0;
    try {
      for (std::size_t b = 0; b < settings_.batch_size; ++b) {
        const auto z0 = latents_.draw(rng_.uniform_int(0, latents_.size() - 1), rng_);
        const std::size_t i = rng_.uniform_int(1, schedule_.steps());
        const auto eps = rng_.normal_vector(z0.size());
        Tape tape;
        Var loss = ddpm_loss(tape, schedule_, *model_, z0, i, eps);
        total += loss.item();
        tape.backward(loss);
        detail::accumulate(grads, collect_grads(tape, params_));
      }
    } catch (const NumericError& e) {
      throw TrainingError(std::string("diffusion training diverged: ") + e.what(), step_, last_loss_);
    }
    total /= static_cast<double>(settings_.batch_size);
    detail::average(grads, settings_.batch_size);
    adam_.step(params_, grads);
    ++step_;
    last_loss_ = total;
    return total;
  }

  void run(std::size_t count, const std::function<void(std::size_t, double)>& observer = {}) {
    for (std::size_t i = 0; i < count; ++i) {
      const double l = step();
      if (observer) observer(step_, l);
    }
  }

  std::size_t steps() const noexcept { return step_; }
  Rng& rng() noexcept { return rng_; }
  Adam& optimizer() noexcept { return adam_; }
  const Adam& optimizer() const noexcept { return adam_; }
  const LatentSet& latents() const noexcept { return latents_; }
  void restore_progress(std::size_t steps, double last_loss) {
    step_ = steps;
    last_loss_ = last_loss;
  }
  double last_loss() const noexcept { return last_loss_; }

 private:
  ReverseModel* model_;
  LatentSet latents_;
  NoiseSchedule schedule_;
  TrainSettings settings_;
  Adam adam_;
  Rng rng_;
  std::vector<Parameter*> params_;
  std::size_t step_ = 0;
  double last_loss_ = 0.0;
};

}  // namespace tsld
