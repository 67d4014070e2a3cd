#pragma once

#include <string>

#include "tsld/errors.hpp"

namespace tsld {

/// Which training objective the autoencoder uses.
enum class Variant { vanilla, kl_anneal, var_mask, skip_conn, new_framework };

inline const char* to_string(Variant v) {
  switch (v) {
    case Variant::vanilla: return "vanilla";
    case Variant::kl_anneal: return "kl_anneal";
    case Variant::var_mask: return "var_mask";
    case Variant::skip_conn: return "skip_conn";
    case Variant::new_framework: return "new_framework";
  }
  return "?";
}

inline Variant variant_from_string(const std::string& s) {
  if (s == "vanilla") return Variant::vanilla;
  if (s == "kl_anneal") return Variant::kl_anneal;
  if (s == "var_mask") return Variant::var_mask;
  if (s == "skip_conn") return Variant::skip_conn;
  if (s == "new_framework") return Variant::new_framework;
  throw ConfigError("unknown model variant '" + s + "'");
}

/// Lower bound applied to each step's log-density inside the
/// collapse-simulation penalty. `none` is the unbounded form, which a decoder
/// can drive to minus infinity on noise-like latents; `standard_normal`
/// stops rewarding it once it does worse than N(0, 1) on the normalized data.
enum class CollapseFloor { none, standard_normal };

inline const char* to_string(CollapseFloor f) {
  return f == CollapseFloor::none ? "none" : "standard_normal";
}

inline CollapseFloor collapse_floor_from_string(const std::string& s) {
  if (s == "none") return CollapseFloor::none;
  if (s == "standard_normal") return CollapseFloor::standard_normal;
  throw ConfigError("unknown collapse floor '" + s + "'");
}

/// Diffusion-as-inference settings of the new framework.
struct NewFrameworkConfig {
  std::size_t inference_horizon = 5;  // N: j ~ U{0, N}
  std::size_t collapse_onset = 10;    // M: k ~ U{M, L}
  std::size_t weight_mult = 2;        // gamma: weight abar^(gamma j)
  std::size_t eta_div = 1;            // eta: weight 1 - abar^ceil(k / eta)
  std::size_t schedule_length = 100;  // L
  CollapseFloor floor = CollapseFloor::standard_normal;

  void validate() const {
    const std::size_t N = inference_horizon, M = collapse_onset, L = schedule_length;
    if (N < 1) throw ConfigError("inference horizon N must be positive");
    if (!(N < M && M <= L)) throw ConfigError("need N < M <= L");
    if (weight_mult < 1 || weight_mult * N > L) throw ConfigError("need gamma >= 1 and gamma*N <= L");
    if (eta_div < 1) throw ConfigError("eta divisor must be >= 1");
  }
};

/// Settings shared by the KL-regularized baselines.
struct BaselineConfig {
  Variant variant = Variant::vanilla;
  std::size_t anneal_epochs = 10;
  double mask_ratio = 0.3;

  void validate() const {
    if (variant == Variant::new_framework) throw ConfigError("baseline variant cannot be new_framework");
    if (anneal_epochs < 1) throw ConfigError("anneal_epochs must be >= 1");
    if (!(mask_ratio >= 0.0 && mask_ratio < 1.0)) throw ConfigError("mask_ratio must lie in [0, 1)");
  }
};

/// Weight of the KL term after `progress` epochs: a linear ramp from 0 to 1.
inline double kl_anneal_weight(double progress, std::size_t anneal_epochs) {
  if (progress <= 0.0) return 0.0;
  return progress >= static_cast<double>(anneal_epochs)
             ? 1.0
             : progress / static_cast<double>(anneal_epochs);
}

}  // namespace tsld
