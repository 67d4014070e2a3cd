#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <initializer_list>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "tsld/bench/checkpoint.hpp"
#include "tsld/bench/dataset.hpp"
#include "tsld/bench/stats.hpp"
#include "tsld/bench/wasserstein.hpp"
#include "tsld/depmeas/profile.hpp"
#include "tsld/frameworks/sampling.hpp"
#include "tsld/frameworks/training.hpp"

namespace tsld {

inline constexpr const char* kVersion = "0.1.0";

struct DataSection {
  std::string source = "synthetic";  // synthetic | csv
  SyntheticSpec synthetic;
  std::string csv_path;
  CsvOptions csv;
  bool shuffle = false;
  std::size_t holdout = 200;
};

struct ModelSection {
  Variant variant = Variant::new_framework;
  Backbone backbone = Backbone::recurrent;
  std::size_t latent = 16;
  std::size_t hidden = 64;
  std::size_t prior_hidden = 64;
  std::size_t prior_embed = 16;
};

struct ScheduleSection {
  std::size_t steps = 100;
  double beta_start = 1e-3;
  double beta_end = 0.2;
  BackwardVariance variance = BackwardVariance::posterior;

  NoiseSchedule build() const { return NoiseSchedule::linear(steps, beta_start, beta_end, variance); }
};

struct TrainingSection {
  std::size_t autoencoder_steps = 3000;
  std::size_t prior_steps = 20000;
  std::size_t batch_size = 8;
  double learning_rate = 1e-3;
  double prior_learning_rate = 1e-3;
  double clip_norm = 0.0;
  std::size_t checkpoint_every = 0;  // 0: only at the end of each stage
};

struct DiagnosticSection {
  std::size_t population = 100;  // sampled series profiled
  std::size_t path_samples = 16;
  PathSampling path_sampling = PathSampling::uniform;
  std::size_t generated = 200;   // sampled series scored against the evaluation set
  std::size_t projections = 128;
};

struct ExperimentConfig {
  std::string name = "desk";
  std::uint64_t seed = 1;
  DataSection data;
  ModelSection model;
  ScheduleSection schedule;
  NewFrameworkConfig framework;
  BaselineConfig baseline;
  TrainingSection training;
  DiagnosticSection diagnostics;

  void validate() const {
    if (data.source != "synthetic" && data.source != "csv") {
      throw ConfigError("data.source must be 'synthetic' or 'csv'");
    }
    if (data.source == "synthetic") data.synthetic.validate();
    if (data.source == "csv" && data.csv_path.empty()) throw ConfigError("data.csv_path is required for csv data");
    if (model.latent < 1 || model.hidden < 1 || model.prior_hidden < 1) {
      throw ConfigError("model sizes must be positive");
    }
    if (model.backbone == Backbone::attention && model.variant == Variant::skip_conn) {
      throw ConfigError("skip_conn needs the recurrent backbone");
    }
    schedule.build();
    if (model.variant == Variant::new_framework) {
      framework.validate();
    } else {
      BaselineConfig b = baseline;
      b.variant = model.variant;
      b.validate();
    }
    if (training.batch_size < 1) throw ConfigError("training.batch_size must be >= 1");
    if (!(training.learning_rate > 0.0) || !(training.prior_learning_rate > 0.0)) {
      throw ConfigError("learning rates must be positive");
    }
    if (diagnostics.path_samples < 1) throw ConfigError("diagnostics.path_samples must be >= 1");
    if (diagnostics.population == 1) throw ConfigError("diagnostics.population must be 0 or >= 2");
    if (diagnostics.generated < 1 || diagnostics.projections < 1) {
      throw ConfigError("diagnostics.generated and diagnostics.projections must be >= 1");
    }
  }
};

// ---- config (de)serialization ----

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::string& where,
                       std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(where + " must be an object");
  for (const auto& [k, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || k == a;
    if (!ok) throw ConfigError("unknown config key '" + where + "." + k + "'");
  }
}

template <class T>
void read(const nlohmann::json& j, const std::string& where, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config key '" + where + "." + key + "' has the wrong type");
  }
}

template <class E, class Parse>
void read_enum(const nlohmann::json& j, const std::string& where, const char* key, E& out, Parse parse) {
  std::string s;
  bool present = j.contains(key);
  read(j, where, key, s);
  if (present) out = parse(s);
}

}  // namespace detail

inline nlohmann::json to_json(const ExperimentConfig& c) {
  const auto& s = c.data.synthetic;
  return {
      {"name", c.name},
      {"seed", c.seed},
      {"data",
       {{"source", c.data.source},
        {"kind", to_string(s.kind)},
        {"steps", s.steps},
        {"dim", s.dim},
        {"count", s.count},
        {"seed", s.seed},
        {"phi", s.phi},
        {"noise", s.noise},
        {"switch_prob", s.switch_prob},
        {"regime_gap", s.regime_gap},
        {"csv_path", c.data.csv_path},
        {"csv_steps", c.data.csv.steps},
        {"csv_dim", c.data.csv.dim},
        {"top_variance", c.data.csv.top_variance},
        {"shuffle", c.data.shuffle},
        {"holdout", c.data.holdout}}},
      {"model",
       {{"variant", to_string(c.model.variant)},
        {"backbone", to_string(c.model.backbone)},
        {"latent", c.model.latent},
        {"hidden", c.model.hidden},
        {"prior_hidden", c.model.prior_hidden},
        {"prior_embed", c.model.prior_embed}}},
      {"schedule",
       {{"steps", c.schedule.steps},
        {"beta_start", c.schedule.beta_start},
        {"beta_end", c.schedule.beta_end},
        {"variance", to_string(c.schedule.variance)}}},
      {"framework",
       {{"inference_horizon", c.framework.inference_horizon},
        {"collapse_onset", c.framework.collapse_onset},
        {"weight_mult", c.framework.weight_mult},
        {"eta_div", c.framework.eta_div},
        {"collapse_floor", to_string(c.framework.floor)}}},
      {"baseline", {{"anneal_epochs", c.baseline.anneal_epochs}, {"mask_ratio", c.baseline.mask_ratio}}},
      {"training",
       {{"autoencoder_steps", c.training.autoencoder_steps},
        {"prior_steps", c.training.prior_steps},
        {"batch_size", c.training.batch_size},
        {"learning_rate", c.training.learning_rate},
        {"prior_learning_rate", c.training.prior_learning_rate},
        {"clip_norm", c.training.clip_norm},
        {"checkpoint_every", c.training.checkpoint_every}}},
      {"diagnostics",
       {{"population", c.diagnostics.population},
        {"path_samples", c.diagnostics.path_samples},
        {"path_sampling", to_string(c.diagnostics.path_sampling)},
        {"generated", c.diagnostics.generated},
        {"projections", c.diagnostics.projections}}},
  };
}

/// Reads a config document over the defaults. Unknown keys and wrongly typed
/// values are config errors; the result is validated.
inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  using detail::read;
  using detail::read_enum;
  ExperimentConfig c;
  detail::check_keys(j, "config",
                     {"name", "seed", "data", "model", "schedule", "framework", "baseline", "training", "diagnostics"});
  read(j, "config", "name", c.name);
  read(j, "config", "seed", c.seed);
  if (j.contains("data")) {
    const auto& d = j["data"];
    detail::check_keys(d, "data",
                       {"source", "kind", "steps", "dim", "count", "seed", "phi", "noise", "switch_prob",
                        "regime_gap", "csv_path", "csv_steps", "csv_dim", "top_variance", "shuffle", "holdout"});
    auto& s = c.data.synthetic;
    read(d, "data", "source", c.data.source);
    read_enum(d, "data", "kind", s.kind, synthetic_kind_from_string);
    read(d, "data", "steps", s.steps);
    read(d, "data", "dim", s.dim);
    read(d, "data", "count", s.count);
    read(d, "data", "seed", s.seed);
    read(d, "data", "phi", s.phi);
    read(d, "data", "noise", s.noise);
    read(d, "data", "switch_prob", s.switch_prob);
    read(d, "data", "regime_gap", s.regime_gap);
    read(d, "data", "csv_path", c.data.csv_path);
    read(d, "data", "csv_steps", c.data.csv.steps);
    read(d, "data", "csv_dim", c.data.csv.dim);
    read(d, "data", "top_variance", c.data.csv.top_variance);
    read(d, "data", "shuffle", c.data.shuffle);
    read(d, "data", "holdout", c.data.holdout);
  }
  if (j.contains("model")) {
    const auto& m = j["model"];
    detail::check_keys(m, "model", {"variant", "backbone", "latent", "hidden", "prior_hidden", "prior_embed"});
    read_enum(m, "model", "variant", c.model.variant, variant_from_string);
    read_enum(m, "model", "backbone", c.model.backbone, backbone_from_string);
    read(m, "model", "latent", c.model.latent);
    read(m, "model", "hidden", c.model.hidden);
    read(m, "model", "prior_hidden", c.model.prior_hidden);
    read(m, "model", "prior_embed", c.model.prior_embed);
  }
  if (j.contains("schedule")) {
    const auto& s = j["schedule"];
    detail::check_keys(s, "schedule", {"steps", "beta_start", "beta_end", "variance"});
    read(s, "schedule", "steps", c.schedule.steps);
    read(s, "schedule", "beta_start", c.schedule.beta_start);
    read(s, "schedule", "beta_end", c.schedule.beta_end);
    read_enum(s, "schedule", "variance", c.schedule.variance, backward_variance_from_string);
  }
  if (j.contains("framework")) {
    const auto& f = j["framework"];
    detail::check_keys(f, "framework",
                       {"inference_horizon", "collapse_onset", "weight_mult", "eta_div", "collapse_floor"});
    read(f, "framework", "inference_horizon", c.framework.inference_horizon);
    read(f, "framework", "collapse_onset", c.framework.collapse_onset);
    read(f, "framework", "weight_mult", c.framework.weight_mult);
    read(f, "framework", "eta_div", c.framework.eta_div);
    read_enum(f, "framework", "collapse_floor", c.framework.floor, collapse_floor_from_string);
  }
  c.framework.schedule_length = c.schedule.steps;
  if (j.contains("baseline")) {
    const auto& b = j["baseline"];
    detail::check_keys(b, "baseline", {"anneal_epochs", "mask_ratio"});
    read(b, "baseline", "anneal_epochs", c.baseline.anneal_epochs);
    read(b, "baseline", "mask_ratio", c.baseline.mask_ratio);
  }
  c.baseline.variant = c.model.variant == Variant::new_framework ? Variant::vanilla : c.model.variant;
  if (j.contains("training")) {
    const auto& t = j["training"];
    detail::check_keys(t, "training",
                       {"autoencoder_steps", "prior_steps", "batch_size", "learning_rate", "prior_learning_rate",
                        "clip_norm", "checkpoint_every"});
    read(t, "training", "autoencoder_steps", c.training.autoencoder_steps);
    read(t, "training", "prior_steps", c.training.prior_steps);
    read(t, "training", "batch_size", c.training.batch_size);
    read(t, "training", "learning_rate", c.training.learning_rate);
    read(t, "training", "prior_learning_rate", c.training.prior_learning_rate);
    read(t, "training", "clip_norm", c.training.clip_norm);
    read(t, "training", "checkpoint_every", c.training.checkpoint_every);
  }
  if (j.contains("diagnostics")) {
    const auto& d = j["diagnostics"];
    detail::check_keys(d, "diagnostics",
                       {"population", "path_samples", "path_sampling", "generated", "projections"});
    read(d, "diagnostics", "population", c.diagnostics.population);
    read(d, "diagnostics", "path_samples", c.diagnostics.path_samples);
    read_enum(d, "diagnostics", "path_sampling", c.diagnostics.path_sampling, path_sampling_from_string);
    read(d, "diagnostics", "generated", c.diagnostics.generated);
    read(d, "diagnostics", "projections", c.diagnostics.projections);
  }
  c.validate();
  return c;
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  try {
    return nlohmann::json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  return experiment_config_from_json(read_json_file(path));
}

/// Sets one dotted config field, e.g. "training.prior_steps=500". The value is
/// read as JSON when it parses and as a string otherwise.
inline void apply_override(nlohmann::json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string path = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  nlohmann::json value = nlohmann::json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  nlohmann::json* node = &config;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError("override '" + assignment + "' has an empty key");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

// ---- seeds ----

/// Per-stage seeds derived from the master seed.
struct StageSeeds {
  std::uint64_t init, autoencoder, prior, sampling, diagnostics, evaluation, shuffle;

  static StageSeeds from(const ExperimentConfig& c) {
    auto stream = [&](std::uint64_t tag) { return Rng::derive(c.seed, tag).next_seed(); };
    return {stream(1), stream(2), stream(3), stream(4), stream(5), stream(6),
            Rng::derive(c.data.synthetic.seed, 7).next_seed()};
  }

  nlohmann::json to_json() const {
    return {{"init", init},         {"autoencoder", autoencoder}, {"prior", prior},     {"sampling", sampling},
            {"diagnostics", diagnostics}, {"evaluation", evaluation}, {"shuffle", shuffle}};
  }
};

// ---- state ----

/// Training and evaluation splits for a config.
inline std::pair<Dataset, Dataset> load_experiment_data(const ExperimentConfig& c) {
  Dataset full = c.data.source == "csv" ? load_csv(c.data.csv_path, c.data.csv) : gen_synthetic(c.data.synthetic);
  if (c.data.shuffle) full = shuffle_series(full, StageSeeds::from(c).shuffle);
  if (c.data.holdout == 0) return {full, full};
  return split_dataset(full, c.data.holdout);
}

/// Models of one experiment plus everything needed to continue training.
struct ExperimentState {
  ExperimentConfig config;
  NoiseSchedule schedule;
  Normalization norm;
  Autoencoder autoencoder;
  ReverseModel prior;
  TrainerState autoencoder_progress;
  TrainerState prior_progress;
  std::string stage = "initialized";

  /// Freshly initialized models for data of width `dim`.
  static ExperimentState initialize(const ExperimentConfig& c, std::size_t steps, std::size_t dim,
                                    Normalization norm) {
    ExperimentState s;
    s.config = c;
    s.schedule = c.schedule.build();
    s.norm = std::move(norm);
    Rng init(StageSeeds::from(c).init);
    AutoencoderShape shape{steps, dim, c.model.latent, c.model.hidden, c.model.backbone,
                           c.model.variant == Variant::skip_conn};
    s.autoencoder = Autoencoder(shape, init);
    s.prior = ReverseModel(c.model.latent, c.model.prior_hidden, c.model.prior_embed, s.schedule, init);
    return s;
  }
};

inline Checkpoint to_checkpoint(ExperimentState& s) {
  Checkpoint c;
  c.config = to_json(s.config);
  c.config["series_steps"] = s.autoencoder.steps();
  c.stage = s.stage;
  c.components["autoencoder"] = snapshot(s.autoencoder.parameters());
  c.components["prior"] = snapshot(s.prior.parameters());
  c.trainers["autoencoder"] = s.autoencoder_progress;
  c.trainers["prior"] = s.prior_progress;
  c.norm = s.norm;
  return c;
}

/// Rebuilds an experiment from a checkpoint. Every component is validated
/// before any value is copied in.
inline ExperimentState from_checkpoint(const Checkpoint& c) {
  ExperimentConfig cfg;
  std::size_t steps = 0;
  try {
    nlohmann::json body = c.config;
    steps = body.at("series_steps").get<std::size_t>();
    body.erase("series_steps");
    cfg = experiment_config_from_json(body);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint config echo is invalid: ") + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint config echo is incomplete: ") + e.what());
  }
  ExperimentState s = ExperimentState::initialize(cfg, steps, c.norm.mean.size(), c.norm);
  auto find = [&](const std::string& name) -> const std::vector<Parameter>& {
    auto it = c.components.find(name);
    if (it == c.components.end()) throw FormatError("checkpoint lacks component '" + name + "'");
    return it->second;
  };
  auto trainer = [&](const std::string& name) {
    auto it = c.trainers.find(name);
    if (it == c.trainers.end()) throw FormatError("checkpoint lacks trainer '" + name + "'");
    return it->second;
  };
  const auto& ae = find("autoencoder");
  const auto& pr = find("prior");
  auto ae_progress = trainer("autoencoder");
  auto pr_progress = trainer("prior");
  auto check_moments = [](const TrainerState& t, std::span<Parameter* const> params) {
    const auto& m = t.optimizer.first;
    if (m.empty()) return;
    if (m.size() != params.size()) throw FormatError("checkpoint optimizer state has the wrong length");
    for (std::size_t k = 0; k < m.size(); ++k) {
      if (m[k].shape() != params[k]->value.shape() || t.optimizer.second[k].shape() != m[k].shape()) {
        throw FormatError("checkpoint optimizer moment for '" + params[k]->name + "' has the wrong shape");
      }
    }
  };
  ExperimentState probe = s;
  restore_parameters(ae, probe.autoencoder.parameters());
  restore_parameters(pr, probe.prior.parameters());
  check_moments(ae_progress, probe.autoencoder.parameters());
  check_moments(pr_progress, probe.prior.parameters());
  probe.autoencoder_progress = std::move(ae_progress);
  probe.prior_progress = std::move(pr_progress);
  probe.stage = c.stage;
  return probe;
}

template <class Trainer>
TrainerState capture_progress(Trainer& t) {
  return {t.steps(), t.last_loss(), t.rng().state(), OptimizerState::capture(t.optimizer())};
}

template <class Trainer>
void resume_progress(const TrainerState& s, Trainer& t) {
  if (s.rng.empty()) return;  // never trained
  t.rng().set_state(s.rng);
  s.optimizer.restore(t.optimizer());
  t.restore_progress(s.steps, s.last_loss);
}

/// Progress callbacks for long runs.
struct TrainingHooks {
  std::function<void(const char* stage, std::size_t step, double loss)> on_step;
  /// Called with the state whenever a checkpoint is due (every
  /// `checkpoint_every` updates and at the end of each stage).
  std::function<void(ExperimentState&)> on_checkpoint;
};

/// Trains the autoencoder and then the prior up to the configured budgets,
/// continuing from whatever progress `s` already records. The prior budget
/// may grow after training finished; the autoencoder budget may not once
/// prior training has begun. On divergence the
/// last good state is handed to `on_checkpoint` before the error propagates.
inline void train_experiment(ExperimentState& s, const Dataset& train, const TrainingHooks& hooks = {}) {
  const auto& c = s.config;
  const StageSeeds seeds = StageSeeds::from(c);
  auto checkpoint = [&] {
    if (hooks.on_checkpoint) hooks.on_checkpoint(s);
  };
  auto due = [&](std::size_t step) { return c.training.checkpoint_every > 0 && step % c.training.checkpoint_every == 0; };

  TrainSettings ae_settings;
  ae_settings.batch_size = c.training.batch_size;
  ae_settings.adam.learning_rate = c.training.learning_rate;
  ae_settings.adam.clip_norm = c.training.clip_norm;
  const bool prior_started = s.stage == "prior_partial" || s.stage == "trained";
  const bool ae_short = s.autoencoder_progress.steps < c.training.autoencoder_steps;
  if (prior_started && ae_short) {
    throw ConfigError("training.autoencoder_steps cannot grow once prior training has started");
  }
  if (s.stage == "initialized" || s.stage == "autoencoder_partial" || (s.stage == "autoencoder" && ae_short)) {
    AutoencoderTrainer tr(s.autoencoder, train.series, s.schedule, c.model.variant, c.framework, c.baseline,
                          ae_settings, seeds.autoencoder);
    resume_progress(s.autoencoder_progress, tr);
    try {
      while (tr.steps() < c.training.autoencoder_steps) {
        const StepStats st = tr.step();
        if (hooks.on_step) hooks.on_step("autoencoder", tr.steps(), st.loss);
        if (due(tr.steps())) {
          s.autoencoder_progress = capture_progress(tr);
          s.stage = "autoencoder_partial";
          checkpoint();
        }
      }
    } catch (const TrainingError&) {
      s.autoencoder_progress = capture_progress(tr);
      s.stage = "autoencoder_partial";
      checkpoint();
      throw;
    }
    s.autoencoder_progress = capture_progress(tr);
    s.stage = "autoencoder";
    checkpoint();
  }

  TrainSettings prior_settings = ae_settings;
  prior_settings.adam.learning_rate = c.training.prior_learning_rate;
  const bool prior_short = s.prior_progress.steps < c.training.prior_steps;
  if (s.stage == "autoencoder" || s.stage == "prior_partial" || (s.stage == "trained" && prior_short)) {
    DiffusionTrainer tr(s.prior, latents_for(c.model.variant, s.autoencoder, train.series), s.schedule,
                        prior_settings, seeds.prior);
    resume_progress(s.prior_progress, tr);
    try {
      while (tr.steps() < c.training.prior_steps) {
        const double loss = tr.step();
        if (hooks.on_step) hooks.on_step("prior", tr.steps(), loss);
        if (due(tr.steps())) {
          s.prior_progress = capture_progress(tr);
          s.stage = "prior_partial";
          checkpoint();
        }
      }
    } catch (const TrainingError&) {
      s.prior_progress = capture_progress(tr);
      s.stage = "prior_partial";
      checkpoint();
      throw;
    }
    s.prior_progress = capture_progress(tr);
    s.stage = "trained";
    checkpoint();
  }
}

// ---- evaluation ----

/// `count` draws from the trained generative model (normalized units).
inline std::vector<GeneratedSample> generate(const ExperimentState& s, std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<GeneratedSample> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    out.push_back(sample_variant(s.config.model.variant, s.autoencoder, s.prior, s.schedule, s.config.framework,
                                 s.autoencoder.steps(), rng));
  }
  return out;
}

/// Dependency profiles of the decoder on each sampled (z, X) pair.
inline std::vector<DependencyProfile> diagnose(const ExperimentState& s, std::span<const GeneratedSample> samples,
                                               std::uint64_t seed) {
  std::vector<DependencyProfile> out;
  out.reserve(samples.size());
  for (std::size_t k = 0; k < samples.size(); ++k) {
    MeasureSettings m;
    m.samples = s.config.diagnostics.path_samples;
    m.mode = s.config.diagnostics.path_sampling;
    m.seed = Rng::derive(seed, k).next_seed();
    out.push_back(dependency_profile(s.autoencoder.decoder, samples[k].z, samples[k].series, m));
  }
  return out;
}

/// Mean of the local dependency over the second half of the series.
inline double late_local_dependency(const ProfileSummary& p) {
  const std::size_t T = p.steps();
  double total = 0.0;
  std::size_t n = 0;
  for (std::size_t t = std::max<std::size_t>(2, T / 2); t <= T; ++t) {
    if (std::isfinite(p.local1.mean[t - 1])) {
      total += p.local1.mean[t - 1];
      ++n;
    }
  }
  return n ? total / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
}

struct ExperimentResult {
  nlohmann::json metrics;
  std::optional<ProfileSummary> profile;
  std::vector<DependencyProfile> profiles;
  std::vector<TimeSeries> generated;  // original units
};

inline nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

/// Samples, scores and profiles a trained experiment.
inline ExperimentResult evaluate_experiment(const ExperimentState& s, const Dataset& train, const Dataset& eval) {
  const auto& c = s.config;
  const StageSeeds seeds = StageSeeds::from(c);
  ExperimentResult r;
  const auto samples = generate(s, c.diagnostics.generated, seeds.sampling);
  for (const auto& g : samples) r.generated.push_back(s.norm.invert(g.series));
  const auto real = eval.original();
  const double w1 = wasserstein_eval(real, r.generated, c.diagnostics.projections, seeds.evaluation);

  auto columns = [](std::span<const TimeSeries> set) {
    std::vector<std::vector<double>> out;
    for (const auto& x : set)
      for (std::size_t d = 0; d < x.dim(); ++d) {
        std::vector<double> col;
        for (std::size_t t = 0; t < x.steps(); ++t) col.push_back(x.at(t, d));
        out.push_back(std::move(col));
      }
    return out;
  };

  auto& m = r.metrics;
  m["wasserstein"] = w1;
  m["eval_set"] = c.data.holdout == 0 ? "train" : "holdout";
  m["eval_series"] = eval.size();
  m["generated_series"] = r.generated.size();
  m["lag1_real"] = stats::lag1_autocorrelation(columns(real));
  m["lag1_generated"] = stats::lag1_autocorrelation(columns(r.generated));
  m["autoencoder_steps"] = s.autoencoder_progress.steps;
  m["autoencoder_final_loss"] = s.autoencoder_progress.last_loss;
  m["prior_steps"] = s.prior_progress.steps;
  m["prior_final_loss"] = s.prior_progress.last_loss;
  m["train_series"] = train.size();

  if (c.diagnostics.population >= 2) {
    std::vector<GeneratedSample> pop(samples.begin(),
                                     samples.begin() + std::min(samples.size(), c.diagnostics.population));
    if (pop.size() < c.diagnostics.population) {
      auto extra = generate(s, c.diagnostics.population, Rng::derive(seeds.sampling, 1).next_seed());
      pop.insert(pop.end(), extra.begin() + static_cast<std::ptrdiff_t>(pop.size()), extra.end());
    }
    r.profiles = diagnose(s, pop, seeds.diagnostics);
    r.profile = aggregate_profiles(r.profiles);
    const std::size_t T = r.profile->steps();
    m["global_dependency_first"] = finite_or_null(r.profile->global.mean[0]);
    if (T >= 2) m["global_dependency_second"] = finite_or_null(r.profile->global.mean[1]);
    m["global_dependency_last"] = finite_or_null(r.profile->global.mean[T - 1]);
    m["local_dependency_late_mean"] = finite_or_null(late_local_dependency(*r.profile));
    double worst = 0.0;
    for (double v : r.profile->residual.mean)
      if (std::isfinite(v)) worst = std::max(worst, std::abs(v));
    m["max_mean_residual"] = worst;
  }
  return r;
}

inline nlohmann::json versions_json() {
  return {{"tsld", kVersion},
          {"checkpoint_format", kCheckpointVersion},
          {"nlohmann_json",
           std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." + std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
               std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
#if defined(__VERSION__)
          {"compiler", __VERSION__}
#else
          {"compiler", "unknown"}
#endif
  };
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw InputError("failed writing '" + path.string() + "'");
}

inline std::string metrics_csv(const nlohmann::json& metrics) {
  std::ostringstream os;
  os.precision(17);
  os << "metric,value\n";
  for (const auto& [k, v] : metrics.items()) {
    os << k << ',';
    if (v.is_string()) {
      os << v.get<std::string>();
    } else if (!v.is_null()) {
      os << v.dump();
    }
    os << '\n';
  }
  return os.str();
}

/// Paths of the files run_experiment writes into its output directory.
struct ReportFiles {
  std::filesystem::path dir;
  std::filesystem::path report() const { return dir / "report.json"; }
  std::filesystem::path metrics_json() const { return dir / "metrics.json"; }
  std::filesystem::path metrics_csv() const { return dir / "metrics.csv"; }
  std::filesystem::path profile_csv() const { return dir / "profile.csv"; }
  std::filesystem::path profiles_json() const { return dir / "profiles.json"; }
  std::filesystem::path generated_csv() const { return dir / "generated.csv"; }
  std::filesystem::path checkpoint() const { return dir / "checkpoint.json"; }
};

/// Writes the profile CSV and the JSON document holding every profile.
inline void write_profiles(const ReportFiles& files, const ProfileSummary& summary,
                           std::span<const DependencyProfile> profiles) {
  write_text(files.profile_csv(), to_csv(summary));
  auto list = nlohmann::json::array();
  for (const auto& p : profiles) list.push_back(to_json(p));
  write_text(files.profiles_json(), nlohmann::json{{"summary", to_json(summary)}, {"series", list}}.dump(1) + "\n");
}

/// Writes the report bundle for an evaluated experiment.
inline nlohmann::json write_report(const ReportFiles& files, const ExperimentState& s, const ExperimentResult& r,
                                   const nlohmann::json& status = nlohmann::json::object()) {
  nlohmann::json metrics = r.metrics;
  metrics["seed"] = s.config.seed;
  write_text(files.metrics_json(), metrics.dump(2) + "\n");
  write_text(files.metrics_csv(), metrics_csv(metrics));
  nlohmann::json profiles = nullptr;
  if (r.profile) {
    write_profiles(files, *r.profile, r.profiles);
    profiles = to_json(*r.profile);
    profiles["csv"] = files.profile_csv().filename().string();
    profiles["series"] = files.profiles_json().filename().string();
  }
  if (!r.generated.empty()) {
    Dataset gen{"generated", "model:" + s.config.name, {}, Normalization::identity(r.generated[0].dim())};
    gen.series = r.generated;
    write_csv(gen, files.generated_csv().string());
  }
  nlohmann::json config = to_json(s.config);
  nlohmann::json report = {{"config", config},
                           {"seeds", StageSeeds::from(s.config).to_json()},
                           {"metrics", metrics},
                           {"profiles", profiles},
                           {"checkpoint_path", files.checkpoint().string()},
                           {"versions", versions_json()}};
  if (!status.empty()) report["status"] = status;
  write_text(files.report(), report.dump(2) + "\n");
  return report;
}

/// Moves a resumed state onto config `c`. Only the name, the training budgets
/// and the diagnostics may differ from the config the checkpoint was trained
/// under.
inline void adopt_config(ExperimentState& s, const ExperimentConfig& c) {
  nlohmann::json saved = to_json(s.config), wanted = to_json(c);
  for (const char* k : {"training", "diagnostics", "name"}) {
    saved.erase(k);
    wanted.erase(k);
  }
  if (saved != wanted) throw ConfigError("checkpoint was trained under a different model, data or seed config");
  s.config.name = c.name;
  s.config.training = c.training;  // budgets may grow on resume
  s.config.diagnostics = c.diagnostics;
}

/// Trains (or resumes), evaluates and writes the full report bundle into
/// `out_dir`. If training diverges, the checkpoint and a report carrying the
/// error are still written before the TrainingError propagates.
inline ExperimentResult run_experiment(const ExperimentConfig& c, const std::filesystem::path& out_dir,
                                       const TrainingHooks& hooks = {},
                                       std::optional<ExperimentState> resume = std::nullopt) {
  c.validate();
  std::filesystem::create_directories(out_dir);
  const ReportFiles files{out_dir};
  auto [train, eval] = load_experiment_data(c);
  ExperimentState s = resume ? std::move(*resume) : ExperimentState::initialize(c, train.steps(), train.dim(), train.norm);
  if (resume) adopt_config(s, c);
  TrainingHooks h = hooks;
  h.on_checkpoint = [&](ExperimentState& st) {
    save_checkpoint(to_checkpoint(st), files.checkpoint().string());
    if (hooks.on_checkpoint) hooks.on_checkpoint(st);
  };
  try {
    train_experiment(s, train, h);
  } catch (const TrainingError& e) {
    ExperimentResult partial;
    partial.metrics = {{"autoencoder_steps", s.autoencoder_progress.steps},
                       {"prior_steps", s.prior_progress.steps}};
    write_report(files, s, partial,
                 {{"error", e.what()}, {"failed_step", e.step()}, {"last_loss", finite_or_null(e.last_loss())}});
    throw;
  }
  ExperimentResult r = evaluate_experiment(s, train, eval);
  write_report(files, s, r);
  return r;
}

}  // namespace tsld
