#include <gtest/gtest.h>

#include <cmath>

#include "tsld/bench/dataset.hpp"
#include "tsld/bench/stats.hpp"
#include "tsld/frameworks/sampling.hpp"
#include "tsld/frameworks/training.hpp"

namespace tsld {
namespace {

using namespace stats;

AutoencoderShape small_shape(std::size_t T = 6, std::size_t D = 2) {
  AutoencoderShape s;
  s.steps = T;
  s.dim = D;
  s.latent = 4;
  s.hidden = 16;
  return s;
}

TimeSeries random_series(std::size_t T, std::size_t D, Rng& rng) {
  TimeSeries x(T, D);
  for (double& v : x.values()) v = rng.normal();
  return x;
}

std::vector<double> as_vec(const TimeSeries& x) { return {x.values().begin(), x.values().end()}; }

std::vector<std::vector<double>> feature_sequences(std::span<const TimeSeries> set) {
  std::vector<std::vector<double>> out;
  for (const auto& x : set) {
    for (std::size_t d = 0; d < x.dim(); ++d) {
      std::vector<double> col;
      for (std::size_t t = 0; t < x.steps(); ++t) col.push_back(x.at(t, d));
      out.push_back(std::move(col));
    }
  }
  return out;
}

std::vector<double> flat_params(Autoencoder& m) {
  std::vector<double> out;
  for (auto* p : m.parameters()) {
    for (double v : p->value.values()) out.push_back(v);
  }
  return out;
}

// ---- KL ----

TEST(KlDivergence, ClosedFormExamples) {
  const std::vector<double> zero{0.0, 0.0}, one{1.0, 1.0};
  EXPECT_DOUBLE_EQ(kl_diag_gaussian(zero, one), 0.0);
  EXPECT_DOUBLE_EQ(kl_diag_gaussian(std::vector<double>{1.0}, std::vector<double>{1.0}), 0.5);
  // sigma = e: 1/2 (e^2 - 1 - 2)
  const double e = std::exp(1.0);
  EXPECT_NEAR(kl_diag_gaussian(std::vector<double>{0.0}, std::vector<double>{e}), 0.5 * (e * e - 3.0), 1e-14);
}

TEST(KlDivergence, NonNegativeOnRandomInputs) {
  Rng rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = rng.uniform_int(1, 8);
    std::vector<double> mu(n), sd(n);
    for (std::size_t k = 0; k < n; ++k) {
      mu[k] = rng.uniform(-5.0, 5.0);
      sd[k] = std::exp(rng.uniform(-4.0, 4.0));
    }
    EXPECT_GE(kl_diag_gaussian(mu, sd), 0.0);
  }
}

TEST(KlDivergence, RejectsNonPositiveScale) {
  EXPECT_THROW(kl_diag_gaussian(std::vector<double>{0.0}, std::vector<double>{0.0}), ContractError);
  EXPECT_THROW(kl_diag_gaussian(std::vector<double>{0.0}, std::vector<double>{-1.0}), ContractError);
  EXPECT_THROW(kl_diag_gaussian(std::vector<double>{0.0, 1.0}, std::vector<double>{1.0}), ShapeError);
}

TEST(KlDivergence, TapeFormMatchesScalarForm) {
  Rng rng(12);
  const std::vector<double> mu{0.3, -1.2, 2.0}, log_sd{-0.5, 0.0, 0.7};
  std::vector<double> sd;
  for (double l : log_sd) sd.push_back(std::exp(l));
  Tape tape;
  Var kl = kl_diag_gaussian(tape.input(mu), tape.input(log_sd));
  EXPECT_NEAR(kl.item(), kl_diag_gaussian(mu, sd), 1e-13);
}

// ---- VAE loss ----

class VaeLossTest : public ::testing::Test {
 protected:
  Rng rng{21};
  Autoencoder model{small_shape(), rng};
  TimeSeries x = random_series(6, 2, rng);
  std::vector<double> eps = rng.normal_vector(4);
};

TEST_F(VaeLossTest, EqualsSumOfIndependentParts) {
  const double w = 0.37;
  Tape tape;
  auto terms = vae_loss(tape, model, x, eps, w);

  // Independent evaluation: posterior sample, then the decoder likelihood at
  // that z, then the closed-form KL.
  const auto v = model.encoder.encode(x);
  const auto post = model.vi_head.sample(v, eps);
  Tape t2;
  const double ll = gen_log_likelihood(t2, model.decoder, model.gen_head, t2.input(post.z), x).item();
  const double kl = kl_diag_gaussian(post.mean, post.stddev);

  EXPECT_NEAR(terms.log_likelihood.item(), ll, 1e-12);
  EXPECT_NEAR(terms.kl.item(), kl, 1e-12);
  EXPECT_NEAR(terms.loss.item(), -ll + w * kl, 1e-12);
}

TEST_F(VaeLossTest, ZeroAnnealWeightLeavesReconstructionOnly) {
  Tape tape;
  auto terms = vae_loss(tape, model, x, eps, 0.0);
  EXPECT_DOUBLE_EQ(terms.loss.item(), -terms.log_likelihood.item());
}

TEST_F(VaeLossTest, CollapsedHeadHasZeroKl) {
  force_collapsed_posterior(model.vi_head);
  Tape tape;
  auto terms = vae_loss(tape, model, x, eps, 1.0);
  EXPECT_DOUBLE_EQ(terms.kl.item(), 0.0);
}

TEST_F(VaeLossTest, RejectsWeightOutsideUnitInterval) {
  Tape tape;
  EXPECT_THROW(vae_loss(tape, model, x, eps, 1.5), ContractError);
  EXPECT_THROW(vae_loss(tape, model, x, eps, -0.1), ContractError);
}

TEST_F(VaeLossTest, MaskedInputsStillScoreUnmaskedTargets) {
  TimeSeries masked = x;
  for (double& v : masked.values()) v = 0.0;
  Tape tape;
  auto terms = vae_loss(tape, model, x, masked, eps, 1.0);
  const auto post = model.vi_head.sample(model.encoder.encode(x), eps);
  Tape t2;
  const double ll =
      gen_log_likelihood(t2, model.decoder, model.gen_head, t2.input(post.z), masked, x).item();
  EXPECT_NEAR(terms.log_likelihood.item(), ll, 1e-12);
}

// ---- Masking ----

TEST(MaskInputs, ZeroRatioIsIdentity) {
  Rng rng(31);
  const auto x = random_series(12, 3, rng);
  const auto y = mask_inputs(x, 0.0, rng);
  EXPECT_EQ(as_vec(x), as_vec(y));
}

TEST(MaskInputs, RateMatchesBinomialExpectation) {
  Rng rng(32);
  const std::size_t T = 10000;
  TimeSeries x(T, 2);
  for (double& v : x.values()) v = 1.0;
  const auto y = mask_inputs(x, 0.5, rng);
  std::size_t masked = 0;
  for (std::size_t t = 0; t < T; ++t) {
    EXPECT_EQ(y.at(t, 0), y.at(t, 1));  // whole observations, never single cells
    if (y.at(t, 0) == 0.0) ++masked;
  }
  const double rate = static_cast<double>(masked) / T;
  EXPECT_LT(std::abs(rate - 0.5), 3.0 * std::sqrt(0.25 / T));
}

TEST(MaskInputs, NearUnitRatioZeroesEverything) {
  Rng rng(33);
  const auto x = random_series(50, 2, rng);
  const auto y = mask_inputs(x, 1.0 - 1e-12, rng);
  for (double v : y.values()) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(mask_inputs(x, 1.0, rng), ContractError);
}

// ---- Config ----

TEST(FrameworkConfig, ValidatesOrdering) {
  NewFrameworkConfig c;
  EXPECT_NO_THROW(c.validate());
  c.inference_horizon = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.collapse_onset = c.inference_horizon;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.collapse_onset = c.schedule_length + 1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.weight_mult = 21;  // 21 * 5 > 100
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.eta_div = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(FrameworkConfig, BaselineValidation) {
  BaselineConfig b;
  EXPECT_NO_THROW(b.validate());
  b.mask_ratio = 1.0;
  EXPECT_THROW(b.validate(), ConfigError);
  b = {};
  b.anneal_epochs = 0;
  EXPECT_THROW(b.validate(), ConfigError);
  b = {};
  b.variant = Variant::new_framework;
  EXPECT_THROW(b.validate(), ConfigError);
}

TEST(FrameworkConfig, VariantNamesRoundTrip) {
  for (auto v : {Variant::vanilla, Variant::kl_anneal, Variant::var_mask, Variant::skip_conn,
                 Variant::new_framework}) {
    EXPECT_EQ(variant_from_string(to_string(v)), v);
  }
  EXPECT_THROW(variant_from_string("beta_vae"), ConfigError);
}

TEST(KlAnneal, RampIsMonotoneFromZeroToOne) {
  EXPECT_DOUBLE_EQ(kl_anneal_weight(0.0, 10), 0.0);
  EXPECT_DOUBLE_EQ(kl_anneal_weight(5.0, 10), 0.5);
  EXPECT_DOUBLE_EQ(kl_anneal_weight(10.0, 10), 1.0);
  EXPECT_DOUBLE_EQ(kl_anneal_weight(25.0, 10), 1.0);
  double prev = 0.0;
  for (int k = 0; k <= 300; ++k) {
    const double w = kl_anneal_weight(k * 0.05, 10);
    EXPECT_GE(w, prev);
    EXPECT_LE(w, 1.0);
    prev = w;
  }
}

// ---- New framework losses ----

class FrameworkLossTest : public ::testing::Test {
 protected:
  Rng rng{41};
  Autoencoder model{small_shape(), rng};
  TimeSeries x = random_series(6, 2, rng);
  std::vector<double> eps = rng.normal_vector(4);
  // Constant beta = 0.1, so abar^i = 0.9^i exactly.
  NoiseSchedule flat = NoiseSchedule::linear(10, 0.1, 0.1);
  NewFrameworkConfig cfg = [] {
    NewFrameworkConfig c;
    c.inference_horizon = 2;
    c.collapse_onset = 3;
    c.weight_mult = 2;
    c.eta_div = 1;
    c.schedule_length = 10;
    c.floor = CollapseFloor::none;
    return c;
  }();

  double nll_at(std::span<const double> z) {
    Tape tape;
    return -gen_log_likelihood(tape, model.decoder, model.gen_head, tape.input(z), x).item();
  }
};

TEST_F(FrameworkLossTest, InferenceLossAtZeroUsesEncoderOutputWithFullWeight) {
  Tape tape;
  auto l = loss_vi(tape, model, flat, cfg, x, 0, eps);
  EXPECT_DOUBLE_EQ(l.weight, 1.0);
  EXPECT_NEAR(l.loss.item(), nll_at(model.encoder.encode(x)), 1e-12);
}

TEST_F(FrameworkLossTest, InferenceLossScalesByAlphaBar) {
  // gamma * j = 2 * 1 = 2, abar^2 = 0.81.
  Tape tape;
  auto l = loss_vi(tape, model, flat, cfg, x, 1, eps);
  EXPECT_NEAR(l.weight, 0.81, 1e-15);
  const auto z = forward_sample(flat, model.encoder.encode(x), 1, eps);
  EXPECT_NEAR(l.loss.item(), 0.81 * nll_at(z), 1e-12);
}

TEST_F(FrameworkLossTest, InferenceWeightNonIncreasingInJ) {
  const auto s = NoiseSchedule::linear(100, 1e-3, 0.2);
  NewFrameworkConfig c;
  double prev = 2.0;
  for (std::size_t j = 0; j <= c.inference_horizon; ++j) {
    const double w = inference_weight(s, c, j);
    EXPECT_LE(w, prev);
    prev = w;
  }
  Tape tape;
  EXPECT_THROW(loss_vi(tape, model, flat, cfg, x, 3, eps), ContractError);
}

TEST_F(FrameworkLossTest, CollapseWeightUsesCeilingOfKOverEta) {
  cfg.eta_div = 2;
  EXPECT_NEAR(collapse_weight(flat, cfg, 5), 1.0 - std::pow(0.9, 3), 1e-15);
  EXPECT_NEAR(collapse_weight(flat, cfg, 4), 1.0 - std::pow(0.9, 2), 1e-15);
  cfg.eta_div = 1;
  EXPECT_NEAR(collapse_weight(flat, cfg, 10), 1.0 - std::pow(0.9, 10), 1e-15);
}

TEST_F(FrameworkLossTest, CollapseWeightNearOneAtEndOfLongSchedule) {
  const auto s = NoiseSchedule::linear(100, 1e-3, 0.2);
  NewFrameworkConfig c;
  EXPECT_GT(collapse_weight(s, c, 100), 0.99);
  // A schedule that never noises leaves no penalty.
  EXPECT_NEAR(collapse_weight(NoiseSchedule::linear(10, 1e-15, 1e-15), cfg, 10), 0.0, 1e-12);
}

TEST_F(FrameworkLossTest, CollapseWeightAlwaysInUnitInterval) {
  for (std::size_t eta : {1u, 2u, 3u, 7u}) {
    cfg.eta_div = eta;
    for (std::size_t k = cfg.collapse_onset; k <= 10; ++k) {
      const double w = collapse_weight(flat, cfg, k);
      EXPECT_GE(w, 0.0);
      EXPECT_LE(w, 1.0);
    }
  }
}

TEST_F(FrameworkLossTest, CollapseLossHasPositiveSign) {
  Tape tape;
  auto l = loss_cs(tape, model, flat, cfg, x, 5, eps);
  const auto z = forward_sample(flat, model.encoder.encode(x), 5, eps);
  EXPECT_NEAR(l.loss.item(), -(1.0 - std::pow(0.9, 5)) * nll_at(z), 1e-12);
}

TEST_F(FrameworkLossTest, CollapseLossRejectsOutOfRangeK) {
  Tape tape;
  EXPECT_THROW(loss_cs(tape, model, flat, cfg, x, 2, eps), ContractError);
  EXPECT_THROW(loss_cs(tape, model, flat, cfg, x, 11, eps), ContractError);
}

TEST_F(FrameworkLossTest, FlooredCollapseLikelihoodIsBoundedBelow) {
  cfg.floor = CollapseFloor::standard_normal;
  // Push the decoder's predicted scale far below the data scale so its
  // likelihood is terrible.
  for (auto* p : model.gen_head.parameters()) {
    for (double& v : p->value.values()) v = 0.0;
  }
  double floor = 0.0;
  for (std::size_t t = 0; t < x.steps(); ++t) floor += standard_normal_log_density(x.row(t));
  Tape tape;
  auto l = loss_cs(tape, model, flat, cfg, x, 5, eps);
  // Zeroed head predicts N(0, 1): every step sits exactly on the floor.
  EXPECT_NEAR(l.log_likelihood.item(), floor, 1e-12);

  Rng r(5);
  for (int trial = 0; trial < 20; ++trial) {
    Autoencoder m(small_shape(), r);
    Tape t;
    auto lf = loss_cs(t, m, flat, cfg, x, 5, eps);
    EXPECT_GE(lf.log_likelihood.item(), floor - 1e-12);
  }
}

// ---- Training ----

std::vector<TimeSeries> constant_dataset(std::size_t n, std::size_t T, std::size_t D) {
  std::vector<TimeSeries> out;
  for (std::size_t i = 0; i < n; ++i) {
    TimeSeries x(T, D);
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t d = 0; d < D; ++d) x.at(t, d) = 0.5 + 0.1 * static_cast<double>(d);
    }
    out.push_back(std::move(x));
  }
  return out;
}

NewFrameworkConfig desk_framework() { return NewFrameworkConfig{}; }

TEST(AutoencoderTraining, OneStepIsDeterministic) {
  const auto data = constant_dataset(10, 6, 2);
  const auto s = NoiseSchedule::linear(100, 1e-3, 0.2);
  for (auto variant : {Variant::new_framework, Variant::vanilla, Variant::var_mask}) {
    std::vector<double> deltas[2];
    for (int run = 0; run < 2; ++run) {
      Rng init(7);
      Autoencoder m(small_shape(), init);
      const auto before = flat_params(m);
      AutoencoderTrainer tr(m, data, s, variant, desk_framework(), {}, {}, 99);
      tr.step();
      const auto after = flat_params(m);
      for (std::size_t k = 0; k < after.size(); ++k) deltas[run].push_back(after[k] - before[k]);
    }
    EXPECT_EQ(deltas[0], deltas[1]) << to_string(variant);
  }
}

TEST(AutoencoderTraining, RejectsEmptyDataAndMismatchedSchedule) {
  Rng init(8);
  Autoencoder m(small_shape(), init);
  const auto s = NoiseSchedule::linear(100, 1e-3, 0.2);
  const std::vector<TimeSeries> none;
  EXPECT_THROW(AutoencoderTrainer(m, none, s, Variant::vanilla, {}, {}, {}, 1), ConfigError);
  const auto data = constant_dataset(3, 6, 2);
  NewFrameworkConfig c;
  c.schedule_length = 50;
  EXPECT_THROW(AutoencoderTrainer(m, data, s, Variant::new_framework, c, {}, {}, 1), ConfigError);
  EXPECT_THROW(AutoencoderTrainer(m, data, s, Variant::skip_conn, {}, {}, {}, 1), ConfigError);
}

TEST(AutoencoderTraining, InferenceLossDecreasesOnConstantData) {
  const auto data = constant_dataset(10, 6, 2);
  const auto s = NoiseSchedule::linear(100, 1e-3, 0.2);
  Rng init(9);
  Autoencoder m(small_shape(), init);
  AutoencoderTrainer tr(m, data, s, Variant::new_framework, desk_framework(), {}, {}, 3);
  std::vector<double> vi;
  tr.run(200, [&](std::size_t, const StepStats& st) { vi.push_back(st.primary); });
  auto window = [&](std::size_t from) {
    return mean(std::span<const double>(vi).subspan(from, 40));
  };
  EXPECT_LT(window(160), window(0));
  // Smoothed curve over successive windows goes down throughout.
  EXPECT_LT(window(80), window(0));
  EXPECT_LT(window(160), window(80));
}

TEST(AutoencoderTraining, AnnealWeightRampsWithEpochs) {
  const auto data = constant_dataset(8, 6, 2);
  const auto s = NoiseSchedule::linear(100, 1e-3, 0.2);
  Rng init(10);
  Autoencoder m(small_shape(), init);
  BaselineConfig b;
  b.anneal_epochs = 2;
  AutoencoderTrainer tr(m, data, s, Variant::kl_anneal, {}, b, {}, 4);
  EXPECT_DOUBLE_EQ(tr.anneal_weight(), 0.0);
  tr.step();  // one batch of 8 = one epoch
  EXPECT_DOUBLE_EQ(tr.anneal_weight(), 0.5);
  tr.step();
  EXPECT_DOUBLE_EQ(tr.anneal_weight(), 1.0);
}

// ---- Diffusion on latents ----

double eval_ddpm_loss(const ReverseModel& model, const NoiseSchedule& s, const LatentSet& latents,
                      std::uint64_t seed) {
  Rng rng(seed);
  double total = 0.0;
  const int n = 2000;
  for (int k = 0; k < n; ++k) {
    const auto z0 = latents.draw(rng.uniform_int(0, latents.size() - 1), rng);
    const std::size_t i = rng.uniform_int(1, s.steps());
    const auto eps = rng.normal_vector(z0.size());
    total += ddpm_loss(s, model, z0, i, eps);
  }
  return total / n;
}

TEST(DiffusionTraining, PointMassLatentsConcentrateSamples) {
  const auto s = NoiseSchedule::linear(100, 1e-3, 0.2);
  LatentSet latents;
  const std::vector<double> v{1.5, -1.0};
  for (int k = 0; k < 16; ++k) latents.mean.push_back(v);
  Rng init(51);
  ReverseModel model(2, 32, 8, s, init);
  TrainSettings ts;
  ts.adam.learning_rate = 3e-3;
  DiffusionTrainer tr(model, latents, s, ts, 52);
  tr.run(3000);
  Rng rng(53);
  std::vector<double> m(2, 0.0);
  const int n = 300;
  for (int k = 0; k < n; ++k) {
    const auto z = sample_to_step(s, model, 2, 0, rng);
    m[0] += z[0] / n;
    m[1] += z[1] / n;
  }
  const double err = std::hypot(m[0] - v[0], m[1] - v[1]);
  EXPECT_LT(err, 0.1 * std::hypot(v[0], v[1]));
}

TEST(DiffusionTraining, LossHalvesOnMixtureLatents) {
  const auto s = NoiseSchedule::linear(100, 1e-3, 0.2);
  LatentSet latents;
  Rng data(61);
  for (int k = 0; k < 200; ++k) {
    const double c = k % 2 == 0 ? 2.0 : -2.0;
    latents.mean.push_back({c + 0.1 * data.normal(), -c + 0.1 * data.normal()});
  }
  Rng init(62);
  ReverseModel model(2, 32, 8, s, init);
  const double before = eval_ddpm_loss(model, s, latents, 63);
  TrainSettings ts;
  ts.adam.learning_rate = 3e-3;
  DiffusionTrainer tr(model, latents, s, ts, 64);
  tr.run(500);
  const double after = eval_ddpm_loss(model, s, latents, 63);
  EXPECT_LT(after, 0.5 * before) << "before " << before << " after " << after;
}

// Equal-weight mixture of N((1.5, 0.5), 0.3²I) and N((-0.5, 1.0), 0.3²I):
// mean (0.5, 0.75), E[z1²] = 1.34, E[z2²] = 0.715, E[z1 z2] = 0.125.
TEST(DiffusionTraining, SamplesMatchMixtureMoments) {
  const auto s = NoiseSchedule::linear(100, 1e-3, 0.2);
  LatentSet latents;
  latents.mean = {{2.0, 1.0}, {0.5, 2.0}};
  latents.stddev = {{0.3, 0.3}, {0.3, 0.3}};
  Rng init(65);
  ReverseModel model(2, 64, 16, s, init);
  TrainSettings ts;
  ts.batch_size = 16;
  ts.adam.learning_rate = 2e-3;
  DiffusionTrainer(model, latents, s, ts, 66).run(8000);
  // Low-rate, large-batch refinement settles the mixture weights.
  TrainSettings fine;
  fine.batch_size = 128;
  fine.adam.learning_rate = 1e-4;
  DiffusionTrainer(model, latents, s, fine, 99).run(4000);

  Rng rng(67);
  const int n = 10000;
  double m1 = 0, m2 = 0, s11 = 0, s22 = 0;
  for (int k = 0; k < n; ++k) {
    const auto z = sample_to_step(s, model, 2, 0, rng);
    m1 += z[0] / n;
    m2 += z[1] / n;
    s11 += z[0] * z[0] / n;
    s22 += z[1] * z[1] / n;
  }
  // Equal-weight mixture: E[z] = (1.25, 1.5), E[z1^2] = 2.215, E[z2^2] = 2.59.
  EXPECT_NEAR(m1, 1.25, 0.05 * 1.25);
  EXPECT_NEAR(m2, 1.5, 0.05 * 1.5);
  EXPECT_NEAR(s11, 2.215, 0.05 * 2.215);
  EXPECT_NEAR(s22, 2.59, 0.05 * 2.59);
}

TEST(DiffusionTraining, FrozenSeedsReproduceLossCurve) {
  const auto s = NoiseSchedule::linear(100, 1e-3, 0.2);
  LatentSet latents;
  latents.mean = {{0.5, 1.0}, {-1.0, 0.2}};
  latents.stddev = {{0.1, 0.1}, {0.2, 0.3}};
  std::vector<double> curves[2];
  for (int run = 0; run < 2; ++run) {
    Rng init(71);
    ReverseModel model(2, 16, 8, s, init);
    DiffusionTrainer tr(model, latents, s, {}, 72);
    tr.run(50, [&](std::size_t, double l) { curves[run].push_back(l); });
  }
  EXPECT_EQ(curves[0], curves[1]);
}

// ---- Collapsed posterior ----

TEST(CollapsedPosterior, LatentsAreStandardNormalForNonGaussianInputs) {
  SyntheticSpec spec;
  spec.kind = SyntheticKind::regime_switch;
  spec.count = 200;
  spec.seed = 81;
  const auto ds = gen_synthetic(spec);
  AutoencoderShape shape;
  shape.steps = spec.steps;
  shape.dim = spec.dim;
  Rng init(82);
  Autoencoder m(shape, init);
  force_collapsed_posterior(m.vi_head);

  Rng rng(83);
  const std::size_t n = 10000, dz = m.latent_dim();
  std::vector<std::vector<double>> per_dim(dz);
  for (std::size_t k = 0; k < n; ++k) {
    const auto v = m.encoder.encode(ds.series[k % ds.size()]);
    const auto eps = rng.normal_vector(dz);
    const auto post = m.vi_head.sample(v, eps);
    EXPECT_EQ(post.z, eps);
    for (std::size_t d = 0; d < dz; ++d) per_dim[d].push_back(post.z[d]);
    if (k == 0) EXPECT_DOUBLE_EQ(kl_diag_gaussian(post.mean, post.stddev), 0.0);
  }
  const double se = 1.0 / std::sqrt(static_cast<double>(n));
  for (std::size_t d = 0; d < dz; ++d) {
    EXPECT_GT(ks_p_value(ks_statistic_normal(per_dim[d]), n), 0.01) << "dim " << d;
    EXPECT_LT(std::abs(mean(per_dim[d])), 3.0 * se);
    // Var of the sample variance of N(0,1) is 2/n.
    EXPECT_LT(std::abs(variance(per_dim[d]) - 1.0), 3.0 * std::sqrt(2.0) * se);
  }
  // Off-diagonal covariance of a pair of dimensions.
  double cov = 0.0;
  for (std::size_t k = 0; k < n; ++k) cov += per_dim[0][k] * per_dim[1][k];
  EXPECT_LT(std::abs(cov / n), 3.0 * se);
}

// ---- Sampling ----

class SamplingTest : public ::testing::Test {
 protected:
  Rng init{91};
  Autoencoder model{small_shape(), init};
  NoiseSchedule s = NoiseSchedule::linear(100, 1e-3, 0.2);
  ReverseModel prior{4, 16, 8, s, init};
};

TEST_F(SamplingTest, SameSeedGivesSameSeries) {
  NewFrameworkConfig cfg;
  Rng a(5), b(5);
  const auto x = sample_new(model, prior, s, cfg, 6, a);
  const auto y = sample_new(model, prior, s, cfg, 6, b);
  EXPECT_EQ(as_vec(x.series), as_vec(y.series));
  EXPECT_EQ(x.z, y.z);
  EXPECT_LE(x.stop, cfg.inference_horizon);
}

TEST_F(SamplingTest, ZeroHorizonTakesFullReverseChain) {
  NewFrameworkConfig cfg;
  cfg.inference_horizon = 0;
  Rng a(6), b(6);
  const auto x = sample_new(model, prior, s, cfg, 6, a);
  EXPECT_EQ(x.stop, 0u);
  b.uniform_int(0, 0);  // the stop draw
  const auto z = sample_to_step(s, prior, 4, 0, b);
  EXPECT_EQ(x.z, z);
}

TEST_F(SamplingTest, StopStepsCoverTheHorizon) {
  NewFrameworkConfig cfg;
  Rng rng(7);
  std::vector<int> seen(cfg.inference_horizon + 1, 0);
  for (int k = 0; k < 120; ++k) ++seen[sample_new(model, prior, s, cfg, 2, rng).stop];
  for (int c : seen) EXPECT_GT(c, 0);
}

TEST(SamplingAfterTraining, Ar1AutocorrelationIsReproduced) {
  SyntheticSpec spec;
  spec.dim = 2;
  spec.count = 200;
  spec.seed = 101;
  const auto ds = gen_synthetic(spec);
  const auto s = NoiseSchedule::linear(100, 1e-3, 0.2);
  AutoencoderShape shape = small_shape(spec.steps, spec.dim);
  Rng init(102);
  Autoencoder m(shape, init);
  NewFrameworkConfig cfg;
  TrainSettings ts;
  ts.adam.learning_rate = 3e-3;
  AutoencoderTrainer tr(m, ds.series, s, Variant::new_framework, cfg, {}, ts, 103);
  tr.run(600);
  ReverseModel prior(shape.latent, 32, 8, s, init);
  DiffusionTrainer dt(prior, encoder_latents(m, ds.series), s, ts, 104);
  dt.run(1500);

  Rng rng(105);
  std::vector<TimeSeries> gen;
  for (int k = 0; k < 200; ++k) gen.push_back(sample_new(m, prior, s, cfg, spec.steps, rng).series);
  const double real = lag1_autocorrelation(feature_sequences(ds.series));
  const double fake = lag1_autocorrelation(feature_sequences(gen));
  EXPECT_LT(std::abs(real - fake), 0.15) << "real " << real << " generated " << fake;
}

}  // namespace
}  // namespace tsld
