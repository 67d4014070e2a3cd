#pragma once

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "tsld/bench/experiment.hpp"

namespace tsld::cli {

enum ExitCode : int { kOk = 0, kRuntime = 1, kUsage = 2, kConfig = 3 };

struct Invocation {
  std::string subcommand;
  std::string config;
  std::string out = "out";
  std::string checkpoint;
  std::string resume;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  std::optional<std::size_t> count;
  int verbosity = 1;  // 0 quiet, 1 stage summaries, 2 progress every 100 updates
};

namespace detail {

inline std::string one_line(std::string s) {
  for (char& ch : s)
    if (ch == '\n' || ch == '\r') ch = ' ';
  return s;
}

/// Config file plus --set and --seed overrides, parsed and validated.
inline ExperimentConfig resolve_config(const Invocation& inv) {
  if (inv.config.empty()) throw ConfigError("--config is required for '" + inv.subcommand + "'");
  nlohmann::json j = read_json_file(inv.config);
  for (const auto& o : inv.overrides) apply_override(j, o);
  if (inv.seed) j["seed"] = *inv.seed;
  return experiment_config_from_json(j);
}

/// A trained state from --checkpoint. Overrides may only touch the parts of
/// the config that do not change the trained models.
inline ExperimentState resolve_checkpoint(const Invocation& inv) {
  if (inv.checkpoint.empty()) throw ConfigError("--checkpoint is required for '" + inv.subcommand + "'");
  for (const auto& o : inv.overrides) {
    if (o.rfind("diagnostics.", 0) != 0 && o.rfind("name=", 0) != 0) {
      throw ConfigError("override '" + o + "' would change a trained model; only diagnostics.* and name apply");
    }
  }
  ExperimentState s = from_checkpoint(load_checkpoint(inv.checkpoint));
  nlohmann::json j = to_json(s.config);
  for (const auto& o : inv.overrides) apply_override(j, o);
  if (inv.seed) j["seed"] = *inv.seed;
  s.config = experiment_config_from_json(j);
  return s;
}

inline TrainingHooks progress_hooks(const Invocation& inv, std::ostream& err) {
  TrainingHooks h;
  if (inv.verbosity >= 2) {
    h.on_step = [&err](const char* stage, std::size_t step, double loss) {
      if (step % 100 == 0) err << stage << " step " << step << " loss " << loss << '\n';
    };
  }
  return h;
}

inline nlohmann::json header(const ExperimentConfig& c) {
  return {{"config", to_json(c)}, {"seeds", StageSeeds::from(c).to_json()}, {"versions", versions_json()}};
}

inline nlohmann::json trainer_json(const TrainerState& t) {
  return {{"steps", t.steps}, {"final_loss", finite_or_null(t.last_loss)}};
}

inline int gen_data(const Invocation& inv, std::ostream& out) {
  const ExperimentConfig c = resolve_config(inv);
  std::filesystem::create_directories(inv.out);
  const Dataset full = c.data.source == "csv" ? load_csv(c.data.csv_path, c.data.csv) : gen_synthetic(c.data.synthetic);
  const auto path = std::filesystem::path(inv.out) / "data.csv";
  write_csv(full, path.string());
  nlohmann::json report = header(c);
  report["data"] = {{"path", path.string()}, {"series", full.size()}, {"steps", full.steps()}, {"dim", full.dim()}};
  write_text(std::filesystem::path(inv.out) / "data.json", report.dump(2) + "\n");
  if (inv.verbosity >= 1) out << "wrote " << full.size() << " series to " << path.string() << '\n';
  return kOk;
}

inline int train(const Invocation& inv, std::ostream& out, std::ostream& err) {
  const ExperimentConfig c = resolve_config(inv);
  std::optional<ExperimentState> resumed;
  if (!inv.resume.empty()) resumed = from_checkpoint(load_checkpoint(inv.resume));
  if (resumed) adopt_config(*resumed, c);
  std::filesystem::create_directories(inv.out);
  const ReportFiles files{inv.out};
  auto [training, eval] = load_experiment_data(c);
  ExperimentState s = resumed ? std::move(*resumed)
                              : ExperimentState::initialize(c, training.steps(), training.dim(), training.norm);
  TrainingHooks h = progress_hooks(inv, err);
  h.on_checkpoint = [&](ExperimentState& st) { save_checkpoint(to_checkpoint(st), files.checkpoint().string()); };
  auto write = [&](const nlohmann::json& status) {
    nlohmann::json report = header(s.config);
    report["stage"] = s.stage;
    report["autoencoder"] = trainer_json(s.autoencoder_progress);
    report["prior"] = trainer_json(s.prior_progress);
    report["checkpoint_path"] = files.checkpoint().string();
    if (!status.empty()) report["status"] = status;
    write_text(files.dir / "train.json", report.dump(2) + "\n");
  };
  try {
    train_experiment(s, training, h);
  } catch (const TrainingError& e) {
    write({{"error", e.what()}, {"failed_step", e.step()}});
    throw;
  }
  write({});
  if (inv.verbosity >= 1) out << "trained to stage '" << s.stage << "', checkpoint " << files.checkpoint().string() << '\n';
  return kOk;
}

inline int sample(const Invocation& inv, std::ostream& out) {
  const ExperimentState s = resolve_checkpoint(inv);
  const std::size_t n = inv.count.value_or(s.config.diagnostics.generated);
  if (n < 1) throw ConfigError("--n must be >= 1");
  std::filesystem::create_directories(inv.out);
  const ReportFiles files{inv.out};
  const auto samples = generate(s, n, StageSeeds::from(s.config).sampling);
  Dataset gen{"generated", "model:" + s.config.name, {}, Normalization::identity(s.norm.mean.size())};
  auto latents = nlohmann::json::array();
  for (const auto& g : samples) {
    gen.series.push_back(s.norm.invert(g.series));
    latents.push_back({{"stop", g.stop}, {"z", g.z}});
  }
  write_csv(gen, files.generated_csv().string());
  nlohmann::json report = header(s.config);
  report["checkpoint"] = inv.checkpoint;
  report["count"] = n;
  report["latents"] = std::move(latents);
  write_text(files.dir / "samples.json", report.dump(1) + "\n");
  if (inv.verbosity >= 1) out << "wrote " << n << " series to " << files.generated_csv().string() << '\n';
  return kOk;
}

inline int diagnose_cmd(const Invocation& inv, std::ostream& out) {
  const ExperimentState s = resolve_checkpoint(inv);
  const std::size_t n = inv.count.value_or(s.config.diagnostics.population);
  if (n < 2) throw ConfigError("--n must be >= 2 to aggregate profiles");
  std::filesystem::create_directories(inv.out);
  const ReportFiles files{inv.out};
  const StageSeeds seeds = StageSeeds::from(s.config);
  const auto samples = generate(s, n, seeds.sampling);
  const auto profiles = diagnose(s, samples, seeds.diagnostics);
  const ProfileSummary summary = aggregate_profiles(profiles);
  write_profiles(files, summary, profiles);
  const std::size_t T = summary.steps();
  nlohmann::json report = header(s.config);
  report["checkpoint"] = inv.checkpoint;
  report["population"] = n;
  report["global_dependency_first"] = finite_or_null(summary.global.mean[0]);
  report["global_dependency_last"] = finite_or_null(summary.global.mean[T - 1]);
  report["local_dependency_late_mean"] = finite_or_null(late_local_dependency(summary));
  report["profiles"] = {{"csv", files.profile_csv().filename().string()},
                        {"series", files.profiles_json().filename().string()}};
  write_text(files.dir / "diagnose.json", report.dump(2) + "\n");
  if (inv.verbosity >= 1) {
    out << "m(t,0) first " << summary.global.mean[0] << " last " << summary.global.mean[T - 1] << "; profile "
        << files.profile_csv().string() << '\n';
  }
  return kOk;
}

inline int eval(const Invocation& inv, std::ostream& out) {
  const ExperimentState s = resolve_checkpoint(inv);
  std::filesystem::create_directories(inv.out);
  auto [training, held] = load_experiment_data(s.config);
  const ExperimentResult r = evaluate_experiment(s, training, held);
  write_report(ReportFiles{inv.out}, s, r);
  if (inv.verbosity >= 1) out << "wasserstein " << r.metrics.at("wasserstein").get<double>() << '\n';
  return kOk;
}

inline int run(const Invocation& inv, std::ostream& out, std::ostream& err) {
  const ExperimentConfig c = resolve_config(inv);
  std::optional<ExperimentState> resumed;
  if (!inv.resume.empty()) resumed = from_checkpoint(load_checkpoint(inv.resume));
  const ExperimentResult r = run_experiment(c, inv.out, progress_hooks(inv, err), std::move(resumed));
  if (inv.verbosity >= 1) {
    out << "report " << ReportFiles{inv.out}.report().string() << "; wasserstein "
        << r.metrics.at("wasserstein").get<double>() << '\n';
  }
  return kOk;
}

}  // namespace detail

/// Executes a parsed invocation. Library errors become a single
/// `error: <category>: <message>` line on `err`.
inline int dispatch(const Invocation& inv, std::ostream& out, std::ostream& err) {
  try {
    if (inv.subcommand == "gen-data") return detail::gen_data(inv, out);
    if (inv.subcommand == "train") return detail::train(inv, out, err);
    if (inv.subcommand == "sample") return detail::sample(inv, out);
    if (inv.subcommand == "diagnose") return detail::diagnose_cmd(inv, out);
    if (inv.subcommand == "eval") return detail::eval(inv, out);
    if (inv.subcommand == "run") return detail::run(inv, out, err);
    err << "error: usage: unknown subcommand '" << inv.subcommand << "'\n";
    return kUsage;
  } catch (const ConfigError& e) {
    err << "error: " << e.category() << ": " << detail::one_line(e.what()) << '\n';
    return kConfig;
  } catch (const Error& e) {
    err << "error: " << e.category() << ": " << detail::one_line(e.what()) << '\n';
    return kRuntime;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: io: " << detail::one_line(e.what()) << '\n';
    return kRuntime;
  } catch (const std::exception& e) {
    err << "error: internal: " << detail::one_line(e.what()) << '\n';
    return kRuntime;
  }
}

/// Parses the command line and dispatches it.
inline int main(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Time-series latent diffusion with posterior-collapse diagnostics", "tsld"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1, 1);
  Invocation inv;
  int verbose = 0;
  bool quiet = false;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--out,-o", inv.out, "Output directory")->capture_default_str();
    sub->add_option("--seed", inv.seed, "Override the master seed");
    sub->add_option("--set", inv.overrides, "Override a config field, e.g. training.prior_steps=500");
    sub->add_flag("-v,--verbose", verbose, "More progress output (repeatable)");
    sub->add_flag("-q,--quiet", quiet, "No progress output");
  };
  auto with_config = [&](CLI::App* sub) { sub->add_option("--config,-c", inv.config, "Experiment config (JSON)")->required(); };
  auto with_checkpoint = [&](CLI::App* sub) {
    sub->add_option("--checkpoint", inv.checkpoint, "Checkpoint written by train or run")->required();
  };

  auto* gen = app.add_subcommand("gen-data", "Write the configured dataset as CSV");
  with_config(gen);
  common(gen);
  auto* tr = app.add_subcommand("train", "Train both stages and write a checkpoint");
  with_config(tr);
  tr->add_option("--resume", inv.resume, "Continue from this checkpoint");
  common(tr);
  auto* sm = app.add_subcommand("sample", "Draw series from a trained model");
  with_checkpoint(sm);
  sm->add_option("--n", inv.count, "Number of series");
  common(sm);
  auto* dg = app.add_subcommand("diagnose", "Dependency profiles of generated series");
  with_checkpoint(dg);
  dg->add_option("--n", inv.count, "Number of series to profile");
  common(dg);
  auto* ev = app.add_subcommand("eval", "Score a trained model and write the report bundle");
  with_checkpoint(ev);
  common(ev);
  auto* rn = app.add_subcommand("run", "Train, evaluate and write the report bundle");
  with_config(rn);
  rn->add_option("--resume", inv.resume, "Continue from this checkpoint");
  common(rn);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << detail::one_line(e.what()) << '\n' << app.help();
    return kUsage;
  }
  inv.subcommand = app.get_subcommands().front()->get_name();
  inv.verbosity = quiet ? 0 : 1 + verbose;
  return dispatch(inv, out, err);
}

}  // namespace tsld::cli
