#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "tsld/cli/app.hpp"

namespace tsld {
namespace {

namespace fs = std::filesystem;

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("tsld_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

struct Outcome {
  int code;
  std::string out, err;
};

Outcome invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "tsld");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::main(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

const std::string kDesk = std::string(TSLD_CONFIG_DIR) + "/desk.json";

std::vector<std::string> tiny_overrides() {
  return {"--set", "data.count=40", "data.steps=6", "data.dim=2", "data.holdout=10", "model.latent=4",
          "model.hidden=12", "model.prior_hidden=16", "model.prior_embed=8", "training.autoencoder_steps=10",
          "training.prior_steps=15", "training.batch_size=4", "diagnostics.population=4",
          "diagnostics.path_samples=4", "diagnostics.generated=8", "diagnostics.projections=16"};
}

std::vector<std::string> with(std::vector<std::string> head, const std::vector<std::string>& tail) {
  head.insert(head.end(), tail.begin(), tail.end());
  return head;
}

std::string first_line(const std::string& s) { return s.substr(0, s.find('\n')); }

TEST(Cli, UnknownSubcommandIsUsageError) {
  const auto r = invoke({"bogus"});
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(first_line(r.err).rfind("error: usage: ", 0), 0u) << r.err;
  EXPECT_NE(r.err.find("Subcommands:"), std::string::npos);
}

TEST(Cli, UnknownFlagIsUsageError) {
  EXPECT_EQ(invoke({"run", "--config", kDesk, "--frobnicate"}).code, 2);
  EXPECT_EQ(invoke({}).code, 2);
  EXPECT_EQ(invoke({"run"}).code, 2);  // --config missing
}

TEST(Cli, HelpAndVersionSucceed) {
  EXPECT_EQ(invoke({"--help"}).code, 0);
  const auto v = invoke({"--version"});
  EXPECT_EQ(v.code, 0);
  EXPECT_NE(v.out.find(kVersion), std::string::npos);
}

TEST(Cli, InvalidConfigExitsThreeBeforeWriting) {
  const auto dir = scratch_dir("badcfg") / "out";
  for (const auto& args : std::vector<std::vector<std::string>>{
           {"run", "--config", "/nonexistent/cfg.json", "--out", dir.string()},
           {"run", "--config", kDesk, "--set", "model.latent=0", "--out", dir.string()},
           {"train", "--config", kDesk, "--set", "data.no_such_key=1", "--out", dir.string()},
           {"gen-data", "--config", kDesk, "--set", "data.kind=\"walk\"", "--out", dir.string()}}) {
    const auto r = invoke(args);
    EXPECT_EQ(r.code, 3) << args[0];
    EXPECT_EQ(r.err.rfind("error: config: ", 0), 0u) << r.err;
    EXPECT_EQ(r.err.find('\n'), r.err.size() - 1) << "single line expected";
  }
  EXPECT_FALSE(fs::exists(dir));
}

TEST(Cli, BadCheckpointIsRuntimeError) {
  const auto dir = scratch_dir("badck");
  { std::ofstream(dir / "ck.json") << "{\"format\": \"something else\"}"; }
  const auto r = invoke({"eval", "--checkpoint", (dir / "ck.json").string(), "--out", (dir / "o").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(r.err.rfind("error: format: ", 0), 0u) << r.err;
  EXPECT_EQ(invoke({"sample", "--checkpoint", (dir / "missing.json").string()}).code, 1);
}

TEST(Cli, RunWritesBundleAndEchoesSeed) {
  const auto dir = scratch_dir("run");
  const auto r = invoke(with({"run", "-q", "--config", kDesk, "--seed", "77", "--out", dir.string()}, tiny_overrides()));
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(r.out.empty());
  const ReportFiles f{dir};
  for (const auto& p : {f.report(), f.metrics_json(), f.metrics_csv(), f.profile_csv(), f.profiles_json(),
                        f.generated_csv(), f.checkpoint()}) {
    EXPECT_TRUE(fs::exists(p)) << p;
  }
  const auto report = nlohmann::json::parse(slurp(f.report()));
  EXPECT_EQ(report["config"]["seed"], 77);
  EXPECT_EQ(report["metrics"]["seed"], 77);
  EXPECT_EQ(report["config"]["training"]["prior_steps"], 15);
}

TEST(Cli, SeedOverrideChangesStochasticOutputs) {
  const auto a = scratch_dir("seed_a"), b = scratch_dir("seed_b"), c = scratch_dir("seed_c");
  const auto base = tiny_overrides();
  ASSERT_EQ(invoke(with({"run", "-q", "--config", kDesk, "--seed", "5", "--out", a.string()}, base)).code, 0);
  ASSERT_EQ(invoke(with({"run", "-q", "--config", kDesk, "--seed", "5", "--out", b.string()}, base)).code, 0);
  ASSERT_EQ(invoke(with({"run", "-q", "--config", kDesk, "--seed", "6", "--out", c.string()}, base)).code, 0);
  EXPECT_EQ(slurp(ReportFiles{a}.metrics_json()), slurp(ReportFiles{b}.metrics_json()));
  EXPECT_EQ(slurp(ReportFiles{a}.generated_csv()), slurp(ReportFiles{b}.generated_csv()));
  EXPECT_EQ(slurp(ReportFiles{a}.checkpoint()), slurp(ReportFiles{b}.checkpoint()));
  EXPECT_NE(slurp(ReportFiles{a}.generated_csv()), slurp(ReportFiles{c}.generated_csv()));
  EXPECT_NE(slurp(ReportFiles{a}.checkpoint()), slurp(ReportFiles{c}.checkpoint()));
}

TEST(Cli, CheckpointSubcommandsProduceArtifacts) {
  const auto dir = scratch_dir("stages");
  const auto train_dir = dir / "train";
  ASSERT_EQ(invoke(with({"train", "-q", "--config", kDesk, "--out", train_dir.string()}, tiny_overrides())).code, 0);
  const std::string ck = (train_dir / "checkpoint.json").string();
  const auto trained = nlohmann::json::parse(slurp(train_dir / "train.json"));
  EXPECT_EQ(trained["stage"], "trained");
  EXPECT_EQ(trained["prior"]["steps"], 15);

  const auto sample_dir = dir / "sample";
  ASSERT_EQ(invoke({"sample", "-q", "--checkpoint", ck, "--n", "3", "--out", sample_dir.string()}).code, 0);
  const std::string csv = slurp(sample_dir / "generated.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 3 * 6);
  EXPECT_EQ(nlohmann::json::parse(slurp(sample_dir / "samples.json"))["latents"].size(), 3u);

  const auto diag_dir = dir / "diagnose";
  ASSERT_EQ(invoke({"diagnose", "-q", "--checkpoint", ck, "--n", "3", "--out", diag_dir.string()}).code, 0);
  EXPECT_EQ(slurp(diag_dir / "profile.csv").rfind("t,measure,mean,sigma,n\n", 0), 0u);
  EXPECT_EQ(nlohmann::json::parse(slurp(diag_dir / "profiles.json"))["series"].size(), 3u);
  EXPECT_EQ(invoke({"diagnose", "--checkpoint", ck, "--n", "1", "--out", diag_dir.string()}).code, 3);

  const auto eval_dir = dir / "eval";
  ASSERT_EQ(invoke({"eval", "-q", "--checkpoint", ck, "--out", eval_dir.string()}).code, 0);
  EXPECT_TRUE(fs::exists(ReportFiles{eval_dir}.report()));

  // Overrides that would alter the trained model are refused.
  EXPECT_EQ(invoke({"eval", "--checkpoint", ck, "--set", "model.hidden=3", "--out", eval_dir.string()}).code, 3);
}

TEST(Cli, EvalOfTrainedCheckpointMatchesRun) {
  const auto dir = scratch_dir("eval_vs_run");
  ASSERT_EQ(invoke(with({"run", "-q", "--config", kDesk, "--out", (dir / "run").string()}, tiny_overrides())).code, 0);
  const std::string ck = ReportFiles{dir / "run"}.checkpoint().string();
  ASSERT_EQ(invoke({"eval", "-q", "--checkpoint", ck, "--out", (dir / "eval").string()}).code, 0);
  EXPECT_EQ(slurp(ReportFiles{dir / "run"}.metrics_json()), slurp(ReportFiles{dir / "eval"}.metrics_json()));
}

TEST(Cli, TrainResumeExtendsPriorBudget) {
  const auto dir = scratch_dir("resume");
  const auto base = tiny_overrides();
  ASSERT_EQ(invoke(with({"train", "-q", "--config", kDesk, "--out", (dir / "a").string()}, base)).code, 0);
  auto longer = base;
  longer.push_back("training.prior_steps=25");
  ASSERT_EQ(invoke(with({"train", "-q", "--config", kDesk, "--resume", (dir / "a" / "checkpoint.json").string(),
                         "--out", (dir / "b").string()},
                        longer))
                .code,
            0);
  ASSERT_EQ(invoke(with({"train", "-q", "--config", kDesk, "--out", (dir / "c").string()}, longer)).code, 0);
  EXPECT_EQ(nlohmann::json::parse(slurp(dir / "b" / "train.json"))["prior"]["steps"], 25);
  EXPECT_EQ(slurp(dir / "b" / "checkpoint.json"), slurp(dir / "c" / "checkpoint.json"));

  auto other_model = base;
  other_model.push_back("model.hidden=13");
  EXPECT_EQ(invoke(with({"train", "-q", "--config", kDesk, "--resume", (dir / "a" / "checkpoint.json").string(),
                         "--out", (dir / "d").string()},
                        other_model))
                .code,
            3);
}

TEST(Cli, GenDataWritesDatasetCsv) {
  const auto dir = scratch_dir("gen");
  ASSERT_EQ(invoke(with({"gen-data", "-q", "--config", kDesk, "--out", dir.string()}, tiny_overrides())).code, 0);
  const std::string csv = slurp(dir / "data.csv");
  EXPECT_EQ(csv.rfind("series_id,step,f1,f2\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 40 * 6);
  const auto again = scratch_dir("gen2");
  ASSERT_EQ(invoke(with({"gen-data", "-q", "--config", kDesk, "--out", again.string()}, tiny_overrides())).code, 0);
  EXPECT_EQ(csv, slurp(again / "data.csv"));
}

}  // namespace
}  // namespace tsld
