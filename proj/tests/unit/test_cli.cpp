#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "test_util.hpp"
#include "v2v/train.hpp"
#include "v2v_cli/cli.hpp"

using v2v::testing::TempDir;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result cli(std::vector<std::string> args) {
  args.insert(args.begin(), "v2v");
  std::ostringstream out, err;
  const int code = v2v::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

nlohmann::json read_json(const fs::path& p) {
  std::ifstream in(p);
  return nlohmann::json::parse(in);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("cli");
    ASSERT_EQ(cli({"synth", "--out", (dir_->path() / "train").string(), "--count", "12", "--seed", "4"}).code, 0);
    ASSERT_EQ(cli({"synth", "--out", (dir_->path() / "test").string(), "--count", "4", "--seed", "5"}).code, 0);
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static std::string train_manifest() { return (dir_->path() / "train" / "manifest.jsonl").string(); }
  static std::string test_manifest() { return (dir_->path() / "test" / "manifest.jsonl").string(); }
  static std::vector<std::string> small_train(const fs::path& run) {
    return {"train", "--data", train_manifest(), "--run", run.string(), "--grid-size", "16", "--base-channels", "4",
            "--batch", "4", "--refine-epochs", "1", "--deterministic"};
  }
  static TempDir* dir_;
};

TempDir* CliTest::dir_ = nullptr;

}  // namespace

TEST_F(CliTest, TrainOneEpochProducesExactlyOneCheckpoint) {
  TempDir run("cli-run");
  auto args = small_train(run.path());
  args.insert(args.end(), {"--epochs", "1"});
  const Result r = cli(args);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(v2v::list_checkpoints(run.path()).size(), 1u);
  EXPECT_TRUE(fs::exists(run.path() / "refiner.v2v"));
  EXPECT_TRUE(fs::exists(run.path() / "config.json"));
}

TEST_F(CliTest, EveryTrainFlagRoundTripsIntoConfig) {
  TempDir run("cli-cfg");
  const std::vector<std::pair<std::string, std::string>> flags{
      {"--grid-size", "16"},   {"--cube-mm", "280"},    {"--sigma", "1.5"},          {"--lr", "0.0005"},
      {"--batch", "4"},        {"--epochs", "1"},       {"--base-channels", "4"},    {"--init-std", "0.002"},
      {"--augment", "off"},    {"--aug-rot", "30"},     {"--aug-scale-min", "0.9"}, {"--aug-scale-max", "1.1"},
      {"--aug-trans", "4"},    {"--seed", "17"},        {"--variant", "v2c"},        {"--refine", "off"},
      {"--refine-epochs", "2"}, {"--jobs", "1"}};
  std::vector<std::string> args{"train", "--data", train_manifest(), "--run", run.path().string(), "--deterministic"};
  for (const auto& [k, v] : flags) args.insert(args.end(), {k, v});
  const Result r = cli(args);
  ASSERT_EQ(r.code, 0) << r.err;
  const auto cfg = read_json(run.path() / "config.json").at("train");
  for (const auto& [k, v] : flags) {
    const auto& j = cfg.at(k.substr(2));
    const std::string got = j.is_string() ? j.get<std::string>() : j.dump();
    if (j.is_number()) {
      EXPECT_DOUBLE_EQ(j.get<double>(), std::stod(v)) << k;
    } else {
      EXPECT_EQ(got, v) << k;
    }
  }
  EXPECT_EQ(cfg.at("deterministic"), true);
  EXPECT_EQ(cfg.at("data"), train_manifest());
  EXPECT_FALSE(fs::exists(run.path() / "refiner.v2v"));
  const auto model = v2v::load_model(v2v::list_checkpoints(run.path()).front());
  EXPECT_EQ(model.config.sample.cube_mm, 280.0);
  EXPECT_EQ(model.config.optim.seed, 17u);
  EXPECT_EQ(model.config.sample.net.variant, v2v::Variant::v2c);
}

TEST_F(CliTest, EvalEnsembleIsNoWorseThanMemberMean) {
  TempDir run("cli-eval");
  auto args = small_train(run.path());
  args.insert(args.end(), {"--epochs", "3"});
  ASSERT_EQ(cli(args).code, 0);
  const Result r = cli({"eval", "--run", run.path().string(), "--data", test_manifest(), "--ensemble"});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"metrics.csv", "curve.csv", "predictions.txt", "ensemble.csv"}) {
    EXPECT_TRUE(fs::exists(run.path() / f)) << f;
  }
  std::istringstream csv(slurp(run.path() / "ensemble.csv"));
  std::string line;
  double member_mean = -1.0, ensemble = -1.0;
  while (std::getline(csv, line)) {
    const auto comma = line.find(',');
    if (line.rfind("member_mean,", 0) == 0) member_mean = std::stod(line.substr(comma + 1));
    if (line.rfind("ensemble,", 0) == 0) ensemble = std::stod(line.substr(comma + 1));
  }
  ASSERT_GT(member_mean, 0.0);
  EXPECT_LE(ensemble, member_mean);
  const auto cfg = read_json(run.path() / "config.json");
  EXPECT_TRUE(cfg.contains("train"));
  EXPECT_EQ(cfg.at("eval").at("ensemble"), true);
}

TEST_F(CliTest, PredictWritesOneLineForTheFrame) {
  TempDir run("cli-pred");
  auto args = small_train(run.path());
  args.insert(args.end(), {"--epochs", "1"});
  ASSERT_EQ(cli(args).code, 0);
  const auto depth = dir_->path() / "test" / "frames" / "000001.v2vd";
  const fs::path out = run.path() / "one.txt";
  const Result r = cli({"predict", "--run", run.path().string(), "--depth", depth.string(), "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string text = slurp(out);
  EXPECT_EQ(text.rfind("000001\t", 0), 0u);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 1);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\t'), 48);
}

TEST_F(CliTest, DeterministicTrainingIsByteIdentical) {
  TempDir a("cli-det-a"), b("cli-det-b");
  for (const auto* d : {&a, &b}) {
    auto args = small_train(d->path() / "run");
    args.insert(args.end(), {"--epochs", "2"});
    ASSERT_EQ(cli(args).code, 0);
  }
  for (const char* f : {"ckpt-epoch-1.v2v", "ckpt-epoch-2.v2v", "refiner.v2v", "train_log.csv"}) {
    EXPECT_EQ(slurp(a.path() / "run" / f), slurp(b.path() / "run" / f)) << f;
  }
}

TEST(Cli, ErrorsAreMachineReadable) {
  const Result unknown = cli({"train", "--data", "x", "--run", "y", "--bogus"});
  EXPECT_EQ(unknown.code, v2v::cli::kUsage);
  const auto j = nlohmann::json::parse(unknown.err);
  EXPECT_EQ(j.at("error"), "usage");
  EXPECT_EQ(j.at("exit_code"), v2v::cli::kUsage);

  EXPECT_EQ(cli({}).code, v2v::cli::kUsage);
  EXPECT_EQ(cli({"frobnicate"}).code, v2v::cli::kUsage);
  EXPECT_EQ(cli({"train", "--variant", "v3v"}).code, v2v::cli::kUsage);
  EXPECT_EQ(cli({"--help"}).code, 0);
}

TEST_F(CliTest, IncompatibleGridIsRejectedBeforeTraining) {
  TempDir run("cli-bad");
  const Result r = cli({"train", "--data", train_manifest(), "--run", run.path().string(), "--grid-size", "20"});
  EXPECT_EQ(r.code, v2v::cli::kInvalidArgument);
  const auto j = nlohmann::json::parse(r.err);
  EXPECT_EQ(j.at("error"), "invalid_argument");
  EXPECT_NE(j.at("message").get<std::string>().find("stage"), std::string::npos);
  EXPECT_TRUE(v2v::list_checkpoints(run.path()).empty());
}

TEST(Cli, GradcheckReportsMaxRelativeError) {
  const Result r = cli({"gradcheck", "--seeds", "1", "--coords", "5"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto pos = r.out.find("max rel. err = ");
  ASSERT_NE(pos, std::string::npos);
  EXPECT_LT(std::stod(r.out.substr(pos + 15)), 1e-4);
}
