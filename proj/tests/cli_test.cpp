#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "anesi/cli.hpp"
#include "anesi/errors.hpp"

using namespace anesi;
using namespace anesi::cli;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "anesi");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("anesi_cli_test_" + name);
  fs::remove_all(p);
  return p;
}

// A tiny config so a run takes well under a second.
fs::path tiny_config(const fs::path& dir) {
  fs::create_directories(dir);
  const fs::path p = dir / "tiny.json";
  std::ofstream(p) << R"({"epochs": 2, "batch_size": 8, "samples": 8, "beam_width": 8, "hidden": [16],
    "perception_hidden": [8], "train_pool": 200, "test_pool": 60, "eval_limit": 20, "prior_iters": 3})";
  return p;
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

// Allows every world digit, so it is unsound.
class PermissivePruner : public pruners::AdditionPruner {
 public:
  using AdditionPruner::AdditionPruner;
  PrunerMask world_mask(const Output&, std::span<const int>) const override { return PrunerMask(10, 1); }
};

}  // namespace

TEST(Cli, InvalidVariantIsConfigError) {
  const auto r = invoke({"train", "--variant", "bogus", "--out", scratch("bogus").string()});
  EXPECT_EQ(r.code, kConfigError);
  EXPECT_NE(r.err.find("bogus"), std::string::npos);
}

TEST(Cli, UnknownConfigKeyIsConfigError) {
  const fs::path dir = scratch("badkey");
  fs::create_directories(dir);
  std::ofstream(dir / "c.json") << R"({"epochz": 3})";
  EXPECT_EQ(invoke({"train", "--config", (dir / "c.json").string(), "--out", dir.string()}).code, kConfigError);
  std::ofstream(dir / "d.json") << R"({"epochs": "three"})";
  EXPECT_EQ(invoke({"train", "--config", (dir / "d.json").string(), "--out", dir.string()}).code, kConfigError);
}

TEST(Cli, MissingSubcommandOrFlagValue) {
  EXPECT_EQ(invoke({}).code, kConfigError);
  EXPECT_EQ(invoke({"train", "--n"}).code, kConfigError);
  EXPECT_EQ(invoke({"train", "--n", "0", "--out", scratch("n0").string()}).code, kConfigError);
}

TEST(Cli, TrainWritesOneMetricsLinePerEpoch) {
  const fs::path dir = scratch("train");
  const auto cfg = tiny_config(dir);
  const auto r = invoke({"train", "--config", cfg.string(), "--out", dir.string(), "--seed", "1"});
  ASSERT_EQ(r.code, kOk) << r.err;
  const auto ls = lines(slurp(dir / "metrics.jsonl"));
  ASSERT_EQ(ls.size(), 2u);
  const auto j = nlohmann::json::parse(ls[1]);
  for (const char* key : {"epoch", "variant", "N", "acc_symbolic", "acc_neural", "acc_digit", "loss_pred",
                          "loss_joint", "seconds"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  EXPECT_EQ(j["epoch"], 2);
  EXPECT_EQ(j["variant"], "predict");
  EXPECT_TRUE(j["loss_joint"].is_null());
  EXPECT_TRUE(fs::exists(dir / "checkpoint.bin"));
  const auto saved = nlohmann::json::parse(slurp(dir / "config.json"));
  EXPECT_EQ(saved["seed"], 1);
  EXPECT_EQ(saved["epochs"], 2);
}

TEST(Cli, FlagsOverrideConfigFile) {
  const fs::path dir = scratch("override");
  const auto cfg = tiny_config(dir);
  const auto r = invoke({"train", "--config", cfg.string(), "--out", dir.string(), "--epochs", "1", "--variant",
                         "explain"});
  ASSERT_EQ(r.code, kOk) << r.err;
  const auto ls = lines(slurp(dir / "metrics.jsonl"));
  ASSERT_EQ(ls.size(), 1u);
  const auto j = nlohmann::json::parse(ls[0]);
  EXPECT_EQ(j["variant"], "explain");
  EXPECT_TRUE(j["loss_joint"].is_number());
}

TEST(Cli, SeedFromEnvironmentWhenNotGiven) {
  const fs::path dir = scratch("env");
  const auto cfg = tiny_config(dir);
  setenv("ANESI_SEED", "77", 1);
  const auto r = invoke({"train", "--config", cfg.string(), "--out", dir.string(), "--epochs", "0"});
  unsetenv("ANESI_SEED");
  ASSERT_EQ(r.code, kOk) << r.err;
  EXPECT_EQ(nlohmann::json::parse(slurp(dir / "config.json"))["seed"], 77);
}

TEST(Cli, SameSeedGivesIdenticalMetrics) {
  const fs::path a = scratch("same_a"), b = scratch("same_b");
  for (const auto& dir : {a, b}) {
    const auto cfg = tiny_config(dir);
    ASSERT_EQ(invoke({"train", "--config", cfg.string(), "--out", dir.string(), "--seed", "5", "--variant",
                      "pruning", "--no-wallclock"})
                  .code,
              kOk);
  }
  EXPECT_EQ(slurp(a / "metrics.jsonl"), slurp(b / "metrics.jsonl"));
  EXPECT_EQ(slurp(a / "checkpoint.bin"), slurp(b / "checkpoint.bin"));
}

TEST(Cli, EvalReloadsCheckpoint) {
  const fs::path dir = scratch("eval");
  const auto cfg = tiny_config(dir);
  ASSERT_EQ(invoke({"train", "--config", cfg.string(), "--out", dir.string(), "--no-wallclock"}).code, kOk);
  const auto last = nlohmann::json::parse(lines(slurp(dir / "metrics.jsonl")).back());
  const auto r = invoke({"eval", "--out", dir.string(), "--mode", "symbolic"});
  ASSERT_EQ(r.code, kOk) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["acc_symbolic"], last["acc_symbolic"]);
  EXPECT_FALSE(j.contains("acc_neural"));
}

TEST(Cli, EvalWithoutCheckpointIsConfigError) {
  const fs::path dir = scratch("nockpt");
  fs::create_directories(dir);
  EXPECT_EQ(invoke({"eval", "--out", dir.string()}).code, kConfigError);
  const auto cfg = tiny_config(dir);
  ASSERT_EQ(invoke({"train", "--config", cfg.string(), "--out", dir.string(), "--epochs", "0"}).code, kOk);
  fs::remove(dir / "checkpoint.bin");
  EXPECT_EQ(invoke({"eval", "--out", dir.string()}).code, kConfigError);
}

TEST(Cli, TimingReportsOneSamplePerRepeat) {
  const auto r = invoke({"timing", "--n-list", "1,2", "--repeats", "1", "--hidden", "8"});
  ASSERT_EQ(r.code, kOk) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["samples"]["1"].size(), 1u);
  EXPECT_EQ(j["samples"]["2"].size(), 1u);
  EXPECT_GT(j["median_seconds"]["2"].get<double>(), 0.0);
  EXPECT_EQ(invoke({"timing", "--repeats", "0"}).code, kConfigError);
}

TEST(Cli, VerifyPruner) {
  const auto none = invoke({"verify-pruner", "--n-max", "0"});
  EXPECT_EQ(none.code, kOk);
  EXPECT_EQ(nlohmann::json::parse(none.out)["disagreements"], 0);
  const auto good = invoke({"verify-pruner", "--n-max", "1"});
  EXPECT_EQ(good.code, kOk) << good.err;

  std::ostringstream out, err;
  const int code = cmd_verify_pruner(
      1, 10, 0, [](int n) { return std::make_unique<PermissivePruner>(n); }, out, err);
  EXPECT_EQ(code, kPrunerDisagreement);
  EXPECT_FALSE(nlohmann::json::parse(out.str())["counterexamples"].empty());
  EXPECT_FALSE(err.str().empty());
}

TEST(Cli, GradestBench) {
  const auto r = invoke({"gradest-bench", "--iters", "50", "--beliefs", "2", "--repeats", "3"});
  ASSERT_EQ(r.code, kOk) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  ASSERT_EQ(j.size(), 2u);
  EXPECT_EQ(j[0]["variance"], 0.0);
}

TEST(RunConfig, JsonRoundTrip) {
  RunConfig a = desk_preset(4);
  a.train.variant = Variant::kNoPrior;
  a.flip_rate = 0.01;
  RunConfig b;
  b.apply_json(nlohmann::json::parse(a.to_json().dump()));
  EXPECT_EQ(a.to_json(), b.to_json());
  EXPECT_EQ(b.preset_name(), "desk-n4");
  EXPECT_THROW(make_preset("huge", 1), ConfigError);
}

TEST(RunConfig, IdxWithoutTestSplitHoldsOutATenth) {
  const fs::path dir = scratch("idx");
  fs::create_directories(dir);
  tasks::IdxDataset idx;
  idx.rows = 2;
  idx.cols = 2;
  for (int i = 0; i < 200; ++i) {
    idx.labels.push_back(static_cast<std::uint8_t>(i % 10));
    for (int p = 0; p < 4; ++p) idx.images.push_back(static_cast<std::uint8_t>((i * 7 + p) % 256));
  }
  tasks::write_idx(idx, dir / "img", dir / "lbl");
  RunConfig c;
  c.idx_images = (dir / "img").string();
  c.idx_labels = (dir / "lbl").string();
  const Datasets d = load_datasets(c);
  EXPECT_EQ(d.train.size() + d.test.size(), 100u);
  EXPECT_EQ(d.test.size(), 10u);
  EXPECT_EQ(d.test.feature_dim, 4u);
}
