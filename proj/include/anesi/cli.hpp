#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "anesi/gradest.hpp"
#include "anesi/pruners.hpp"
#include "anesi/train.hpp"

namespace anesi::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kConfigError = 2,
  kTrainingError = 3,
  kPrunerDisagreement = 4,
};

// Everything a training run needs. Serialized as a flat JSON object; see
// to_json() for the key names.
struct RunConfig {
  std::string preset = "desk";  // "desk" (desk-nX) or "paper"
  std::string task = "add";
  int n = 1;
  TrainConfig train;
  std::size_t train_pool = 6000;  // synthetic digits in the training pool
  std::size_t test_pool = 2000;
  std::size_t feature_dim = 16;
  double flip_rate = 0.0;
  double noise_std = 0.0;
  std::size_t eval_limit = 500;  // test instances for the per-epoch neural metric; 0 = all
  bool wallclock = true;
  std::string idx_images, idx_labels;
  std::string idx_test_images, idx_test_labels;
  std::string out = "runs/default";

  // Throws ConfigError on an unknown task, N < 1 or invalid training values.
  void validate() const;
  nlohmann::ordered_json to_json() const;
  // Overwrites the fields present in `j`. Unknown keys and wrong types throw
  // ConfigError.
  void apply_json(const nlohmann::json& j);
  std::string preset_name() const;  // e.g. "desk-n4"
};

// Desk-scale defaults for N digits: K = 100 samples, 2 x 128 hidden units,
// a synthetic pool sized to N.
RunConfig desk_preset(int n);
// The full-size hyperparameters (600 samples, 3 x 800 hidden, 100 epochs).
RunConfig paper_preset(int n);
RunConfig make_preset(const std::string& name, int n);

// Datasets named by the config: synthetic pools or IDX files.
struct Datasets {
  tasks::DigitDataset train;
  tasks::DigitDataset test;
};
Datasets load_datasets(const RunConfig& config);

// One JSON object per epoch, keys in a fixed order.
std::string metrics_line(const MetricsRecord& record, const RunConfig& config);

// Checkpoint with phi, theta and the prior parameters.
void save_state(const std::filesystem::path& path, const TrainState& state);
void load_state(const std::filesystem::path& path, TrainState& state);

TrainState make_state(const RunConfig& config, std::size_t feature_dim);

// Verbs. Each returns an ExitCode and writes its report to `out`.
int cmd_train(const RunConfig& config, std::ostream& out, std::ostream& err);

struct EvalOptions {
  std::filesystem::path run_dir;  // holds config.json and checkpoint.bin
  std::string mode = "both";      // symbolic, neural or both
  std::optional<std::size_t> beam;
  std::size_t limit = 0;
};
int cmd_eval(const EvalOptions& options, std::ostream& out, std::ostream& err);

struct TimingOptions {
  std::vector<int> n_list = {1, 2, 4, 8, 15};
  int repeats = 20;
  std::vector<std::size_t> hidden = {800, 800, 800};
  std::uint64_t seed = 0;
};
// Median seconds of one greedy output decoding per N, randomly initialized.
nlohmann::ordered_json timing_report(const TimingOptions& options);
int cmd_timing(const TimingOptions& options, std::ostream& out, std::ostream& err);

int cmd_verify_pruner(int n_max, std::uint64_t cases, std::uint64_t seed, const pruners::PrunerFactory& factory,
                      std::ostream& out, std::ostream& err);

int cmd_gradest_bench(const gradest::BenchConfig& config, std::ostream& out, std::ostream& err);

// Parses argv and dispatches; the process entry point.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace anesi::cli
