#include "anesi/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "anesi/errors.hpp"
#include "anesi/ndauto/checkpoint.hpp"

namespace anesi::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

void RunConfig::validate() const {
  if (task != "add") throw ConfigError("unknown task '" + task + "' (only 'add' is supported)");
  if (n < 1) throw ConfigError("--n must be at least 1");
  if (preset != "desk" && preset != "paper") throw ConfigError("unknown preset '" + preset + "'");
  train.validate();
  if (feature_dim < 10) throw ConfigError("feature_dim must be at least 10");
  if (flip_rate < 0.0 || flip_rate >= 0.5) throw ConfigError("flip_rate must be in [0, 0.5)");
  if (noise_std < 0.0) throw ConfigError("noise_std must be non-negative");
  if (idx_images.empty() != idx_labels.empty()) throw ConfigError("idx_images and idx_labels go together");
  if (idx_test_images.empty() != idx_test_labels.empty()) {
    throw ConfigError("idx_test_images and idx_test_labels go together");
  }
  if (idx_images.empty()) {
    const std::size_t per = 2 * static_cast<std::size_t>(n);
    if (train_pool < per || test_pool < per) throw ConfigError("digit pools are too small for one instance");
  }
  if (out.empty()) throw ConfigError("out directory must not be empty");
}

std::string RunConfig::preset_name() const { return preset + "-n" + std::to_string(n); }

ordered_json RunConfig::to_json() const {
  return ordered_json{
      {"preset", preset},
      {"task", task},
      {"n", n},
      {"variant", to_string(train.variant)},
      {"seed", train.seed},
      {"epochs", train.epochs},
      {"batch_size", train.batch_size},
      {"samples", train.samples},
      {"beam_width", train.beam_width},
      {"lr", train.lr},
      {"perception_lr", train.perception_lr},
      {"hidden", train.hidden},
      {"perception_hidden", train.perception_hidden},
      {"prior_capacity", train.prior_capacity},
      {"prior_init", train.prior_init},
      {"prior_iters", train.prior_fit.iters},
      {"prior_lr", train.prior_fit.lr},
      {"prior_l2", train.prior_fit.l2},
      {"prior_refit_every", train.prior_refit_every},
      {"train_pool", train_pool},
      {"test_pool", test_pool},
      {"feature_dim", feature_dim},
      {"flip_rate", flip_rate},
      {"noise_std", noise_std},
      {"eval_limit", eval_limit},
      {"wallclock", wallclock},
      {"idx_images", idx_images},
      {"idx_labels", idx_labels},
      {"idx_test_images", idx_test_images},
      {"idx_test_labels", idx_test_labels},
      {"out", out},
  };
}

namespace {

template <class T>
T get_as(const json& j, const std::string& key) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type");
  }
}

std::size_t get_count(const json& j, const std::string& key) {
  if (!j.is_number_integer() || j.get<long long>() < 0) {
    throw ConfigError("config key '" + key + "' must be a non-negative integer");
  }
  return j.get<std::size_t>();
}

std::vector<std::size_t> get_widths(const json& j, const std::string& key) {
  if (!j.is_array()) throw ConfigError("config key '" + key + "' must be an array of integers");
  std::vector<std::size_t> out;
  for (const auto& v : j) out.push_back(get_count(v, key));
  return out;
}

}  // namespace

void RunConfig::apply_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, v] : j.items()) {
    if (key == "preset") preset = get_as<std::string>(v, key);
    else if (key == "task") task = get_as<std::string>(v, key);
    else if (key == "n") n = get_as<int>(v, key);
    else if (key == "variant") train.variant = parse_variant(get_as<std::string>(v, key));
    else if (key == "seed") train.seed = get_as<std::uint64_t>(v, key);
    else if (key == "epochs") train.epochs = get_as<int>(v, key);
    else if (key == "batch_size") train.batch_size = get_count(v, key);
    else if (key == "samples") train.samples = get_count(v, key);
    else if (key == "beam_width") train.beam_width = get_count(v, key);
    else if (key == "lr") train.lr = get_as<double>(v, key);
    else if (key == "perception_lr") train.perception_lr = get_as<double>(v, key);
    else if (key == "hidden") train.hidden = get_widths(v, key);
    else if (key == "perception_hidden") train.perception_hidden = get_widths(v, key);
    else if (key == "prior_capacity") train.prior_capacity = get_count(v, key);
    else if (key == "prior_init") train.prior_init = get_as<double>(v, key);
    else if (key == "prior_iters") train.prior_fit.iters = get_as<int>(v, key);
    else if (key == "prior_lr") train.prior_fit.lr = get_as<double>(v, key);
    else if (key == "prior_l2") train.prior_fit.l2 = get_as<double>(v, key);
    else if (key == "prior_refit_every") train.prior_refit_every = get_as<int>(v, key);
    else if (key == "train_pool") train_pool = get_count(v, key);
    else if (key == "test_pool") test_pool = get_count(v, key);
    else if (key == "feature_dim") feature_dim = get_count(v, key);
    else if (key == "flip_rate") flip_rate = get_as<double>(v, key);
    else if (key == "noise_std") noise_std = get_as<double>(v, key);
    else if (key == "eval_limit") eval_limit = get_count(v, key);
    else if (key == "wallclock") wallclock = get_as<bool>(v, key);
    else if (key == "idx_images") idx_images = get_as<std::string>(v, key);
    else if (key == "idx_labels") idx_labels = get_as<std::string>(v, key);
    else if (key == "idx_test_images") idx_test_images = get_as<std::string>(v, key);
    else if (key == "idx_test_labels") idx_test_labels = get_as<std::string>(v, key);
    else if (key == "out") out = get_as<std::string>(v, key);
    else throw ConfigError("unknown config key '" + key + "'");
  }
}

RunConfig desk_preset(int n) {
  RunConfig c;
  c.preset = "desk";
  c.n = n;
  const auto un = static_cast<std::size_t>(std::max(n, 1));
  c.train.epochs = 10;
  c.train.samples = 100;
  c.train.beam_width = 100;
  c.train.hidden = {128, 128};
  c.train_pool = std::max<std::size_t>(6000, 4000 * un);
  c.test_pool = 2000 * un;
  c.eval_limit = 500;
  return c;
}

RunConfig paper_preset(int n) {
  RunConfig c;
  c.preset = "paper";
  c.n = n;
  c.train.epochs = 100;
  c.train.samples = 600;
  c.train.beam_width = 600;
  c.train.hidden = {800, 800, 800};
  c.train_pool = 60000;
  c.test_pool = 10000;
  c.eval_limit = 0;
  return c;
}

RunConfig make_preset(const std::string& name, int n) {
  if (name == "desk") return desk_preset(n);
  if (name == "paper") return paper_preset(n);
  throw ConfigError("unknown preset '" + name + "' (expected desk or paper)");
}

Datasets load_datasets(const RunConfig& config) {
  Datasets d;
  if (config.idx_images.empty()) {
    tasks::SyntheticDigitConfig sc;
    sc.feature_dim = config.feature_dim;
    sc.flip_rate = config.flip_rate;
    sc.noise_std = config.noise_std;
    d.train = tasks::build_synthetic_dataset(config.n, config.train_pool, sc, config.train.seed * 2 + 1);
    d.test = tasks::build_synthetic_dataset(config.n, config.test_pool, sc, config.train.seed * 2 + 2);
    return d;
  }
  const auto train_idx = tasks::load_idx(config.idx_images, config.idx_labels);
  d.train = tasks::build_idx_dataset(config.n, train_idx, config.train.seed * 2 + 1);
  if (!config.idx_test_images.empty()) {
    d.test = tasks::build_idx_dataset(config.n, tasks::load_idx(config.idx_test_images, config.idx_test_labels),
                                      config.train.seed * 2 + 2);
    return d;
  }
  // Hold out the last tenth of the instances.
  const std::size_t held = std::max<std::size_t>(1, d.train.size() / 10);
  if (held >= d.train.size()) throw ConfigError("IDX file holds too few digits to split off a test set");
  d.test.n = d.train.n;
  d.test.feature_dim = d.train.feature_dim;
  const auto cut = static_cast<std::ptrdiff_t>(d.train.size() - held);
  d.test.instances.assign(d.train.instances.begin() + cut, d.train.instances.end());
  d.test.features.assign(d.train.features.begin() + cut, d.train.features.end());
  d.train.instances.resize(d.train.size() - held);
  d.train.features.resize(d.train.instances.size());
  return d;
}

std::string metrics_line(const MetricsRecord& r, const RunConfig& config) {
  const ordered_json j{
      {"epoch", r.epoch},
      {"variant", to_string(config.train.variant)},
      {"N", config.n},
      {"acc_symbolic", r.acc_symbolic},
      {"acc_neural", r.acc_neural},
      {"acc_digit", r.acc_digit},
      {"loss_pred", r.loss_pred ? ordered_json(*r.loss_pred) : ordered_json(nullptr)},
      {"loss_joint", r.loss_joint ? ordered_json(*r.loss_joint) : ordered_json(nullptr)},
      {"seconds", r.seconds},
  };
  return j.dump();
}

void save_state(const fs::path& path, const TrainState& state) {
  nd::NamedTensors all;
  for (const nd::ParamStore* store : {&state.phi, &state.theta, &state.prior.params()}) {
    const auto named = nd::to_named(*store);
    all.insert(all.end(), named.begin(), named.end());
  }
  // Write then rename, so a killed run leaves the previous checkpoint intact.
  const fs::path tmp = path.string() + ".tmp";
  nd::save_checkpoint(tmp, all);
  fs::rename(tmp, path);
}

void load_state(const fs::path& path, TrainState& state) {
  const auto named = nd::load_checkpoint(path);
  std::size_t matched = 0;
  for (const auto& [name, tensor] : named) {
    nd::ParamStore* store = nullptr;
    for (nd::ParamStore* s : {&state.phi, &state.theta, &state.prior.params()}) {
      if (s->contains(name)) store = s;
    }
    if (!store) throw ConfigError("checkpoint holds unknown parameter '" + name + "'");
    nd::Tensor& dst = store->value(name);
    if (!dst.same_shape(tensor)) throw ConfigError("checkpoint shape mismatch for '" + name + "'");
    dst = tensor;
    ++matched;
  }
  const std::size_t expected = state.phi.size() + state.theta.size() + state.prior.params().size();
  if (matched != expected) throw ConfigError("checkpoint does not cover every parameter of the model");
}

TrainState make_state(const RunConfig& config, std::size_t feature_dim) {
  auto c = std::make_shared<tasks::AdditionTask>(config.n);
  auto pruner = std::make_shared<pruners::AdditionPruner>(config.n);
  return TrainState(config.train, std::move(c), std::move(pruner), feature_dim);
}

int cmd_train(const RunConfig& config, std::ostream& out, std::ostream& err) {
  config.validate();
  const fs::path dir(config.out);
  fs::create_directories(dir);
  {
    std::ofstream cfg(dir / "config.json");
    cfg << config.to_json().dump(2) << "\n";
  }
  const Datasets data = load_datasets(config);
  TrainState state = make_state(config, data.train.feature_dim);
  std::ofstream metrics(dir / "metrics.jsonl", std::ios::trunc);
  if (!metrics) throw ConfigError("cannot write " + (dir / "metrics.jsonl").string());
  try {
    train(state, data.train, data.test, TrainRunOptions{config.eval_limit, config.wallclock},
          [&](const MetricsRecord& r) {
            const std::string line = metrics_line(r, config);
            metrics << line << '\n' << std::flush;
            out << line << '\n' << std::flush;
            save_state(dir / "checkpoint.bin", state);
          });
  } catch (const TrainingError& e) {
    err << "training aborted at iteration " << state.iteration << ": " << e.what() << "\n";
    save_state(dir / "checkpoint.failed.bin", state);
    return kTrainingError;
  }
  if (config.train.epochs == 0) save_state(dir / "checkpoint.bin", state);
  return kOk;
}

int cmd_eval(const EvalOptions& options, std::ostream& out, std::ostream& /*err*/) {
  const fs::path cfg_path = options.run_dir / "config.json";
  const fs::path ckpt = options.run_dir / "checkpoint.bin";
  if (!fs::exists(cfg_path)) throw ConfigError("missing " + cfg_path.string());
  if (!fs::exists(ckpt)) throw ConfigError("missing checkpoint " + ckpt.string());
  if (options.mode != "symbolic" && options.mode != "neural" && options.mode != "both") {
    throw ConfigError("unknown eval mode '" + options.mode + "'");
  }
  std::ifstream in(cfg_path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("cannot parse " + cfg_path.string() + ": " + e.what());
  }
  RunConfig config;
  config.apply_json(j);
  config.validate();
  const Datasets data = load_datasets(config);
  TrainState state = make_state(config, data.train.feature_dim);
  load_state(ckpt, state);

  const std::size_t beam = options.beam.value_or(config.train.beam_width);
  ordered_json report{{"run", options.run_dir.string()}, {"N", config.n}, {"beam", beam}};
  if (options.mode != "neural") {
    const EvalResult r = evaluate(state, data.test, EvalMode::kSymbolic, beam, options.limit);
    report["acc_symbolic"] = r.accuracy;
    report["acc_digit"] = r.digit_accuracy;
    report["count"] = r.count;
  }
  if (options.mode != "symbolic") {
    const EvalResult r = evaluate(state, data.test, EvalMode::kNeural, beam, options.limit);
    report["acc_neural"] = r.accuracy;
    report["count"] = r.count;
  }
  out << report.dump() << "\n";
  return kOk;
}

ordered_json timing_report(const TimingOptions& options) {
  if (options.repeats < 1) throw ConfigError("timing needs at least one repeat");
  ordered_json medians = ordered_json::object(), samples = ordered_json::object();
  for (int n : options.n_list) {
    if (n < 1) throw ConfigError("timing N must be at least 1");
    const tasks::AdditionTask task(n);
    const pruners::AdditionPruner pruner(n);
    const InferenceModel model(task.worlds(), task.outputs(), InferenceConfig{options.hidden, false});
    nd::ParamStore phi;
    std::mt19937_64 rng(options.seed);
    model.init(phi, rng);
    const Belief belief = DirichletPrior(task.worlds(), 1.0).sample(rng);
    const std::vector<double> context = belief.flatten();
    const MaskFn mask = output_mask_fn(&pruner);
    model.pred.greedy(phi, context, mask);  // warm-up
    std::vector<double> times;
    for (int r = 0; r < options.repeats; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      const Sequence y = model.pred.greedy(phi, context, mask);
      times.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
      if (y.size() != task.outputs().size()) throw TrainingError("decoding returned a short output");
    }
    std::vector<double> sorted = times;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t m = sorted.size();
    const double median = m % 2 ? sorted[m / 2] : 0.5 * (sorted[m / 2 - 1] + sorted[m / 2]);
    medians[std::to_string(n)] = median;
    samples[std::to_string(n)] = times;
  }
  return ordered_json{{"hidden", options.hidden}, {"repeats", options.repeats}, {"median_seconds", medians},
                      {"samples", samples}};
}

int cmd_timing(const TimingOptions& options, std::ostream& out, std::ostream& /*err*/) {
  out << timing_report(options).dump() << "\n";
  return kOk;
}

int cmd_verify_pruner(int n_max, std::uint64_t cases, std::uint64_t seed, const pruners::PrunerFactory& factory,
                      std::ostream& out, std::ostream& err) {
  if (n_max < 0) throw ConfigError("--n-max must be non-negative");
  const pruners::VerifyReport report = pruners::verify_pruner(factory, n_max, cases, seed);
  const ordered_json j{{"n_max", report.n_max},
                       {"cases", report.cases},
                       {"disagreements", report.disagreements},
                       {"counterexamples", report.counterexamples}};
  out << j.dump() << "\n";
  if (report.ok()) return kOk;
  err << report.disagreements << " pruner disagreements; first counterexamples:\n";
  for (const auto& c : report.counterexamples) err << "  " << c << "\n";
  return kPrunerDisagreement;
}

int cmd_gradest_bench(const gradest::BenchConfig& config, std::ostream& out, std::ostream& /*err*/) {
  ordered_json arr = ordered_json::array();
  for (const auto& r : gradest::run_benchmark(config)) arr.push_back(ordered_json::parse(r.to_json().dump()));
  out << arr.dump() << "\n";
  return kOk;
}

namespace {

std::optional<std::uint64_t> env_seed() {
  const char* s = std::getenv("ANESI_SEED");
  if (!s || !*s) return std::nullopt;
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(s, &used);
    if (used != std::string(s).size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(std::string("ANESI_SEED is not an unsigned integer: ") + s);
  }
}

json read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::exception& e) {
    throw ConfigError("cannot parse config file " + path + ": " + e.what());
  }
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Approximate neurosymbolic inference experiments"};
  app.require_subcommand(1);

  // train
  auto* train_cmd = app.add_subcommand("train", "train a model and write metrics.jsonl and checkpoint.bin");
  std::string config_path, task, variant, preset, out_dir, idx_images, idx_labels, idx_test_images, idx_test_labels;
  int n = 1, epochs = 0;
  std::uint64_t seed = 0;
  std::size_t beam = 0;
  bool no_wallclock = false;
  auto* o_config = train_cmd->add_option("--config", config_path, "JSON config file");
  auto* o_task = train_cmd->add_option("--task", task, "task name (add)");
  auto* o_n = train_cmd->add_option("--n", n, "digits per number");
  auto* o_variant = train_cmd->add_option("--variant", variant, "predict, explain, pruning or no-prior");
  auto* o_preset = train_cmd->add_option("--preset", preset, "desk or paper");
  auto* o_seed = train_cmd->add_option("--seed", seed, "random seed");
  auto* o_out = train_cmd->add_option("--out", out_dir, "output directory");
  auto* o_beam = train_cmd->add_option("--beam", beam, "beam width for neural prediction");
  auto* o_epochs = train_cmd->add_option("--epochs", epochs, "number of epochs");
  auto* o_img = train_cmd->add_option("--idx-images", idx_images, "IDX image file");
  auto* o_lbl = train_cmd->add_option("--idx-labels", idx_labels, "IDX label file");
  auto* o_timg = train_cmd->add_option("--idx-test-images", idx_test_images, "IDX test image file");
  auto* o_tlbl = train_cmd->add_option("--idx-test-labels", idx_test_labels, "IDX test label file");
  train_cmd->add_flag("--no-wallclock", no_wallclock, "write 0 seconds so metrics are byte-reproducible");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a trained run");
  EvalOptions eval_opts;
  std::string run_dir;
  std::size_t eval_beam = 0;
  eval_cmd->add_option("--out", run_dir, "run directory written by train")->required();
  eval_cmd->add_option("--mode", eval_opts.mode, "symbolic, neural or both");
  auto* o_eval_beam = eval_cmd->add_option("--beam", eval_beam, "beam width (default: the run's beam)");
  eval_cmd->add_option("--limit", eval_opts.limit, "evaluate only the first instances");

  // timing
  auto* timing_cmd = app.add_subcommand("timing", "median single-input inference time per N");
  TimingOptions timing_opts;
  timing_cmd->add_option("--n-list", timing_opts.n_list, "values of N")->delimiter(',');
  timing_cmd->add_option("--repeats", timing_opts.repeats, "timed decodings per N");
  timing_cmd->add_option("--hidden", timing_opts.hidden, "hidden widths")->delimiter(',');
  timing_cmd->add_option("--seed", timing_opts.seed, "random seed");

  // verify-pruner
  auto* verify_cmd = app.add_subcommand("verify-pruner", "check the addition pruner against the completion oracle");
  int n_max = 3;
  std::uint64_t cases = 100000, verify_seed = 0;
  verify_cmd->add_option("--n-max", n_max, "largest N to check");
  verify_cmd->add_option("--cases", cases, "random decisions at N = 3");
  verify_cmd->add_option("--seed", verify_seed, "random seed");

  // gradest-bench
  auto* bench_cmd = app.add_subcommand("gradest-bench", "surrogate vs score-function gradient estimators");
  gradest::BenchConfig bench;
  bench_cmd->add_option("--vars", bench.num_vars, "latent variables");
  bench_cmd->add_option("--card", bench.card, "options per variable");
  bench_cmd->add_option("--beliefs", bench.test_beliefs, "test beliefs");
  bench_cmd->add_option("--repeats", bench.repeats, "estimates per belief");
  bench_cmd->add_option("--sf-samples", bench.sf_samples, "draws per score-function estimate");
  bench_cmd->add_option("--iters", bench.fit.iters, "outcome model fitting steps");
  bench_cmd->add_option("--seed", bench.seed, "random seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n";
    return kConfigError;
  }

  try {
    if (*train_cmd) {
      json file = json::object();
      if (o_config->count()) file = read_config_file(config_path);
      if (!file.is_object()) throw ConfigError("config file must hold a JSON object");
      int chosen_n = 1;
      if (o_n->count()) chosen_n = n;
      else if (file.contains("n")) chosen_n = get_as<int>(file["n"], "n");
      std::string chosen_preset = "desk";
      if (o_preset->count()) chosen_preset = preset;
      else if (file.contains("preset")) chosen_preset = get_as<std::string>(file["preset"], "preset");

      RunConfig config = make_preset(chosen_preset, chosen_n);
      config.apply_json(file);
      config.n = chosen_n;
      config.preset = chosen_preset;
      if (o_task->count()) config.task = task;
      if (o_variant->count()) config.train.variant = parse_variant(variant);
      if (o_seed->count()) {
        config.train.seed = seed;
      } else if (!file.contains("seed")) {
        if (const auto s = env_seed()) config.train.seed = *s;
      }
      if (o_out->count()) config.out = out_dir;
      if (o_beam->count()) config.train.beam_width = beam;
      if (o_epochs->count()) config.train.epochs = epochs;
      if (o_img->count()) config.idx_images = idx_images;
      if (o_lbl->count()) config.idx_labels = idx_labels;
      if (o_timg->count()) config.idx_test_images = idx_test_images;
      if (o_tlbl->count()) config.idx_test_labels = idx_test_labels;
      if (no_wallclock) config.wallclock = false;
      return cmd_train(config, out, err);
    }
    if (*eval_cmd) {
      eval_opts.run_dir = run_dir;
      if (o_eval_beam->count()) eval_opts.beam = eval_beam;
      return cmd_eval(eval_opts, out, err);
    }
    if (*timing_cmd) return cmd_timing(timing_opts, out, err);
    if (*verify_cmd) {
      return cmd_verify_pruner(n_max, cases, verify_seed,
                               [](int k) { return std::make_unique<pruners::AdditionPruner>(k); }, out, err);
    }
    if (*bench_cmd) return cmd_gradest_bench(bench, out, err);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const ParseError& e) {
    err << "input error: " << e.what() << "\n";
    return kConfigError;
  } catch (const TrainingError& e) {
    err << "training error: " << e.what() << "\n";
    return kTrainingError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kFailure;
}

}  // namespace anesi::cli
