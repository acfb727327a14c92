#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "anesi/infer.hpp"
#include "anesi/ndauto/mlp.hpp"
#include "anesi/ndauto/params.hpp"
#include "anesi/ndauto/tape.hpp"
#include "anesi/prior.hpp"
#include "anesi/problem.hpp"
#include "anesi/pruners.hpp"
#include "anesi/tasks.hpp"

namespace anesi {

enum class Variant { kPredict, kExplain, kPruning, kNoPrior };

Variant parse_variant(const std::string& name);
std::string to_string(Variant v);

// Shared per-digit classifier f_theta: every world variable is read from its
// own slice of the feature vector by the same MLP. Parameters live under
// "perc/".
class PerceptionModel {
 public:
  PerceptionModel() = default;
  PerceptionModel(std::size_t num_vars, std::size_t feature_dim, std::vector<std::size_t> hidden,
                  std::size_t classes = 10);

  std::size_t num_vars() const { return num_vars_; }
  std::size_t feature_dim() const { return feature_dim_; }
  std::size_t classes() const { return classes_; }
  SpaceSpec space() const { return SpaceSpec{std::vector<int>(num_vars_, static_cast<int>(classes_))}; }
  const nd::Mlp& net() const { return net_; }

  void init(nd::ParamStore& params, std::mt19937_64& rng) const;
  // features: (B x num_vars * feature_dim). Returns flattened beliefs (B x num_vars * classes).
  nd::Var beliefs(nd::Tape& tape, const nd::ParamStore& params, const nd::Tensor& features) const;
  std::vector<Belief> beliefs(const nd::ParamStore& params, const nd::Tensor& features) const;

 private:
  std::size_t num_vars_ = 0;
  std::size_t feature_dim_ = 0;
  std::size_t classes_ = 10;
  nd::Mlp net_;
};

struct TrainConfig {
  double lr = 1e-3;
  double perception_lr = 1e-3;
  int epochs = 100;
  std::size_t batch_size = 16;
  std::size_t samples = 600;     // forward-process draws per iteration
  std::size_t beam_width = 600;  // evaluation beam
  std::vector<std::size_t> hidden = {800, 800, 800};
  std::vector<std::size_t> perception_hidden = {64};
  std::size_t prior_capacity = 2500;
  double prior_init = 0.1;
  PriorFitConfig prior_fit;
  int prior_refit_every = 1;
  Variant variant = Variant::kPredict;
  std::uint64_t seed = 0;

  // Throws ConfigError on non-positive counts or rates.
  void validate() const;
};

struct MetricsRecord {
  int epoch = 0;
  double acc_symbolic = 0.0;
  double acc_neural = 0.0;
  double acc_digit = 0.0;
  std::optional<double> loss_pred;
  std::optional<double> loss_joint;
  double seconds = 0.0;
};

// ---- losses. Each returns the batch mean as a (1 x 1) node.

// -log q_p(c(w) | P).
nd::Var loss_pred(nd::Tape& tape, const nd::ParamStore& phi, const InferenceModel& model,
                  std::span<const Belief> beliefs, std::span<const World> worlds, const SymbolicFn& c,
                  const Pruner* pruner = nullptr);
// (log q(w, c(w) | P) - log p(w | P))^2 with log p(w | P) held constant.
nd::Var loss_joint_match(nd::Tape& tape, const nd::ParamStore& phi, const InferenceModel& model,
                         std::span<const Belief> beliefs, std::span<const World> worlds, const SymbolicFn& c,
                         const Pruner* pruner = nullptr);
// Draws w ~ q_e(w | y, P) under the pruner (no gradient through the draw),
// then scores it like loss_joint_match. The drawn worlds are appended to
// `drawn` when given.
nd::Var loss_joint_match_onpolicy(nd::Tape& tape, const nd::ParamStore& phi, const InferenceModel& model,
                                  std::span<const Belief> beliefs, std::span<const Output> targets,
                                  const Pruner* pruner, std::mt19937_64& rng, std::vector<World>* drawn = nullptr);
// -log q_p(y | P = f_theta(x)).
nd::Var loss_perception(nd::Tape& tape, const nd::ParamStore& phi, const InferenceModel& model,
                        const nd::ParamStore& theta, const PerceptionModel& perception, const nd::Tensor& features,
                        std::span<const Output> ys, const Pruner* pruner = nullptr);
// -log q_e(w | y = 1, P = f_theta(x)).
nd::Var loss_perception_supervised(nd::Tape& tape, const nd::ParamStore& phi, const InferenceModel& model,
                                   const nd::ParamStore& theta, const PerceptionModel& perception,
                                   const nd::Tensor& features, std::span<const World> worlds);
// -log q_p(y = 1 | P = f_theta(x)).
nd::Var loss_semantic(nd::Tape& tape, const nd::ParamStore& phi, const InferenceModel& model,
                      const nd::ParamStore& theta, const PerceptionModel& perception, const nd::Tensor& features);

// Gradients restricted to the parameters held in `store`.
nd::Gradients restrict_to(const nd::Gradients& grads, const nd::ParamStore& store);

// w ~ p(w | P), one categorical draw per variable.
World sample_world(const Belief& belief, std::mt19937_64& rng);

// Forward process draws used to train the inference model.
struct ForwardSamples {
  std::vector<Belief> beliefs;
  std::vector<World> worlds;
};
ForwardSamples sample_forward(const DirichletPrior& prior, std::size_t count, std::mt19937_64& rng);
// Same, with beliefs taken round-robin from `pool` instead of a prior.
ForwardSamples sample_forward(std::span<const Belief> pool, std::size_t count, std::mt19937_64& rng);

// Trains the inference model alone against a fixed prior for `steps` Adam
// steps of `batch` forward draws. Predict and no-prior use loss_pred, the
// other variants the joint matching loss. Returns the loss of each step.
std::vector<double> fit_inference(const InferenceModel& model, nd::ParamStore& phi, const DirichletPrior& prior,
                                  const SymbolicFn& c, Variant variant, const Pruner* pruner, std::size_t steps,
                                  std::size_t batch, double lr, std::mt19937_64& rng);

struct Batch {
  nd::Tensor features;  // (B x num_vars * feature_dim)
  std::vector<Output> ys;
  std::vector<World> worlds;  // true digits, only used for metrics
};
Batch make_batch(const tasks::DigitDataset& data, std::span<const std::size_t> indices);

struct StepStats {
  double loss_inference = 0.0;
  double loss_perception = 0.0;
};

// Everything one training run owns.
struct TrainState {
  TrainConfig config;
  std::shared_ptr<const SymbolicFn> c;
  std::shared_ptr<const Pruner> pruner;  // used by the pruning variant only
  InferenceModel model;
  PerceptionModel perception;
  nd::ParamStore phi;
  nd::ParamStore theta;
  DirichletPrior prior;
  BeliefBuffer buffer;
  std::mt19937_64 rng;
  std::int64_t iteration = 0;

  TrainState(TrainConfig config, std::shared_ptr<const SymbolicFn> c, std::shared_ptr<const Pruner> pruner,
             std::size_t feature_dim);
  const Pruner* active_pruner() const;
};

// One iteration: beliefs from f_theta, buffer update, prior refit, inference
// update on `samples` forward draws, then the perception update on the same
// batch. Throws TrainingError on a non-finite loss or gradient.
StepStats train_step(TrainState& state, const Batch& batch);

enum class EvalMode { kSymbolic, kNeural };

struct EvalResult {
  double accuracy = 0.0;        // exact match of the full output
  double digit_accuracy = 0.0;  // argmax of each belief row vs the true digit
  std::size_t count = 0;
};

// Symbolic: c(argmax rows of f_theta(x)). Neural: beam search on q_p. `limit`
// > 0 evaluates only the first `limit` instances.
EvalResult evaluate(const TrainState& state, const tasks::DigitDataset& data, EvalMode mode,
                    std::size_t beam_width, std::size_t limit = 0);

struct TrainRunOptions {
  std::size_t eval_limit = 0;  // instances used for the neural metric per epoch
  bool wallclock = true;       // false writes 0 seconds for reproducible logs
};

// Runs config.epochs epochs and reports a MetricsRecord after each.
std::vector<MetricsRecord> train(TrainState& state, const tasks::DigitDataset& train_set,
                                 const tasks::DigitDataset& test_set, const TrainRunOptions& options,
                                 const std::function<void(const MetricsRecord&)>& on_epoch = {});

}  // namespace anesi
