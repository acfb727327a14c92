#include "anesi/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "anesi/errors.hpp"
#include "anesi/ndauto/ops.hpp"

namespace anesi {

using nd::Tensor;
using nd::Var;

Variant parse_variant(const std::string& name) {
  if (name == "predict") return Variant::kPredict;
  if (name == "explain") return Variant::kExplain;
  if (name == "pruning") return Variant::kPruning;
  if (name == "no-prior") return Variant::kNoPrior;
  throw ConfigError("unknown variant '" + name + "' (expected predict, explain, pruning or no-prior)");
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kPredict: return "predict";
    case Variant::kExplain: return "explain";
    case Variant::kPruning: return "pruning";
    case Variant::kNoPrior: return "no-prior";
  }
  return "?";
}

PerceptionModel::PerceptionModel(std::size_t num_vars, std::size_t feature_dim, std::vector<std::size_t> hidden,
                                 std::size_t classes)
    : num_vars_(num_vars), feature_dim_(feature_dim), classes_(classes) {
  if (num_vars == 0 || feature_dim == 0 || classes < 2) throw ConfigError("invalid perception model shape");
  std::vector<std::size_t> widths{feature_dim};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(classes);
  net_ = nd::Mlp("perc", std::move(widths));
}

void PerceptionModel::init(nd::ParamStore& params, std::mt19937_64& rng) const { net_.init(params, rng); }

Var PerceptionModel::beliefs(nd::Tape& tape, const nd::ParamStore& params, const Tensor& features) const {
  if (features.cols() != num_vars_ * feature_dim_) throw ConfigError("feature width does not match perception");
  const std::size_t rows = features.rows();
  Var x = tape.constant(features.reshaped({rows * num_vars_, feature_dim_}));
  Var probs = nd::softmax(net_.forward(tape, params, x));
  return nd::reshape(probs, {rows, num_vars_ * classes_});
}

std::vector<Belief> PerceptionModel::beliefs(const nd::ParamStore& params, const Tensor& features) const {
  if (features.cols() != num_vars_ * feature_dim_) throw ConfigError("feature width does not match perception");
  const std::size_t rows = features.rows();
  Tensor lp = net_.forward(params, features.reshaped({rows * num_vars_, feature_dim_}));
  nd::log_softmax_rows(lp);
  std::vector<Belief> out;
  out.reserve(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    std::vector<std::vector<double>> belief_rows(num_vars_, std::vector<double>(classes_));
    for (std::size_t v = 0; v < num_vars_; ++v) {
      for (std::size_t c = 0; c < classes_; ++c) belief_rows[v][c] = std::exp(lp.at(r * num_vars_ + v, c));
    }
    out.emplace_back(std::move(belief_rows));
  }
  return out;
}

void TrainConfig::validate() const {
  if (!(lr > 0.0) || !(perception_lr >= 0.0)) throw ConfigError("learning rates must be positive");
  if (epochs < 0) throw ConfigError("epochs must be non-negative");
  if (batch_size == 0 || samples == 0 || beam_width == 0) {
    throw ConfigError("batch size, samples and beam width must be positive");
  }
  for (std::size_t h : hidden) {
    if (h == 0) throw ConfigError("hidden widths must be positive");
  }
  for (std::size_t h : perception_hidden) {
    if (h == 0) throw ConfigError("perception hidden widths must be positive");
  }
  if (prior_capacity == 0 || !(prior_init > 0.0)) throw ConfigError("invalid prior settings");
  if (prior_fit.iters < 0 || !(prior_fit.lr >= 0.0) || !(prior_fit.l2 >= 0.0)) {
    throw ConfigError("invalid prior fit settings");
  }
  if (prior_refit_every < 1) throw ConfigError("prior refit interval must be at least 1");
}

namespace {

std::vector<Output> outputs_of(const SymbolicFn& c, std::span<const World> worlds) {
  std::vector<Output> ys;
  ys.reserve(worlds.size());
  for (const auto& w : worlds) ys.push_back(c(w));
  return ys;
}

Var negative_mean(Var v) { return nd::scale(nd::mean(v), -1.0); }

Var joint_match_from(nd::Tape& tape, const nd::ParamStore& phi, const InferenceModel& model,
                     std::span<const Belief> beliefs, std::span<const Output> ys, std::span<const World> worlds,
                     const Pruner* pruner) {
  const Tensor ctx = belief_context(beliefs);
  Tensor target = Tensor::matrix(beliefs.size(), 1);
  for (std::size_t r = 0; r < beliefs.size(); ++r) target[r] = world_log_prob(beliefs[r], worlds[r]);
  Var p = tape.constant(ctx);
  Var lq = nd::add(pred_log_prob(tape, phi, model, p, ys, pruner), expl_log_prob(tape, phi, model, p, ys, worlds, pruner));
  return nd::mean(nd::square(nd::sub(lq, tape.constant(std::move(target)))));
}

void require_finite(Var loss, const char* what) {
  if (!std::isfinite(loss.value().item())) {
    throw TrainingError(std::string("non-finite ") + what + " loss: " + std::to_string(loss.value().item()));
  }
}

}  // namespace

Var loss_pred(nd::Tape& tape, const nd::ParamStore& phi, const InferenceModel& model, std::span<const Belief> beliefs,
              std::span<const World> worlds, const SymbolicFn& c, const Pruner* pruner) {
  if (beliefs.size() != worlds.size()) throw ConfigError("beliefs and worlds differ in count");
  const auto ys = outputs_of(c, worlds);
  return negative_mean(pred_log_prob(tape, phi, model, tape.constant(belief_context(beliefs)), ys, pruner));
}

Var loss_joint_match(nd::Tape& tape, const nd::ParamStore& phi, const InferenceModel& model,
                     std::span<const Belief> beliefs, std::span<const World> worlds, const SymbolicFn& c,
                     const Pruner* pruner) {
  if (beliefs.size() != worlds.size()) throw ConfigError("beliefs and worlds differ in count");
  const auto ys = outputs_of(c, worlds);
  return joint_match_from(tape, phi, model, beliefs, ys, worlds, pruner);
}

Var loss_joint_match_onpolicy(nd::Tape& tape, const nd::ParamStore& phi, const InferenceModel& model,
                              std::span<const Belief> beliefs, std::span<const Output> targets, const Pruner* pruner,
                              std::mt19937_64& rng, std::vector<World>* drawn) {
  if (!model.expl) throw ConfigError("on-policy joint matching needs an explanation model");
  if (beliefs.size() != targets.size()) throw ConfigError("beliefs and targets differ in count");
  const Tensor ectx = explanation_context(beliefs, targets, model.outputs);
  const auto samples = model.expl->sample(phi, ectx, rng, world_mask_fn(pruner, targets));
  std::vector<World> worlds;
  worlds.reserve(samples.seqs.size());
  for (const auto& s : samples.seqs) worlds.emplace_back(s);
  if (drawn) drawn->insert(drawn->end(), worlds.begin(), worlds.end());
  return joint_match_from(tape, phi, model, beliefs, targets, worlds, pruner);
}

Var loss_perception(nd::Tape& tape, const nd::ParamStore& phi, const InferenceModel& model,
                    const nd::ParamStore& theta, const PerceptionModel& perception, const Tensor& features,
                    std::span<const Output> ys, const Pruner* pruner) {
  Var p = perception.beliefs(tape, theta, features);
  return negative_mean(pred_log_prob(tape, phi, model, p, ys, pruner));
}

Var loss_perception_supervised(nd::Tape& tape, const nd::ParamStore& phi, const InferenceModel& model,
                               const nd::ParamStore& theta, const PerceptionModel& perception, const Tensor& features,
                               std::span<const World> worlds) {
  Var p = perception.beliefs(tape, theta, features);
  const std::vector<Output> ones(worlds.size(), Output{1});
  return negative_mean(expl_log_prob(tape, phi, model, p, ones, worlds, nullptr));
}

Var loss_semantic(nd::Tape& tape, const nd::ParamStore& phi, const InferenceModel& model, const nd::ParamStore& theta,
                  const PerceptionModel& perception, const Tensor& features) {
  Var p = perception.beliefs(tape, theta, features);
  const std::vector<Output> ones(features.rows(), Output{1});
  return negative_mean(pred_log_prob(tape, phi, model, p, ones, nullptr));
}

nd::Gradients restrict_to(const nd::Gradients& grads, const nd::ParamStore& store) {
  nd::Gradients out;
  for (const auto& [name, g] : grads) {
    if (store.contains(name)) out.emplace(name, g);
  }
  return out;
}

World sample_world(const Belief& belief, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  World w(std::vector<int>(belief.num_vars()));
  for (std::size_t i = 0; i < belief.num_vars(); ++i) {
    const auto& row = belief.row(i);
    const double u = unit(rng);
    double acc = 0.0;
    int choice = -1;
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (row[k] <= 0.0) continue;
      acc += row[k];
      choice = static_cast<int>(k);
      if (u < acc) break;
    }
    if (choice < 0) throw ConfigError("belief row has no mass");
    w[i] = choice;
  }
  return w;
}

ForwardSamples sample_forward(const DirichletPrior& prior, std::size_t count, std::mt19937_64& rng) {
  ForwardSamples out;
  out.beliefs.reserve(count);
  out.worlds.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    out.beliefs.push_back(prior.sample(rng));
    out.worlds.push_back(sample_world(out.beliefs.back(), rng));
  }
  return out;
}

ForwardSamples sample_forward(std::span<const Belief> pool, std::size_t count, std::mt19937_64& rng) {
  if (pool.empty()) throw ConfigError("no beliefs to sample from");
  ForwardSamples out;
  for (std::size_t i = 0; i < count; ++i) {
    out.beliefs.push_back(pool[i % pool.size()]);
    out.worlds.push_back(sample_world(out.beliefs.back(), rng));
  }
  return out;
}

namespace {

bool uses_joint_loss(Variant v) { return v == Variant::kExplain || v == Variant::kPruning; }

Var inference_loss(nd::Tape& tape, const nd::ParamStore& phi, const InferenceModel& model, const ForwardSamples& fs,
                   const SymbolicFn& c, Variant variant, const Pruner* pruner) {
  if (uses_joint_loss(variant)) return loss_joint_match(tape, phi, model, fs.beliefs, fs.worlds, c, pruner);
  return loss_pred(tape, phi, model, fs.beliefs, fs.worlds, c, pruner);
}

}  // namespace

std::vector<double> fit_inference(const InferenceModel& model, nd::ParamStore& phi, const DirichletPrior& prior,
                                  const SymbolicFn& c, Variant variant, const Pruner* pruner, std::size_t steps,
                                  std::size_t batch, double lr, std::mt19937_64& rng) {
  std::vector<double> losses;
  losses.reserve(steps);
  for (std::size_t s = 0; s < steps; ++s) {
    const ForwardSamples fs = sample_forward(prior, batch, rng);
    nd::Tape tape;
    Var loss = inference_loss(tape, phi, model, fs, c, variant, pruner);
    require_finite(loss, "inference");
    tape.backward(loss);
    nd::adam_step(phi, restrict_to(tape.param_gradients(), phi), lr);
    losses.push_back(loss.value().item());
  }
  return losses;
}

Batch make_batch(const tasks::DigitDataset& data, std::span<const std::size_t> indices) {
  Batch b;
  const std::size_t width = data.features.empty() ? 0 : data.features.front().size();
  b.features = Tensor::matrix(indices.size(), width);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const auto& f = data.features.at(indices[r]);
    std::copy(f.begin(), f.end(), b.features.data().begin() + static_cast<std::ptrdiff_t>(r * width));
    b.ys.push_back(data.instances[indices[r]].sum);
    b.worlds.push_back(data.instances[indices[r]].digits);
  }
  return b;
}

TrainState::TrainState(TrainConfig cfg, std::shared_ptr<const SymbolicFn> fn, std::shared_ptr<const Pruner> p,
                       std::size_t feature_dim)
    : config(std::move(cfg)), c(std::move(fn)), pruner(std::move(p)), buffer(config.prior_capacity),
      rng(config.seed) {
  config.validate();
  if (!c) throw ConfigError("training needs a symbolic function");
  if (config.variant == Variant::kPruning && !pruner) throw ConfigError("the pruning variant needs a pruner");
  const SpaceSpec& worlds = c->worlds();
  for (int d : worlds.cards) {
    if (d != worlds.card(0)) throw ConfigError("perception needs every world variable to share one cardinality");
  }
  model = InferenceModel(worlds, c->outputs(), InferenceConfig{config.hidden, uses_joint_loss(config.variant)});
  perception = PerceptionModel(worlds.size(), feature_dim, config.perception_hidden,
                               static_cast<std::size_t>(worlds.card(0)));
  prior = DirichletPrior(worlds, config.prior_init);
  model.init(phi, rng);
  perception.init(theta, rng);
}

const Pruner* TrainState::active_pruner() const {
  return config.variant == Variant::kPruning ? pruner.get() : nullptr;
}

StepStats train_step(TrainState& state, const Batch& batch) {
  const TrainConfig& cfg = state.config;
  StepStats stats;

  const std::vector<Belief> beliefs = state.perception.beliefs(state.theta, batch.features);
  for (const auto& b : beliefs) state.buffer.push(b);

  ForwardSamples fs;
  if (cfg.variant == Variant::kNoPrior) {
    fs = sample_forward(beliefs, cfg.samples, state.rng);
  } else {
    if (state.iteration % cfg.prior_refit_every == 0) state.prior.fit(state.buffer, cfg.prior_fit);
    fs = sample_forward(state.prior, cfg.samples, state.rng);
  }

  {
    nd::Tape tape;
    Var loss = inference_loss(tape, state.phi, state.model, fs, *state.c, cfg.variant, state.active_pruner());
    require_finite(loss, "inference");
    tape.backward(loss);
    nd::adam_step(state.phi, restrict_to(tape.param_gradients(), state.phi), cfg.lr);
    stats.loss_inference = loss.value().item();
  }
  {
    nd::Tape tape;
    Var loss = loss_perception(tape, state.phi, state.model, state.theta, state.perception, batch.features, batch.ys,
                               state.active_pruner());
    require_finite(loss, "perception");
    tape.backward(loss);
    nd::adam_step(state.theta, restrict_to(tape.param_gradients(), state.theta), cfg.perception_lr);
    stats.loss_perception = loss.value().item();
  }
  ++state.iteration;
  return stats;
}

EvalResult evaluate(const TrainState& state, const tasks::DigitDataset& data, EvalMode mode, std::size_t beam_width,
                    std::size_t limit) {
  EvalResult result;
  const std::size_t count = limit > 0 ? std::min(limit, data.size()) : data.size();
  std::size_t correct = 0, digits_correct = 0, digits = 0;
  constexpr std::size_t kChunk = 256;
  for (std::size_t start = 0; start < count; start += kChunk) {
    std::vector<std::size_t> idx(std::min(kChunk, count - start));
    std::iota(idx.begin(), idx.end(), start);
    const Batch batch = make_batch(data, idx);
    const auto beliefs = state.perception.beliefs(state.theta, batch.features);
    for (std::size_t r = 0; r < idx.size(); ++r) {
      World argmax(std::vector<int>(beliefs[r].num_vars()));
      for (std::size_t v = 0; v < argmax.size(); ++v) {
        const auto& row = beliefs[r].row(v);
        argmax[v] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
        digits_correct += argmax[v] == batch.worlds[r][v];
        ++digits;
      }
      const Output y = mode == EvalMode::kSymbolic
                           ? (*state.c)(argmax)
                           : beam_search_output(state.model, state.phi, beliefs[r], beam_width, state.active_pruner());
      correct += y == batch.ys[r];
    }
  }
  result.count = count;
  result.accuracy = count ? static_cast<double>(correct) / count : 0.0;
  result.digit_accuracy = digits ? static_cast<double>(digits_correct) / digits : 0.0;
  return result;
}

std::vector<MetricsRecord> train(TrainState& state, const tasks::DigitDataset& train_set,
                                 const tasks::DigitDataset& test_set, const TrainRunOptions& options,
                                 const std::function<void(const MetricsRecord&)>& on_epoch) {
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  std::vector<MetricsRecord> records;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t bs = state.config.batch_size;
  for (int epoch = 1; epoch <= state.config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), state.rng);
    double inference_total = 0.0;
    std::size_t steps = 0;
    for (std::size_t b = 0; b < order.size(); b += bs) {
      const std::span<const std::size_t> idx(order.data() + b, std::min(bs, order.size() - b));
      inference_total += train_step(state, make_batch(train_set, idx)).loss_inference;
      ++steps;
    }
    MetricsRecord rec;
    rec.epoch = epoch;
    const EvalResult sym = evaluate(state, test_set, EvalMode::kSymbolic, state.config.beam_width);
    const EvalResult neu = evaluate(state, test_set, EvalMode::kNeural, state.config.beam_width, options.eval_limit);
    rec.acc_symbolic = sym.accuracy;
    rec.acc_digit = sym.digit_accuracy;
    rec.acc_neural = neu.accuracy;
    const double mean_loss = steps ? inference_total / static_cast<double>(steps) : 0.0;
    if (uses_joint_loss(state.config.variant)) {
      rec.loss_joint = mean_loss;
    } else {
      rec.loss_pred = mean_loss;
    }
    rec.seconds = options.wallclock ? std::chrono::duration<double>(clock::now() - start).count() : 0.0;
    records.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return records;
}

}  // namespace anesi
