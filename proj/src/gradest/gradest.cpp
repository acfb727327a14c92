#include "anesi/gradest.hpp"

#include <cmath>
#include <numbers>

#include "anesi/errors.hpp"
#include "anesi/infer.hpp"
#include "anesi/ndauto/ops.hpp"
#include "anesi/train.hpp"

namespace anesi::gradest {

using nd::Tensor;
using nd::Var;

OutcomeModel::OutcomeModel(const SpaceSpec& space, std::vector<std::size_t> hidden) : space_(space) {
  space_.validate();
  std::vector<std::size_t> widths{space_.one_hot_width()};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(2);
  net_ = nd::Mlp("outcome", std::move(widths));
}

void OutcomeModel::init(std::mt19937_64& rng) { net_.init(params_, rng); }

Var OutcomeModel::forward(nd::Tape& tape, const nd::ParamStore& params, Var beliefs) const {
  Var h = net_.forward(tape, params, beliefs);
  return nd::concat_cols({nd::slice_cols(h, 0, 1), nd::clamp(nd::slice_cols(h, 1, 2), kMinLogStd, kMaxLogStd)});
}

Var OutcomeModel::nll(nd::Tape& tape, const nd::ParamStore& params, Var beliefs, const Tensor& targets) const {
  Var out = forward(tape, params, beliefs);
  Var mu = nd::slice_cols(out, 0, 1);
  Var log_std = nd::slice_cols(out, 1, 2);
  Var z2 = nd::mul(nd::square(nd::sub(tape.constant(targets), mu)), nd::exp(nd::scale(log_std, -2.0)));
  Var per_row = nd::add(log_std, nd::scale(z2, 0.5));
  return nd::add_scalar(nd::mean(per_row), 0.5 * std::log(2.0 * std::numbers::pi));
}

OutcomeModel::Prediction OutcomeModel::predict(const Belief& belief) const {
  const std::vector<Belief> one{belief};
  const Tensor out = net_.forward(params_, belief_context(one));
  return {out[0], std::exp(std::clamp(out[1], kMinLogStd, kMaxLogStd))};
}

std::vector<double> fit_outcome_model(OutcomeModel& model, const DirichletPrior& prior, const OutcomeFn& g,
                                      const OutcomeFitConfig& config, std::mt19937_64& rng) {
  if (config.iters < 0 || config.batch == 0 || !(config.lr > 0.0)) throw ConfigError("invalid outcome fit config");
  if (prior.space() != model.space()) throw ConfigError("prior and outcome model spaces differ");
  std::vector<double> losses;
  losses.reserve(static_cast<std::size_t>(config.iters));
  for (int it = 0; it < config.iters; ++it) {
    const ForwardSamples fs = sample_forward(prior, config.batch, rng);
    Tensor targets = Tensor::matrix(config.batch, 1);
    for (std::size_t r = 0; r < config.batch; ++r) targets[r] = g(fs.worlds[r]);
    nd::Tape tape;
    Var loss = model.nll(tape, model.params(), tape.constant(belief_context(fs.beliefs)), targets);
    if (!std::isfinite(loss.value().item())) throw TrainingError("non-finite outcome model loss");
    tape.backward(loss);
    nd::adam_step(model.params(), tape.param_gradients(), config.lr);
    losses.push_back(loss.value().item());
  }
  return losses;
}

namespace {

BeliefGradient zeros_like(const Belief& belief) {
  BeliefGradient out;
  for (std::size_t i = 0; i < belief.num_vars(); ++i) out.emplace_back(belief.row(i).size(), 0.0);
  return out;
}

std::vector<double> flatten(const BeliefGradient& g) {
  std::vector<double> out;
  for (const auto& row : g) out.insert(out.end(), row.begin(), row.end());
  return out;
}

}  // namespace

BeliefGradient surrogate_gradient(const OutcomeModel& model, const Belief& belief) {
  const std::vector<Belief> one{belief};
  nd::Tape tape;
  Var x = tape.input(belief_context(one));
  Var mu = nd::sum(nd::slice_cols(model.forward(tape, model.params(), x), 0, 1));
  tape.backward(mu);
  const Tensor& gx = tape.gradient(x);
  BeliefGradient out = zeros_like(belief);
  std::size_t at = 0;
  for (auto& row : out) {
    for (double& v : row) v = gx[at++];
  }
  return out;
}

BeliefGradient exact_gradient(const Belief& belief, const OutcomeFn& g) {
  BeliefGradient out = zeros_like(belief);
  const std::size_t n = belief.num_vars();
  for_each_world(belief.space(), [&](const World& w) {
    const double r = g(w);
    if (r == 0.0) return;
    for (std::size_t i = 0; i < n; ++i) {
      double others = 1.0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j != i) others *= belief.row(j)[static_cast<std::size_t>(w[j])];
      }
      out[i][static_cast<std::size_t>(w[i])] += others * r;
    }
  });
  return out;
}

BeliefGradient score_function_gradient(const Belief& belief, const OutcomeFn& g, std::size_t num_samples,
                                       std::mt19937_64& rng, double* per_sample_variance) {
  if (num_samples == 0) throw ConfigError("score-function estimator needs at least one sample");
  BeliefGradient sum = zeros_like(belief), sum_sq = zeros_like(belief);
  for (std::size_t s = 0; s < num_samples; ++s) {
    const World z = sample_world(belief, rng);
    const double r = g(z);
    for (std::size_t i = 0; i < belief.num_vars(); ++i) {
      const auto k = static_cast<std::size_t>(z[i]);
      const double v = r / belief.row(i)[k];
      sum[i][k] += v;
      sum_sq[i][k] += v * v;
    }
  }
  const double n = static_cast<double>(num_samples);
  double variance = 0.0;
  for (std::size_t i = 0; i < sum.size(); ++i) {
    for (std::size_t k = 0; k < sum[i].size(); ++k) {
      sum[i][k] /= n;
      if (num_samples > 1) variance += (sum_sq[i][k] - n * sum[i][k] * sum[i][k]) / (n - 1.0);
    }
  }
  if (per_sample_variance) *per_sample_variance = std::max(variance, 0.0);
  return sum;
}

BeliefGradient project_to_simplex(BeliefGradient g) {
  for (auto& row : g) {
    if (row.empty()) continue;
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= static_cast<double>(row.size());
    for (double& v : row) v -= mean;
  }
  return g;
}

double cosine_similarity(const BeliefGradient& a, const BeliefGradient& b) {
  const auto pa = flatten(project_to_simplex(a)), pb = flatten(project_to_simplex(b));
  if (pa.size() != pb.size()) throw ConfigError("gradient shapes differ");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    dot += pa[i] * pb[i];
    na += pa[i] * pa[i];
    nb += pb[i] * pb[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / std::sqrt(na * nb);
}

double projected_distance(const BeliefGradient& a, const BeliefGradient& b) {
  const auto pa = flatten(project_to_simplex(a)), pb = flatten(project_to_simplex(b));
  if (pa.size() != pb.size()) throw ConfigError("gradient shapes differ");
  double total = 0.0;
  for (std::size_t i = 0; i < pa.size(); ++i) total += (pa[i] - pb[i]) * (pa[i] - pb[i]);
  return std::sqrt(total);
}

nlohmann::json EstimatorReport::to_json() const {
  nlohmann::json j{{"estimator", estimator}, {"mean_gradient", mean_gradient}, {"variance", variance}};
  j["bias"] = bias ? nlohmann::json(*bias) : nlohmann::json(nullptr);
  j["cosine"] = cosine ? nlohmann::json(*cosine) : nlohmann::json(nullptr);
  return j;
}

namespace {

// Summed per-entry sample variance of a set of estimates, and their mean.
// Deviations are taken from the first estimate so identical inputs give
// exactly zero.
std::pair<BeliefGradient, double> mean_and_variance(const std::vector<BeliefGradient>& estimates) {
  const BeliefGradient& first = estimates.front();
  BeliefGradient mean = first;
  const double n = static_cast<double>(estimates.size());
  double variance = 0.0;
  for (std::size_t i = 0; i < first.size(); ++i) {
    for (std::size_t k = 0; k < first[i].size(); ++k) {
      double s = 0.0, s2 = 0.0;
      for (const auto& e : estimates) {
        const double d = e[i][k] - first[i][k];
        s += d;
        s2 += d * d;
      }
      mean[i][k] = first[i][k] + s / n;
      if (estimates.size() > 1) variance += std::max(0.0, (s2 - s * s / n) / (n - 1.0));
    }
  }
  return {mean, variance};
}

}  // namespace

std::vector<EstimatorReport> run_benchmark(const BenchConfig& config) {
  if (config.test_beliefs == 0 || config.repeats == 0) throw ConfigError("benchmark needs beliefs and repeats");
  const SpaceSpec space{std::vector<int>(config.num_vars, config.card)};
  const OutcomeFn g = [](const World& z) {
    double r = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) r += z[i] * static_cast<double>(i + 1);
    return r;
  };
  std::mt19937_64 rng(config.seed);
  const DirichletPrior prior = DirichletPrior(space, 1.0);
  OutcomeModel model(space);
  model.init(rng);
  fit_outcome_model(model, prior, g, config.fit, rng);

  EstimatorReport sur{"surrogate", {}, 0.0, 0.0, 0.0};
  EstimatorReport sf{"score_function", {}, 0.0, 0.0, 0.0};
  const double m = static_cast<double>(config.test_beliefs);
  for (std::size_t b = 0; b < config.test_beliefs; ++b) {
    const Belief belief = prior.sample(rng);
    const BeliefGradient exact = exact_gradient(belief, g);
    std::vector<BeliefGradient> a, s;
    for (std::size_t r = 0; r < config.repeats; ++r) {
      a.push_back(surrogate_gradient(model, belief));
      s.push_back(score_function_gradient(belief, g, config.sf_samples, rng));
    }
    const auto [a_mean, a_var] = mean_and_variance(a);
    const auto [s_mean, s_var] = mean_and_variance(s);
    if (b == 0) {
      sur.mean_gradient = flatten(a_mean);
      sf.mean_gradient = flatten(s_mean);
    }
    sur.variance += a_var / m;
    sf.variance += s_var / m;
    *sur.bias += projected_distance(a_mean, exact) / m;
    *sf.bias += projected_distance(s_mean, exact) / m;
    *sur.cosine += cosine_similarity(a_mean, exact) / m;
    *sf.cosine += cosine_similarity(s_mean, exact) / m;
  }
  return {sur, sf};
}

}  // namespace anesi::gradest
