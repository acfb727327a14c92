#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "anesi/ndauto/mlp.hpp"
#include "anesi/ndauto/params.hpp"
#include "anesi/ndauto/tape.hpp"
#include "anesi/prior.hpp"
#include "anesi/problem.hpp"

namespace anesi::gradest {

// Black-box scalar outcome r = g(z) of a discrete latent z.
using OutcomeFn = std::function<double(const World&)>;

inline constexpr double kMinLogStd = -7.0;
inline constexpr double kMaxLogStd = 3.0;

// Gaussian q_phi(r | P): an MLP from the flattened belief to (mean, log-std),
// the log-std clamped to [kMinLogStd, kMaxLogStd]. Parameters under "outcome/".
class OutcomeModel {
 public:
  OutcomeModel() = default;
  OutcomeModel(const SpaceSpec& space, std::vector<std::size_t> hidden = {32});

  const SpaceSpec& space() const { return space_; }
  nd::ParamStore& params() { return params_; }
  const nd::ParamStore& params() const { return params_; }
  void init(std::mt19937_64& rng);

  // (B x 2): mean and clamped log-std.
  nd::Var forward(nd::Tape& tape, const nd::ParamStore& params, nd::Var beliefs) const;
  // Mean Gaussian negative log-likelihood of `targets` (B x 1).
  nd::Var nll(nd::Tape& tape, const nd::ParamStore& params, nd::Var beliefs, const nd::Tensor& targets) const;

  struct Prediction {
    double mean = 0.0;
    double std = 1.0;
  };
  Prediction predict(const Belief& belief) const;

 private:
  SpaceSpec space_;
  nd::Mlp net_;
  nd::ParamStore params_;
};

struct OutcomeFitConfig {
  int iters = 2000;
  std::size_t batch = 64;
  double lr = 1e-3;
};

// Minimizes -log q_phi(g(z) | P) over (P, z) ~ p(P) p(z | P). Returns the
// loss of every step.
std::vector<double> fit_outcome_model(OutcomeModel& model, const DirichletPrior& prior, const OutcomeFn& g,
                                      const OutcomeFitConfig& config, std::mt19937_64& rng);

// Gradients are laid out like Belief rows: one vector per variable.
using BeliefGradient = std::vector<std::vector<double>>;

// d mu_phi(P) / dP by a backward pass to the belief input.
BeliefGradient surrogate_gradient(const OutcomeModel& model, const Belief& belief);

// d/dP sum_z p(z | P) g(z) by enumeration, treating every entry of P as free.
BeliefGradient exact_gradient(const Belief& belief, const OutcomeFn& g);

// Draws z_1..z_n ~ p(z | P); the single-draw estimates g(z) d log p(z | P) / dP.
// Returns their mean; `per_sample_variance`, when given, receives the summed
// per-entry variance of a single draw.
BeliefGradient score_function_gradient(const Belief& belief, const OutcomeFn& g, std::size_t num_samples,
                                       std::mt19937_64& rng, double* per_sample_variance = nullptr);

// Removes the per-row mean, i.e. projects onto the tangent space of the simplex.
BeliefGradient project_to_simplex(BeliefGradient g);
double cosine_similarity(const BeliefGradient& a, const BeliefGradient& b);
// Euclidean norm of the difference of the simplex projections.
double projected_distance(const BeliefGradient& a, const BeliefGradient& b);

struct EstimatorReport {
  std::string estimator;
  std::vector<double> mean_gradient;  // flattened
  double variance = 0.0;              // summed per-entry variance over repeated estimates
  std::optional<double> bias;         // projected distance to the exact gradient
  std::optional<double> cosine;       // projected cosine with the exact gradient

  nlohmann::json to_json() const;
};

struct BenchConfig {
  std::size_t num_vars = 3;
  int card = 3;
  std::size_t test_beliefs = 20;
  std::size_t repeats = 50;   // estimates per belief used for the variance
  std::size_t sf_samples = 10;  // draws per score-function estimate
  OutcomeFitConfig fit;
  std::uint64_t seed = 0;
};

// Fits an outcome model for g(z) = sum_i z_i * (i + 1) under a Dirichlet(1)
// prior, then compares both estimators with the exact gradient on fresh
// beliefs. Returns {surrogate, score-function}.
std::vector<EstimatorReport> run_benchmark(const BenchConfig& config);

}  // namespace anesi::gradest
