#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <random>
#include <vector>

#include "anesi/ndauto/params.hpp"
#include "anesi/problem.hpp"

namespace anesi {

// Most recent beliefs, oldest evicted first.
class BeliefBuffer {
 public:
  explicit BeliefBuffer(std::size_t capacity = 2500);

  void push(const Belief& belief);
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return items_.empty(); }
  const std::deque<Belief>& items() const { return items_; }

  // Per variable and option: mean over the buffer of log p, where every row
  // is first clamped to [floor, 1] and renormalized.
  std::vector<std::vector<double>> mean_log(double floor = 1e-6) const;

 private:
  std::size_t capacity_;
  std::deque<Belief> items_;
};

struct PriorFitConfig {
  int iters = 50;
  double lr = 0.01;
  double l2 = 900000.0;
};

struct PriorFitReport {
  std::vector<double> losses;  // objective before each Adam step
};

// Independent Dirichlet per world variable, alpha_i = softplus(u_i). The
// unconstrained parameters are stored as "prior/u<i>".
class DirichletPrior {
 public:
  DirichletPrior() = default;
  explicit DirichletPrior(const SpaceSpec& space, double init_alpha = 0.1);
  static DirichletPrior from_alpha(const std::vector<std::vector<double>>& alpha);

  const SpaceSpec& space() const { return space_; }
  std::vector<std::vector<double>> alpha() const;
  nd::ParamStore& params() { return params_; }
  const nd::ParamStore& params() const { return params_; }
  static std::string param_name(std::size_t i);

  // Adam on the mean negative log-likelihood of the buffer plus l2 * |alpha|^2.
  // Throws ConfigError on an empty buffer.
  PriorFitReport fit(const BeliefBuffer& buffer, const PriorFitConfig& config);
  // The fitted objective for the given sufficient statistics.
  double objective(const std::vector<std::vector<double>>& mean_log, double l2) const;

  // Each row from Dirichlet(alpha_i) via normalized Gamma draws, computed in
  // log space so very small concentrations stay finite.
  Belief sample(std::mt19937_64& rng) const;

  // Sum over variables of the Dirichlet log-density. Throws ConfigError if
  // some entry is not strictly positive.
  double log_pdf(const Belief& belief) const;
  // Analytic gradient of log_pdf with respect to every u_i.
  std::vector<std::vector<double>> log_pdf_grad_u(const Belief& belief) const;

 private:
  SpaceSpec space_;
  nd::ParamStore params_;
};

Belief sample_belief(const DirichletPrior& prior, std::uint64_t seed);

}  // namespace anesi
