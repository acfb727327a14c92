#include "anesi/prior.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/special_functions/digamma.hpp>

#include "anesi/errors.hpp"

namespace anesi {

BeliefBuffer::BeliefBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("belief buffer capacity must be positive");
}

void BeliefBuffer::push(const Belief& belief) {
  if (!items_.empty() && belief.space() != items_.front().space()) {
    throw ConfigError("belief does not match the buffer's space");
  }
  if (items_.size() == capacity_) items_.pop_front();
  items_.push_back(belief);
}

std::vector<std::vector<double>> BeliefBuffer::mean_log(double floor) const {
  if (items_.empty()) throw ConfigError("belief buffer is empty");
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i < items_.front().num_vars(); ++i) out.emplace_back(items_.front().row(i).size(), 0.0);
  for (const Belief& b : items_) {
    for (std::size_t i = 0; i < b.num_vars(); ++i) {
      const auto& row = b.row(i);
      double total = 0.0;
      for (double p : row) total += std::clamp(p, floor, 1.0);
      for (std::size_t k = 0; k < row.size(); ++k) out[i][k] += std::log(std::clamp(row[k], floor, 1.0) / total);
    }
  }
  for (auto& row : out) {
    for (double& v : row) v /= static_cast<double>(items_.size());
  }
  return out;
}

DirichletPrior::DirichletPrior(const SpaceSpec& space, double init_alpha) : space_(space) {
  space_.validate();
  if (!(init_alpha > 0.0)) throw ConfigError("Dirichlet concentration must be positive");
  const double u = nd::inverse_softplus(init_alpha);
  for (std::size_t i = 0; i < space_.size(); ++i) {
    params_.add(param_name(i), nd::Tensor::matrix(1, static_cast<std::size_t>(space_.card(i)), u));
  }
}

DirichletPrior DirichletPrior::from_alpha(const std::vector<std::vector<double>>& alpha) {
  SpaceSpec space;
  for (const auto& row : alpha) space.cards.push_back(static_cast<int>(row.size()));
  DirichletPrior prior(space);
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    for (std::size_t k = 0; k < alpha[i].size(); ++k) {
      if (!(alpha[i][k] > 0.0)) throw ConfigError("Dirichlet concentration must be positive");
      prior.params_.value(param_name(i))[k] = nd::inverse_softplus(alpha[i][k]);
    }
  }
  return prior;
}

std::string DirichletPrior::param_name(std::size_t i) { return "prior/u" + std::to_string(i); }

std::vector<std::vector<double>> DirichletPrior::alpha() const {
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i < space_.size(); ++i) {
    const auto& u = params_.value(param_name(i));
    std::vector<double> row(u.size());
    for (std::size_t k = 0; k < u.size(); ++k) row[k] = nd::softplus(u[k]);
    out.push_back(std::move(row));
  }
  return out;
}

namespace {

double log_normalizer(const std::vector<double>& a) {
  double total = 0.0, out = 0.0;
  for (double v : a) {
    total += v;
    out -= std::lgamma(v);
  }
  return out + std::lgamma(total);
}

}  // namespace

double DirichletPrior::objective(const std::vector<std::vector<double>>& mean_log, double l2) const {
  const auto a = alpha();
  double loss = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double ll = log_normalizer(a[i]);
    for (std::size_t k = 0; k < a[i].size(); ++k) {
      ll += (a[i][k] - 1.0) * mean_log[i][k];
      loss += l2 * a[i][k] * a[i][k];
    }
    loss -= ll;
  }
  return loss;
}

PriorFitReport DirichletPrior::fit(const BeliefBuffer& buffer, const PriorFitConfig& config) {
  if (buffer.empty()) throw ConfigError("cannot fit the prior on an empty belief buffer");
  if (config.iters < 0 || !(config.lr >= 0.0) || !(config.l2 >= 0.0)) throw ConfigError("invalid prior fit config");
  const auto stats = buffer.mean_log();
  if (stats.size() != space_.size()) throw ConfigError("buffer beliefs do not match the prior's space");
  PriorFitReport report;
  for (int it = 0; it < config.iters; ++it) {
    report.losses.push_back(objective(stats, config.l2));
    nd::Gradients grads;
    for (std::size_t i = 0; i < space_.size(); ++i) {
      const auto& u = params_.value(param_name(i));
      double total = 0.0;
      for (double v : u.values()) total += nd::softplus(v);
      const double psi_total = boost::math::digamma(total);
      nd::Tensor g = nd::Tensor::matrix(1, u.size());
      for (std::size_t k = 0; k < u.size(); ++k) {
        const double a = nd::softplus(u[k]);
        const double d_alpha = -(psi_total - boost::math::digamma(a) + stats[i][k]) + 2.0 * config.l2 * a;
        g[k] = d_alpha * nd::sigmoid(u[k]);
      }
      grads.emplace(param_name(i), std::move(g));
    }
    nd::adam_step(params_, grads, config.lr);
  }
  return report;
}

Belief DirichletPrior::sample(std::mt19937_64& rng) const {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<std::vector<double>> rows;
  for (const auto& a : alpha()) {
    std::vector<double> logs(a.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
      // Gamma(a) = Gamma(a + 1) * U^(1/a).
      std::gamma_distribution<double> gamma(a[k] + 1.0, 1.0);
      const double g = gamma(rng);
      double u = unit(rng);
      while (u <= 0.0) u = unit(rng);
      logs[k] = std::log(g) + std::log(u) / a[k];
    }
    const double max_log = *std::max_element(logs.begin(), logs.end());
    double total = 0.0;
    for (double& v : logs) total += (v = std::exp(v - max_log));
    for (double& v : logs) v /= total;
    rows.push_back(std::move(logs));
  }
  return Belief(std::move(rows));
}

double DirichletPrior::log_pdf(const Belief& belief) const {
  if (belief.space() != space_) throw ConfigError("belief does not match the prior's space");
  const auto a = alpha();
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    total += log_normalizer(a[i]);
    for (std::size_t k = 0; k < a[i].size(); ++k) {
      const double p = belief.row(i)[k];
      if (!(p > 0.0)) throw ConfigError("Dirichlet density needs strictly positive beliefs");
      total += (a[i][k] - 1.0) * std::log(p);
    }
  }
  return total;
}

std::vector<std::vector<double>> DirichletPrior::log_pdf_grad_u(const Belief& belief) const {
  if (belief.space() != space_) throw ConfigError("belief does not match the prior's space");
  const auto a = alpha();
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double total = 0.0;
    for (double v : a[i]) total += v;
    const double psi_total = boost::math::digamma(total);
    const auto& u = params_.value(param_name(i));
    std::vector<double> row(a[i].size());
    for (std::size_t k = 0; k < row.size(); ++k) {
      const double p = belief.row(i)[k];
      if (!(p > 0.0)) throw ConfigError("Dirichlet density needs strictly positive beliefs");
      row[k] = (psi_total - boost::math::digamma(a[i][k]) + std::log(p)) * nd::sigmoid(u[k]);
    }
    out.push_back(std::move(row));
  }
  return out;
}

Belief sample_belief(const DirichletPrior& prior, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return prior.sample(rng);
}

}  // namespace anesi
