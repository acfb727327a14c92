#include "anesi/ndauto/params.hpp"

#include <cmath>

#include "anesi/errors.hpp"

namespace anesi::nd {

void ParamStore::add(const std::string& name, Tensor value) {
  Tensor zeros(value.shape());
  entries_[name] = Entry{std::move(value), zeros, zeros};
}

Tensor& ParamStore::value(const std::string& name) { return entry(name).value; }

const Tensor& ParamStore::value(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return it->second.value;
}

ParamStore::Entry& ParamStore::entry(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return it->second;
}

void adam_step(ParamStore& params, const Gradients& grads, double lr, const AdamConfig& config) {
  for (const auto& [name, grad] : grads) {
    const auto& entry = params.entry(name);
    if (!grad.same_shape(entry.value)) {
      throw ConfigError("gradient shape mismatch for parameter '" + name + "'");
    }
    if (!grad.all_finite()) {
      throw TrainingError("non-finite gradient for parameter '" + name + "'");
    }
  }
  params.advance_step();
  const double t = static_cast<double>(params.step());
  const double bias1 = 1.0 - std::pow(config.beta1, t);
  const double bias2 = 1.0 - std::pow(config.beta2, t);
  for (const auto& [name, grad] : grads) {
    auto& entry = params.entry(name);
    auto& m = entry.first_moment;
    auto& v = entry.second_moment;
    auto& x = entry.value;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double g = grad[i];
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g;
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g * g;
      const double m_hat = m[i] / bias1;
      const double v_hat = v[i] / bias2;
      x[i] -= lr * m_hat / (std::sqrt(v_hat) + config.epsilon);
    }
  }
}

double squared_norm(const Gradients& grads) {
  double total = 0.0;
  for (const auto& [name, grad] : grads) {
    for (double g : grad.values()) total += g * g;
  }
  return total;
}

double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double inverse_softplus(double y) {
  if (!(y > 0.0)) throw ConfigError("inverse_softplus requires a positive argument");
  // log(exp(y) - 1) rewritten to stay accurate for both small and large y.
  return y + std::log(-std::expm1(-y));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace anesi::nd
