#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "anesi/ndauto/tensor.hpp"

namespace anesi::nd {

// Gradients keyed by parameter name.
using Gradients = std::map<std::string, Tensor>;

// Named trainable tensors together with their Adam moment accumulators.
// Ordered by name so that iteration (and therefore serialization and
// optimizer updates) is deterministic.
class ParamStore {
 public:
  struct Entry {
    Tensor value;
    Tensor first_moment;
    Tensor second_moment;
  };

  void add(const std::string& name, Tensor value);
  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  Tensor& value(const std::string& name);
  const Tensor& value(const std::string& name) const;
  Entry& entry(const std::string& name);

  const std::map<std::string, Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  std::int64_t step() const { return step_; }
  void advance_step() { ++step_; }

 private:
  std::map<std::string, Entry> entries_;
  std::int64_t step_ = 0;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// One Adam update. Only parameters present in `grads` move; the step counter
// advances once per call. Throws TrainingError naming the first parameter
// whose gradient is not finite, before touching any value.
void adam_step(ParamStore& params, const Gradients& grads, double lr, const AdamConfig& config = {});

// Sum of squared entries over all gradients.
double squared_norm(const Gradients& grads);

double softplus(double x);
double inverse_softplus(double y);
double sigmoid(double x);

}  // namespace anesi::nd
