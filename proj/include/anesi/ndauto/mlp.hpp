#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "anesi/ndauto/params.hpp"
#include "anesi/ndauto/tape.hpp"
#include "anesi/ndauto/tensor.hpp"

namespace anesi::nd {

enum class Head { kSoftmax, kGaussian };

// Fully connected ReLU network. `widths` lists every layer size including the
// input and the output, e.g. {20, 128, 128, 10}. Parameters live in a
// ParamStore under "<prefix>/l<i>/W" and "<prefix>/l<i>/b".
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::string prefix, std::vector<std::size_t> widths);

  const std::string& prefix() const { return prefix_; }
  const std::vector<std::size_t>& widths() const { return widths_; }
  std::size_t input_width() const { return widths_.front(); }
  std::size_t output_width() const { return widths_.back(); }
  std::size_t num_layers() const { return widths_.size() - 1; }

  std::string weight_name(std::size_t layer) const;
  std::string bias_name(std::size_t layer) const;

  // He-uniform weights, zero biases.
  void init(ParamStore& params, std::mt19937_64& rng) const;

  // Raw outputs (logits) on a tape.
  Var forward(Tape& tape, const ParamStore& params, Var input) const;
  // Same computation without recording; used on evaluation paths.
  Tensor forward(const ParamStore& params, const Tensor& input) const;

 private:
  std::string prefix_;
  std::vector<std::size_t> widths_;
};

// Evaluates an MLP described by `layer_spec` (input width first) whose
// parameters are stored under "mlp/...". Softmax head: each row is a
// probability vector. Gaussian head: the last layer must have width 2 and each
// row is (mean, log-std). Throws ConfigError on width mismatches.
Tensor mlp_forward(const ParamStore& params, const Tensor& input,
                   const std::vector<std::size_t>& layer_spec, Head head,
                   const std::string& prefix = "mlp");

}  // namespace anesi::nd
