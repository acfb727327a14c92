#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "anesi/ndauto/mlp.hpp"
#include "anesi/ndauto/params.hpp"
#include "anesi/ndauto/tape.hpp"
#include "anesi/problem.hpp"
#include "anesi/pruners.hpp"

namespace anesi {

using Sequence = std::vector<int>;

// Mask for the next variable of batch row `row` given that row's prefix.
// An empty MaskFn means no pruning.
using MaskFn = std::function<PrunerMask(std::size_t row, std::span<const int> prefix)>;

// Autoregressive distribution over a product space, one MLP per variable.
// Factor i sees [context, one-hot(prefix)] where the prefix encoding is zero
// padded to the full one-hot width of the target space, so every factor has
// the same input width. No parameters are shared between factors.
class FactorModel {
 public:
  FactorModel() = default;
  FactorModel(std::string prefix, std::size_t context_width, SpaceSpec target, std::vector<std::size_t> hidden);

  const std::string& prefix() const { return prefix_; }
  std::size_t context_width() const { return context_width_; }
  std::size_t input_width() const { return context_width_ + target_.one_hot_width(); }
  const SpaceSpec& target() const { return target_; }
  std::size_t num_factors() const { return factors_.size(); }
  const nd::Mlp& factor(std::size_t i) const { return factors_[i]; }
  // True iff some parameter of this model is present in `params`.
  bool has_params(const nd::ParamStore& params) const;

  void init(nd::ParamStore& params, std::mt19937_64& rng) const;

  // Teacher-forced log q(seq | context) for every row, shape (B x 1). A
  // sequence through a pruned option raises DeadBranchError.
  nd::Var log_prob(nd::Tape& tape, const nd::ParamStore& params, nd::Var context,
                   std::span<const Sequence> seqs, const MaskFn& mask = {}) const;
  // Same value without a tape; a pruned sequence yields nd::kLogZero.
  std::vector<double> log_prob(const nd::ParamStore& params, const nd::Tensor& context,
                               std::span<const Sequence> seqs, const MaskFn& mask = {}) const;

  // Distribution of variable prefix.size() for one context row, renormalized
  // over `mask` when given. Throws DeadBranchError if the mask removes all mass.
  std::vector<double> factor_distribution(const nd::ParamStore& params, std::span<const double> context,
                                          std::span<const int> prefix, const PrunerMask* mask = nullptr) const;

  struct Samples {
    std::vector<Sequence> seqs;
    std::vector<double> log_probs;
  };
  // Ancestral sampling for every context row.
  Samples sample(const nd::ParamStore& params, const nd::Tensor& context, std::mt19937_64& rng,
                 const MaskFn& mask = {}) const;

  // Highest scoring complete sequence kept by a beam of `width`; ties go to
  // the lexicographically smaller sequence. The mask is called with row 0.
  Sequence beam_search(const nd::ParamStore& params, std::span<const double> context, std::size_t width,
                       const MaskFn& mask = {}) const;
  // Picks the most likely option at every step.
  Sequence greedy(const nd::ParamStore& params, std::span<const double> context, const MaskFn& mask = {}) const;

 private:
  nd::Tensor prefix_encoding(std::span<const Sequence> seqs, std::size_t upto) const;
  // Row-wise log-probabilities of factor i for a batch of inputs.
  nd::Tensor factor_log_probs(const nd::ParamStore& params, std::size_t i, const nd::Tensor& input,
                              const nd::Tensor* mask) const;
  nd::Tensor build_mask(const MaskFn& mask, std::span<const Sequence> prefixes, std::size_t i,
                        std::size_t rows) const;

  std::string prefix_;
  std::size_t context_width_ = 0;
  SpaceSpec target_;
  std::vector<nd::Mlp> factors_;
};

struct InferenceConfig {
  std::vector<std::size_t> hidden = {128, 128};
  bool explain = false;  // also build the explanation model
};

// q_phi(w, y | P) = q_p(y | P) q_e(w | y, P). Parameters live under "pred/"
// and "expl/".
struct InferenceModel {
  SpaceSpec worlds;
  SpaceSpec outputs;
  FactorModel pred;
  std::optional<FactorModel> expl;

  InferenceModel() = default;
  InferenceModel(const SpaceSpec& worlds, const SpaceSpec& outputs, const InferenceConfig& config);
  void init(nd::ParamStore& params, std::mt19937_64& rng) const;
};

// Row-major flattened beliefs, one row per belief.
nd::Tensor belief_context(std::span<const Belief> beliefs);
// [flattened belief, one-hot(y)] per row.
nd::Tensor explanation_context(std::span<const Belief> beliefs, std::span<const Output> ys,
                               const SpaceSpec& outputs);
// One-hot encodings of outputs, (B x one_hot_width).
nd::Tensor one_hot(std::span<const Output> ys, const SpaceSpec& outputs);

MaskFn output_mask_fn(const Pruner* pruner);
// Row r uses ys[r] as the complete output.
MaskFn world_mask_fn(const Pruner* pruner, std::span<const Output> ys);

std::vector<double> factor_distribution(const InferenceModel& model, const nd::ParamStore& params,
                                        const Belief& belief, std::span<const int> y_prefix,
                                        const PrunerMask* mask = nullptr);

struct JointSample {
  Output y;
  World w;
  double log_prob = 0.0;
};

// Algorithm: y factor by factor, then w given y factor by factor.
JointSample sample_joint(const InferenceModel& model, const nd::ParamStore& params, const Belief& belief,
                         const Pruner* pruner, std::mt19937_64& rng);

// log q(y, w | P), or log q(y | P) when w is absent. Pruned sequences give
// nd::kLogZero.
double log_prob(const InferenceModel& model, const nd::ParamStore& params, const Belief& belief,
                const Output& y, const std::optional<World>& w, const Pruner* pruner);

Output beam_search_output(const InferenceModel& model, const nd::ParamStore& params, const Belief& belief,
                          std::size_t beam_width, const Pruner* pruner);
World beam_search_world(const InferenceModel& model, const nd::ParamStore& params, const Belief& belief,
                        const Output& y, std::size_t beam_width, const Pruner* pruner);

// Differentiable versions over a batch; `beliefs` is (B x one_hot_width(W)).
nd::Var pred_log_prob(nd::Tape& tape, const nd::ParamStore& params, const InferenceModel& model, nd::Var beliefs,
                      std::span<const Output> ys, const Pruner* pruner);
nd::Var expl_log_prob(nd::Tape& tape, const nd::ParamStore& params, const InferenceModel& model, nd::Var beliefs,
                      std::span<const Output> ys, std::span<const World> ws, const Pruner* pruner);

}  // namespace anesi
