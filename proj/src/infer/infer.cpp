#include "anesi/infer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "anesi/errors.hpp"
#include "anesi/ndauto/ops.hpp"

namespace anesi {

using nd::Tensor;
using nd::Var;

FactorModel::FactorModel(std::string prefix, std::size_t context_width, SpaceSpec target,
                         std::vector<std::size_t> hidden)
    : prefix_(std::move(prefix)), context_width_(context_width), target_(std::move(target)) {
  target_.validate();
  for (std::size_t i = 0; i < target_.size(); ++i) {
    std::vector<std::size_t> widths{input_width()};
    widths.insert(widths.end(), hidden.begin(), hidden.end());
    widths.push_back(static_cast<std::size_t>(target_.card(i)));
    factors_.emplace_back(prefix_ + "/f" + std::to_string(i), std::move(widths));
  }
}

bool FactorModel::has_params(const nd::ParamStore& params) const {
  return !factors_.empty() && params.contains(factors_.front().weight_name(0));
}

void FactorModel::init(nd::ParamStore& params, std::mt19937_64& rng) const {
  for (const auto& f : factors_) f.init(params, rng);
}

Tensor FactorModel::prefix_encoding(std::span<const Sequence> seqs, std::size_t upto) const {
  Tensor enc = Tensor::matrix(seqs.size(), target_.one_hot_width());
  for (std::size_t r = 0; r < seqs.size(); ++r) {
    std::size_t offset = 0;
    for (std::size_t j = 0; j < upto; ++j) {
      enc.at(r, offset + static_cast<std::size_t>(seqs[r][j])) = 1.0;
      offset += static_cast<std::size_t>(target_.card(j));
    }
  }
  return enc;
}

Tensor FactorModel::build_mask(const MaskFn& mask, std::span<const Sequence> prefixes, std::size_t i,
                               std::size_t rows) const {
  const std::size_t card = static_cast<std::size_t>(target_.card(i));
  Tensor m = Tensor::matrix(rows, card);
  for (std::size_t r = 0; r < rows; ++r) {
    const PrunerMask bits = mask(r, std::span<const int>(prefixes[r]).first(i));
    if (bits.size() != card) throw ConfigError("pruner mask has the wrong width for " + prefix_);
    for (std::size_t c = 0; c < card; ++c) m.at(r, c) = bits[c] ? 1.0 : 0.0;
  }
  return m;
}

namespace {

void check_sequences(const SpaceSpec& space, std::span<const Sequence> seqs, std::size_t rows) {
  if (seqs.size() != rows) throw ConfigError("number of sequences does not match the context rows");
  for (const auto& s : seqs) check_in_space(space, s, "sequence");
}

Tensor concat_rows_cols(const Tensor& a, const Tensor& b) {
  Tensor out = Tensor::matrix(a.rows(), a.cols() + b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    std::copy_n(a.data().begin() + static_cast<std::ptrdiff_t>(r * a.cols()), a.cols(),
                out.data().begin() + static_cast<std::ptrdiff_t>(r * out.cols()));
    std::copy_n(b.data().begin() + static_cast<std::ptrdiff_t>(r * b.cols()), b.cols(),
                out.data().begin() + static_cast<std::ptrdiff_t>(r * out.cols() + a.cols()));
  }
  return out;
}

int sample_index(std::span<const double> log_probs, std::mt19937_64& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  int last = -1;
  for (std::size_t c = 0; c < log_probs.size(); ++c) {
    if (nd::is_log_zero(log_probs[c])) continue;
    acc += std::exp(log_probs[c]);
    last = static_cast<int>(c);
    if (u < acc) return last;
  }
  return last;  // rounding left u above the total
}

}  // namespace

Tensor FactorModel::factor_log_probs(const nd::ParamStore& params, std::size_t i, const Tensor& input,
                                     const Tensor* mask) const {
  Tensor logits = factors_[i].forward(params, input);
  nd::log_softmax_rows(logits, mask);
  return logits;
}

Var FactorModel::log_prob(nd::Tape& tape, const nd::ParamStore& params, Var context, std::span<const Sequence> seqs,
                          const MaskFn& mask) const {
  const std::size_t rows = context.value().rows();
  if (context.value().cols() != context_width_) throw ConfigError("context width mismatch for " + prefix_);
  check_sequences(target_, seqs, rows);
  Var total;
  for (std::size_t i = 0; i < factors_.size(); ++i) {
    Var input = nd::concat_cols({context, tape.constant(prefix_encoding(seqs, i))});
    Var logits = factors_[i].forward(tape, params, input);
    Var lp = mask ? nd::log_softmax(logits, build_mask(mask, seqs, i, rows)) : nd::log_softmax(logits);
    std::vector<int> picks(rows);
    for (std::size_t r = 0; r < rows; ++r) picks[r] = seqs[r][i];
    Var chosen = nd::pick(lp, picks);
    total = total.valid() ? nd::add(total, chosen) : chosen;
  }
  return total;
}

std::vector<double> FactorModel::log_prob(const nd::ParamStore& params, const Tensor& context,
                                          std::span<const Sequence> seqs, const MaskFn& mask) const {
  const std::size_t rows = context.rows();
  if (context.cols() != context_width_) throw ConfigError("context width mismatch for " + prefix_);
  check_sequences(target_, seqs, rows);
  std::vector<double> total(rows, 0.0);
  for (std::size_t i = 0; i < factors_.size(); ++i) {
    const Tensor input = concat_rows_cols(context, prefix_encoding(seqs, i));
    Tensor m;
    if (mask) m = build_mask(mask, seqs, i, rows);
    Tensor lp;
    try {
      lp = factor_log_probs(params, i, input, mask ? &m : nullptr);
    } catch (const DeadBranchError&) {
      // Only rows that reach an empty mask are dead; handle them one by one.
      lp = factor_log_probs(params, i, input, nullptr);
      for (std::size_t r = 0; r < rows; ++r) {
        const bool any = std::any_of(m.data().begin() + static_cast<std::ptrdiff_t>(r * m.cols()),
                                     m.data().begin() + static_cast<std::ptrdiff_t>((r + 1) * m.cols()),
                                     [](double v) { return v != 0.0; });
        Tensor row = Tensor::matrix(1, lp.cols());
        Tensor mrow = Tensor::matrix(1, lp.cols());
        for (std::size_t c = 0; c < lp.cols(); ++c) {
          row.at(0, c) = lp.at(r, c);
          mrow.at(0, c) = m.at(r, c);
        }
        if (any) {
          nd::log_softmax_rows(row, &mrow);
        } else {
          row.fill(nd::kLogZero);
        }
        for (std::size_t c = 0; c < lp.cols(); ++c) lp.at(r, c) = row.at(0, c);
      }
    }
    for (std::size_t r = 0; r < rows; ++r) {
      const double v = lp.at(r, static_cast<std::size_t>(seqs[r][i]));
      total[r] = (nd::is_log_zero(v) || nd::is_log_zero(total[r])) ? nd::kLogZero : total[r] + v;
    }
  }
  return total;
}

std::vector<double> FactorModel::factor_distribution(const nd::ParamStore& params, std::span<const double> context,
                                                     std::span<const int> prefix, const PrunerMask* mask) const {
  if (context.size() != context_width_) throw ConfigError("context width mismatch for " + prefix_);
  const std::size_t i = prefix.size();
  if (i >= factors_.size()) throw ConfigError("prefix already covers every variable of " + prefix_);
  const Sequence seq(prefix.begin(), prefix.end());
  Tensor ctx = Tensor::matrix(1, context_width_);
  std::copy(context.begin(), context.end(), ctx.data().begin());
  const Tensor input = concat_rows_cols(ctx, prefix_encoding(std::span<const Sequence>(&seq, 1), i));
  Tensor m;
  if (mask) {
    if (mask->size() != static_cast<std::size_t>(target_.card(i))) throw ConfigError("mask width mismatch");
    m = Tensor::matrix(1, mask->size());
    for (std::size_t c = 0; c < mask->size(); ++c) m[c] = (*mask)[c] ? 1.0 : 0.0;
  }
  Tensor lp;
  try {
    lp = factor_log_probs(params, i, input, mask ? &m : nullptr);
  } catch (const DeadBranchError&) {
    throw DeadBranchError("pruner removed every option after prefix " + to_string(prefix) + " in " + prefix_);
  }
  std::vector<double> out(lp.size());
  for (std::size_t c = 0; c < lp.size(); ++c) out[c] = nd::is_log_zero(lp[c]) ? 0.0 : std::exp(lp[c]);
  return out;
}

FactorModel::Samples FactorModel::sample(const nd::ParamStore& params, const Tensor& context, std::mt19937_64& rng,
                                         const MaskFn& mask) const {
  const std::size_t rows = context.rows();
  if (context.cols() != context_width_) throw ConfigError("context width mismatch for " + prefix_);
  Samples out;
  out.seqs.assign(rows, Sequence(factors_.size(), 0));
  out.log_probs.assign(rows, 0.0);
  for (std::size_t i = 0; i < factors_.size(); ++i) {
    const Tensor input = concat_rows_cols(context, prefix_encoding(out.seqs, i));
    Tensor m;
    if (mask) m = build_mask(mask, out.seqs, i, rows);
    Tensor lp;
    try {
      lp = factor_log_probs(params, i, input, mask ? &m : nullptr);
    } catch (const DeadBranchError& e) {
      throw DeadBranchError(std::string(e.what()) + " while sampling " + prefix_);
    }
    for (std::size_t r = 0; r < rows; ++r) {
      const std::span<const double> row(lp.data().data() + r * lp.cols(), lp.cols());
      const int choice = sample_index(row, rng);
      out.seqs[r][i] = choice;
      out.log_probs[r] += row[static_cast<std::size_t>(choice)];
    }
  }
  return out;
}

Sequence FactorModel::beam_search(const nd::ParamStore& params, std::span<const double> context, std::size_t width,
                                  const MaskFn& mask) const {
  if (width < 1) throw ConfigError("beam width must be at least 1");
  if (context.size() != context_width_) throw ConfigError("context width mismatch for " + prefix_);
  struct Entry {
    Sequence seq;
    double score;
  };
  std::vector<Entry> beam{{Sequence{}, 0.0}};
  for (std::size_t i = 0; i < factors_.size(); ++i) {
    const std::size_t rows = beam.size();
    Tensor ctx = Tensor::matrix(rows, context_width_);
    std::vector<Sequence> prefixes(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy(context.begin(), context.end(), ctx.data().begin() + static_cast<std::ptrdiff_t>(r * context_width_));
      prefixes[r] = beam[r].seq;
    }
    const Tensor input = concat_rows_cols(ctx, prefix_encoding(prefixes, i));
    Tensor m;
    if (mask) {
      m = Tensor::matrix(rows, static_cast<std::size_t>(target_.card(i)));
      for (std::size_t r = 0; r < rows; ++r) {
        const PrunerMask bits = mask(0, prefixes[r]);
        for (std::size_t c = 0; c < bits.size() && c < m.cols(); ++c) m.at(r, c) = bits[c] ? 1.0 : 0.0;
      }
    }
    const Tensor lp = factor_log_probs(params, i, input, mask ? &m : nullptr);
    std::vector<Entry> next;
    next.reserve(rows * lp.cols());
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < lp.cols(); ++c) {
        const double v = lp.at(r, c);
        if (nd::is_log_zero(v)) continue;
        Sequence s = beam[r].seq;
        s.push_back(static_cast<int>(c));
        next.push_back({std::move(s), beam[r].score + v});
      }
    }
    const std::size_t keep = std::min(width, next.size());
    std::partial_sort(next.begin(), next.begin() + static_cast<std::ptrdiff_t>(keep), next.end(),
                      [](const Entry& a, const Entry& b) {
                        if (a.score != b.score) return a.score > b.score;
                        return a.seq < b.seq;
                      });
    next.resize(keep);
    beam = std::move(next);
  }
  return beam.front().seq;
}

Sequence FactorModel::greedy(const nd::ParamStore& params, std::span<const double> context, const MaskFn& mask) const {
  Sequence seq;
  for (std::size_t i = 0; i < factors_.size(); ++i) {
    PrunerMask bits;
    if (mask) bits = mask(0, seq);
    const auto dist = factor_distribution(params, context, seq, mask ? &bits : nullptr);
    seq.push_back(static_cast<int>(std::max_element(dist.begin(), dist.end()) - dist.begin()));
  }
  return seq;
}

InferenceModel::InferenceModel(const SpaceSpec& w, const SpaceSpec& y, const InferenceConfig& config)
    : worlds(w), outputs(y), pred("pred", w.one_hot_width(), y, config.hidden) {
  if (config.explain) expl.emplace("expl", w.one_hot_width() + y.one_hot_width(), w, config.hidden);
}

void InferenceModel::init(nd::ParamStore& params, std::mt19937_64& rng) const {
  pred.init(params, rng);
  if (expl) expl->init(params, rng);
}

Tensor belief_context(std::span<const Belief> beliefs) {
  if (beliefs.empty()) throw ConfigError("empty belief batch");
  const std::size_t width = beliefs.front().space().one_hot_width();
  Tensor out = Tensor::matrix(beliefs.size(), width);
  for (std::size_t r = 0; r < beliefs.size(); ++r) {
    beliefs[r].flatten_into(out.data().subspan(r * width, width));
  }
  return out;
}

Tensor one_hot(std::span<const Output> ys, const SpaceSpec& outputs) {
  Tensor out = Tensor::matrix(ys.size(), outputs.one_hot_width());
  for (std::size_t r = 0; r < ys.size(); ++r) {
    check_in_space(outputs, ys[r].values, "output");
    for (std::size_t j = 0; j < outputs.size(); ++j) out.at(r, outputs.one_hot_offset(j) + ys[r][j]) = 1.0;
  }
  return out;
}

Tensor explanation_context(std::span<const Belief> beliefs, std::span<const Output> ys, const SpaceSpec& outputs) {
  if (beliefs.size() != ys.size()) throw ConfigError("beliefs and outputs differ in count");
  return concat_rows_cols(belief_context(beliefs), one_hot(ys, outputs));
}

MaskFn output_mask_fn(const Pruner* pruner) {
  if (!pruner) return {};
  return [pruner](std::size_t, std::span<const int> prefix) { return pruner->output_mask(prefix); };
}

MaskFn world_mask_fn(const Pruner* pruner, std::span<const Output> ys) {
  if (!pruner) return {};
  return [pruner, ys](std::size_t row, std::span<const int> prefix) { return pruner->world_mask(ys[row], prefix); };
}

std::vector<double> factor_distribution(const InferenceModel& model, const nd::ParamStore& params,
                                        const Belief& belief, std::span<const int> y_prefix, const PrunerMask* mask) {
  return model.pred.factor_distribution(params, belief.flatten(), y_prefix, mask);
}

namespace {

const FactorModel& require_expl(const InferenceModel& model) {
  if (!model.expl) throw ConfigError("inference model has no explanation model");
  return *model.expl;
}

}  // namespace

JointSample sample_joint(const InferenceModel& model, const nd::ParamStore& params, const Belief& belief,
                         const Pruner* pruner, std::mt19937_64& rng) {
  const FactorModel& expl = require_expl(model);
  const Tensor ctx = belief_context(std::span<const Belief>(&belief, 1));
  const auto ys = model.pred.sample(params, ctx, rng, output_mask_fn(pruner));
  JointSample out;
  out.y = Output(ys.seqs[0]);
  const Tensor ectx = explanation_context(std::span<const Belief>(&belief, 1), std::span<const Output>(&out.y, 1),
                                          model.outputs);
  const auto ws = expl.sample(params, ectx, rng, world_mask_fn(pruner, std::span<const Output>(&out.y, 1)));
  out.w = World(ws.seqs[0]);
  out.log_prob = ys.log_probs[0] + ws.log_probs[0];
  return out;
}

double log_prob(const InferenceModel& model, const nd::ParamStore& params, const Belief& belief, const Output& y,
                const std::optional<World>& w, const Pruner* pruner) {
  const Tensor ctx = belief_context(std::span<const Belief>(&belief, 1));
  const double ly = model.pred.log_prob(params, ctx, std::span<const Sequence>(&y.values, 1), output_mask_fn(pruner))[0];
  if (!w) return ly;
  const FactorModel& expl = require_expl(model);
  const Tensor ectx =
      explanation_context(std::span<const Belief>(&belief, 1), std::span<const Output>(&y, 1), model.outputs);
  const double lw =
      expl.log_prob(params, ectx, std::span<const Sequence>(&w->values, 1), world_mask_fn(pruner, std::span(&y, 1)))[0];
  if (nd::is_log_zero(ly) || nd::is_log_zero(lw)) return nd::kLogZero;
  return ly + lw;
}

Output beam_search_output(const InferenceModel& model, const nd::ParamStore& params, const Belief& belief,
                          std::size_t beam_width, const Pruner* pruner) {
  return Output(model.pred.beam_search(params, belief.flatten(), beam_width, output_mask_fn(pruner)));
}

World beam_search_world(const InferenceModel& model, const nd::ParamStore& params, const Belief& belief,
                        const Output& y, std::size_t beam_width, const Pruner* pruner) {
  const FactorModel& expl = require_expl(model);
  const Tensor ectx =
      explanation_context(std::span<const Belief>(&belief, 1), std::span<const Output>(&y, 1), model.outputs);
  return World(expl.beam_search(params, ectx.data(), beam_width, world_mask_fn(pruner, std::span(&y, 1))));
}

namespace {

std::vector<Sequence> as_sequences(std::span<const Output> ys) {
  std::vector<Sequence> out;
  out.reserve(ys.size());
  for (const auto& y : ys) out.push_back(y.values);
  return out;
}

}  // namespace

Var pred_log_prob(nd::Tape& tape, const nd::ParamStore& params, const InferenceModel& model, Var beliefs,
                  std::span<const Output> ys, const Pruner* pruner) {
  const auto seqs = as_sequences(ys);
  return model.pred.log_prob(tape, params, beliefs, seqs, output_mask_fn(pruner));
}

Var expl_log_prob(nd::Tape& tape, const nd::ParamStore& params, const InferenceModel& model, Var beliefs,
                  std::span<const Output> ys, std::span<const World> ws, const Pruner* pruner) {
  const FactorModel& expl = require_expl(model);
  std::vector<Sequence> seqs;
  seqs.reserve(ws.size());
  for (const auto& w : ws) seqs.push_back(w.values);
  Var ctx = nd::concat_cols({beliefs, tape.constant(one_hot(ys, model.outputs))});
  return expl.log_prob(tape, params, ctx, seqs, world_mask_fn(pruner, ys));
}

}  // namespace anesi
