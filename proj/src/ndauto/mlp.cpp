#include "anesi/ndauto/mlp.hpp"

#include <Eigen/Core>
#include <cmath>

#include "anesi/errors.hpp"
#include "anesi/ndauto/ops.hpp"

namespace anesi::nd {
namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMajor> view(const Tensor& t) {
  return Eigen::Map<const RowMajor>(t.data().data(), static_cast<Eigen::Index>(t.rows()),
                                    static_cast<Eigen::Index>(t.cols()));
}

}  // namespace

Mlp::Mlp(std::string prefix, std::vector<std::size_t> widths)
    : prefix_(std::move(prefix)), widths_(std::move(widths)) {
  if (widths_.size() < 2) throw ConfigError("mlp '" + prefix_ + "' needs at least two widths");
  for (std::size_t w : widths_) {
    if (w == 0) throw ConfigError("mlp '" + prefix_ + "' has a zero-width layer");
  }
}

std::string Mlp::weight_name(std::size_t layer) const {
  return prefix_ + "/l" + std::to_string(layer) + "/W";
}

std::string Mlp::bias_name(std::size_t layer) const {
  return prefix_ + "/l" + std::to_string(layer) + "/b";
}

void Mlp::init(ParamStore& params, std::mt19937_64& rng) const {
  for (std::size_t l = 0; l < num_layers(); ++l) {
    const std::size_t fan_in = widths_[l], fan_out = widths_[l + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor w = Tensor::matrix(fan_in, fan_out);
    for (double& v : w.values()) v = dist(rng);
    params.add(weight_name(l), std::move(w));
    params.add(bias_name(l), Tensor::matrix(1, fan_out));
  }
}

Var Mlp::forward(Tape& tape, const ParamStore& params, Var input) const {
  if (input.value().cols() != input_width()) {
    throw ConfigError("mlp '" + prefix_ + "': input width " + std::to_string(input.value().cols()) +
                      ", expected " + std::to_string(input_width()));
  }
  Var h = input;
  for (std::size_t l = 0; l < num_layers(); ++l) {
    h = add_bias(matmul(h, tape.param(params, weight_name(l))), tape.param(params, bias_name(l)));
    if (l + 1 < num_layers()) h = relu(h);
  }
  return h;
}

Tensor Mlp::forward(const ParamStore& params, const Tensor& input) const {
  if (input.cols() != input_width()) {
    throw ConfigError("mlp '" + prefix_ + "': input width " + std::to_string(input.cols()) +
                      ", expected " + std::to_string(input_width()));
  }
  RowMajor h = view(input);
  for (std::size_t l = 0; l < num_layers(); ++l) {
    const Tensor& w = params.value(weight_name(l));
    const Tensor& b = params.value(bias_name(l));
    RowMajor next = h * view(w);
    next.rowwise() += view(b).row(0);
    if (l + 1 < num_layers()) next = next.cwiseMax(0.0);
    h = std::move(next);
  }
  Tensor out = Tensor::matrix(static_cast<std::size_t>(h.rows()), static_cast<std::size_t>(h.cols()));
  Eigen::Map<RowMajor>(out.data().data(), h.rows(), h.cols()) = h;
  return out;
}

Tensor mlp_forward(const ParamStore& params, const Tensor& input,
                   const std::vector<std::size_t>& layer_spec, Head head, const std::string& prefix) {
  if (head == Head::kGaussian && layer_spec.back() != 2) {
    throw ConfigError("gaussian head needs an output width of 2");
  }
  Mlp net(prefix, layer_spec);
  Tensor out = net.forward(params, input);
  if (head == Head::kSoftmax) {
    log_softmax_rows(out);
    for (double& v : out.values()) v = std::exp(v);
  }
  return out;
}

}  // namespace anesi::nd
