#include "anesi/ndauto/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "anesi/errors.hpp"

namespace anesi::nd {
namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMajor>;
using ConstMatMap = Eigen::Map<const RowMajor>;

MatMap as_matrix(Tensor& t) {
  return MatMap(t.data().data(), static_cast<Eigen::Index>(t.rows()),
                static_cast<Eigen::Index>(t.cols()));
}

ConstMatMap as_matrix(const Tensor& t) {
  return ConstMatMap(t.data().data(), static_cast<Eigen::Index>(t.rows()),
                     static_cast<Eigen::Index>(t.cols()));
}

std::string shape_string(const Tensor& t) {
  return "(" + std::to_string(t.rows()) + "x" + std::to_string(t.cols()) + ")";
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.size() != b.size() || a.rows() != b.rows()) {
    throw ConfigError(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " +
                      shape_string(b));
  }
}

// Element-wise unary op with derivative expressed through input x and output y.
template <typename Fwd, typename Deriv>
Var unary(Var a, Fwd fwd, Deriv deriv) {
  Tensor out(a.value().shape());
  const Tensor& x = a.value();
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = fwd(x[i]);
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia, deriv](Tape& t, std::size_t self) {
    if (!t.requires_grad(ia)) return;
    const Tensor& x = t.value(ia);
    const Tensor& y = t.value(self);
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad(ia);
    for (std::size_t i = 0; i < x.size(); ++i) gx[i] += g[i] * deriv(x[i], y[i]);
  });
}

}  // namespace

Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw ConfigError("matmul: inner dimensions differ " + shape_string(av) + " x " +
                      shape_string(bv));
  }
  Tensor out = Tensor::matrix(av.rows(), bv.cols());
  as_matrix(out).noalias() = as_matrix(av) * as_matrix(bv);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    auto g = as_matrix(t.grad(self));
    if (t.requires_grad(ia)) as_matrix(t.grad(ia)).noalias() += g * as_matrix(t.value(ib)).transpose();
    if (t.requires_grad(ib)) as_matrix(t.grad(ib)).noalias() += as_matrix(t.value(ia)).transpose() * g;
  });
}

Var add_bias(Var a, Var bias) {
  const Tensor& av = a.value();
  const Tensor& bv = bias.value();
  if (bv.size() != av.cols()) {
    throw ConfigError("add_bias: bias width " + std::to_string(bv.size()) + " vs " +
                      shape_string(av));
  }
  Tensor out = av;
  const std::size_t rows = av.rows(), cols = av.cols();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += bv[c];
  const std::size_t ia = a.id(), ib = bias.id();
  return a.tape().record(std::move(out), {a, bias}, [ia, ib, rows, cols](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(ia)) {
      Tensor& ga = t.grad(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.requires_grad(ib)) {
      Tensor& gb = t.grad(ib);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) gb[c] += g[r * cols + c];
    }
  });
}

Var add(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    for (std::size_t in : {ia, ib}) {
      if (!t.requires_grad(in)) continue;
      Tensor& gi = t.grad(in);
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
    }
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(ia)) {
      Tensor& ga = t.grad(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.requires_grad(ib)) {
      Tensor& gb = t.grad(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(ia)) {
      Tensor& ga = t.grad(ia);
      const Tensor& bv = t.value(ib);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.requires_grad(ib)) {
      Tensor& gb = t.grad(ib);
      const Tensor& av = t.value(ia);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var scale(Var a, double factor) {
  return unary(a, [factor](double x) { return factor * x; },
               [factor](double, double) { return factor; });
}

Var add_scalar(Var a, double offset) {
  return unary(a, [offset](double x) { return x + offset; }, [](double, double) { return 1.0; });
}

Var relu(Var a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var exp(Var a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var square(Var a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var softplus(Var a) {
  return unary(a, [](double x) { return nd::softplus(x); },
               [](double x, double) { return nd::sigmoid(x); });
}

Var clamp(Var a, double lo, double hi) {
  return unary(a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
               [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

void log_softmax_rows(Tensor& logits, const Tensor* mask) {
  const std::size_t rows = logits.rows(), cols = logits.cols();
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = logits.data().data() + r * cols;
    const double* m = mask ? mask->data().data() + r * cols : nullptr;
    double max_v = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cols; ++c)
      if (!m || m[c] != 0.0) max_v = std::max(max_v, row[c]);
    if (max_v == -std::numeric_limits<double>::infinity()) {
      throw DeadBranchError("every option of a factor is masked (row " + std::to_string(r) + ")");
    }
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c)
      if (!m || m[c] != 0.0) total += std::exp(row[c] - max_v);
    const double lse = max_v + std::log(total);
    for (std::size_t c = 0; c < cols; ++c) row[c] = (!m || m[c] != 0.0) ? row[c] - lse : kLogZero;
  }
}

namespace {

Var log_softmax_impl(Var logits, const Tensor* mask) {
  Tensor out = logits.value();
  if (mask) require_same_shape(out, *mask, "log_softmax mask");
  log_softmax_rows(out, mask);
  const std::size_t ia = logits.id();
  const std::size_t rows = out.rows(), cols = out.cols();
  return logits.tape().record(std::move(out), {logits}, [ia, rows, cols](Tape& t, std::size_t self) {
    const Tensor& y = t.value(self);
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad(ia);
    for (std::size_t r = 0; r < rows; ++r) {
      double gsum = 0.0;
      for (std::size_t c = 0; c < cols; ++c)
        if (!is_log_zero(y[r * cols + c])) gsum += g[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c) {
        const std::size_t i = r * cols + c;
        if (is_log_zero(y[i])) continue;
        gx[i] += g[i] - std::exp(y[i]) * gsum;
      }
    }
  });
}

}  // namespace

Var log_softmax(Var logits) { return log_softmax_impl(logits, nullptr); }

Var log_softmax(Var logits, const Tensor& mask) { return log_softmax_impl(logits, &mask); }

Var softmax(Var logits) {
  Tensor out = logits.value();
  log_softmax_rows(out);
  for (double& v : out.values()) v = std::exp(v);
  const std::size_t ia = logits.id();
  const std::size_t rows = out.rows(), cols = out.cols();
  return logits.tape().record(std::move(out), {logits}, [ia, rows, cols](Tape& t, std::size_t self) {
    const Tensor& y = t.value(self);
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad(ia);
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += g[r * cols + c] * y[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c) {
        const std::size_t i = r * cols + c;
        gx[i] += y[i] * (g[i] - dot);
      }
    }
  });
}

Var pick(Var a, std::span<const int> indices) {
  const Tensor& av = a.value();
  const std::size_t rows = av.rows(), cols = av.cols();
  if (indices.size() != rows) {
    throw ConfigError("pick: " + std::to_string(indices.size()) + " indices for " +
                      std::to_string(rows) + " rows");
  }
  Tensor out = Tensor::matrix(rows, 1);
  std::vector<int> idx(indices.begin(), indices.end());
  for (std::size_t r = 0; r < rows; ++r) {
    if (idx[r] < 0 || static_cast<std::size_t>(idx[r]) >= cols) {
      throw ConfigError("pick: index " + std::to_string(idx[r]) + " out of range");
    }
    out[r] = av[r * cols + idx[r]];
    if (is_log_zero(out[r])) {
      throw DeadBranchError("pick: option " + std::to_string(idx[r]) + " in row " +
                            std::to_string(r) + " is pruned");
    }
  }
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia, idx = std::move(idx), cols](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(ia);
    for (std::size_t r = 0; r < idx.size(); ++r) ga[r * cols + idx[r]] += g[r];
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ConfigError("concat_cols: no inputs");
  const std::size_t rows = parts.front().value().rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Var& p : parts) {
    if (p.value().rows() != rows) throw ConfigError("concat_cols: row counts differ");
    widths.push_back(p.value().cols());
    total += widths.back();
  }
  Tensor out = Tensor::matrix(rows, total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& v = parts[k].value();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(v.data().data() + r * widths[k], widths[k], out.data().data() + r * total + offset);
    offset += widths[k];
  }
  std::vector<std::size_t> ids;
  for (const Var& p : parts) ids.push_back(p.id());
  return parts.front().tape().record(
      std::move(out), parts, [ids, widths, rows, total](Tape& t, std::size_t self) {
        const Tensor& g = t.grad(self);
        std::size_t offset = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (t.requires_grad(ids[k])) {
            Tensor& gk = t.grad(ids[k]);
            for (std::size_t r = 0; r < rows; ++r)
              for (std::size_t c = 0; c < widths[k]; ++c)
                gk[r * widths[k] + c] += g[r * total + offset + c];
          }
          offset += widths[k];
        }
      });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  const Tensor& av = a.value();
  const std::size_t rows = av.rows(), cols = av.cols();
  if (begin >= end || end > cols) throw ConfigError("slice_cols: bad range");
  const std::size_t width = end - begin;
  Tensor out = Tensor::matrix(rows, width);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < width; ++c) out[r * width + c] = av[r * cols + begin + c];
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia, rows, cols, begin, width](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(ia);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < width; ++c) ga[r * cols + begin + c] += g[r * width + c];
  });
}

Var reshape(Var a, std::vector<std::size_t> shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Var sum(Var a) {
  double total = 0.0;
  for (double v : a.value().values()) total += v;
  const std::size_t ia = a.id();
  return a.tape().record(Tensor::scalar(total), {a}, [ia](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    for (double& v : t.grad(ia).values()) v += g;
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum(a), 1.0 / n);
}

Var sum_rows(Var a) {
  const Tensor& av = a.value();
  const std::size_t rows = av.rows(), cols = av.cols();
  Tensor out = Tensor::matrix(rows, 1);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out[r] += av[r * cols + c];
  const std::size_t ia = a.id();
  return a.tape().record(std::move(out), {a}, [ia, rows, cols](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& ga = t.grad(ia);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) ga[r * cols + c] += g[r];
  });
}

}  // namespace anesi::nd
