#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "anesi/ndauto/tape.hpp"

namespace anesi::nd {

// Differentiable primitives. All operate on rank-2 (rows x cols) values
// unless stated otherwise; each one records exactly one tape node.

Var matmul(Var a, Var b);
// Adds a (1 x cols) bias to every row.
Var add_bias(Var a, Var bias);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
Var add_scalar(Var a, double offset);
Var relu(Var a);
Var exp(Var a);
Var square(Var a);
Var softplus(Var a);
// Element-wise clamp; gradient is zero where the clamp is active.
Var clamp(Var a, double lo, double hi);

// Row-wise log-softmax. With a mask (same shape, entries 0/1) the masked
// entries are excluded from the normalizer and set to kLogZero; this is the
// log of q_i s_i / (q . s). A row with every entry masked raises
// DeadBranchError.
Var log_softmax(Var logits);
Var log_softmax(Var logits, const Tensor& mask);
Var softmax(Var logits);

// out[r] = a[r, indices[r]], shape (rows x 1). Throws DeadBranchError if a
// picked entry is kLogZero.
Var pick(Var a, std::span<const int> indices);
Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
// Same data, new shape; sizes must agree.
Var reshape(Var a, std::vector<std::size_t> shape);

// Reductions to a (1 x 1) scalar, and row sums to (rows x 1).
Var sum(Var a);
Var mean(Var a);
Var sum_rows(Var a);

// Distinguished log-probability of a pruned option.
inline constexpr double kLogZero = -1e300;
inline bool is_log_zero(double v) { return v <= kLogZero; }

// Non-differentiable helpers shared by the fast inference paths.
void log_softmax_rows(Tensor& logits, const Tensor* mask = nullptr);

}  // namespace anesi::nd
