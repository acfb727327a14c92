#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "anesi/problem.hpp"

namespace anesi {

// Zero/one vector over the options of a single variable.
using PrunerMask = std::vector<std::uint8_t>;

// Symbolic pruner s_i. Outputs are generated before worlds, so the output
// mask only sees the output prefix while the world mask sees the full output.
class Pruner {
 public:
  virtual ~Pruner() = default;
  // Mask for output variable y_prefix.size().
  virtual PrunerMask output_mask(std::span<const int> y_prefix) const = 0;
  // Mask for world variable w_prefix.size(), given the complete output y.
  virtual PrunerMask world_mask(const Output& y, std::span<const int> w_prefix) const = 0;
};

}  // namespace anesi

namespace anesi::pruners {

enum class VariableKind { kOutput, kWorld };

// Decision point of the addition pruner. `k` is 1-based: the variable being
// chosen is y_k (kind output) or w_k (kind world).
struct PrunerContext {
  int n = 1;
  std::vector<int> y;         // output prefix (kind output) or full output (kind world)
  std::vector<int> w_prefix;  // w_1..w_{k-1}
  std::size_t k = 1;
  VariableKind kind = VariableKind::kWorld;
};

// True iff some w_{k+1..2N} makes n1 + n2 equal to y, where k = |w_prefix|.
// Enumerates every completion of the first number; the second is then fixed.
// Throws EnumerationLimitError for N > 3.
bool completion_exists(int n, const Output& y, std::span<const int> w_prefix);

// Linear-time exact world pruner for multi-digit addition.
PrunerMask mnistadd_prune_world(const PrunerContext& ctx);
// Keeps output digit d iff some full output extending the prefix with d is a
// reachable sum (at most 2(10^N - 1)).
PrunerMask mnistadd_prune_output(const PrunerContext& ctx);

class AdditionPruner : public Pruner {
 public:
  explicit AdditionPruner(int n) : n_(n) {}
  int n() const { return n_; }
  PrunerMask output_mask(std::span<const int> y_prefix) const override;
  PrunerMask world_mask(const Output& y, std::span<const int> w_prefix) const override;

 private:
  int n_;
};

// Reference pruner built on completion_exists and an enumeration of all
// reachable sums. N <= 3.
class BruteForcePruner : public Pruner {
 public:
  explicit BruteForcePruner(int n);
  PrunerMask output_mask(std::span<const int> y_prefix) const override;
  PrunerMask world_mask(const Output& y, std::span<const int> w_prefix) const override;

 private:
  int n_;
  std::set<std::vector<int>> reachable_prefixes_;
};

struct VerifyReport {
  int n_max = 0;
  std::uint64_t cases = 0;
  std::uint64_t disagreements = 0;
  std::vector<std::string> counterexamples;  // first few, human readable

  bool ok() const { return disagreements == 0; }
};

using PrunerFactory = std::function<std::unique_ptr<Pruner>(int n)>;

// Compares `candidate` against the completion oracle: exhaustively over every
// (y, prefix, digit) for N <= 2 and on `random_cases` seeded random decision
// points for N = 3. N_max = 0 checks nothing.
VerifyReport verify_pruner(const PrunerFactory& candidate, int n_max, std::uint64_t random_cases = 100000,
                           std::uint64_t seed = 0);

}  // namespace anesi::pruners
