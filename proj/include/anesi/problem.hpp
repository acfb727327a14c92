#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace anesi {

// Cardinalities d_1..d_n of a product space of discrete choices.
struct SpaceSpec {
  std::vector<int> cards;

  std::size_t size() const { return cards.size(); }
  int card(std::size_t i) const { return cards[i]; }
  // Sum of cardinalities: width of a full one-hot encoding.
  std::size_t one_hot_width() const;
  // Offset of variable i inside the one-hot encoding.
  std::size_t one_hot_offset(std::size_t i) const;
  // Number of joint assignments, saturating at UINT64_MAX.
  std::uint64_t num_assignments() const;
  // Throws ConfigError unless non-empty with every cardinality >= 1.
  void validate() const;

  bool operator==(const SpaceSpec&) const = default;
};

// Fixed-length vector of discrete values over a SpaceSpec. The tag keeps
// worlds and outputs from being mixed up.
template <typename Tag>
struct Assignment {
  std::vector<int> values;

  Assignment() = default;
  explicit Assignment(std::vector<int> v) : values(std::move(v)) {}
  Assignment(std::initializer_list<int> v) : values(v) {}

  std::size_t size() const { return values.size(); }
  int operator[](std::size_t i) const { return values[i]; }
  int& operator[](std::size_t i) { return values[i]; }

  auto operator<=>(const Assignment&) const = default;
  bool operator==(const Assignment&) const = default;
};

struct WorldTag {};
struct OutputTag {};
using World = Assignment<WorldTag>;
using Output = Assignment<OutputTag>;

std::string to_string(std::span<const int> values);

// Throws ConfigError if `values` does not fit the space.
void check_in_space(const SpaceSpec& space, std::span<const int> values, const char* what);

// One categorical distribution per world variable.
class Belief {
 public:
  Belief() = default;
  explicit Belief(std::vector<std::vector<double>> rows);

  static Belief uniform(const SpaceSpec& space);
  // Puts all mass on `w`.
  static Belief point_mass(const SpaceSpec& space, const World& w);
  // Inverse of flatten() for the given space.
  static Belief from_flat(const SpaceSpec& space, std::span<const double> flat);

  std::size_t num_vars() const { return rows_.size(); }
  const std::vector<double>& row(std::size_t i) const { return rows_[i]; }
  std::vector<double>& row(std::size_t i) { return rows_[i]; }
  SpaceSpec space() const;
  // Row-major concatenation of all rows.
  std::vector<double> flatten() const;
  void flatten_into(std::span<double> out) const;

  // Each row non-negative and summing to 1 within `tol`.
  bool is_valid(double tol = 1e-6) const;

 private:
  std::vector<std::vector<double>> rows_;
};

// Deterministic reasoning function c: W -> Y over declared spaces.
class SymbolicFn {
 public:
  virtual ~SymbolicFn() = default;
  virtual const SpaceSpec& worlds() const = 0;
  virtual const SpaceSpec& outputs() const = 0;
  virtual Output operator()(const World& w) const = 0;
};

// SymbolicFn backed by a callable.
class LambdaSymbolicFn : public SymbolicFn {
 public:
  using Fn = std::function<Output(const World&)>;

  LambdaSymbolicFn(SpaceSpec worlds, SpaceSpec outputs, Fn fn)
      : worlds_(std::move(worlds)), outputs_(std::move(outputs)), fn_(std::move(fn)) {}

  const SpaceSpec& worlds() const override { return worlds_; }
  const SpaceSpec& outputs() const override { return outputs_; }
  Output operator()(const World& w) const override { return fn_(w); }

 private:
  SpaceSpec worlds_;
  SpaceSpec outputs_;
  Fn fn_;
};

// Floor applied to probabilities before taking logs.
inline constexpr double kProbFloor = 1e-12;
// Largest world space the exact oracles will enumerate.
inline constexpr std::uint64_t kEnumerationLimit = 10'000'000;

// sum_i log P[i][w_i], with each entry floored at kProbFloor.
double world_log_prob(const Belief& belief, const World& w);
// prod_i P[i][w_i], no floor.
double world_prob(const Belief& belief, const World& w);

// Calls `visit` on every world of `space` in lexicographic order. Throws
// EnumerationLimitError if the space exceeds `limit` worlds.
void for_each_world(const SpaceSpec& space, const std::function<void(const World&)>& visit,
                    std::uint64_t limit = kEnumerationLimit);

// Weighted model count p(y|P) by enumeration.
double exact_wmc(const Belief& belief, const SymbolicFn& c, const Output& y);
// p(y|P) for every reachable y in one enumeration.
std::map<Output, double> exact_output_distribution(const Belief& belief, const SymbolicFn& c);
// Posterior p(w|y,P) over possible worlds of y with non-zero probability.
// Throws std::domain_error if y has no possible world with positive mass.
std::map<World, double> exact_posterior(const Belief& belief, const SymbolicFn& c, const Output& y);
// argmax_w p(w|y,P); ties go to the lexicographically smallest world.
World exact_mpe(const Belief& belief, const SymbolicFn& c, const Output& y);

}  // namespace anesi
