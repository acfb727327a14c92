#include "anesi/problem.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "anesi/errors.hpp"

namespace anesi {

std::size_t SpaceSpec::one_hot_width() const {
  return static_cast<std::size_t>(std::accumulate(cards.begin(), cards.end(), 0));
}

std::size_t SpaceSpec::one_hot_offset(std::size_t i) const {
  return static_cast<std::size_t>(std::accumulate(cards.begin(), cards.begin() + i, 0));
}

std::uint64_t SpaceSpec::num_assignments() const {
  std::uint64_t total = 1;
  for (int d : cards) {
    if (total > std::numeric_limits<std::uint64_t>::max() / static_cast<std::uint64_t>(d)) {
      return std::numeric_limits<std::uint64_t>::max();
    }
    total *= static_cast<std::uint64_t>(d);
  }
  return total;
}

void SpaceSpec::validate() const {
  if (cards.empty()) throw ConfigError("space has no variables");
  for (int d : cards) {
    if (d < 1) throw ConfigError("space cardinality must be >= 1, got " + std::to_string(d));
  }
}

std::string to_string(std::span<const int> values) {
  std::string out = "(";
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(values[i]);
  }
  return out + ")";
}

void check_in_space(const SpaceSpec& space, std::span<const int> values, const char* what) {
  if (values.size() != space.size()) {
    throw ConfigError(std::string(what) + " has length " + std::to_string(values.size()) +
                      ", expected " + std::to_string(space.size()));
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] < 0 || values[i] >= space.card(i)) {
      throw ConfigError(std::string(what) + " " + to_string(values) + " out of range at position " +
                        std::to_string(i));
    }
  }
}

Belief::Belief(std::vector<std::vector<double>> rows) : rows_(std::move(rows)) {}

Belief Belief::uniform(const SpaceSpec& space) {
  std::vector<std::vector<double>> rows;
  for (int d : space.cards) rows.emplace_back(d, 1.0 / d);
  return Belief(std::move(rows));
}

Belief Belief::point_mass(const SpaceSpec& space, const World& w) {
  check_in_space(space, w.values, "world");
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < space.size(); ++i) {
    rows.emplace_back(space.card(i), 0.0);
    rows.back()[w[i]] = 1.0;
  }
  return Belief(std::move(rows));
}

Belief Belief::from_flat(const SpaceSpec& space, std::span<const double> flat) {
  if (flat.size() != space.one_hot_width()) throw ConfigError("flat belief has the wrong width");
  std::vector<std::vector<double>> rows;
  std::size_t offset = 0;
  for (int d : space.cards) {
    rows.emplace_back(flat.begin() + offset, flat.begin() + offset + d);
    offset += d;
  }
  return Belief(std::move(rows));
}

SpaceSpec Belief::space() const {
  SpaceSpec s;
  for (const auto& r : rows_) s.cards.push_back(static_cast<int>(r.size()));
  return s;
}

std::vector<double> Belief::flatten() const {
  std::vector<double> out;
  for (const auto& r : rows_) out.insert(out.end(), r.begin(), r.end());
  return out;
}

void Belief::flatten_into(std::span<double> out) const {
  std::size_t offset = 0;
  for (const auto& r : rows_) {
    std::copy(r.begin(), r.end(), out.begin() + offset);
    offset += r.size();
  }
}

bool Belief::is_valid(double tol) const {
  for (const auto& r : rows_) {
    double total = 0.0;
    for (double p : r) {
      if (!(p >= 0.0)) return false;
      total += p;
    }
    if (std::abs(total - 1.0) > tol) return false;
  }
  return !rows_.empty();
}

double world_log_prob(const Belief& belief, const World& w) {
  check_in_space(belief.space(), w.values, "world");
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) total += std::log(std::max(belief.row(i)[w[i]], kProbFloor));
  return total;
}

double world_prob(const Belief& belief, const World& w) {
  double total = 1.0;
  for (std::size_t i = 0; i < w.size(); ++i) total *= belief.row(i)[w[i]];
  return total;
}

void for_each_world(const SpaceSpec& space, const std::function<void(const World&)>& visit,
                    std::uint64_t limit) {
  space.validate();
  const std::uint64_t count = space.num_assignments();
  if (count > limit) {
    throw EnumerationLimitError("refusing to enumerate " + std::to_string(count) +
                                " worlds (limit " + std::to_string(limit) + ")");
  }
  World w(std::vector<int>(space.size(), 0));
  for (std::uint64_t n = 0; n < count; ++n) {
    visit(w);
    for (std::size_t i = space.size(); i-- > 0;) {
      if (++w[i] < space.card(i)) break;
      w[i] = 0;
    }
  }
}

namespace {

void check_spaces(const Belief& belief, const SymbolicFn& c) {
  if (belief.space() != c.worlds()) throw ConfigError("belief does not match the world space of c");
}

}  // namespace

double exact_wmc(const Belief& belief, const SymbolicFn& c, const Output& y) {
  check_spaces(belief, c);
  check_in_space(c.outputs(), y.values, "output");
  double total = 0.0;
  for_each_world(c.worlds(), [&](const World& w) {
    if (c(w) == y) total += world_prob(belief, w);
  });
  return total;
}

std::map<Output, double> exact_output_distribution(const Belief& belief, const SymbolicFn& c) {
  check_spaces(belief, c);
  std::map<Output, double> out;
  for_each_world(c.worlds(), [&](const World& w) { out[c(w)] += world_prob(belief, w); });
  return out;
}

std::map<World, double> exact_posterior(const Belief& belief, const SymbolicFn& c, const Output& y) {
  check_spaces(belief, c);
  check_in_space(c.outputs(), y.values, "output");
  std::map<World, double> out;
  double total = 0.0;
  for_each_world(c.worlds(), [&](const World& w) {
    if (c(w) != y) return;
    const double p = world_prob(belief, w);
    if (p > 0.0) {
      out[w] = p;
      total += p;
    }
  });
  if (total <= 0.0) throw std::domain_error("output " + to_string(y.values) + " has no possible worlds");
  for (auto& [w, p] : out) p /= total;
  return out;
}

World exact_mpe(const Belief& belief, const SymbolicFn& c, const Output& y) {
  const auto posterior = exact_posterior(belief, c, y);
  // std::map iterates lexicographically, so a strict comparison keeps the
  // smallest world among ties.
  auto best = posterior.begin();
  for (auto it = posterior.begin(); it != posterior.end(); ++it) {
    if (it->second > best->second) best = it;
  }
  return best->first;
}

}  // namespace anesi
