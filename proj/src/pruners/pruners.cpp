#include "anesi/pruners.hpp"

#include <random>

#include "anesi/errors.hpp"
#include "anesi/tasks.hpp"

namespace anesi::pruners {
namespace {

using tasks::digits_to_int;

__int128 pow10(int e) {
  __int128 v = 1;
  for (int i = 0; i < e; ++i) v *= 10;
  return v;
}

std::string describe(int n, std::span<const int> y, std::span<const int> prefix, int digit, bool expected,
                     bool got, const char* kind) {
  return std::string(kind) + " N=" + std::to_string(n) + " y=" + to_string(y) + " prefix=" +
         to_string(prefix) + " digit=" + std::to_string(digit) + " oracle=" + (expected ? "1" : "0") +
         " pruner=" + (got ? "1" : "0");
}

}  // namespace

bool completion_exists(int n, const Output& y, std::span<const int> w_prefix) {
  if (n > 3) throw EnumerationLimitError("completion_exists enumerates at most N = 3, got N = " + std::to_string(n));
  if (y.size() != static_cast<std::size_t>(n + 1) || w_prefix.size() > static_cast<std::size_t>(2 * n)) {
    throw ConfigError("completion_exists: bad output or prefix length");
  }
  const __int128 target = digits_to_int(y.values);
  const std::size_t fixed_first = std::min<std::size_t>(w_prefix.size(), n);
  const int free_first = n - static_cast<int>(fixed_first);
  const __int128 first_base = digits_to_int(w_prefix.first(fixed_first)) * pow10(free_first);
  const __int128 span = pow10(free_first);
  const __int128 limit = pow10(n);
  const auto second_prefix = w_prefix.subspan(fixed_first);
  const __int128 second_scale = pow10(n - static_cast<int>(second_prefix.size()));
  const __int128 second_fixed = digits_to_int(second_prefix);
  for (__int128 rest = 0; rest < span; ++rest) {
    const __int128 n2 = target - (first_base + rest);
    if (n2 < 0 || n2 >= limit) continue;
    if (n2 / second_scale == second_fixed) return true;
  }
  return false;
}

PrunerMask mnistadd_prune_world(const PrunerContext& ctx) {
  const int n = ctx.n;
  const std::size_t k = ctx.k;
  if (ctx.y.size() != static_cast<std::size_t>(n + 1) || k < 1 || k > static_cast<std::size_t>(2 * n) ||
      ctx.w_prefix.size() != k - 1) {
    throw ConfigError("mnistadd_prune_world: inconsistent context");
  }
  PrunerMask mask(10, 0);
  const std::span<const int> y(ctx.y);
  const std::span<const int> w(ctx.w_prefix);
  if (k <= static_cast<std::size_t>(n)) {
    // l: the first k+1 digits of y; p: the first k digits of the first number.
    const __int128 l = digits_to_int(y.first(k + 1));
    const __int128 p_prefix = digits_to_int(w) * 10;
    // S = 1 when k = N or when the remaining output digits are all 9.
    bool trailing_nines = true;
    for (std::size_t i = k + 1; i < y.size(); ++i) trailing_nines = trailing_nines && y[i] == 9;
    const int s = (k == static_cast<std::size_t>(n) || trailing_nines) ? 1 : 0;
    const __int128 upper = pow10(static_cast<int>(k)) - s;
    for (int d = 0; d < 10; ++d) {
      const __int128 diff = l - (p_prefix + d);
      mask[d] = (diff >= 0 && diff <= upper) ? 1 : 0;
    }
    return mask;
  }
  const __int128 n1 = digits_to_int(w.first(n));
  const __int128 n2 = digits_to_int(y) - n1;
  if (n2 < 0 || n2 >= pow10(n)) return mask;
  const int pos = static_cast<int>(k) - n;  // 1-based digit position inside the second number
  // The already generated digits of the second number must agree with n2.
  if (n2 / pow10(n - pos + 1) != digits_to_int(w.subspan(n))) return mask;
  mask[static_cast<int>((n2 / pow10(n - pos)) % 10)] = 1;
  return mask;
}

PrunerMask mnistadd_prune_output(const PrunerContext& ctx) {
  const int n = ctx.n;
  const std::size_t k = ctx.k;
  if (k < 1 || k > static_cast<std::size_t>(n + 1) || ctx.y.size() != k - 1) {
    throw ConfigError("mnistadd_prune_output: inconsistent context");
  }
  const int card = k == 1 ? 2 : 10;
  const __int128 max_sum = 2 * (pow10(n) - 1);
  const __int128 prefix = digits_to_int(ctx.y);
  const __int128 scale = pow10(n + 1 - static_cast<int>(k));
  PrunerMask mask(card, 0);
  for (int d = 0; d < card; ++d) mask[d] = (prefix * 10 + d) * scale <= max_sum ? 1 : 0;
  return mask;
}

PrunerMask AdditionPruner::output_mask(std::span<const int> y_prefix) const {
  return mnistadd_prune_output(
      {n_, {y_prefix.begin(), y_prefix.end()}, {}, y_prefix.size() + 1, VariableKind::kOutput});
}

PrunerMask AdditionPruner::world_mask(const Output& y, std::span<const int> w_prefix) const {
  return mnistadd_prune_world({n_, y.values, {w_prefix.begin(), w_prefix.end()}, w_prefix.size() + 1,
                               VariableKind::kWorld});
}

BruteForcePruner::BruteForcePruner(int n) : n_(n) {
  if (n < 1 || n > 3) throw EnumerationLimitError("brute-force pruner supports 1 <= N <= 3");
  const tasks::AdditionTask task(n);
  for_each_world(task.worlds(), [&](const World& w) {
    const Output y = task(w);
    for (std::size_t len = 0; len <= y.size(); ++len) {
      reachable_prefixes_.insert(std::vector<int>(y.values.begin(), y.values.begin() + len));
    }
  });
}

PrunerMask BruteForcePruner::output_mask(std::span<const int> y_prefix) const {
  const int card = y_prefix.empty() ? 2 : 10;
  PrunerMask mask(card, 0);
  std::vector<int> extended(y_prefix.begin(), y_prefix.end());
  extended.push_back(0);
  for (int d = 0; d < card; ++d) {
    extended.back() = d;
    mask[d] = reachable_prefixes_.count(extended) ? 1 : 0;
  }
  return mask;
}

PrunerMask BruteForcePruner::world_mask(const Output& y, std::span<const int> w_prefix) const {
  PrunerMask mask(10, 0);
  std::vector<int> extended(w_prefix.begin(), w_prefix.end());
  extended.push_back(0);
  for (int d = 0; d < 10; ++d) {
    extended.back() = d;
    mask[d] = completion_exists(n_, y, extended) ? 1 : 0;
  }
  return mask;
}

VerifyReport verify_pruner(const PrunerFactory& candidate, int n_max, std::uint64_t random_cases,
                           std::uint64_t seed) {
  VerifyReport report;
  report.n_max = n_max;
  auto record = [&](bool expected, bool got, std::string what) {
    if (expected == got) return;
    ++report.disagreements;
    if (report.counterexamples.size() < 10) report.counterexamples.push_back(std::move(what));
  };

  for (int n = 1; n <= std::min(n_max, 3); ++n) {
    const auto pruner = candidate(n);
    const BruteForcePruner oracle(n);
    const SpaceSpec outputs = tasks::AdditionTask(n).outputs();

    // Output masks: every prefix of every output.
    for (std::size_t len = 0; len <= static_cast<std::size_t>(n); ++len) {
      SpaceSpec prefix_space{std::vector<int>(outputs.cards.begin(), outputs.cards.begin() + len)};
      auto check_output_prefix = [&](std::span<const int> prefix) {
        const PrunerMask got = pruner->output_mask(prefix);
        const PrunerMask expected = oracle.output_mask(prefix);
        ++report.cases;
        for (std::size_t d = 0; d < expected.size(); ++d) {
          const bool g = d < got.size() && got[d];
          record(expected[d] != 0, g, describe(n, prefix, {}, static_cast<int>(d), expected[d], g, "output"));
        }
      };
      if (len == 0) {
        check_output_prefix({});
      } else {
        for_each_world(prefix_space, [&](const World& p) { check_output_prefix(p.values); });
      }
    }

    auto check_world = [&](const Output& y, std::span<const int> prefix) {
      const PrunerMask got = pruner->world_mask(y, prefix);
      std::vector<int> extended(prefix.begin(), prefix.end());
      extended.push_back(0);
      ++report.cases;
      for (int d = 0; d < 10; ++d) {
        extended.back() = d;
        const bool expected = completion_exists(n, y, extended);
        const bool g = got.size() == 10 && got[d];
        record(expected, g, describe(n, y.values, prefix, d, expected, g, "world"));
      }
    };

    if (n <= 2) {
      for_each_world(SpaceSpec{outputs}, [&](const World& yw) {
        const Output y(yw.values);
        for (std::size_t len = 0; len < static_cast<std::size_t>(2 * n); ++len) {
          if (len == 0) {
            check_world(y, {});
            continue;
          }
          for_each_world(SpaceSpec{std::vector<int>(len, 10)}, [&](const World& p) { check_world(y, p.values); });
        }
      });
      continue;
    }

    // N = 3: half the cases follow a real sum (optionally with one corrupted
    // digit), half are uniformly random.
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> digit(0, 9), bit(0, 1), len_dist(0, 2 * n - 1);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    const tasks::AdditionTask task(n);
    for (std::uint64_t c = 0; c < random_cases; ++c) {
      const std::size_t len = static_cast<std::size_t>(len_dist(rng));
      Output y;
      std::vector<int> prefix;
      if (c % 2 == 0) {
        World w(std::vector<int>(2 * n));
        for (int& v : w.values) v = digit(rng);
        y = task(w);
        prefix.assign(w.values.begin(), w.values.begin() + len);
        if (len > 0 && coin(rng) < 0.25) prefix[std::uniform_int_distribution<std::size_t>(0, len - 1)(rng)] = digit(rng);
      } else {
        y.values.push_back(bit(rng));
        for (int i = 0; i < n; ++i) y.values.push_back(digit(rng));
        for (std::size_t i = 0; i < len; ++i) prefix.push_back(digit(rng));
      }
      check_world(y, prefix);
    }
  }
  return report;
}

}  // namespace anesi::pruners
