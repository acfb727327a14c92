#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "anesi/errors.hpp"
#include "anesi/gradest.hpp"
#include "anesi/infer.hpp"
#include "support/gradcheck.hpp"
#include "support/toy.hpp"

using namespace anesi;
using namespace anesi::gradest;
using anesi::testutil::random_belief;

namespace {

double weighted_sum(const World& z) {
  double r = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) r += z[i] * static_cast<double>(i + 1);
  return r;
}

double product_outcome(const World& z) {
  double r = 1.0;
  for (std::size_t i = 0; i < z.size(); ++i) r *= 1.0 + z[i];
  return r;
}

double expected_outcome(const Belief& b, const OutcomeFn& g) {
  double total = 0.0;
  for_each_world(b.space(), [&](const World& w) { total += world_prob(b, w) * g(w); });
  return total;
}

// 4000 Adam steps at 1e-3, then 2000 at 1e-4.
OutcomeModel fitted(const SpaceSpec& space, const OutcomeFn& g, std::vector<std::size_t> hidden, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  OutcomeModel model(space, std::move(hidden));
  model.init(rng);
  const DirichletPrior prior(space, 1.0);
  fit_outcome_model(model, prior, g, {4000, 64, 1e-3}, rng);
  fit_outcome_model(model, prior, g, {2000, 64, 1e-4}, rng);
  return model;
}

double norm(const BeliefGradient& g) {
  double t = 0.0;
  for (const auto& row : g) {
    for (double v : row) t += v * v;
  }
  return std::sqrt(t);
}

}  // namespace

TEST(ExactGradient, MatchesFiniteDifferences) {
  const SpaceSpec space{{3, 2, 4}};
  std::mt19937_64 rng(1);
  const Belief b = random_belief(space, rng);
  const auto analytic = exact_gradient(b, product_outcome);
  const double h = 1e-6;
  for (std::size_t i = 0; i < space.size(); ++i) {
    for (std::size_t k = 0; k < b.row(i).size(); ++k) {
      Belief up = b, down = b;
      up.row(i)[k] += h;
      down.row(i)[k] -= h;
      const double numeric = (expected_outcome(up, product_outcome) - expected_outcome(down, product_outcome)) / (2 * h);
      EXPECT_LT(testutil::relative_error(analytic[i][k], numeric), 1e-6) << i << "," << k;
    }
  }
}

TEST(OutcomeModel, NllGradientMatchesFiniteDifferences) {
  const SpaceSpec space{{3, 3}};
  std::mt19937_64 rng(2);
  OutcomeModel model(space, {5});
  model.init(rng);
  std::vector<Belief> beliefs;
  for (int i = 0; i < 4; ++i) beliefs.push_back(random_belief(space, rng));
  const nd::Tensor ctx = belief_context(beliefs);
  nd::Tensor targets = nd::Tensor::matrix(4, 1);
  for (std::size_t r = 0; r < 4; ++r) targets[r] = 0.5 * static_cast<double>(r) - 0.3;
  const auto result = testutil::check_param_gradients(model.params(), [&](nd::Tape& t, const nd::ParamStore& p) {
    return model.nll(t, p, t.constant(ctx), targets);
  });
  EXPECT_LT(result.max_rel_error, 1e-4) << result.worst_param;
}

TEST(OutcomeModel, StdStaysPositiveAndClamped) {
  const SpaceSpec space{{2}};
  std::mt19937_64 rng(3);
  OutcomeModel model(space, {4});
  model.init(rng);
  model.params().value("outcome/l1/b")[1] = 100.0;
  EXPECT_NEAR(model.predict(Belief({{0.5, 0.5}})).std, std::exp(kMaxLogStd), 1e-9);
  model.params().value("outcome/l1/b")[1] = -100.0;
  const double s = model.predict(Belief({{0.5, 0.5}})).std;
  EXPECT_GT(s, 0.0);
  EXPECT_NEAR(s, std::exp(kMinLogStd), 1e-12);
}

TEST(FitOutcomeModel, ConstantTarget) {
  const SpaceSpec space{{3, 3}};
  const OutcomeModel model = fitted(space, [](const World&) { return 3.0; }, {16}, 4);
  std::mt19937_64 rng(5);
  for (int i = 0; i < 20; ++i) {
    const auto p = model.predict(random_belief(space, rng));
    EXPECT_NEAR(p.mean, 3.0, 0.05);
    EXPECT_LT(p.std, 0.05);
  }
}

TEST(FitOutcomeModel, LearnsBernoulliMean) {
  const SpaceSpec space{{2}};
  const OutcomeModel model = fitted(space, [](const World& z) { return static_cast<double>(z[0]); }, {32}, 6);
  std::mt19937_64 rng(7);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Belief b = random_belief(space, rng);
    worst = std::max(worst, std::abs(model.predict(b).mean - b.row(0)[1]));
  }
  EXPECT_LT(worst, 0.02);
}

TEST(FitOutcomeModel, SeededRunsAgree) {
  const SpaceSpec space{{3, 2}};
  auto run = [&] {
    std::mt19937_64 rng(8);
    OutcomeModel model(space);
    model.init(rng);
    fit_outcome_model(model, DirichletPrior(space, 1.0), weighted_sum, {50, 64, 1e-3}, rng);
    return model;
  };
  const OutcomeModel a = run(), b = run();
  for (const auto& [name, e] : a.params().entries()) EXPECT_EQ(e.value.values(), b.params().value(name).values());
}

TEST(SurrogateGradient, ZeroVarianceAndCloseToExact) {
  const SpaceSpec space{{3, 3, 3}};
  const OutcomeModel model = fitted(space, weighted_sum, {32}, 9);
  std::mt19937_64 rng(10);
  // Beliefs close to a vertex are rarely drawn from the prior and fit worst,
  // so the check is on the average and on most beliefs.
  double mean = 0.0;
  int close = 0;
  for (int i = 0; i < 20; ++i) {
    const Belief b = random_belief(space, rng);
    const auto g1 = surrogate_gradient(model, b), g2 = surrogate_gradient(model, b);
    EXPECT_EQ(g1, g2);
    const double c = cosine_similarity(g1, exact_gradient(b, weighted_sum));
    mean += c / 20;
    close += c > 0.95;
  }
  EXPECT_GT(mean, 0.95);
  EXPECT_GE(close, 18);
}

TEST(SurrogateGradient, ConstantOutcomeHasFlatGradient) {
  const SpaceSpec space{{3, 3}};
  const OutcomeModel model = fitted(space, [](const World&) { return 3.0; }, {16}, 11);
  std::mt19937_64 rng(12);
  // Only the component along the simplex is defined by the fit.
  for (int i = 0; i < 10; ++i) {
    EXPECT_LT(norm(project_to_simplex(surrogate_gradient(model, random_belief(space, rng)))), 1e-3);
  }
}

TEST(SurrogateGradient, BiasShrinksWithTraining) {
  const SpaceSpec space{{3, 3}};
  int improved = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(100 + seed);
    OutcomeModel model(space);
    model.init(rng);
    const DirichletPrior prior(space, 1.0);
    std::mt19937_64 eval_rng(200 + seed);
    std::vector<Belief> test;
    for (int i = 0; i < 20; ++i) test.push_back(random_belief(space, eval_rng));
    auto bias = [&] {
      double total = 0.0;
      for (const auto& b : test) total += projected_distance(surrogate_gradient(model, b), exact_gradient(b, weighted_sum));
      return total / test.size();
    };
    fit_outcome_model(model, prior, weighted_sum, {100, 64, 1e-3}, rng);
    const double early = bias();
    fit_outcome_model(model, prior, weighted_sum, {1900, 64, 1e-3}, rng);
    improved += bias() < early;
  }
  EXPECT_GE(improved, 9);
}

TEST(ScoreFunction, UnbiasedWithinStandardErrors) {
  const SpaceSpec space{{3, 2}};
  std::mt19937_64 rng(13);
  const Belief b = random_belief(space, rng);
  const std::size_t n = 100000;
  double var = 0.0;
  const auto est = score_function_gradient(b, product_outcome, n, rng, &var);
  const auto exact = exact_gradient(b, product_outcome);
  EXPECT_GT(var, 0.0);
  // Per-entry standard error from the entry's own second moment.
  for (std::size_t i = 0; i < space.size(); ++i) {
    for (std::size_t k = 0; k < exact[i].size(); ++k) {
      double second = 0.0;
      for_each_world(space, [&](const World& w) {
        if (w[i] != static_cast<int>(k)) return;
        const double v = product_outcome(w) / b.row(i)[k];
        second += world_prob(b, w) * v * v;
      });
      const double mean = exact[i][k];
      const double se = std::sqrt((second - mean * mean) / n);
      EXPECT_LT(std::abs(est[i][k] - mean), 3 * se + 1e-12) << i << "," << k;
    }
  }
}

TEST(ScoreFunction, VarianceFallsWithSamplesAndSeedsRepeat) {
  const SpaceSpec space{{3, 3}};
  const Belief b({{0.2, 0.3, 0.5}, {0.4, 0.4, 0.2}});
  auto spread = [&](std::size_t n) {
    std::vector<BeliefGradient> est;
    std::mt19937_64 r(15);
    for (int i = 0; i < 4000; ++i) est.push_back(score_function_gradient(b, weighted_sum, n, r));
    double total = 0.0;
    const auto exact = exact_gradient(b, weighted_sum);
    for (const auto& e : est) {
      for (std::size_t i = 0; i < e.size(); ++i) {
        for (std::size_t k = 0; k < e[i].size(); ++k) total += (e[i][k] - exact[i][k]) * (e[i][k] - exact[i][k]);
      }
    }
    return total / est.size();
  };
  const double v1 = spread(1), v10 = spread(10);
  EXPECT_GT(v1, 0.0);
  EXPECT_NEAR(v10 / v1, 0.1, 0.03);

  std::mt19937_64 a(16), c(16);
  EXPECT_EQ(score_function_gradient(b, weighted_sum, 1, a), score_function_gradient(b, weighted_sum, 1, c));
  EXPECT_THROW(score_function_gradient(b, weighted_sum, 0, a), ConfigError);
}

TEST(Benchmark, ReportsBothEstimators) {
  BenchConfig cfg;
  cfg.test_beliefs = 5;
  cfg.repeats = 10;
  cfg.fit.iters = 300;
  const auto reports = run_benchmark(cfg);
  ASSERT_EQ(reports.size(), 2u);
  EXPECT_EQ(reports[0].estimator, "surrogate");
  EXPECT_EQ(reports[0].variance, 0.0);
  EXPECT_GT(reports[1].variance, 0.0);
  EXPECT_EQ(reports[0].mean_gradient.size(), 9u);
  const auto j = reports[1].to_json();
  EXPECT_EQ(j.at("estimator"), "score_function");
  EXPECT_TRUE(j.at("bias").is_number());
  const auto again = run_benchmark(cfg);
  EXPECT_EQ(again[1].mean_gradient, reports[1].mean_gradient);
}
