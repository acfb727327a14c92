#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "anesi/errors.hpp"
#include "anesi/prior.hpp"
#include "support/gradcheck.hpp"

using namespace anesi;

namespace {

BeliefBuffer sample_buffer(const DirichletPrior& generator, std::size_t n, std::uint64_t seed) {
  BeliefBuffer buffer(n);
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < n; ++i) buffer.push(generator.sample(rng));
  return buffer;
}

}  // namespace

TEST(BeliefBuffer, EvictsOldestFirst) {
  BeliefBuffer buffer(3);
  const SpaceSpec s{{2}};
  for (int i = 0; i < 5; ++i) buffer.push(Belief({{i / 10.0, 1 - i / 10.0}}));
  ASSERT_EQ(buffer.size(), 3u);
  EXPECT_DOUBLE_EQ(buffer.items().front().row(0)[0], 0.2);
  EXPECT_DOUBLE_EQ(buffer.items().back().row(0)[0], 0.4);
  EXPECT_THROW(BeliefBuffer(0), ConfigError);
  EXPECT_THROW(buffer.push(Belief({{0.5, 0.5}, {0.5, 0.5}})), ConfigError);
}

TEST(BeliefBuffer, MeanLogClampsZeros) {
  BeliefBuffer buffer;
  buffer.push(Belief({{0.0, 1.0}}));
  const auto m = buffer.mean_log();
  const double total = 1.0 + 1e-6;
  EXPECT_NEAR(m[0][0], std::log(1e-6 / total), 1e-12);
  EXPECT_NEAR(m[0][1], std::log(1.0 / total), 1e-12);
}

TEST(DirichletFit, RecoversGeneratorAlpha) {
  const auto generator = DirichletPrior::from_alpha({{2.0, 5.0, 3.0}});
  const BeliefBuffer buffer = sample_buffer(generator, 2500, 1);
  DirichletPrior prior(generator.space());
  const auto report = prior.fit(buffer, {500, 0.05, 0.0});
  const auto a = prior.alpha()[0];
  const std::vector<double> truth{2.0, 5.0, 3.0};
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(a[k], truth[k], 0.1 * truth[k]) << k;

  int non_increasing = 0;
  for (std::size_t i = 1; i < report.losses.size(); ++i) non_increasing += report.losses[i] <= report.losses[i - 1];
  EXPECT_GE(non_increasing, static_cast<int>(0.9 * (report.losses.size() - 1)));
}

TEST(DirichletFit, ZeroItersIsNoOp) {
  const auto generator = DirichletPrior::from_alpha({{2.0, 5.0}});
  DirichletPrior prior(generator.space());
  const auto before = prior.alpha();
  prior.fit(sample_buffer(generator, 10, 2), {0, 0.01, 0.0});
  EXPECT_EQ(prior.alpha(), before);
  EXPECT_THROW(prior.fit(BeliefBuffer(5), {}), ConfigError);
}

TEST(DirichletFit, StrongL2KeepsConcentrationSmall) {
  BeliefBuffer buffer;
  for (int i = 0; i < 50; ++i) buffer.push(Belief({std::vector<double>(10, 0.1)}));
  DirichletPrior free(SpaceSpec{{10}}), pulled(SpaceSpec{{10}});
  free.fit(buffer, {200, 0.01, 0.0});
  pulled.fit(buffer, {200, 0.01, 900000.0});
  for (std::size_t k = 0; k < 10; ++k) {
    EXPECT_GT(free.alpha()[0][k], 0.1);
    EXPECT_LT(pulled.alpha()[0][k], 0.1);
  }
}

TEST(DirichletFit, RegularizationIsMonotone) {
  const auto generator = DirichletPrior::from_alpha({{2.0, 5.0, 3.0}, {1.0, 1.0, 4.0}});
  const BeliefBuffer buffer = sample_buffer(generator, 2500, 3);
  std::vector<std::vector<std::vector<double>>> fitted;
  for (double l2 : {0.0, 0.05, 1.0}) {
    DirichletPrior prior(generator.space());
    prior.fit(buffer, {500, 0.05, l2});
    fitted.push_back(prior.alpha());
  }
  for (std::size_t j = 1; j < fitted.size(); ++j) {
    for (std::size_t i = 0; i < 2; ++i) {
      for (std::size_t k = 0; k < 3; ++k) EXPECT_LT(fitted[j][i][k], fitted[j - 1][i][k]);
    }
  }
}

TEST(DirichletSample, SymmetricMean) {
  const auto prior = DirichletPrior::from_alpha({std::vector<double>(10, 1.0)});
  std::mt19937_64 rng(4);
  const int n = 10000;
  std::vector<double> mean(10, 0.0);
  for (int i = 0; i < n; ++i) {
    const Belief b = prior.sample(rng);
    ASSERT_TRUE(b.is_valid(1e-9));
    for (int k = 0; k < 10; ++k) mean[k] += b.row(0)[k] / n;
  }
  const double sd = std::sqrt(9.0 / (100.0 * 11.0));
  for (double m : mean) EXPECT_NEAR(m, 0.1, 3 * sd / std::sqrt(n));
}

TEST(DirichletSample, ConcentratedAndDeterministic) {
  std::vector<double> a(10, 1.0);
  a[0] = 100.0;
  const auto prior = DirichletPrior::from_alpha({a});
  std::mt19937_64 rng(5);
  double mean = 0.0;
  for (int i = 0; i < 2000; ++i) mean += prior.sample(rng).row(0)[0] / 2000;
  EXPECT_GT(mean, 0.9);
  EXPECT_EQ(sample_belief(prior, 7).flatten(), sample_belief(prior, 7).flatten());
}

TEST(DirichletSample, TinyConcentrationStaysValid) {
  const auto prior = DirichletPrior::from_alpha({std::vector<double>(10, 1e-4), std::vector<double>(10, 1e-30)});
  std::mt19937_64 rng(6);
  for (int i = 0; i < 1000; ++i) {
    const Belief b = prior.sample(rng);
    ASSERT_TRUE(b.is_valid(1e-9));
  }
}

TEST(DirichletLogPdf, FlatOnLine) {
  const auto prior = DirichletPrior::from_alpha({{1.0, 1.0}});
  EXPECT_NEAR(prior.log_pdf(Belief({{0.3, 0.7}})), 0.0, 1e-12);
  EXPECT_THROW(prior.log_pdf(Belief({{0.0, 1.0}})), ConfigError);
}

TEST(DirichletLogPdf, IntegratesToOne) {
  const auto prior = DirichletPrior::from_alpha({{2.0, 3.0, 1.5}});
  const int steps = 800;
  const double h = 1.0 / steps;
  double total = 0.0;
  for (int i = 0; i < steps; ++i) {
    for (int j = 0; j + i < steps; ++j) {
      const double p1 = (i + 0.5) * h, p2 = (j + 0.5) * h, p3 = 1.0 - p1 - p2;
      if (p3 <= 0.0) continue;
      total += std::exp(prior.log_pdf(Belief({{p1, p2, p3}}))) * h * h;
    }
  }
  EXPECT_NEAR(total, 1.0, 1e-2);
}

TEST(DirichletLogPdf, GradientMatchesFiniteDifferences) {
  auto prior = DirichletPrior::from_alpha({{0.7, 2.5, 1.2}, {3.0, 0.2}});
  const Belief b({{0.2, 0.5, 0.3}, {0.9, 0.1}});
  const auto analytic = prior.log_pdf_grad_u(b);
  const double h = 1e-5;
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t k = 0; k < analytic[i].size(); ++k) {
      auto& u = prior.params().value(DirichletPrior::param_name(i))[k];
      const double orig = u;
      u = orig + h;
      const double up = prior.log_pdf(b);
      u = orig - h;
      const double down = prior.log_pdf(b);
      u = orig;
      EXPECT_LT(testutil::relative_error(analytic[i][k], (up - down) / (2 * h)), 1e-4) << i << "," << k;
    }
  }
}
