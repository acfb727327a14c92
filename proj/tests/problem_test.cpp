#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <stdexcept>

#include "anesi/errors.hpp"
#include "anesi/problem.hpp"
#include "anesi/tasks.hpp"

using namespace anesi;

namespace {

Belief random_belief(const SpaceSpec& space, std::mt19937_64& rng) {
  std::gamma_distribution<double> gamma(1.0, 1.0);
  std::vector<std::vector<double>> rows;
  for (int d : space.cards) {
    std::vector<double> row(d);
    double total = 0.0;
    for (double& p : row) total += (p = gamma(rng));
    for (double& p : row) p /= total;
    rows.push_back(row);
  }
  return Belief(rows);
}

// Two ten-ary digits with the sum as a single integer output.
LambdaSymbolicFn two_digit_sum() {
  return LambdaSymbolicFn(SpaceSpec{{10, 10}}, SpaceSpec{{19}}, [](const World& w) { return Output{w[0] + w[1]}; });
}

}  // namespace

TEST(WorldLogProb, UniformTwoDigits) {
  const Belief b = Belief::uniform(SpaceSpec{{10, 10}});
  EXPECT_NEAR(world_log_prob(b, World{3, 7}), std::log(0.01), 1e-12);
}

TEST(WorldLogProb, PointMassIsZero) {
  const SpaceSpec s{{10, 10}};
  EXPECT_DOUBLE_EQ(world_log_prob(Belief::point_mass(s, World{5, 8}), World{5, 8}), 0.0);
}

TEST(WorldLogProb, SumsToOneOverAllWorlds) {
  std::mt19937_64 rng(11);
  const SpaceSpec s{{3, 4, 5}};
  const Belief b = random_belief(s, rng);
  double total = 0.0;
  for_each_world(s, [&](const World& w) { total += std::exp(world_log_prob(b, w)); });
  EXPECT_NEAR(total, 1.0, 1e-9);
}

TEST(WorldLogProb, OutOfRangeThrows) {
  const Belief b = Belief::uniform(SpaceSpec{{10, 10}});
  EXPECT_THROW(world_log_prob(b, World{3, 10}), ConfigError);
  EXPECT_THROW(world_log_prob(b, World{3}), ConfigError);
}

TEST(ExactWmc, DisjunctionClosedForm) {
  const auto c = tasks::boolean_constraint_task(2, tasks::Formula::kDisjunction);
  for (double pa : {0.1, 0.5, 0.83}) {
    for (double pb : {0.0, 0.3, 0.97}) {
      const Belief b({{1 - pa, pa}, {1 - pb, pb}});
      EXPECT_NEAR(exact_wmc(b, *c, Output{1}), pa + pb - pa * pb, 1e-12);
    }
  }
}

TEST(ExactWmc, UnreachableOutputIsZero) {
  const tasks::AdditionTask task(1);
  const Belief b = Belief::uniform(task.worlds());
  EXPECT_EQ(exact_wmc(b, task, Output{1, 9}), 0.0);
}

TEST(ExactWmc, SumThirteenUniform) {
  const tasks::AdditionTask task(1);
  EXPECT_NEAR(exact_wmc(Belief::uniform(task.worlds()), task, Output{1, 3}), 0.06, 1e-12);
}

TEST(ExactWmc, RefusesHugeSpaces) {
  const tasks::AdditionTask task(4);  // 10^8 worlds
  try {
    exact_wmc(Belief::uniform(task.worlds()), task, Output{0, 0, 0, 0, 0});
    FAIL() << "expected EnumerationLimitError";
  } catch (const EnumerationLimitError& e) {
    EXPECT_NE(std::string(e.what()).find("100000000"), std::string::npos) << e.what();
  }
}

TEST(ExactWmc, OutputsSumToOne) {
  std::mt19937_64 rng(5);
  const tasks::AdditionTask task(2);
  for (int trial = 0; trial < 5; ++trial) {
    const Belief b = random_belief(task.worlds(), rng);
    double total = 0.0;
    for (const auto& [y, p] : exact_output_distribution(b, task)) total += p;
    EXPECT_NEAR(total, 1.0, 1e-9);
  }
}

TEST(ExactWmc, InvariantToPermutingEquivalentWorlds) {
  // Swapping the two digits maps a world to another world with the same sum;
  // swapping the belief rows must leave every WMC unchanged.
  std::mt19937_64 rng(9);
  const auto c = two_digit_sum();
  const Belief b = random_belief(c.worlds(), rng);
  const Belief swapped({b.row(1), b.row(0)});
  for (int y = 0; y < 19; ++y) EXPECT_NEAR(exact_wmc(b, c, Output{y}), exact_wmc(swapped, c, Output{y}), 1e-12);
}

TEST(ExactPosterior, UniformSumThirteen) {
  const tasks::AdditionTask task(1);
  const auto post = exact_posterior(Belief::uniform(task.worlds()), task, Output{1, 3});
  ASSERT_EQ(post.size(), 6u);
  for (const auto& [w, p] : post) {
    EXPECT_EQ(w[0] + w[1], 13);
    EXPECT_NEAR(p, 1.0 / 6.0, 1e-12);
  }
}

TEST(ExactPosterior, PointMass) {
  const tasks::AdditionTask task(1);
  const auto post = exact_posterior(Belief::point_mass(task.worlds(), World{5, 8}), task, Output{1, 3});
  ASSERT_EQ(post.size(), 1u);
  EXPECT_DOUBLE_EQ(post.at(World{5, 8}), 1.0);
}

TEST(ExactPosterior, SixtyFourWaysToSum135) {
  const tasks::AdditionTask task(2);
  const auto post = exact_posterior(Belief::uniform(task.worlds()), task, Output{1, 3, 5});
  ASSERT_EQ(post.size(), 64u);
  double total = 0.0;
  for (const auto& [w, p] : post) {
    EXPECT_NEAR(p, 1.0 / 64.0, 1e-12);
    total += p;
  }
  EXPECT_NEAR(total, 1.0, 1e-9);
}

TEST(ExactPosterior, NoPossibleWorldsThrows) {
  const tasks::AdditionTask task(1);
  try {
    exact_posterior(Belief::uniform(task.worlds()), task, Output{1, 9});
    FAIL() << "expected domain_error";
  } catch (const std::domain_error& e) {
    EXPECT_NE(std::string(e.what()).find("no possible worlds"), std::string::npos);
  }
}

TEST(ExactPosterior, BayesIdentity) {
  std::mt19937_64 rng(21);
  const tasks::AdditionTask task(1);
  const Belief b = random_belief(task.worlds(), rng);
  const Output y{1, 2};
  const double z = exact_wmc(b, task, y);
  for (const auto& [w, p] : exact_posterior(b, task, y)) {
    EXPECT_NEAR(p, std::exp(world_log_prob(b, w)) / z, 1e-9);
  }
}

TEST(ExactMpe, PointMass) {
  const tasks::AdditionTask task(1);
  EXPECT_EQ(exact_mpe(Belief::point_mass(task.worlds(), World{5, 8}), task, Output{1, 3}), (World{5, 8}));
}

TEST(ExactMpe, LexicographicTieBreak) {
  const tasks::AdditionTask task(1);
  EXPECT_EQ(exact_mpe(Belief::uniform(task.worlds()), task, Output{1, 3}), (World{4, 9}));
}

TEST(ExactMpe, BeliefFavoringNineInSecondSlot) {
  const tasks::AdditionTask task(1);
  Belief b = Belief::uniform(task.worlds());
  b.row(1) = std::vector<double>(10, 0.05);
  b.row(1)[9] = 0.55;
  EXPECT_EQ(exact_mpe(b, task, Output{1, 3}), (World{4, 9}));
}

TEST(Belief, FlattenRoundTrip) {
  std::mt19937_64 rng(2);
  const SpaceSpec s{{2, 10, 3}};
  const Belief b = random_belief(s, rng);
  EXPECT_TRUE(b.is_valid());
  const auto flat = b.flatten();
  ASSERT_EQ(flat.size(), s.one_hot_width());
  const Belief back = Belief::from_flat(s, flat);
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_EQ(back.row(i), b.row(i));
  EXPECT_EQ(s.one_hot_offset(2), 12u);
}

TEST(SpaceSpec, RejectsEmptyAndZeroCardinality) {
  EXPECT_THROW(SpaceSpec{}.validate(), ConfigError);
  EXPECT_THROW((SpaceSpec{{3, 0}}.validate()), ConfigError);
  EXPECT_EQ((SpaceSpec{{2, 10, 10}}.num_assignments()), 200u);
}
