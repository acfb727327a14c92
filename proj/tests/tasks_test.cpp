#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <set>

#include "anesi/errors.hpp"
#include "anesi/tasks.hpp"

using namespace anesi;
using namespace anesi::tasks;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("anesi_tasks_test_" + name);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

IdxDataset two_image_fixture() {
  IdxDataset d;
  d.rows = 28;
  d.cols = 28;
  d.images.resize(2 * 28 * 28);
  for (std::size_t i = 0; i < d.images.size(); ++i) d.images[i] = static_cast<std::uint8_t>(i * 7 % 256);
  d.labels = {3, 9};
  return d;
}

}  // namespace

TEST(CSum, Examples) {
  EXPECT_EQ(c_sum(World{5, 8}, 1), (Output{1, 3}));
  EXPECT_EQ(c_sum(World{0, 0}, 1), (Output{0, 0}));
  EXPECT_EQ(c_sum(World{5, 1, 8, 4}, 2), (Output{1, 3, 5}));
  EXPECT_THROW(c_sum(World{5, 1, 8}, 2), ConfigError);
}

TEST(CSum, DecodesToIntegerSum) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> digit(0, 9);
  for (int n : {1, 2, 4, 15}) {
    for (int i = 0; i < 100000; ++i) {
      World w(std::vector<int>(2 * n));
      for (int& v : w.values) v = digit(rng);
      const Output y = c_sum(w, n);
      ASSERT_EQ(y.size(), static_cast<std::size_t>(n + 1));
      ASSERT_LE(y[0], 1);
      const std::span<const int> digits(w.values);
      ASSERT_TRUE(digits_to_int(y.values) == digits_to_int(digits.first(n)) + digits_to_int(digits.subspan(n)));
    }
  }
}

TEST(AdditionTask, Spaces) {
  const AdditionTask t(3);
  EXPECT_EQ(t.worlds().cards, std::vector<int>(6, 10));
  EXPECT_EQ(t.outputs().cards, (std::vector<int>{2, 10, 10, 10}));
}

TEST(MakeDataset, Sizes) {
  EXPECT_EQ(make_dataset(15, 60000, 0).size(), 2000u);
  EXPECT_EQ(make_dataset(1, 60000, 0).size(), 30000u);
  EXPECT_EQ(make_dataset(2, 10, 0).size(), 2u);
  EXPECT_THROW(make_dataset(2, 3, 0), ConfigError);
}

TEST(MakeDataset, DisjointAndLabelled) {
  std::vector<int> pool(1003);
  std::mt19937_64 rng(4);
  for (int& v : pool) v = static_cast<int>(rng() % 10);
  const auto data = make_dataset(3, pool, 17);
  EXPECT_EQ(data.size(), 1003u / 6);
  std::set<std::size_t> used;
  for (const auto& inst : data) {
    for (std::size_t k = 0; k < inst.pool_indices.size(); ++k) {
      EXPECT_TRUE(used.insert(inst.pool_indices[k]).second);
      EXPECT_EQ(inst.digits[k], pool[inst.pool_indices[k]]);
    }
    EXPECT_EQ(inst.sum, c_sum(inst.digits, 3));
  }
}

TEST(MakeDataset, SeedDeterminism) {
  const auto a = make_dataset(2, 400, 9);
  const auto b = make_dataset(2, 400, 9);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].pool_indices, b[i].pool_indices);
}

TEST(SynthPerceive, NoiselessIsOneHot) {
  SyntheticDigitConfig cfg;
  std::mt19937_64 rng(0);
  for (int label = 0; label < 10; ++label) {
    const auto f = synth_perceive(label, cfg, rng);
    ASSERT_EQ(f.size(), 16u);
    for (std::size_t i = 0; i < f.size(); ++i) EXPECT_EQ(f[i], i == static_cast<std::size_t>(label) ? 1.0 : 0.0);
  }
}

TEST(SynthPerceive, FlipRateMatchesAnalyticError) {
  SyntheticDigitConfig cfg;
  cfg.flip_rate = 0.2;
  std::mt19937_64 rng(8);
  const int trials = 200000;
  int wrong = 0;
  for (int i = 0; i < trials; ++i) {
    const int label = i % 10;
    const auto f = synth_perceive(label, cfg, rng);
    if (f[label] != 1.0) ++wrong;
  }
  const double rate = static_cast<double>(wrong) / trials;
  const double expected = cfg.effective_error();
  EXPECT_NEAR(rate, expected, 3 * std::sqrt(expected * (1 - expected) / trials) + 1e-4);
  cfg.flip_rate = 0.01;
  EXPECT_NEAR(1.0 - cfg.effective_error(), 0.991, 1e-12);
}

TEST(SynthPerceive, SeedDeterminismAndValidation) {
  SyntheticDigitConfig cfg;
  cfg.noise_std = 0.3;
  cfg.flip_rate = 0.1;
  std::mt19937_64 a(5), b(5);
  EXPECT_EQ(synth_perceive(4, cfg, a), synth_perceive(4, cfg, b));
  cfg.flip_rate = 0.5;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.flip_rate = 0.0;
  cfg.feature_dim = 8;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(SyntheticDataset, FeaturesFollowDigits) {
  SyntheticDigitConfig cfg;
  const auto d = build_synthetic_dataset(2, 400, cfg, 3);
  ASSERT_EQ(d.size(), 100u);
  for (std::size_t i = 0; i < d.size(); ++i) {
    ASSERT_EQ(d.features[i].size(), 4 * cfg.feature_dim);
    for (std::size_t k = 0; k < 4; ++k) EXPECT_EQ(d.features[i][k * cfg.feature_dim + d.instances[i].digits[k]], 1.0);
  }
}

TEST(Idx, TwoImageFixture) {
  const auto img = temp_path("img"), lbl = temp_path("lbl");
  const IdxDataset d = two_image_fixture();
  write_idx(d, img, lbl);
  const IdxDataset back = load_idx(img, lbl);
  EXPECT_EQ(back.count(), 2u);
  EXPECT_EQ(back.rows, 28u);
  EXPECT_EQ(back.images, d.images);
  EXPECT_EQ(back.labels, d.labels);

  // Byte-level round trip through a second write.
  const auto img2 = temp_path("img2"), lbl2 = temp_path("lbl2");
  write_idx(back, img2, lbl2);
  EXPECT_EQ(slurp(img), slurp(img2));
  EXPECT_EQ(slurp(lbl), slurp(lbl2));
  const std::string header = slurp(img).substr(0, 4);
  EXPECT_EQ(header, std::string("\x00\x00\x08\x03", 4));

  const auto ds = build_idx_dataset(1, back, 0);
  ASSERT_EQ(ds.size(), 1u);
  EXPECT_EQ(ds.feature_dim, 784u);
  for (double v : ds.features[0]) EXPECT_TRUE(v >= 0.0 && v <= 1.0);
}

TEST(Idx, ParseErrors) {
  const auto img = temp_path("img_e"), lbl = temp_path("lbl_e");
  IdxDataset d = two_image_fixture();
  write_idx(d, img, lbl);

  auto expect_kind = [&](ParseError::Kind kind) {
    try {
      load_idx(img, lbl);
      FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
      EXPECT_EQ(e.kind(), kind) << e.what();
    }
  };

  std::string bytes = slurp(img);
  std::string zeroed = bytes;
  zeroed.replace(0, 4, std::string(4, '\0'));
  std::ofstream(img, std::ios::binary | std::ios::trunc) << zeroed;
  expect_kind(ParseError::Kind::kBadMagic);

  std::ofstream(img, std::ios::binary | std::ios::trunc) << bytes.substr(0, bytes.size() - 10);
  expect_kind(ParseError::Kind::kTruncated);

  d.labels = {3};
  IdxDataset only_labels = d;
  only_labels.images.resize(28 * 28);
  write_idx(only_labels, temp_path("unused"), lbl);
  std::ofstream(img, std::ios::binary | std::ios::trunc) << bytes;
  expect_kind(ParseError::Kind::kCountMismatch);

  EXPECT_THROW(load_idx(temp_path("missing_a"), temp_path("missing_b")), ParseError);
}

TEST(BooleanTask, Disjunction) {
  const auto c = boolean_constraint_task(2, Formula::kDisjunction);
  EXPECT_EQ((*c)(World{0, 0}), (Output{0}));
  EXPECT_EQ((*c)(World{1, 0}), (Output{1}));
  EXPECT_EQ(c->outputs().cards, (std::vector<int>{2}));
}

TEST(BooleanTask, ConjunctionUniform) {
  const auto c = boolean_constraint_task(3, Formula::kConjunction);
  EXPECT_NEAR(exact_wmc(Belief::uniform(c->worlds()), *c, Output{1}), 0.125, 1e-12);
  EXPECT_THROW(boolean_constraint_task(21, Formula::kConjunction), ConfigError);
  EXPECT_THROW(parse_formula("xor"), ConfigError);
}
