#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "anesi/problem.hpp"

namespace anesi::tasks {

// Sum of two N-digit numbers. Worlds are the 2N digits (first number, then
// second, most significant first); outputs are N+1 digits of the sum, the
// leading one binary.
class AdditionTask : public SymbolicFn {
 public:
  explicit AdditionTask(int n);

  int n() const { return n_; }
  const SpaceSpec& worlds() const override { return worlds_; }
  const SpaceSpec& outputs() const override { return outputs_; }
  Output operator()(const World& w) const override;

 private:
  int n_;
  SpaceSpec worlds_;
  SpaceSpec outputs_;
};

// Digit decomposition (length N+1) of n1 + n2 where w = digits of n1 then n2.
Output c_sum(const World& w, int n);

// Integer value of a most-significant-first digit sequence.
__int128 digits_to_int(std::span<const int> digits);
std::string int128_to_string(__int128 v);

struct AdditionInstance {
  std::vector<std::size_t> pool_indices;  // 2N positions into the digit pool
  World digits;
  Output sum;
};

// Shuffles the pool with `seed`, then cuts it into disjoint 2N-tuples; the
// remainder is dropped. Throws ConfigError if the pool holds fewer than 2N
// digits.
std::vector<AdditionInstance> make_dataset(int n, std::span<const int> pool_labels, std::uint64_t seed);
// Same, over a pool of `pool_size` labels drawn uniformly from 0-9 with `seed`.
std::vector<AdditionInstance> make_dataset(int n, std::size_t pool_size, std::uint64_t seed);

// Noisy stand-in for digit images: a one-hot anchor in the first 10
// coordinates plus N(0, sigma) noise on every coordinate. With probability
// `flip_rate` the anchor is redrawn uniformly from all ten labels.
struct SyntheticDigitConfig {
  std::size_t feature_dim = 16;
  double flip_rate = 0.0;
  double noise_std = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
  // Probability that the anchor differs from the true label.
  double effective_error() const { return flip_rate * 0.9; }
};

std::vector<double> synth_perceive(int label, const SyntheticDigitConfig& config, std::mt19937_64& rng);

struct IdxDataset {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> images;  // count * rows * cols
  std::vector<std::uint8_t> labels;

  std::size_t count() const { return labels.size(); }
};

// Parses an MNIST image/label IDX pair. Raises ParseError with kind
// kBadMagic, kTruncated or kCountMismatch.
IdxDataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path);
void write_idx(const IdxDataset& data, const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path);

// A dataset ready for training: per instance the 2N feature vectors.
struct DigitDataset {
  int n = 1;
  std::size_t feature_dim = 0;
  std::vector<AdditionInstance> instances;
  std::vector<std::vector<double>> features;  // per instance, 2N * feature_dim values

  std::size_t size() const { return instances.size(); }
};

DigitDataset build_synthetic_dataset(int n, std::size_t pool_size, const SyntheticDigitConfig& config,
                                     std::uint64_t seed);
// Pixel intensities scaled to [0, 1].
DigitDataset build_idx_dataset(int n, const IdxDataset& idx, std::uint64_t seed);

enum class Formula { kDisjunction, kConjunction };

Formula parse_formula(const std::string& name);

// c(w) = 1 iff the formula over `num_vars` binary variables holds.
std::unique_ptr<SymbolicFn> boolean_constraint_task(int num_vars, Formula formula);

}  // namespace anesi::tasks
