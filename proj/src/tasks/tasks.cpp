#include "anesi/tasks.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <numeric>

#include "anesi/errors.hpp"

namespace anesi::tasks {

AdditionTask::AdditionTask(int n) : n_(n) {
  if (n < 1) throw ConfigError("addition task needs N >= 1");
  worlds_.cards.assign(2 * n, 10);
  outputs_.cards.assign(n + 1, 10);
  outputs_.cards[0] = 2;
}

Output AdditionTask::operator()(const World& w) const { return c_sum(w, n_); }

Output c_sum(const World& w, int n) {
  if (w.size() != static_cast<std::size_t>(2 * n)) {
    throw ConfigError("c_sum: world of length " + std::to_string(w.size()) + " for N=" + std::to_string(n));
  }
  Output y(std::vector<int>(n + 1, 0));
  int carry = 0;
  for (int i = n - 1; i >= 0; --i) {
    const int s = w[i] + w[n + i] + carry;
    y[i + 1] = s % 10;
    carry = s / 10;
  }
  y[0] = carry;
  return y;
}

__int128 digits_to_int(std::span<const int> digits) {
  __int128 v = 0;
  for (int d : digits) v = v * 10 + d;
  return v;
}

std::string int128_to_string(__int128 v) {
  if (v == 0) return "0";
  const bool negative = v < 0;
  if (negative) v = -v;
  std::string out;
  while (v > 0) {
    out.push_back(static_cast<char>('0' + static_cast<int>(v % 10)));
    v /= 10;
  }
  if (negative) out.push_back('-');
  return {out.rbegin(), out.rend()};
}

std::vector<AdditionInstance> make_dataset(int n, std::span<const int> pool_labels, std::uint64_t seed) {
  const std::size_t width = static_cast<std::size_t>(2 * n);
  if (n < 1 || pool_labels.size() < width) {
    throw ConfigError("digit pool of " + std::to_string(pool_labels.size()) + " is smaller than 2N=" +
                      std::to_string(width));
  }
  std::vector<std::size_t> order(pool_labels.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  const AdditionTask task(n);
  std::vector<AdditionInstance> out;
  out.reserve(order.size() / width);
  for (std::size_t start = 0; start + width <= order.size(); start += width) {
    AdditionInstance inst;
    inst.pool_indices.assign(order.begin() + start, order.begin() + start + width);
    for (std::size_t idx : inst.pool_indices) {
      const int label = pool_labels[idx];
      if (label < 0 || label > 9) throw ConfigError("digit label out of range: " + std::to_string(label));
      inst.digits.values.push_back(label);
    }
    inst.sum = task(inst.digits);
    out.push_back(std::move(inst));
  }
  return out;
}

std::vector<AdditionInstance> make_dataset(int n, std::size_t pool_size, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_int_distribution<int> digit(0, 9);
  std::vector<int> pool(pool_size);
  for (int& d : pool) d = digit(rng);
  return make_dataset(n, pool, seed);
}

void SyntheticDigitConfig::validate() const {
  if (feature_dim < 10) throw ConfigError("synthetic feature dimension must be at least 10");
  if (!(flip_rate >= 0.0 && flip_rate < 0.5)) throw ConfigError("flip rate must lie in [0, 0.5)");
  if (!(noise_std >= 0.0)) throw ConfigError("feature noise must be non-negative");
}

std::vector<double> synth_perceive(int label, const SyntheticDigitConfig& config, std::mt19937_64& rng) {
  if (label < 0 || label > 9) throw ConfigError("digit label out of range: " + std::to_string(label));
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_int_distribution<int> digit(0, 9);
  std::normal_distribution<double> noise(0.0, 1.0);
  int anchor = label;
  if (config.flip_rate > 0.0 && coin(rng) < config.flip_rate) anchor = digit(rng);
  std::vector<double> features(config.feature_dim, 0.0);
  features[anchor] = 1.0;
  if (config.noise_std > 0.0) {
    for (double& f : features) f += config.noise_std * noise(rng);
  }
  return features;
}

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::string read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(ParseError::Kind::kIo, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::string& bytes, std::size_t offset, const std::filesystem::path& path) {
  if (bytes.size() < offset + 4) {
    throw ParseError(ParseError::Kind::kTruncated, "truncated IDX header in " + path.string());
  }
  std::uint32_t v = 0;
  for (std::size_t i = 0; i < 4; ++i) v = (v << 8) | static_cast<std::uint8_t>(bytes[offset + i]);
  return v;
}

void append_be32(std::string& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<char>((v >> shift) & 0xff));
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ParseError(ParseError::Kind::kIo, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

IdxDataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
  const std::string images = read_all(images_path);
  const std::string labels = read_all(labels_path);
  if (read_be32(images, 0, images_path) != kImageMagic) {
    throw ParseError(ParseError::Kind::kBadMagic, "bad magic in image file " + images_path.string());
  }
  if (read_be32(labels, 0, labels_path) != kLabelMagic) {
    throw ParseError(ParseError::Kind::kBadMagic, "bad magic in label file " + labels_path.string());
  }
  IdxDataset out;
  const std::size_t image_count = read_be32(images, 4, images_path);
  out.rows = read_be32(images, 8, images_path);
  out.cols = read_be32(images, 12, images_path);
  const std::size_t label_count = read_be32(labels, 4, labels_path);
  if (image_count != label_count) {
    throw ParseError(ParseError::Kind::kCountMismatch, "count mismatch: " + std::to_string(image_count) +
                                                           " images vs " + std::to_string(label_count) +
                                                           " labels");
  }
  const std::size_t pixels = image_count * out.rows * out.cols;
  if (images.size() < 16 + pixels) {
    throw ParseError(ParseError::Kind::kTruncated, "truncated image payload in " + images_path.string());
  }
  if (labels.size() < 8 + label_count) {
    throw ParseError(ParseError::Kind::kTruncated, "truncated label payload in " + labels_path.string());
  }
  out.images.assign(images.begin() + 16, images.begin() + 16 + static_cast<std::ptrdiff_t>(pixels));
  out.labels.assign(labels.begin() + 8, labels.begin() + 8 + static_cast<std::ptrdiff_t>(label_count));
  for (std::uint8_t l : out.labels) {
    if (l > 9) throw ParseError(ParseError::Kind::kFormat, "label " + std::to_string(l) + " out of range");
  }
  return out;
}

void write_idx(const IdxDataset& data, const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path) {
  std::string images;
  append_be32(images, kImageMagic);
  append_be32(images, static_cast<std::uint32_t>(data.count()));
  append_be32(images, static_cast<std::uint32_t>(data.rows));
  append_be32(images, static_cast<std::uint32_t>(data.cols));
  images.append(data.images.begin(), data.images.end());
  std::string labels;
  append_be32(labels, kLabelMagic);
  append_be32(labels, static_cast<std::uint32_t>(data.count()));
  labels.append(data.labels.begin(), data.labels.end());
  write_file(images_path, images);
  write_file(labels_path, labels);
}

DigitDataset build_synthetic_dataset(int n, std::size_t pool_size, const SyntheticDigitConfig& config,
                                     std::uint64_t seed) {
  config.validate();
  DigitDataset out;
  out.n = n;
  out.feature_dim = config.feature_dim;
  out.instances = make_dataset(n, pool_size, seed);
  std::mt19937_64 rng(config.seed ^ (seed * 0x2545f4914f6cdd1dULL));
  for (const auto& inst : out.instances) {
    std::vector<double> feats;
    feats.reserve(inst.digits.size() * config.feature_dim);
    for (int label : inst.digits.values) {
      const auto f = synth_perceive(label, config, rng);
      feats.insert(feats.end(), f.begin(), f.end());
    }
    out.features.push_back(std::move(feats));
  }
  return out;
}

DigitDataset build_idx_dataset(int n, const IdxDataset& idx, std::uint64_t seed) {
  std::vector<int> labels(idx.labels.begin(), idx.labels.end());
  DigitDataset out;
  out.n = n;
  out.feature_dim = idx.rows * idx.cols;
  out.instances = make_dataset(n, labels, seed);
  for (const auto& inst : out.instances) {
    std::vector<double> feats;
    feats.reserve(inst.pool_indices.size() * out.feature_dim);
    for (std::size_t pi : inst.pool_indices) {
      const auto* px = idx.images.data() + pi * out.feature_dim;
      for (std::size_t k = 0; k < out.feature_dim; ++k) feats.push_back(px[k] / 255.0);
    }
    out.features.push_back(std::move(feats));
  }
  return out;
}

Formula parse_formula(const std::string& name) {
  if (name == "disjunction") return Formula::kDisjunction;
  if (name == "conjunction") return Formula::kConjunction;
  throw ConfigError("unknown formula '" + name + "'");
}

std::unique_ptr<SymbolicFn> boolean_constraint_task(int num_vars, Formula formula) {
  if (num_vars < 1 || num_vars > 20) throw ConfigError("boolean task supports 1..20 variables");
  SpaceSpec worlds{std::vector<int>(num_vars, 2)};
  SpaceSpec outputs{{2}};
  return std::make_unique<LambdaSymbolicFn>(worlds, outputs, [formula](const World& w) {
    const bool any = std::any_of(w.values.begin(), w.values.end(), [](int v) { return v == 1; });
    const bool all = std::all_of(w.values.begin(), w.values.end(), [](int v) { return v == 1; });
    const bool holds = formula == Formula::kDisjunction ? any : all;
    return Output{holds ? 1 : 0};
  });
}

}  // namespace anesi::tasks
