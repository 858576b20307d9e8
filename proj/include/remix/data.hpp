#ifndef REMIX_DATA_HPP_
#define REMIX_DATA_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "remix/tensor.hpp"

namespace remix {

enum class Domain { kReal, kBinary };

/// Ground-truth generator parameters, kept so tests and evaluation can build
/// the exact decoder and posterior. W is row-major [d_x x d_z].
struct GeneratorInfo {
  enum class Kind { kBimodalToy, kLinearGaussian } kind;
  std::size_t d_z = 0;
  std::vector<double> W;
  std::vector<double> b;
  double noise_var = 0.0;
  double c = 0.0;  // bimodal toy: each z* coordinate is -c or +c
};

struct Splits {
  std::vector<std::size_t> train;  // pool that split_and_batch divides into train/val
  std::vector<std::size_t> test;
};

struct Dataset {
  std::size_t n = 0;
  std::size_t d_x = 0;
  std::vector<double> values;  // n x d_x, row-major
  Domain domain = Domain::kReal;
  std::vector<std::uint8_t> labels;  // empty when none were loaded
  Splits splits;
  std::optional<GeneratorInfo> generator;

  std::span<const double> row(std::size_t i) const {
    return {values.data() + i * d_x, d_x};
  }
  /// Gathers rows into a [idx.size() x d_x] tensor.
  Tensor rows(std::span<const std::size_t> idx) const;
  void validate() const;
};

struct BimodalToyOptions {
  std::size_t d_x = 8;
  std::size_t d_z = 2;
  double c = 2.0;
  double noise_std = 0.1;
};

/// x = |W z*| + b + noise_std * e, each coordinate of z* drawn from {-c, +c}. The
/// observation map is even in z, so every posterior has two mirror modes.
/// W and b depend on the seed only, never on n.
Dataset gen_bimodal_toy(std::size_t n, std::uint64_t seed, const BimodalToyOptions& opt = {});

/// z ~ N(0, I), x = W z + b + N(0, noise_var I). W is row-major [d_x x d_z].
Dataset gen_linear_gaussian(std::size_t n, const std::vector<double>& W,
                            const std::vector<double>& b, double noise_var, std::uint64_t seed);

/// Closed forms for the linear-Gaussian model x = W z + b + noise.
double linear_gaussian_log_marginal(const GeneratorInfo& g, std::span<const double> x);
struct GaussianPosterior {
  std::vector<double> mean;        // d_z
  std::vector<double> covariance;  // d_z x d_z
};
GaussianPosterior linear_gaussian_posterior(const GeneratorInfo& g, std::span<const double> x);

enum class Binarize { kNone, kThreshold, kStochastic };

struct IdxImages {
  std::size_t count = 0, rows = 0, cols = 0;
  std::vector<std::uint8_t> pixels;
};

IdxImages read_idx_images(const std::filesystem::path& path);
std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path);
std::string encode_idx_images(const IdxImages& images);
std::string encode_idx_labels(const std::vector<std::uint8_t>& labels);

/// Pixels scaled to [0, 1] and flattened row-major; threshold keeps x > 0.5,
/// stochastic draws Bernoulli(pixel) once from `seed`.
Dataset load_idx(const std::filesystem::path& images, const std::optional<std::filesystem::path>& labels,
                 Binarize binarize, std::uint64_t seed);

/// Train/val split of the dataset's train pool plus per-epoch shuffled batches.
class SplitPlan {
 public:
  SplitPlan() = default;
  SplitPlan(std::vector<std::size_t> train, std::vector<std::size_t> val,
            std::vector<std::size_t> test, std::size_t batch_size, std::uint64_t seed);

  const std::vector<std::size_t>& train() const { return train_; }
  const std::vector<std::size_t>& val() const { return val_; }
  const std::vector<std::size_t>& test() const { return test_; }
  std::size_t batch_size() const { return batch_size_; }

  /// Deterministic in (seed, epoch); the last partial batch is kept.
  std::vector<std::vector<std::size_t>> epoch_batches(std::size_t epoch) const;

 private:
  std::vector<std::size_t> train_, val_, test_;
  std::size_t batch_size_ = 1;
  std::uint64_t seed_ = 0;
};

SplitPlan split_and_batch(const Dataset& ds, double val_fraction, std::size_t batch_size,
                          std::uint64_t seed);

}  // namespace remix

#endif  // REMIX_DATA_HPP_
