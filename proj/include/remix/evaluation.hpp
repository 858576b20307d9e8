#ifndef REMIX_EVALUATION_HPP_
#define REMIX_EVALUATION_HPP_

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "remix/data.hpp"
#include "remix/distributions.hpp"
#include "remix/models.hpp"
#include "remix/rng.hpp"

namespace remix {

/// log((1/K) sum_k p(x, z_k) / q(z_k|x)) per example -> [batch]. Samples are
/// split across components by largest remainder of K * alpha; weights use the
/// full mixture density. K < 1 throws ConfigError.
Tensor iwae(const MixturePosterior& q, const Decoder& decoder, const Tensor& x, std::size_t K,
            Rng& rng);
Tensor iwae(const DiagGaussian& q, const Decoder& decoder, const Tensor& x, std::size_t K, Rng& rng);

/// Per-example sample counts for one row of mixing weights; sums to K.
std::vector<std::size_t> stratified_counts(std::span<const double> alphas, std::size_t K);

struct IwaeSummary {
  double mean = 0.0;
  double se = 0.0;  // standard error of the per-example mean
  std::vector<double> per_example;
};

/// Test-style IWAE of the model's full mixture over the given rows.
IwaeSummary iwae_dataset(const RecursiveMixtureModel& model, const Dataset& ds,
                         std::span<const std::size_t> rows, std::size_t K, std::size_t batch_size,
                         Rng& rng);

/// One example's Gaussian mixture in plain doubles.
struct MixtureDensity {
  std::vector<double> log_weights;
  std::vector<std::vector<double>> mu;
  std::vector<std::vector<double>> logvar;

  double log_density(std::span<const double> z) const;
};

MixtureDensity mixture_row(const MixturePosterior& q, std::size_t row);
MixtureDensity gaussian_row(const DiagGaussian& q, std::size_t row);

/// Cell-centred square grid over [lo, hi]^2, values[i * resolution + j] at
/// (z1_i, z2_j), normalized so sum(exp(values)) * cell_area = 1.
struct PosteriorGrid {
  double lo = -5.0;
  double hi = 5.0;
  std::size_t resolution = 200;
  std::vector<double> log_density;

  double step() const { return (hi - lo) / static_cast<double>(resolution); }
  double cell_area() const { return step() * step(); }
  double coord(std::size_t i) const { return lo + (static_cast<double>(i) + 0.5) * step(); }
  double mass() const;
};

struct GridSpec {
  double lo = -5.0;
  double hi = 5.0;
  std::size_t resolution = 200;
};

/// p(z|x) on the grid from log p(x|z) + log p(z). Requires a 2-d latent
/// space (ShapeError otherwise).
PosteriorGrid true_posterior_grid(const Decoder& decoder, std::span<const double> x,
                                  const GridSpec& spec = {});

/// A mixture density tabulated and renormalized on the grid.
PosteriorGrid density_grid(const MixtureDensity& q, const GridSpec& spec = {});

/// Riemann-sum KL(q || grid) with q's exact log-density.
double grid_kl(const MixtureDensity& q, const PosteriorGrid& grid);

/// Columns z1,z2,log_density.
void write_grid_csv(const std::filesystem::path& path, const PosteriorGrid& grid);

/// Mean wall-clock ms per batch for encode_mixture over the rows, averaged
/// over `repeats` full passes.
double time_inference(const RecursiveMixtureModel& model, const Dataset& ds,
                      std::span<const std::size_t> rows, std::size_t batch_size,
                      std::size_t repeats = 5);

}  // namespace remix

#endif  // REMIX_EVALUATION_HPP_
