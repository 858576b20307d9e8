#ifndef REMIX_DISTRIBUTIONS_HPP_
#define REMIX_DISTRIBUTIONS_HPP_

#include <cstddef>
#include <vector>

#include "remix/rng.hpp"
#include "remix/tensor.hpp"

namespace remix {

inline constexpr double kLogVarMin = -10.0;
inline constexpr double kLogVarMax = 10.0;

/// Per-example diagonal Gaussian over the latent space; mu and logvar are
/// [batch x d_z], logvar is natural-log variance clamped to [-10, 10].
class DiagGaussian {
 public:
  DiagGaussian(Tensor mu, Tensor logvar);

  /// N(0, I) for a batch, the prior p(z).
  static DiagGaussian standard(std::size_t batch, std::size_t d_z);

  const Tensor& mu() const { return mu_; }
  const Tensor& logvar() const { return logvar_; }
  std::size_t batch() const { return mu_.shape()[0]; }
  std::size_t dim() const { return mu_.shape()[1]; }

 private:
  Tensor mu_;
  Tensor logvar_;
};

/// Q(z|x) = sum_k alpha_k(x) q_k(z|x); log_alphas is [batch x K] and
/// normalized per row.
class MixturePosterior {
 public:
  MixturePosterior(std::vector<DiagGaussian> components, Tensor log_alphas);

  const std::vector<DiagGaussian>& components() const { return components_; }
  const Tensor& log_alphas() const { return log_alphas_; }
  std::size_t size() const { return components_.size(); }
  std::size_t batch() const { return components_.front().batch(); }
  std::size_t dim() const { return components_.front().dim(); }

 private:
  std::vector<DiagGaussian> components_;
  Tensor log_alphas_;
};

/// z = mu + exp(logvar / 2) * u with u ~ N(0, I).
Tensor rsample(const DiagGaussian& g, Rng& rng);
/// Same, with the standard-normal noise supplied ([batch x d_z]).
Tensor rsample_with(const DiagGaussian& g, const Tensor& noise);

/// log N(z; mu, diag(exp(logvar))) per example -> [batch].
Tensor log_prob(const DiagGaussian& g, const Tensor& z);
/// log N(z; 0, I) per example -> [batch].
Tensor standard_normal_log_prob(const Tensor& z);

/// KL(q || p) in closed form, per example.
Tensor kl_diag_closed(const DiagGaussian& q, const DiagGaussian& p);

/// log Q(z|x) per example.
Tensor mixture_log_prob(const MixturePosterior& mix, const Tensor& z);

/// (1/S) sum_s [log q(z_s) - log Q(z_s)] with z_s reparameterized from q.
Tensor kl_monte_carlo(const DiagGaussian& q, const MixturePosterior& mix, std::size_t n_samples,
                      Rng& rng);

// Plain-double density helpers for evaluation code that never needs a tape.
double diag_log_density(std::span<const double> mu, std::span<const double> logvar,
                        std::span<const double> z);

}  // namespace remix

#endif  // REMIX_DISTRIBUTIONS_HPP_
