#ifndef REMIX_OBJECTIVES_HPP_
#define REMIX_OBJECTIVES_HPP_

#include <cstddef>

#include "remix/distributions.hpp"
#include "remix/models.hpp"
#include "remix/rng.hpp"

namespace remix {

/// Per-example evidence lower bound and its two parts, each [batch].
/// elbo = recon_term - kl_term.
struct ElboEstimate {
  Tensor elbo;
  Tensor recon_term;
  Tensor kl_term;
};

/// Single reparameterized draw for the reconstruction, closed-form KL to N(0, I).
ElboEstimate elbo_single(const DiagGaussian& q, const Decoder& decoder, const Tensor& x, Rng& rng);

/// Mixture ELBO estimated with one reparameterized draw z_m per component:
///   sum_m alpha_m [log p(x|z_m) + log p(z_m) - log Q(z_m|x)].
/// With shared_noise every component reuses the same standard-normal draw.
ElboEstimate elbo_mixture(const MixturePosterior& mix, const Decoder& decoder, const Tensor& x,
                          Rng& rng, bool shared_noise = false);

/// max(0, C - kl): added to the minimized loss, so KL below the barrier C is
/// rewarded with slope one and KL above it earns nothing.
Tensor bounded_kl_penalty(const Tensor& kl, double C);

struct ComponentObjective {
  Tensor loss;       // scalar, minimized
  double mean_elbo;  // batch mean of elbo_single(q_m)
  double mean_kl;    // batch mean of the MC estimate KL(q_m || Q_{m-1})
};

/// mean_x[-elbo(q_m) + max(0, C - KL(q_m || Q_{m-1}))] for m >= 1.
ComponentObjective new_component_loss(const RecursiveMixtureModel& model, std::size_t m,
                                      const Tensor& x, double C, Rng& rng,
                                      std::size_t kl_samples = 1);

/// 1 / sqrt(t + 1).
double entropy_weight(std::size_t t);

/// nu(t) * mean_x[-log q(z|x)], single fresh draw per example; a Monte-Carlo
/// entropy bonus (add to the maximized objective).
Tensor bvi_entropy_reg_mc(const DiagGaussian& q, std::size_t t, Rng& rng);

/// nu(t) * mean_x[sum_i logvar_i], the log-determinant form.
Tensor bvi_entropy_reg_closed(const DiagGaussian& q, std::size_t t);

}  // namespace remix

#endif  // REMIX_OBJECTIVES_HPP_
