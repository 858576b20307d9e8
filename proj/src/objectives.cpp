#include "remix/objectives.hpp"

#include <cmath>

namespace remix {

ElboEstimate elbo_single(const DiagGaussian& q, const Decoder& decoder, const Tensor& x, Rng& rng) {
  Tensor z = rsample(q, rng);
  Tensor recon = decode_log_lik(decoder, x, z);
  Tensor kl = kl_diag_closed(q, DiagGaussian::standard(q.batch(), q.dim()));
  return {recon - kl, recon, kl};
}

ElboEstimate elbo_mixture(const MixturePosterior& mix, const Decoder& decoder, const Tensor& x,
                          Rng& rng, bool shared_noise) {
  const std::size_t K = mix.size();
  const std::size_t batch = mix.batch();
  const Shape zshape{batch, mix.dim()};

  std::vector<Tensor> zs, log_q;
  zs.reserve(K);
  Tensor noise = rng.randn(zshape);
  for (std::size_t m = 0; m < K; ++m) {
    if (m > 0 && !shared_noise) noise = rng.randn(zshape);
    zs.push_back(rsample_with(mix.components()[m], noise));
  }
  for (std::size_t m = 0; m < K; ++m) log_q.push_back(mixture_log_prob(mix, zs[m]));

  // One decoder pass over all K draws stacked along the batch axis.
  Tensor z_all = K == 1 ? zs.front() : concat(zs, 0);
  Tensor x_all = K == 1 ? x : concat(std::vector<Tensor>(K, x), 0);
  Tensor recon = decode_log_lik(decoder, x_all, z_all);  // [K*batch]
  Tensor prior = standard_normal_log_prob(z_all);
  Tensor lq = K == 1 ? log_q.front() : concat(log_q, 0);

  Tensor weights = exp(mix.log_alphas());  // [batch x K]
  auto per_component = [&](const Tensor& flat) { return transpose(reshape(flat, {K, batch})); };
  Tensor recon_term = sum(weights * per_component(recon), 1);
  Tensor elbo = sum(weights * per_component(recon + prior - lq), 1);
  return {elbo, recon_term, recon_term - elbo};
}

Tensor bounded_kl_penalty(const Tensor& kl, double C) {
  if (!(C > 0.0)) throw ConfigError("KL barrier C must be > 0");
  return relu(add_scalar(neg(kl), C));
}

ComponentObjective new_component_loss(const RecursiveMixtureModel& model, std::size_t m,
                                      const Tensor& x, double C, Rng& rng,
                                      std::size_t kl_samples) {
  if (m == 0) throw ConfigError("new_component_loss needs m >= 1; q_0 trains on the plain ELBO");
  DiagGaussian q = model.encode_component(m, x);
  ElboEstimate e = elbo_single(q, model.decoder(), x, rng);
  MixturePosterior previous = model.encode_mixture(x, m - 1);
  Tensor kl = kl_monte_carlo(q, previous, kl_samples, rng);
  Tensor loss = mean(neg(e.elbo) + bounded_kl_penalty(kl, C), 0);
  return {loss, mean(e.elbo, 0).item(), mean(kl, 0).item()};
}

double entropy_weight(std::size_t t) { return 1.0 / std::sqrt(static_cast<double>(t) + 1.0); }

Tensor bvi_entropy_reg_mc(const DiagGaussian& q, std::size_t t, Rng& rng) {
  Tensor z = rsample(q, rng);
  return scale(mean(neg(log_prob(q, z)), 0), entropy_weight(t));
}

Tensor bvi_entropy_reg_closed(const DiagGaussian& q, std::size_t t) {
  return scale(mean(sum(q.logvar(), 1), 0), entropy_weight(t));
}

}  // namespace remix
