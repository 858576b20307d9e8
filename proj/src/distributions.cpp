#include "remix/distributions.hpp"

#include <cmath>
#include <algorithm>

namespace remix {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;  // ln(2 pi)

void require_batch_matrix(const char* what, const Tensor& t) {
  if (t.rank() != 2) throw ShapeError(std::string(what) + " must be [batch x d], got " + shape_str(t.shape()));
}
}  // namespace

DiagGaussian::DiagGaussian(Tensor mu, Tensor logvar) : mu_(std::move(mu)) {
  require_batch_matrix("mu", mu_);
  if (mu_.shape() != logvar.shape())
    throw ShapeError("DiagGaussian: mu " + shape_str(mu_.shape()) + " vs logvar " +
                     shape_str(logvar.shape()));
  logvar_ = clamp(logvar, kLogVarMin, kLogVarMax);
}

DiagGaussian DiagGaussian::standard(std::size_t batch, std::size_t d_z) {
  return DiagGaussian(Tensor::zeros({batch, d_z}), Tensor::zeros({batch, d_z}));
}

MixturePosterior::MixturePosterior(std::vector<DiagGaussian> components, Tensor log_alphas)
    : components_(std::move(components)), log_alphas_(std::move(log_alphas)) {
  if (components_.empty()) throw ShapeError("mixture needs at least one component");
  const Shape& s = components_.front().mu().shape();
  for (const auto& c : components_)
    if (c.mu().shape() != s)
      throw ShapeError("mixture components disagree: " + shape_str(s) + " vs " +
                       shape_str(c.mu().shape()));
  const Shape want{s[0], components_.size()};
  if (log_alphas_.shape() != want)
    throw ShapeError("log_alphas must be " + shape_str(want) + ", got " +
                     shape_str(log_alphas_.shape()));
  const std::size_t K = want[1];
  const auto la = log_alphas_.data();
  for (std::size_t i = 0; i < want[0]; ++i) {
    double total = 0.0;
    for (std::size_t m = 0; m < K; ++m) total += std::exp(la[i * K + m]);
    if (!(std::abs(total - 1.0) <= 1e-6))
      throw NumericError("mixing weights of row " + std::to_string(i) + " sum to " + std::to_string(total));
  }
}

Tensor rsample_with(const DiagGaussian& g, const Tensor& noise) {
  if (noise.shape() != g.mu().shape())
    throw ShapeError("noise " + shape_str(noise.shape()) + " vs mu " + shape_str(g.mu().shape()));
  return g.mu() + exp(scale(g.logvar(), 0.5)) * noise;
}

Tensor rsample(const DiagGaussian& g, Rng& rng) { return rsample_with(g, rng.randn(g.mu().shape())); }

Tensor log_prob(const DiagGaussian& g, const Tensor& z) {
  if (z.shape() != g.mu().shape())
    throw ShapeError("log_prob: z " + shape_str(z.shape()) + " vs mu " + shape_str(g.mu().shape()));
  Tensor maha = square(z - g.mu()) * exp(neg(g.logvar()));
  Tensor per_dim = add_scalar(g.logvar() + maha, kLog2Pi);
  return scale(sum(per_dim, 1), -0.5);
}

Tensor standard_normal_log_prob(const Tensor& z) {
  require_batch_matrix("z", z);
  const double d = static_cast<double>(z.shape()[1]);
  return add_scalar(scale(sum(square(z), 1), -0.5), -0.5 * d * kLog2Pi);
}

Tensor kl_diag_closed(const DiagGaussian& q, const DiagGaussian& p) {
  if (q.mu().shape() != p.mu().shape())
    throw ShapeError("kl: q " + shape_str(q.mu().shape()) + " vs p " + shape_str(p.mu().shape()));
  Tensor var_ratio = exp(q.logvar() - p.logvar());
  Tensor mean_term = square(q.mu() - p.mu()) * exp(neg(p.logvar()));
  Tensor per_dim = add_scalar(var_ratio + mean_term + p.logvar() - q.logvar(), -1.0);
  return scale(sum(per_dim, 1), 0.5);
}

Tensor mixture_log_prob(const MixturePosterior& mix, const Tensor& z) {
  const std::size_t batch = mix.batch();
  std::vector<Tensor> cols;
  cols.reserve(mix.size());
  for (const auto& c : mix.components()) cols.push_back(reshape(log_prob(c, z), {batch, 1}));
  Tensor joint = (cols.size() == 1 ? cols.front() : concat(cols, 1)) + mix.log_alphas();
  return logsumexp(joint, 1);
}

Tensor kl_monte_carlo(const DiagGaussian& q, const MixturePosterior& mix, std::size_t n_samples,
                      Rng& rng) {
  if (n_samples < 1) throw ConfigError("kl_monte_carlo needs n_samples >= 1");
  Tensor total;
  for (std::size_t s = 0; s < n_samples; ++s) {
    Tensor z = rsample(q, rng);
    Tensor term = log_prob(q, z) - mixture_log_prob(mix, z);
    total = s == 0 ? term : total + term;
  }
  return n_samples == 1 ? total : scale(total, 1.0 / static_cast<double>(n_samples));
}

double diag_log_density(std::span<const double> mu, std::span<const double> logvar,
                        std::span<const double> z) {
  double acc = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double lv = std::clamp(logvar[i], kLogVarMin, kLogVarMax);
    const double d = z[i] - mu[i];
    acc += kLog2Pi + lv + d * d * std::exp(-lv);
  }
  return -0.5 * acc;
}

}  // namespace remix
