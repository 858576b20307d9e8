#ifndef REMIX_MODELS_HPP_
#define REMIX_MODELS_HPP_

#include <cstddef>
#include <string>
#include <vector>

#include "remix/distributions.hpp"
#include "remix/optim.hpp"
#include "remix/rng.hpp"
#include "remix/tensor.hpp"

namespace remix {

struct MlpSpec {
  std::size_t input_dim = 1;
  std::vector<std::size_t> hidden;
  std::size_t output_dim = 1;
  double slope = 0.01;  // leaky_relu

  void validate() const;
};

/// y = x W + b with W stored [in x out]. Weights are fan-in scaled uniform.
class Linear {
 public:
  enum class Init { kFanIn, kFanInZeroBias, kZero };

  Linear(std::size_t in, std::size_t out, Rng& rng, Init init);
  Linear(Tensor weight, Tensor bias);

  Linear clone() const { return Linear(weight_.clone(), bias_.clone()); }

  Tensor forward(const Tensor& x) const { return matmul(x, weight_) + bias_; }
  const Tensor& weight() const { return weight_; }
  const Tensor& bias() const { return bias_; }
  Tensor& weight() { return weight_; }
  Tensor& bias() { return bias_; }

 private:
  Tensor weight_;
  Tensor bias_;
};

/// Hidden stack of Linear + leaky_relu; returns the last hidden activation.
class Trunk {
 public:
  Trunk(const MlpSpec& spec, Rng& rng);

  Trunk clone() const;

  Tensor forward(const Tensor& x) const;
  std::size_t out_dim() const { return out_dim_; }
  std::vector<Linear>& layers() { return layers_; }
  const std::vector<Linear>& layers() const { return layers_; }
  void register_params(ParamGroup& group, const std::string& prefix) const;

 private:
  Trunk() = default;

  std::vector<Linear> layers_;
  double slope_ = 0.01;
  std::size_t out_dim_ = 0;
};

/// Amortized Gaussian encoder q_m(z|x). Owns its parameter group.
class EncoderComponent {
 public:
  EncoderComponent(const MlpSpec& spec, Rng& rng, std::string group_name);
  EncoderComponent(EncoderComponent&&) = default;
  EncoderComponent& operator=(EncoderComponent&&) = default;
  EncoderComponent(const EncoderComponent&) = delete;
  EncoderComponent& operator=(const EncoderComponent&) = delete;

  DiagGaussian forward(const Tensor& x) const;
  /// Deep copy with a fresh, independent parameter group.
  EncoderComponent clone(std::string group_name) const;

  const MlpSpec& spec() const { return spec_; }
  ParamGroup& group() { return group_; }
  const ParamGroup& group() const { return group_; }

 private:
  EncoderComponent(MlpSpec spec, Trunk trunk, Linear mu_head, Linear logvar_head,
                   std::string group_name);
  void build_group(std::string name);

  MlpSpec spec_;
  Trunk trunk_;
  Linear mu_head_;
  Linear logvar_head_;
  ParamGroup group_;
};

enum class Likelihood { kGaussian, kBernoulli };

inline constexpr double kDecoderLogVarMin = -7.0;
inline constexpr double kDecoderLogVarMax = 7.0;

/// p_theta(x|z): Gaussian with a learned per-dimension logvar head, or
/// Bernoulli over logits.
class Decoder {
 public:
  Decoder(Likelihood kind, const MlpSpec& spec, Rng& rng);
  Decoder(Decoder&&) = default;
  Decoder& operator=(Decoder&&) = default;
  Decoder(const Decoder&) = delete;
  Decoder& operator=(const Decoder&) = delete;

  Likelihood kind() const { return kind_; }
  const MlpSpec& spec() const { return spec_; }
  /// Mean (Gaussian) or logits (Bernoulli), [batch x d_x].
  Tensor mean(const Tensor& z) const;
  /// Clamped logvar for a Gaussian decoder.
  Tensor logvar(const Tensor& z) const;

  /// log p(x|z) per example.
  Tensor log_lik(const Tensor& x, const Tensor& z) const;

  Decoder clone() const;
  ParamGroup& group() { return group_; }
  const ParamGroup& group() const { return group_; }
  Trunk& trunk() { return trunk_; }
  Linear& mean_head() { return mean_head_; }
  Linear& logvar_head() { return logvar_head_; }

 private:
  Decoder(Likelihood kind, MlpSpec spec, Trunk trunk, Linear mean_head, Linear logvar_head);
  void build_group();

  Likelihood kind_;
  MlpSpec spec_;
  Trunk trunk_;
  Linear mean_head_;
  Linear logvar_head_;  // unused for Bernoulli but kept for a uniform layout
  ParamGroup group_;
};

/// Free-function form used by the objectives.
Tensor decode_log_lik(const Decoder& decoder, const Tensor& x, const Tensor& z);

/// eps(x) = eps_min + (eps_max - eps_min) * sigmoid(net(x)); one hidden layer,
/// zero-initialized output layer.
class EpsilonRegressor {
 public:
  EpsilonRegressor(std::size_t d_x, std::size_t hidden, double eps_min, double eps_max,
                   double slope, Rng& rng, std::string group_name);
  EpsilonRegressor(EpsilonRegressor&&) = default;
  EpsilonRegressor& operator=(EpsilonRegressor&&) = default;

  /// Raw network output before the bounded squashing, [batch].
  Tensor logit(const Tensor& x) const;
  /// eps(x), [batch].
  Tensor forward(const Tensor& x) const;

  double eps_min() const { return eps_min_; }
  double eps_max() const { return eps_max_; }
  ParamGroup& group() { return group_; }
  const ParamGroup& group() const { return group_; }
  Linear& output_layer() { return out_; }

 private:
  Trunk trunk_;
  Linear out_;
  double eps_min_, eps_max_;
  ParamGroup group_;
};

Tensor eps_forward(const EpsilonRegressor& regressor, const Tensor& x);

struct ModelSpec {
  std::size_t d_x = 8;
  std::size_t d_z = 2;
  std::size_t M = 1;
  std::vector<std::size_t> encoder_hidden{256, 256};
  std::vector<std::size_t> decoder_hidden{256, 256};
  std::size_t eps_hidden = 10;
  double eps_min = 0.001;
  double eps_max = 0.1;
  double slope = 0.01;
  Likelihood likelihood = Likelihood::kGaussian;

  void validate() const;
  MlpSpec encoder_mlp() const { return {d_x, encoder_hidden, d_z, slope}; }
  MlpSpec decoder_mlp() const { return {d_z, decoder_hidden, d_x, slope}; }
};

/// Decoder q_0..q_M, eps_1..eps_M. Parameter groups are named
/// phi_0..phi_M, eta_1..eta_M and theta, and partition every parameter.
class RecursiveMixtureModel {
 public:
  RecursiveMixtureModel(const ModelSpec& spec, Rng& rng);
  RecursiveMixtureModel(ModelSpec spec, Decoder decoder, std::vector<EncoderComponent> components,
                        std::vector<EpsilonRegressor> eps);
  RecursiveMixtureModel(RecursiveMixtureModel&&) = default;
  RecursiveMixtureModel& operator=(RecursiveMixtureModel&&) = default;

  const ModelSpec& spec() const { return spec_; }
  std::size_t M() const { return spec_.M; }

  DiagGaussian encode_component(std::size_t m, const Tensor& x) const;
  /// log alpha_0..log alpha_k for the truncated mixture Q_k, [batch x (k+1)].
  Tensor mixing_log_weights(const Tensor& x, std::size_t k) const;
  MixturePosterior encode_mixture(const Tensor& x, std::size_t k) const;

  Decoder& decoder() { return decoder_; }
  const Decoder& decoder() const { return decoder_; }
  EncoderComponent& component(std::size_t m);
  const EncoderComponent& component(std::size_t m) const;
  /// Regressor for eps_j, j in 1..M.
  EpsilonRegressor& eps(std::size_t j);
  const EpsilonRegressor& eps(std::size_t j) const;

  std::vector<ParamGroup*> groups();
  std::vector<const ParamGroup*> groups() const;
  ParamGroup& group(const std::string& name);

  /// Freezes every group except `active`.
  void enable_only(const ParamGroup& active);
  void enable_all();
  void replace_decoder(Decoder d);

  /// Deep copy of every parameter value.
  std::vector<std::vector<double>> snapshot() const;
  void restore(const std::vector<std::vector<double>>& snap);

 private:
  void check_layout() const;

  ModelSpec spec_;
  Decoder decoder_;
  std::vector<EncoderComponent> components_;
  std::vector<EpsilonRegressor> eps_;
};

/// Decoder whose mean is exactly |W z| + b (elementwise abs) with fixed noise
/// variance, built from one leaky_relu hidden layer of width 2 d_x.
/// W is row-major [d_x x d_z].
Decoder make_abs_decoder(const std::vector<double>& W, const std::vector<double>& b,
                         std::size_t d_x, std::size_t d_z, double noise_var, double slope);
/// Decoder whose mean is exactly W z + b, same construction.
Decoder make_linear_decoder(const std::vector<double>& W, const std::vector<double>& b,
                            std::size_t d_x, std::size_t d_z, double noise_var, double slope);

}  // namespace remix

#endif  // REMIX_MODELS_HPP_
