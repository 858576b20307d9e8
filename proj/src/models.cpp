#include "remix/models.hpp"

#include <cmath>

namespace remix {

void MlpSpec::validate() const {
  if (input_dim < 1 || output_dim < 1) throw ConfigError("MLP dims must be >= 1");
  for (std::size_t h : hidden)
    if (h < 1) throw ConfigError("MLP hidden dims must be >= 1");
}

// ---------------------------------------------------------------------------

Linear::Linear(std::size_t in, std::size_t out, Rng& rng, Init init) {
  std::vector<double> w(in * out, 0.0), b(out, 0.0);
  if (init != Init::kZero) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (double& v : w) v = rng.uniform(-bound, bound);
    if (init == Init::kFanIn)
      for (double& v : b) v = rng.uniform(-bound, bound);
  }
  weight_ = Tensor({in, out}, std::move(w));
  bias_ = Tensor({out}, std::move(b));
}

Linear::Linear(Tensor weight, Tensor bias) : weight_(std::move(weight)), bias_(std::move(bias)) {
  if (weight_.rank() != 2 || bias_.rank() != 1 || bias_.shape()[0] != weight_.shape()[1])
    throw ShapeError("Linear: weight " + shape_str(weight_.shape()) + " with bias " +
                     shape_str(bias_.shape()));
}

Trunk::Trunk(const MlpSpec& spec, Rng& rng) : slope_(spec.slope), out_dim_(spec.input_dim) {
  spec.validate();
  for (std::size_t h : spec.hidden) {
    layers_.emplace_back(out_dim_, h, rng, Linear::Init::kFanIn);
    out_dim_ = h;
  }
}

Trunk Trunk::clone() const {
  Trunk t;
  t.slope_ = slope_;
  t.out_dim_ = out_dim_;
  for (const auto& l : layers_) t.layers_.push_back(l.clone());
  return t;
}

Tensor Trunk::forward(const Tensor& x) const {
  Tensor h = x;
  for (const auto& l : layers_) h = leaky_relu(l.forward(h), slope_);
  return h;
}

void Trunk::register_params(ParamGroup& group, const std::string& prefix) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    group.add(prefix + std::to_string(i) + ".weight", layers_[i].weight());
    group.add(prefix + std::to_string(i) + ".bias", layers_[i].bias());
  }
}

// ---------------------------------------------------------------------------

EncoderComponent::EncoderComponent(const MlpSpec& spec, Rng& rng, std::string group_name)
    : spec_(spec),
      trunk_(spec, rng),
      mu_head_(trunk_.out_dim(), spec.output_dim, rng, Linear::Init::kFanInZeroBias),
      logvar_head_(trunk_.out_dim(), spec.output_dim, rng, Linear::Init::kFanInZeroBias) {
  build_group(std::move(group_name));
}

EncoderComponent::EncoderComponent(MlpSpec spec, Trunk trunk, Linear mu_head, Linear logvar_head,
                                   std::string group_name)
    : spec_(std::move(spec)),
      trunk_(std::move(trunk)),
      mu_head_(std::move(mu_head)),
      logvar_head_(std::move(logvar_head)) {
  build_group(std::move(group_name));
}

void EncoderComponent::build_group(std::string name) {
  group_ = ParamGroup(std::move(name));
  trunk_.register_params(group_, "trunk.");
  group_.add("mu.weight", mu_head_.weight());
  group_.add("mu.bias", mu_head_.bias());
  group_.add("logvar.weight", logvar_head_.weight());
  group_.add("logvar.bias", logvar_head_.bias());
}

DiagGaussian EncoderComponent::forward(const Tensor& x) const {
  Tensor h = trunk_.forward(x);
  return DiagGaussian(mu_head_.forward(h), logvar_head_.forward(h));
}

EncoderComponent EncoderComponent::clone(std::string group_name) const {
  return EncoderComponent(spec_, trunk_.clone(), mu_head_.clone(), logvar_head_.clone(),
                          std::move(group_name));
}

// ---------------------------------------------------------------------------

Decoder::Decoder(Likelihood kind, const MlpSpec& spec, Rng& rng)
    : kind_(kind),
      spec_(spec),
      trunk_(spec, rng),
      mean_head_(trunk_.out_dim(), spec.output_dim, rng, Linear::Init::kFanInZeroBias),
      logvar_head_(trunk_.out_dim(), spec.output_dim, rng, Linear::Init::kFanInZeroBias) {
  build_group();
}

Decoder::Decoder(Likelihood kind, MlpSpec spec, Trunk trunk, Linear mean_head, Linear logvar_head)
    : kind_(kind),
      spec_(std::move(spec)),
      trunk_(std::move(trunk)),
      mean_head_(std::move(mean_head)),
      logvar_head_(std::move(logvar_head)) {
  build_group();
}

void Decoder::build_group() {
  group_ = ParamGroup("theta");
  trunk_.register_params(group_, "trunk.");
  group_.add("mean.weight", mean_head_.weight());
  group_.add("mean.bias", mean_head_.bias());
  if (kind_ == Likelihood::kGaussian) {
    group_.add("logvar.weight", logvar_head_.weight());
    group_.add("logvar.bias", logvar_head_.bias());
  }
}

Decoder Decoder::clone() const {
  return Decoder(kind_, spec_, trunk_.clone(), mean_head_.clone(), logvar_head_.clone());
}

Tensor Decoder::mean(const Tensor& z) const { return mean_head_.forward(trunk_.forward(z)); }

Tensor Decoder::logvar(const Tensor& z) const {
  return clamp(logvar_head_.forward(trunk_.forward(z)), kDecoderLogVarMin, kDecoderLogVarMax);
}

Tensor Decoder::log_lik(const Tensor& x, const Tensor& z) const {
  if (x.rank() != 2 || x.shape()[1] != spec_.output_dim || x.shape()[0] != z.shape()[0])
    throw ShapeError("decoder: x " + shape_str(x.shape()) + " vs z " + shape_str(z.shape()));
  Tensor h = trunk_.forward(z);
  if (kind_ == Likelihood::kBernoulli) {
    for (double v : x.data())
      if (!(v >= 0.0 && v <= 1.0))
        throw DataError("Bernoulli decoder needs x in [0, 1], got " + std::to_string(v));
    Tensor logits = mean_head_.forward(h);
    return sum(x * logits - softplus(logits), 1);
  }
  Tensor mu = mean_head_.forward(h);
  Tensor lv = clamp(logvar_head_.forward(h), kDecoderLogVarMin, kDecoderLogVarMax);
  return log_prob(DiagGaussian(mu, lv), x);
}

Tensor decode_log_lik(const Decoder& decoder, const Tensor& x, const Tensor& z) {
  return decoder.log_lik(x, z);
}

// ---------------------------------------------------------------------------

EpsilonRegressor::EpsilonRegressor(std::size_t d_x, std::size_t hidden, double eps_min,
                                   double eps_max, double slope, Rng& rng, std::string group_name)
    : trunk_(MlpSpec{d_x, {hidden}, 1, slope}, rng),
      out_(hidden, 1, rng, Linear::Init::kZero),
      eps_min_(eps_min),
      eps_max_(eps_max),
      group_(std::move(group_name)) {
  if (!(eps_min >= 0.0 && eps_min < eps_max && eps_max < 1.0))
    throw ConfigError("need 0 <= eps_min < eps_max < 1");
  trunk_.register_params(group_, "trunk.");
  group_.add("out.weight", out_.weight());
  group_.add("out.bias", out_.bias());
}

Tensor EpsilonRegressor::logit(const Tensor& x) const {
  Tensor o = out_.forward(trunk_.forward(x));
  return reshape(o, {o.shape()[0]});
}

Tensor EpsilonRegressor::forward(const Tensor& x) const {
  return add_scalar(scale(sigmoid(logit(x)), eps_max_ - eps_min_), eps_min_);
}

Tensor eps_forward(const EpsilonRegressor& regressor, const Tensor& x) {
  return regressor.forward(x);
}

// ---------------------------------------------------------------------------

void ModelSpec::validate() const {
  if (d_x < 1 || d_z < 1) throw ConfigError("d_x and d_z must be >= 1");
  if (eps_hidden < 1) throw ConfigError("eps_hidden must be >= 1");
  if (!(eps_min >= 0.0 && eps_min < eps_max && eps_max < 1.0))
    throw ConfigError("need 0 <= eps_min < eps_max < 1");
  encoder_mlp().validate();
  decoder_mlp().validate();
}

RecursiveMixtureModel::RecursiveMixtureModel(const ModelSpec& spec, Rng& rng)
    : spec_(spec), decoder_(spec.likelihood, spec.decoder_mlp(), rng) {
  spec_.validate();
  for (std::size_t m = 0; m <= spec_.M; ++m)
    components_.emplace_back(spec_.encoder_mlp(), rng, "phi_" + std::to_string(m));
  for (std::size_t j = 1; j <= spec_.M; ++j)
    eps_.emplace_back(spec_.d_x, spec_.eps_hidden, spec_.eps_min, spec_.eps_max, spec_.slope, rng,
                      "eta_" + std::to_string(j));
  check_layout();
}

RecursiveMixtureModel::RecursiveMixtureModel(ModelSpec spec, Decoder decoder,
                                             std::vector<EncoderComponent> components,
                                             std::vector<EpsilonRegressor> eps)
    : spec_(std::move(spec)),
      decoder_(std::move(decoder)),
      components_(std::move(components)),
      eps_(std::move(eps)) {
  spec_.validate();
  for (std::size_t m = 0; m < components_.size(); ++m)
    components_[m].group().rename("phi_" + std::to_string(m));
  for (std::size_t j = 0; j < eps_.size(); ++j)
    eps_[j].group().rename("eta_" + std::to_string(j + 1));
  check_layout();
}

void RecursiveMixtureModel::check_layout() const {
  if (components_.size() != spec_.M + 1 || eps_.size() != spec_.M)
    throw ConfigError("model needs M+1 components and M regressors (M = " +
                      std::to_string(spec_.M) + ")");
}

EncoderComponent& RecursiveMixtureModel::component(std::size_t m) {
  if (m >= components_.size()) throw ConfigError("component index " + std::to_string(m) + " > M");
  return components_[m];
}

const EncoderComponent& RecursiveMixtureModel::component(std::size_t m) const {
  if (m >= components_.size()) throw ConfigError("component index " + std::to_string(m) + " > M");
  return components_[m];
}

EpsilonRegressor& RecursiveMixtureModel::eps(std::size_t j) {
  if (j < 1 || j > eps_.size()) throw ConfigError("eps index " + std::to_string(j) + " not in 1..M");
  return eps_[j - 1];
}

const EpsilonRegressor& RecursiveMixtureModel::eps(std::size_t j) const {
  if (j < 1 || j > eps_.size()) throw ConfigError("eps index " + std::to_string(j) + " not in 1..M");
  return eps_[j - 1];
}

DiagGaussian RecursiveMixtureModel::encode_component(std::size_t m, const Tensor& x) const {
  return component(m).forward(x);
}

Tensor RecursiveMixtureModel::mixing_log_weights(const Tensor& x, std::size_t k) const {
  if (k > spec_.M) throw ConfigError("mixture order " + std::to_string(k) + " > M");
  const std::size_t batch = x.shape()[0];
  if (k == 0) return Tensor::zeros({batch, 1});
  // log alpha_m = log eps_m + sum_{j=m+1..k} log(1 - eps_j), eps_0 = 1.
  std::vector<Tensor> log_eps(k + 1), log_keep(k + 1);
  for (std::size_t j = 1; j <= k; ++j) {
    Tensor e = eps(j).forward(x);
    log_eps[j] = log(e);
    log_keep[j] = log(add_scalar(neg(e), 1.0));
  }
  std::vector<Tensor> cols(k + 1);
  Tensor suffix;  // sum_{j=m+1..k} log(1 - eps_j)
  for (std::size_t m = k + 1; m-- > 0;) {
    Tensor col;
    if (m == k) col = log_eps[k];
    else if (m == 0) col = suffix;
    else col = log_eps[m] + suffix;
    cols[m] = reshape(col, {batch, 1});
    if (m >= 1) suffix = (m == k) ? log_keep[k] : suffix + log_keep[m];
  }
  return concat(cols, 1);
}

MixturePosterior RecursiveMixtureModel::encode_mixture(const Tensor& x, std::size_t k) const {
  if (k > spec_.M) throw ConfigError("mixture order " + std::to_string(k) + " > M");
  std::vector<DiagGaussian> comps;
  comps.reserve(k + 1);
  for (std::size_t m = 0; m <= k; ++m) comps.push_back(encode_component(m, x));
  return MixturePosterior(std::move(comps), mixing_log_weights(x, k));
}

std::vector<ParamGroup*> RecursiveMixtureModel::groups() {
  std::vector<ParamGroup*> out;
  for (auto& c : components_) out.push_back(&c.group());
  for (auto& e : eps_) out.push_back(&e.group());
  out.push_back(&decoder_.group());
  return out;
}

std::vector<const ParamGroup*> RecursiveMixtureModel::groups() const {
  std::vector<const ParamGroup*> out;
  for (const auto& c : components_) out.push_back(&c.group());
  for (const auto& e : eps_) out.push_back(&e.group());
  out.push_back(&decoder_.group());
  return out;
}

ParamGroup& RecursiveMixtureModel::group(const std::string& name) {
  for (ParamGroup* g : groups())
    if (g->name() == name) return *g;
  throw ConfigError("no parameter group named '" + name + "'");
}

void RecursiveMixtureModel::enable_only(const ParamGroup& active) {
  for (ParamGroup* g : groups()) g->set_trainable(g == &active);
}

void RecursiveMixtureModel::enable_all() {
  for (ParamGroup* g : groups()) g->set_trainable(true);
}

void RecursiveMixtureModel::replace_decoder(Decoder d) {
  if (d.spec().input_dim != spec_.d_z || d.spec().output_dim != spec_.d_x ||
      d.kind() != spec_.likelihood)
    throw ConfigError("replacement decoder does not match the model's d_z/d_x/likelihood");
  spec_.decoder_hidden = d.spec().hidden;
  decoder_ = std::move(d);
}

std::vector<std::vector<double>> RecursiveMixtureModel::snapshot() const {
  std::vector<std::vector<double>> out;
  for (const ParamGroup* g : groups()) out.push_back(g->flatten());
  return out;
}

void RecursiveMixtureModel::restore(const std::vector<std::vector<double>>& snap) {
  auto gs = groups();
  if (snap.size() != gs.size()) throw ShapeError("snapshot has wrong number of groups");
  for (std::size_t i = 0; i < gs.size(); ++i) gs[i]->assign(snap[i]);
}

// ---------------------------------------------------------------------------

namespace {

// First layer emits [W z, -W z]; the head recombines the two halves with
// `same` and `flipped` weights. leaky_relu(a) + leaky_relu(-a) = (1-s)|a| and
// leaky_relu(a) - leaky_relu(-a) = (1+s) a.
Decoder make_folded_decoder(const std::vector<double>& W, const std::vector<double>& b,
                            std::size_t d_x, std::size_t d_z, double noise_var, double slope,
                            double same, double flipped) {
  if (W.size() != d_x * d_z || b.size() != d_x)
    throw ShapeError("oracle decoder: W must be d_x*d_z and b must be d_x");
  if (!(noise_var > 0.0)) throw ConfigError("oracle decoder: noise_var must be > 0");
  Rng unused(0);
  MlpSpec spec{d_z, {2 * d_x}, d_x, slope};
  Decoder dec(Likelihood::kGaussian, spec, unused);
  auto& first = dec.trunk().layers()[0];
  auto w1 = first.weight().mutable_data();  // [d_z x 2 d_x]
  for (std::size_t i = 0; i < d_x; ++i)
    for (std::size_t j = 0; j < d_z; ++j) {
      w1[j * 2 * d_x + i] = W[i * d_z + j];
      w1[j * 2 * d_x + d_x + i] = -W[i * d_z + j];
    }
  std::fill(first.bias().mutable_data().begin(), first.bias().mutable_data().end(), 0.0);
  auto w2 = dec.mean_head().weight().mutable_data();  // [2 d_x x d_x]
  std::fill(w2.begin(), w2.end(), 0.0);
  for (std::size_t i = 0; i < d_x; ++i) {
    w2[i * d_x + i] = same;
    w2[(d_x + i) * d_x + i] = flipped;
  }
  std::copy(b.begin(), b.end(), dec.mean_head().bias().mutable_data().begin());
  auto lw = dec.logvar_head().weight().mutable_data();
  std::fill(lw.begin(), lw.end(), 0.0);
  auto lb = dec.logvar_head().bias().mutable_data();
  std::fill(lb.begin(), lb.end(), std::log(noise_var));
  return dec;
}

}  // namespace

Decoder make_abs_decoder(const std::vector<double>& W, const std::vector<double>& b,
                         std::size_t d_x, std::size_t d_z, double noise_var, double slope) {
  const double c = 1.0 / (1.0 - slope);
  return make_folded_decoder(W, b, d_x, d_z, noise_var, slope, c, c);
}

Decoder make_linear_decoder(const std::vector<double>& W, const std::vector<double>& b,
                            std::size_t d_x, std::size_t d_z, double noise_var, double slope) {
  const double c = 1.0 / (1.0 + slope);
  return make_folded_decoder(W, b, d_x, d_z, noise_var, slope, c, -c);
}

}  // namespace remix
