#include "remix/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>

#include "remix/errors.hpp"
#include "remix/evaluation.hpp"
#include "remix/objectives.hpp"
#include "remix/optim.hpp"
#include "remix/rng.hpp"

namespace remix {

// ---------------------------------------------------------------------------
// Metrics CSV

MetricsWriter::MetricsWriter(const std::filesystem::path& path, std::size_t M) : path_(path) {
  std::ofstream out(path_, std::ios::trunc);
  if (!out) throw ConfigError("cannot write metrics file " + path_.string());
  out << header(M) << '\n';
}

std::string MetricsWriter::header(std::size_t M) {
  std::string h = "epoch,method,train_elbo,val_iwae";
  for (std::size_t m = 0; m <= M; ++m) h += ",alpha_" + std::to_string(m);
  for (std::size_t m = 1; m <= M; ++m) h += ",kl_" + std::to_string(m);
  return h + ",seconds";
}

std::string MetricsWriter::row(const EpochMetrics& e) {
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  std::string r = std::to_string(e.epoch) + "," + to_string(e.method) + "," + num(e.train_elbo) + "," +
                  num(e.val_iwae);
  for (double a : e.alpha) r += "," + num(a);
  for (double k : e.kl) r += "," + num(k);
  return r + "," + num(e.seconds);
}

void MetricsWriter::append(const EpochMetrics& m) {
  std::ofstream out(path_, std::ios::app);
  if (!out) throw ConfigError("cannot append to metrics file " + path_.string());
  out << row(m) << '\n';
}

// ---------------------------------------------------------------------------

namespace {

void check_finite(double loss, const std::string& step, std::size_t epoch, std::size_t batch) {
  if (!std::isfinite(loss))
    throw NumericError("non-finite loss in step '" + step + "' (parameter group " + step + ") at epoch " +
                       std::to_string(epoch) + ", batch " + std::to_string(batch));
}

void check_params(const ParamGroup& g, std::size_t epoch, std::size_t batch) {
  if (!g.all_finite())
    throw NumericError("non-finite parameters in group '" + g.name() + "' after its step at epoch " +
                       std::to_string(epoch) + ", batch " + std::to_string(batch));
}

std::vector<std::size_t> summary_rows(const SplitPlan& plan, std::size_t cap) {
  const auto& src = plan.val().empty() ? plan.train() : plan.val();
  return {src.begin(), src.begin() + static_cast<std::ptrdiff_t>(std::min(cap, src.size()))};
}

// Enables q_0 and, when it is being learned, the decoder.
std::vector<ParamGroup*> enable_vae(RecursiveMixtureModel& model, bool train_decoder) {
  model.enable_only(model.component(0).group());
  std::vector<ParamGroup*> gs{&model.component(0).group()};
  if (train_decoder) {
    model.decoder().group().set_trainable(true);
    gs.push_back(&model.decoder().group());
  }
  return gs;
}

// One joint step of the standard VAE; returns the batch-mean ELBO.
double vae_step(RecursiveMixtureModel& model, AdamState& state, const Tensor& x, Rng& rng,
                bool train_decoder, std::size_t epoch, std::size_t batch, const TrainHooks& hooks) {
  auto gs = enable_vae(model, train_decoder);
  ElboEstimate e = elbo_single(model.encode_component(0, x), model.decoder(), x, rng);
  Tensor loss = neg(mean(e.elbo, 0));
  check_finite(loss.item(), "phi_0", epoch, batch);
  backward(loss);
  adam_step(state, gs);
  for (auto* g : gs) check_params(*g, epoch, batch);
  if (hooks.on_step) hooks.on_step("phi_0", model);
  return -loss.item();
}

}  // namespace

SplitPlan make_split(const TrainConfig& config, const Dataset& ds) {
  return split_and_batch(ds, config.val_fraction, config.batch_size, config.seed);
}

Decoder oracle_decoder(const Dataset& ds, double slope) {
  if (!ds.generator) throw ConfigError("oracle decoder needs a synthetic dataset with a known generator");
  const GeneratorInfo& g = *ds.generator;
  if (g.kind == GeneratorInfo::Kind::kBimodalToy)
    return make_abs_decoder(g.W, g.b, ds.d_x, g.d_z, g.noise_var, slope);
  return make_linear_decoder(g.W, g.b, ds.d_x, g.d_z, g.noise_var, slope);
}

Pretrained pretrain_vae(const TrainConfig& config, const Dataset& ds) {
  const SplitPlan plan = make_split(config, ds);
  if (plan.train().empty()) throw DataError("training set is empty");
  ModelSpec spec = config.model_spec(ds.d_x, ds.domain);
  spec.M = 0;
  Rng init = Rng::derive(config.seed, "model.init");
  RecursiveMixtureModel model(spec, init);
  if (config.decoder_init == "oracle") model.replace_decoder(oracle_decoder(ds, config.slope));

  Rng noise = Rng::derive(config.seed, "pretrain.noise");
  AdamState state(AdamOptions{config.lr});
  std::vector<double> history;
  for (std::size_t epoch = 0; epoch < config.pretrain_epochs; ++epoch) {
    double total = 0.0;
    std::size_t count = 0, b = 0;
    for (const auto& idx : plan.epoch_batches(epoch)) {
      const Tensor x = ds.rows(idx);
      total += vae_step(model, state, x, noise, config.train_decoder, epoch, b++, {}) *
               static_cast<double>(idx.size());
      count += idx.size();
    }
    history.push_back(total / static_cast<double>(count));
  }
  model.enable_all();
  return Pretrained{model.decoder().clone(), model.component(0).clone("phi_0"), std::move(history)};
}

RecursiveMixtureModel init_model(const TrainConfig& config, const Dataset& ds, const Pretrained& pre) {
  const ModelSpec spec = config.model_spec(ds.d_x, ds.domain);
  Rng init = Rng::derive(config.seed, "model.init");
  RecursiveMixtureModel model(spec, init);
  model.replace_decoder(pre.decoder.clone());
  const auto q0 = pre.encoder.group().flatten();
  const bool random_rest = config.method == Method::kMe && config.me_init == "random";
  for (std::size_t m = 0; m <= model.M(); ++m)
    if (m == 0 || !random_rest) model.component(m).group().assign(q0);
  model.enable_all();
  return model;
}

namespace {

struct MainLoop {
  const TrainConfig& config;
  const Dataset& ds;
  const TrainHooks& hooks;
  RecursiveMixtureModel& model;
  Rng noise;
  std::map<std::string, AdamState> states;  // one per group (rme / bvi)
  AdamState joint;                          // vae / me
  std::size_t t = 0;                        // batches seen, for the BVI schedule

  MainLoop(const TrainConfig& c, const Dataset& d, const TrainHooks& h, RecursiveMixtureModel& m)
      : config(c), ds(d), hooks(h), model(m), noise(Rng::derive(c.seed, "train.noise")) {
    const bool bvi = c.method == Method::kBviEr1 || c.method == Method::kBviEr2;
    const AdamOptions opts{bvi ? c.lr / 10.0 : c.lr};
    for (ParamGroup* g : model.groups()) states.emplace(g->name(), AdamState(opts));
    joint = AdamState(opts);
  }

  void step_group(ParamGroup& g, const Tensor& loss, std::size_t epoch, std::size_t batch) {
    check_finite(loss.item(), g.name(), epoch, batch);
    backward(loss);
    adam_step(states.at(g.name()), g);
    check_params(g, epoch, batch);
    if (hooks.on_step) hooks.on_step(g.name(), model);
  }

  // Recursive-mixture schedule; the component loss is BKL for rme and an
  // entropy bonus for the BVI variants.
  double recursive_batch(const Tensor& x, std::size_t epoch, std::size_t batch) {
    const std::size_t M = model.M();
    {
      ParamGroup& g = model.component(0).group();
      model.enable_only(g);
      ElboEstimate e = elbo_single(model.encode_component(0, x), model.decoder(), x, noise);
      step_group(g, neg(mean(e.elbo, 0)), epoch, batch);
    }
    for (std::size_t m = 1; m <= M; ++m) {
      ParamGroup& phi = model.component(m).group();
      model.enable_only(phi);
      Tensor loss;
      if (config.method == Method::kRme) {
        loss = new_component_loss(model, m, x, config.C, noise, config.kl_samples).loss;
      } else {
        DiagGaussian q = model.encode_component(m, x);
        ElboEstimate e = elbo_single(q, model.decoder(), x, noise);
        Tensor reg = config.method == Method::kBviEr1 ? bvi_entropy_reg_mc(q, t, noise)
                                                      : bvi_entropy_reg_closed(q, t);
        loss = neg(mean(e.elbo, 0)) - reg;
      }
      step_group(phi, loss, epoch, batch);

      ParamGroup& eta = model.eps(m).group();
      model.enable_only(eta);
      ElboEstimate e = elbo_mixture(model.encode_mixture(x, m), model.decoder(), x, noise);
      step_group(eta, neg(mean(e.elbo, 0)), epoch, batch);
    }
    ParamGroup& theta = model.decoder().group();
    model.enable_only(theta);
    ElboEstimate e = elbo_mixture(model.encode_mixture(x, M), model.decoder(), x, noise);
    Tensor loss = neg(mean(e.elbo, 0));
    if (config.train_decoder) {
      step_group(theta, loss, epoch, batch);
    } else {
      check_finite(loss.item(), theta.name(), epoch, batch);
    }
    ++t;
    return -loss.item();
  }

  double me_batch(const Tensor& x, std::size_t epoch, std::size_t batch) {
    model.enable_all();
    if (!config.train_decoder) model.decoder().group().set_trainable(false);
    ElboEstimate e = elbo_mixture(model.encode_mixture(x, model.M()), model.decoder(), x, noise,
                                  config.shared_component_noise);
    Tensor loss = neg(mean(e.elbo, 0));
    check_finite(loss.item(), "joint", epoch, batch);
    backward(loss);
    auto gs = model.groups();
    adam_step(joint, gs);
    for (auto* g : gs) check_params(*g, epoch, batch);
    if (hooks.on_step) hooks.on_step("joint", model);
    ++t;
    return -loss.item();
  }

  double run_batch(const Tensor& x, std::size_t epoch, std::size_t batch) {
    if (model.M() == 0) {
      ++t;
      return vae_step(model, joint, x, noise, config.train_decoder, epoch, batch, hooks);
    }
    if (config.method == Method::kMe) return me_batch(x, epoch, batch);
    return recursive_batch(x, epoch, batch);
  }
};

void summarize(const RecursiveMixtureModel& model, const Dataset& ds, const SplitPlan& plan,
               const TrainConfig& config, std::size_t epoch, EpochMetrics& out) {
  NoGradGuard no_grad;
  const std::size_t M = model.M();
  if (!plan.val().empty()) {
    Rng rng = Rng::derive(config.seed, "val.iwae", epoch);
    const IwaeSummary s = iwae_dataset(model, ds, plan.val(), config.val_iwae_k, config.batch_size, rng);
    out.val_iwae = s.mean;
    out.val_iwae_se = s.se;
  } else {
    out.val_iwae = std::numeric_limits<double>::quiet_NaN();
  }
  const auto rows = summary_rows(plan, config.eval_examples);
  out.alpha.assign(M + 1, 0.0);
  out.kl.assign(M, 0.0);
  if (rows.empty()) return;
  const Tensor x = ds.rows(rows);
  const Tensor alphas = exp(model.mixing_log_weights(x, M));
  const double n = static_cast<double>(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t m = 0; m <= M; ++m) out.alpha[m] += alphas.at(i, m) / n;
  Rng rng = Rng::derive(config.seed, "epoch.kl", epoch);
  for (std::size_t m = 1; m <= M; ++m) {
    Tensor kl = kl_monte_carlo(model.encode_component(m, x), model.encode_mixture(x, m - 1), 16, rng);
    out.kl[m - 1] = mean(kl, 0).item();
  }
}

}  // namespace

TrainResult train(const TrainConfig& config, const Dataset& ds, const Pretrained* pretrained,
                  const TrainHooks& hooks) {
  config.validate();
  const SplitPlan plan = make_split(config, ds);
  if (plan.train().empty()) throw DataError("training set is empty");

  std::optional<Pretrained> own;
  if (!pretrained) {
    own.emplace(pretrain_vae(config, ds));
    pretrained = &*own;
  }
  TrainResult result{init_model(config, ds, *pretrained), {}, 0, 0.0, 0.0};
  RecursiveMixtureModel& model = result.model;

  std::optional<MetricsWriter> writer;
  if (hooks.metrics_csv) writer.emplace(*hooks.metrics_csv, model.M());

  MainLoop loop(config, ds, hooks, model);
  std::vector<std::vector<double>> best;
  bool have_best = false;
  const std::size_t first = config.pretrain_epochs;
  const std::size_t n_epochs = config.n_epochs;
  for (std::size_t e = 1; e <= std::max<std::size_t>(n_epochs, 1); ++e) {
    const auto t0 = std::chrono::steady_clock::now();
    EpochMetrics m;
    m.epoch = e;
    m.method = config.method;
    if (e <= n_epochs) {
      double total = 0.0;
      std::size_t count = 0, b = 0;
      for (const auto& idx : plan.epoch_batches(first + e - 1)) {
        const Tensor x = ds.rows(idx);
        total += loop.run_batch(x, e, b++) * static_cast<double>(idx.size());
        count += idx.size();
      }
      m.train_elbo = total / static_cast<double>(count);
    } else {
      // n_epochs = 0: report the initialized model as epoch 0.
      m.epoch = 0;
      m.train_elbo = std::numeric_limits<double>::quiet_NaN();
    }
    model.enable_all();
    summarize(model, ds, plan, config, m.epoch, m);
    m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const bool better = !have_best || std::isnan(m.val_iwae) || m.val_iwae > result.best_val_iwae;
    if (better) {
      best = model.snapshot();
      have_best = true;
      result.best_epoch = m.epoch;
      result.best_val_iwae = m.val_iwae;
      result.best_val_iwae_se = m.val_iwae_se;
    }
    result.history.push_back(m);
    if (writer) writer->append(m);
    if (hooks.on_epoch) hooks.on_epoch(m);
  }
  model.restore(best);
  model.enable_all();
  return result;
}

}  // namespace remix
