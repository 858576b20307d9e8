#ifndef REMIX_TRAINING_HPP_
#define REMIX_TRAINING_HPP_

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "remix/config.hpp"
#include "remix/data.hpp"
#include "remix/models.hpp"

namespace remix {

struct EpochMetrics {
  std::size_t epoch = 0;
  Method method = Method::kRme;
  double train_elbo = 0.0;
  double val_iwae = 0.0;
  double val_iwae_se = 0.0;
  std::vector<double> alpha;  // mean alpha_0..alpha_M over the summary rows
  std::vector<double> kl;     // mean KL(q_m || Q_{m-1}) for m = 1..M
  double seconds = 0.0;
};

/// Appends EpochMetrics rows; the header is written on open.
/// Columns: epoch,method,train_elbo,val_iwae,alpha_0..alpha_M,kl_1..kl_M,seconds
class MetricsWriter {
 public:
  MetricsWriter(const std::filesystem::path& path, std::size_t M);
  void append(const EpochMetrics& m);
  static std::string header(std::size_t M);
  static std::string row(const EpochMetrics& m);

 private:
  std::filesystem::path path_;
};

/// A trained single-encoder VAE used to initialize every mixture method.
struct Pretrained {
  Decoder decoder;
  EncoderComponent encoder;
  std::vector<double> epoch_elbo;  // mean train ELBO per pretraining epoch

  Pretrained clone() const { return {decoder.clone(), encoder.clone("phi_0"), epoch_elbo}; }
};

struct TrainResult {
  RecursiveMixtureModel model;
  std::vector<EpochMetrics> history;
  std::size_t best_epoch = 0;
  double best_val_iwae = 0.0;
  double best_val_iwae_se = 0.0;
};

struct TrainHooks {
  std::optional<std::filesystem::path> metrics_csv;
  std::function<void(const EpochMetrics&)> on_epoch;
  /// Called after every optimizer sub-step with its label, e.g. "phi_1".
  std::function<void(const std::string& step, const RecursiveMixtureModel&)> on_step;
};

/// Train/val/test division used by every trainer for this config.
SplitPlan make_split(const TrainConfig& config, const Dataset& ds);

/// Standard VAE (q_0 and decoder, joint step on the single-sample ELBO) for
/// config.pretrain_epochs epochs; 0 epochs returns the random initialization.
Pretrained pretrain_vae(const TrainConfig& config, const Dataset& ds);

/// Runs config.method end to end: pretraining (or the supplied one), the
/// method's main loop for n_epochs, per-epoch metrics, and restores the
/// parameters of the best validation-IWAE epoch.
TrainResult train(const TrainConfig& config, const Dataset& ds, const Pretrained* pretrained = nullptr,
                  const TrainHooks& hooks = {});

/// Builds the model for a config and initializes it from a pretrained VAE
/// (components cloned, or randomized for me with me_init=random).
RecursiveMixtureModel init_model(const TrainConfig& config, const Dataset& ds, const Pretrained& pre);

/// The oracle decoder of a synthetic dataset's generator.
Decoder oracle_decoder(const Dataset& ds, double slope);

}  // namespace remix

#endif  // REMIX_TRAINING_HPP_
