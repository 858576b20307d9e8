#ifndef REMIX_CONFIG_HPP_
#define REMIX_CONFIG_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "remix/data.hpp"
#include "remix/models.hpp"

namespace remix {

enum class Method { kRme, kVae, kMe, kBviEr1, kBviEr2 };

std::string to_string(Method m);
Method method_from_string(const std::string& s);

struct DatasetSpec {
  std::string kind = "bimodal_toy";  // bimodal_toy | linear_gaussian | idx
  std::size_t n_train = 2000;
  std::size_t n_test = 500;
  std::uint64_t seed = 0;
  // bimodal_toy
  std::size_t d_x = 8;
  std::size_t d_z = 2;
  double c = 2.0;
  double noise_std = 0.1;
  // linear_gaussian; W row-major [d_x x d_z], drawn from `seed` when empty
  std::vector<double> W;
  std::vector<double> b;
  double noise_var = 0.1;
  // idx
  std::string images;
  std::string labels;
  std::string test_images;
  std::string test_labels;
  std::string binarize = "threshold";  // none | threshold | stochastic
};

struct TrainConfig {
  Method method = Method::kRme;
  std::uint64_t seed = 0;

  // model
  std::size_t M = 1;
  std::size_t d_z = 2;
  std::vector<std::size_t> encoder_hidden{256, 256};
  std::vector<std::size_t> decoder_hidden{256, 256};
  std::size_t eps_hidden = 10;
  double eps_min = 0.001;
  double eps_max = 0.1;
  double slope = 0.01;
  std::string likelihood = "auto";  // auto | gaussian | bernoulli

  // optimization
  std::size_t batch_size = 128;
  double lr = 5e-4;
  double C = 500.0;
  std::size_t n_epochs = 20;
  std::size_t pretrain_epochs = 30;
  std::size_t kl_samples = 1;
  double val_fraction = 0.1;
  std::size_t val_iwae_k = 100;
  std::size_t eval_examples = 512;  // cap for per-epoch alpha/KL summaries
  std::string me_init = "random";   // random | clone
  bool shared_component_noise = false;
  std::string decoder_init = "learned";  // learned | oracle
  bool train_decoder = true;

  DatasetSpec dataset;

  // output
  std::string out_dir = "runs/default";
  std::string metrics_file = "metrics.csv";
  std::string checkpoint_stem = "model";

  /// Throws ConfigError naming the offending field.
  void validate() const;
  /// Model layout for a dataset with d_x columns in `domain`.
  ModelSpec model_spec(std::size_t d_x, Domain domain) const;
  /// Mixture order actually trained (vae forces 0).
  std::size_t effective_M() const { return method == Method::kVae ? 0 : M; }
  /// Human-readable notes about ignored settings (e.g. M for vae).
  std::vector<std::string> warnings() const;
};

nlohmann::json to_json(const TrainConfig& c);
/// Unknown keys are rejected.
TrainConfig config_from_json(const nlohmann::json& j);

/// Applies "a.b.c=value" overrides to a JSON document. The value is parsed as
/// JSON when possible, else taken as a string.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// Reads a config file, applies overrides and the REMIX_SEED environment
/// variable (which wins over both), and validates.
TrainConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides);

/// Materializes the dataset a spec describes, including its test split.
Dataset build_dataset(const DatasetSpec& spec);

}  // namespace remix

#endif  // REMIX_CONFIG_HPP_
