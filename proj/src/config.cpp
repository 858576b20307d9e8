#include "remix/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <set>

#include "remix/errors.hpp"
#include "remix/rng.hpp"

namespace remix {

using nlohmann::json;

std::string to_string(Method m) {
  switch (m) {
    case Method::kRme: return "rme";
    case Method::kVae: return "vae";
    case Method::kMe: return "me";
    case Method::kBviEr1: return "bvi_er1";
    case Method::kBviEr2: return "bvi_er2";
  }
  return "?";
}

Method method_from_string(const std::string& s) {
  if (s == "rme") return Method::kRme;
  if (s == "vae") return Method::kVae;
  if (s == "me") return Method::kMe;
  if (s == "bvi_er1") return Method::kBviEr1;
  if (s == "bvi_er2") return Method::kBviEr2;
  throw ConfigError("unknown method '" + s + "' (rme | vae | me | bvi_er1 | bvi_er2)");
}

void TrainConfig::validate() const {
  auto require = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  require(batch_size >= 1, "batch_size must be >= 1");
  require(lr > 0.0, "lr must be > 0");
  require(C > 0.0, "C must be > 0");
  require(kl_samples >= 1, "kl_samples must be >= 1");
  require(val_iwae_k >= 1, "val_iwae_k must be >= 1");
  require(val_fraction >= 0.0 && val_fraction < 1.0, "val_fraction must be in [0, 1)");
  require(d_z >= 1, "d_z must be >= 1");
  require(eps_min >= 0.0 && eps_min < eps_max && eps_max < 1.0,
          "need 0 <= eps_min < eps_max < 1");
  require(me_init == "random" || me_init == "clone", "me_init must be random or clone");
  require(decoder_init == "learned" || decoder_init == "oracle",
          "decoder_init must be learned or oracle");
  require(likelihood == "auto" || likelihood == "gaussian" || likelihood == "bernoulli",
          "likelihood must be auto, gaussian or bernoulli");
  require(method == Method::kVae || method == Method::kMe || M >= 1,
          to_string(method) + " needs M >= 1");
  require(dataset.kind == "bimodal_toy" || dataset.kind == "linear_gaussian" || dataset.kind == "idx",
          "dataset.kind must be bimodal_toy, linear_gaussian or idx");
  require(dataset.binarize == "none" || dataset.binarize == "threshold" ||
              dataset.binarize == "stochastic",
          "dataset.binarize must be none, threshold or stochastic");
  require(dataset.kind != "idx" || !dataset.images.empty(), "dataset.images is required for idx");
  require(decoder_init != "oracle" || dataset.kind != "idx",
          "decoder_init=oracle needs a synthetic dataset");
  for (std::size_t h : encoder_hidden) require(h >= 1, "encoder_hidden entries must be >= 1");
  for (std::size_t h : decoder_hidden) require(h >= 1, "decoder_hidden entries must be >= 1");
}

ModelSpec TrainConfig::model_spec(std::size_t d_x, Domain domain) const {
  ModelSpec s;
  s.d_x = d_x;
  s.d_z = d_z;
  s.M = effective_M();
  s.encoder_hidden = encoder_hidden;
  s.decoder_hidden = decoder_hidden;
  s.eps_hidden = eps_hidden;
  s.eps_min = eps_min;
  s.eps_max = eps_max;
  s.slope = slope;
  if (likelihood == "gaussian") s.likelihood = Likelihood::kGaussian;
  else if (likelihood == "bernoulli") s.likelihood = Likelihood::kBernoulli;
  else s.likelihood = domain == Domain::kBinary ? Likelihood::kBernoulli : Likelihood::kGaussian;
  return s;
}

std::vector<std::string> TrainConfig::warnings() const {
  std::vector<std::string> w;
  if (method == Method::kVae && M > 0)
    w.push_back("method=vae ignores M=" + std::to_string(M) + " (single encoder)");
  return w;
}

json to_json(const TrainConfig& c) {
  const DatasetSpec& d = c.dataset;
  return json{
      {"method", to_string(c.method)},
      {"seed", c.seed},
      {"model",
       {{"M", c.M},
        {"d_z", c.d_z},
        {"encoder_hidden", c.encoder_hidden},
        {"decoder_hidden", c.decoder_hidden},
        {"eps_hidden", c.eps_hidden},
        {"eps_min", c.eps_min},
        {"eps_max", c.eps_max},
        {"slope", c.slope},
        {"likelihood", c.likelihood}}},
      {"train",
       {{"batch_size", c.batch_size},
        {"lr", c.lr},
        {"C", c.C},
        {"n_epochs", c.n_epochs},
        {"pretrain_epochs", c.pretrain_epochs},
        {"kl_samples", c.kl_samples},
        {"val_fraction", c.val_fraction},
        {"val_iwae_k", c.val_iwae_k},
        {"eval_examples", c.eval_examples},
        {"me_init", c.me_init},
        {"shared_component_noise", c.shared_component_noise},
        {"decoder_init", c.decoder_init},
        {"train_decoder", c.train_decoder}}},
      {"dataset",
       {{"kind", d.kind},
        {"n_train", d.n_train},
        {"n_test", d.n_test},
        {"seed", d.seed},
        {"d_x", d.d_x},
        {"d_z", d.d_z},
        {"c", d.c},
        {"noise_std", d.noise_std},
        {"W", d.W},
        {"b", d.b},
        {"noise_var", d.noise_var},
        {"images", d.images},
        {"labels", d.labels},
        {"test_images", d.test_images},
        {"test_labels", d.test_labels},
        {"binarize", d.binarize}}},
      {"output",
       {{"dir", c.out_dir}, {"metrics_file", c.metrics_file}, {"checkpoint", c.checkpoint_stem}}}};
}

namespace {

// Copies j[key] into out if present; records the key as consumed.
template <class T>
void read(const json& j, const char* key, T& out, std::set<std::string>& seen) {
  seen.insert(key);
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

void reject_unknown(const json& j, const std::set<std::string>& seen, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!seen.count(it.key()))
      throw ConfigError("unknown config key '" + where + it.key() + "'");
}

const json& section(const json& j, const char* key) {
  static const json empty = json::object();
  if (!j.contains(key)) return empty;
  if (!j.at(key).is_object()) throw ConfigError(std::string("'") + key + "' must be an object");
  return j.at(key);
}

}  // namespace

TrainConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  TrainConfig c;
  std::set<std::string> top{"model", "train", "dataset", "output"};
  std::string method = to_string(c.method);
  read(j, "method", method, top);
  c.method = method_from_string(method);
  read(j, "seed", c.seed, top);
  reject_unknown(j, top, "");

  const json& m = section(j, "model");
  std::set<std::string> ms;
  read(m, "M", c.M, ms);
  read(m, "d_z", c.d_z, ms);
  read(m, "encoder_hidden", c.encoder_hidden, ms);
  read(m, "decoder_hidden", c.decoder_hidden, ms);
  read(m, "eps_hidden", c.eps_hidden, ms);
  read(m, "eps_min", c.eps_min, ms);
  read(m, "eps_max", c.eps_max, ms);
  read(m, "slope", c.slope, ms);
  read(m, "likelihood", c.likelihood, ms);
  reject_unknown(m, ms, "model.");

  const json& t = section(j, "train");
  std::set<std::string> ts;
  read(t, "batch_size", c.batch_size, ts);
  read(t, "lr", c.lr, ts);
  read(t, "C", c.C, ts);
  read(t, "n_epochs", c.n_epochs, ts);
  read(t, "pretrain_epochs", c.pretrain_epochs, ts);
  read(t, "kl_samples", c.kl_samples, ts);
  read(t, "val_fraction", c.val_fraction, ts);
  read(t, "val_iwae_k", c.val_iwae_k, ts);
  read(t, "eval_examples", c.eval_examples, ts);
  read(t, "me_init", c.me_init, ts);
  read(t, "shared_component_noise", c.shared_component_noise, ts);
  read(t, "decoder_init", c.decoder_init, ts);
  read(t, "train_decoder", c.train_decoder, ts);
  reject_unknown(t, ts, "train.");

  const json& d = section(j, "dataset");
  std::set<std::string> ds;
  DatasetSpec& s = c.dataset;
  read(d, "kind", s.kind, ds);
  read(d, "n_train", s.n_train, ds);
  read(d, "n_test", s.n_test, ds);
  read(d, "seed", s.seed, ds);
  read(d, "d_x", s.d_x, ds);
  read(d, "d_z", s.d_z, ds);
  read(d, "c", s.c, ds);
  read(d, "noise_std", s.noise_std, ds);
  read(d, "W", s.W, ds);
  read(d, "b", s.b, ds);
  read(d, "noise_var", s.noise_var, ds);
  read(d, "images", s.images, ds);
  read(d, "labels", s.labels, ds);
  read(d, "test_images", s.test_images, ds);
  read(d, "test_labels", s.test_labels, ds);
  read(d, "binarize", s.binarize, ds);
  reject_unknown(d, ds, "dataset.");

  const json& o = section(j, "output");
  std::set<std::string> os;
  read(o, "dir", c.out_dir, os);
  read(o, "metrics_file", c.metrics_file, os);
  read(o, "checkpoint", c.checkpoint_stem, os);
  reject_unknown(o, os, "output.");

  c.validate();
  return c;
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;
  }
  // Bare keys resolve to whichever section defines them, so `seed=3` and
  // `lr=1e-3` work without a prefix.
  static const std::vector<std::pair<std::string, std::vector<std::string>>> kSections{
      {"model", {"M", "d_z", "encoder_hidden", "decoder_hidden", "eps_hidden", "eps_min", "eps_max",
                 "slope", "likelihood"}},
      {"train", {"batch_size", "lr", "C", "n_epochs", "pretrain_epochs", "kl_samples",
                 "val_fraction", "val_iwae_k", "eval_examples", "me_init",
                 "shared_component_noise", "decoder_init", "train_decoder"}}};
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    parts.push_back(path.substr(start, dot - start));
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  if (parts.size() == 1)
    for (const auto& [sec, keys] : kSections)
      if (std::find(keys.begin(), keys.end(), parts[0]) != keys.end()) {
        parts.insert(parts.begin(), sec);
        break;
      }
  json* node = &doc;
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->contains(parts[i])) (*node)[parts[i]] = json::object();
    node = &(*node)[parts[i]];
    if (!node->is_object()) throw ConfigError("override path '" + path + "' crosses a non-object");
  }
  (*node)[parts.back()] = value;
}

TrainConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  for (const auto& o : overrides) apply_override(doc, o);
  if (const char* env = std::getenv("REMIX_SEED"); env && *env) {
    try {
      doc["seed"] = std::stoull(env);
    } catch (const std::exception&) {
      throw ConfigError(std::string("REMIX_SEED is not an integer: ") + env);
    }
  }
  return config_from_json(doc);
}

Dataset build_dataset(const DatasetSpec& spec) {
  Dataset ds;
  if (spec.kind == "bimodal_toy") {
    ds = gen_bimodal_toy(spec.n_train + spec.n_test, spec.seed,
                         BimodalToyOptions{spec.d_x, spec.d_z, spec.c, spec.noise_std});
  } else if (spec.kind == "linear_gaussian") {
    std::vector<double> W = spec.W, b = spec.b;
    if (W.empty()) {
      Rng rng = Rng::derive(spec.seed, "linear_gaussian.W");
      W.resize(spec.d_x * spec.d_z);
      for (double& w : W) w = rng.normal();
    }
    if (b.empty()) b.assign(spec.d_x, 0.0);
    ds = gen_linear_gaussian(spec.n_train + spec.n_test, W, b, spec.noise_var, spec.seed);
  } else if (spec.kind == "idx") {
    const Binarize bin = spec.binarize == "none"        ? Binarize::kNone
                         : spec.binarize == "threshold" ? Binarize::kThreshold
                                                        : Binarize::kStochastic;
    auto opt_path = [](const std::string& p) -> std::optional<std::filesystem::path> {
      if (p.empty()) return std::nullopt;
      return std::filesystem::path(p);
    };
    ds = load_idx(spec.images, opt_path(spec.labels), bin, spec.seed);
    if (!spec.test_images.empty()) {
      Dataset test = load_idx(spec.test_images, opt_path(spec.test_labels), bin, spec.seed + 1);
      if (test.d_x != ds.d_x) throw DataError("test images have a different size than train images");
      const std::size_t n0 = ds.n;
      ds.values.insert(ds.values.end(), test.values.begin(), test.values.end());
      ds.labels.insert(ds.labels.end(), test.labels.begin(), test.labels.end());
      ds.n += test.n;
      ds.splits.test.resize(test.n);
      std::iota(ds.splits.test.begin(), ds.splits.test.end(), n0);
    }
    ds.validate();
    return ds;
  } else {
    throw ConfigError("unknown dataset kind '" + spec.kind + "'");
  }
  ds.splits.train.resize(spec.n_train);
  ds.splits.test.resize(spec.n_test);
  std::iota(ds.splits.test.begin(), ds.splits.test.end(), spec.n_train);
  ds.validate();
  return ds;
}

}  // namespace remix
