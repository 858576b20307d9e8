#include "remix/run.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "remix/checkpoint.hpp"
#include "remix/config.hpp"
#include "remix/errors.hpp"
#include "remix/evaluation.hpp"
#include "remix/training.hpp"

namespace remix {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

// Maps library errors onto exit codes with a one-line diagnostic.
template <class F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const CheckpointError& e) {
    err << "error: " << e.what() << '\n';
    return kExitCheckpoint;
  } catch (const DataError& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const json::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }
}

// Exclusive claim on an output directory for the lifetime of one run.
class DirLock {
 public:
  explicit DirLock(const fs::path& dir) : path_(dir / ".lock") {
    std::FILE* f = std::fopen(path_.c_str(), "wx");
    if (!f) throw ConfigError("output directory " + dir.string() + " is in use (remove " + path_.string() +
                              " if no run is active)");
    std::fclose(f);
  }
  ~DirLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  fs::path path_;
};

TrainConfig config_of(const LoadedCheckpoint& ck) {
  if (!ck.extra.contains("config")) throw CheckpointError("checkpoint does not record its run config");
  try {
    return config_from_json(ck.extra.at("config"));
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint config is invalid: ") + e.what());
  }
}

// Dataset for evaluation: the run's own unless another config is named.
Dataset eval_dataset(const TrainConfig& run, const std::optional<fs::path>& data_config,
                     TrainConfig& used) {
  used = run;
  if (data_config) used.dataset = load_config(*data_config, {}).dataset;
  return build_dataset(used.dataset);
}

std::vector<std::size_t> pick_split(const TrainConfig& cfg, const Dataset& ds, const std::string& split) {
  if (split == "test") return ds.splits.test;
  if (split == "val") return make_split(cfg, ds).val();
  throw ConfigError("split must be test or val, got '" + split + "'");
}

}  // namespace

int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const TrainConfig cfg = load_config(args.config, args.overrides);
    for (const auto& w : cfg.warnings()) err << "warning: " << w << '\n';
    const Dataset ds = build_dataset(cfg.dataset);

    const fs::path dir = cfg.out_dir;
    fs::create_directories(dir);
    DirLock lock(dir);
    const std::string started = utc_now();
    const fs::path metrics = dir / cfg.metrics_file;
    const fs::path stem = dir / cfg.checkpoint_stem;

    TrainHooks hooks;
    hooks.metrics_csv = metrics;
    if (!args.quiet)
      hooks.on_epoch = [&](const EpochMetrics& m) {
        out << "epoch " << m.epoch << "  train_elbo " << m.train_elbo << "  val_iwae " << m.val_iwae
            << " +- " << m.val_iwae_se << "  (" << std::fixed << std::setprecision(1) << m.seconds << "s)"
            << std::defaultfloat << std::setprecision(6) << '\n';
      };
    const TrainResult r = train(cfg, ds, nullptr, hooks);

    const json summary{{"best_epoch", r.best_epoch},
                       {"val_iwae", r.best_val_iwae},
                       {"val_iwae_se", r.best_val_iwae_se},
                       {"final_train_elbo", r.history.back().train_elbo},
                       {"epochs", r.history.size()}};
    save_checkpoint(r.model, stem, json{{"config", to_json(cfg)}, {"metrics", summary}});

    const json manifest{{"config", to_json(cfg)},
                        {"version", kVersion},
                        {"seed", cfg.seed},
                        {"output_dir", dir.string()},
                        {"started", started},
                        {"finished", utc_now()},
                        {"final_metrics", summary},
                        {"files",
                         {{"metrics", metrics.filename().string()},
                          {"checkpoint", stem.filename().string() + ".json"},
                          {"checkpoint_blob", stem.filename().string() + ".bin"}}}};
    write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
    out << "best epoch " << r.best_epoch << ": val IWAE " << r.best_val_iwae << " +- " << r.best_val_iwae_se
        << "\nwrote " << dir.string() << '\n';
    return kExitOk;
  });
}

int cmd_eval(const EvalArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const LoadedCheckpoint ck = load_checkpoint(args.checkpoint);
    TrainConfig cfg;
    const Dataset ds = eval_dataset(config_of(ck), args.data_config, cfg);
    if (ds.d_x != ck.model.spec().d_x)
      throw DataError("dataset has d_x = " + std::to_string(ds.d_x) + " but the model expects " +
                      std::to_string(ck.model.spec().d_x));
    const auto rows = pick_split(cfg, ds, args.split);
    if (rows.empty()) throw DataError("the " + args.split + " split is empty");
    Rng rng = Rng::derive(args.seed, "eval.iwae");
    const IwaeSummary s = iwae_dataset(ck.model, ds, rows, args.K, args.batch_size, rng);

    char line[160];
    std::snprintf(line, sizeof line, "%s,%zu,%zu,%.17g,%.17g", args.split.c_str(), args.K, rows.size(), s.mean,
                  s.se);
    fs::path csv = args.checkpoint;
    csv.replace_filename("eval.csv");
    const bool fresh = !fs::exists(csv);
    std::ofstream f(csv, std::ios::app);
    if (fresh) f << "split,K,n,iwae,se\n";
    f << line << '\n';
    out << args.split << " IWAE (K=" << args.K << ", n=" << rows.size() << "): " << s.mean << " +- " << s.se
        << '\n';
    return kExitOk;
  });
}

int cmd_viz_posterior(const VizArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&]() -> int {
    const LoadedCheckpoint ck = load_checkpoint(args.checkpoint);
    const RecursiveMixtureModel& model = ck.model;
    if (model.spec().d_z != 2) {
      err << "error: posterior visualization needs d_z = 2, model has d_z = " << model.spec().d_z << '\n';
      return kExitLatentDim;
    }
    TrainConfig cfg;
    const Dataset ds = eval_dataset(config_of(ck), args.data_config, cfg);
    const auto rows = pick_split(cfg, ds, args.split);
    if (args.example_index >= rows.size())
      throw DataError("example index " + std::to_string(args.example_index) + " is outside the " + args.split +
                      " split (" + std::to_string(rows.size()) + " examples)");
    const std::size_t row = rows[args.example_index];
    const GridSpec spec{-args.bound, args.bound, args.resolution};

    NoGradGuard no_grad;
    const Tensor x = ds.rows(std::span<const std::size_t>(&row, 1));
    const MixturePosterior q = model.encode_mixture(x, model.M());
    const MixtureDensity mix = mixture_row(q, 0);
    const PosteriorGrid truth = true_posterior_grid(model.decoder(), ds.row(row), spec);

    const std::string prefix = args.out_prefix.string();
    if (args.out_prefix.has_parent_path()) fs::create_directories(args.out_prefix.parent_path());
    write_grid_csv(prefix + "_true.csv", truth);
    write_grid_csv(prefix + "_mixture.csv", density_grid(mix, spec));
    for (std::size_t m = 0; m < q.size(); ++m) {
      const MixtureDensity c = gaussian_row(q.components()[m], 0);
      write_grid_csv(prefix + "_component_" + std::to_string(m) + ".csv", density_grid(c, spec));
      out << "component " << m << ": alpha " << std::exp(mix.log_weights[m]) << "  mu (" << c.mu[0][0] << ", "
          << c.mu[0][1] << ")\n";
    }
    out << "grid KL(Q || p(z|x)) " << grid_kl(mix, truth) << '\n';
    return kExitOk;
  });
}

int cmd_bench_inference(const BenchArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const LoadedCheckpoint ck = load_checkpoint(args.checkpoint);
    TrainConfig cfg;
    const Dataset ds = eval_dataset(config_of(ck), args.data_config, cfg);
    if (ds.splits.test.empty()) throw DataError("the test split is empty");
    const double ms = time_inference(ck.model, ds, ds.splits.test, args.batch_size, args.repeats);
    out << "M=" << ck.model.M() << "  batch " << args.batch_size << "  repeats " << args.repeats << ": " << ms
        << " ms/batch\n";
    return kExitOk;
  });
}

}  // namespace remix
