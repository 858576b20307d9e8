#include <iostream>

#include "CLI11.hpp"
#include "remix/run.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Recursive mixture encoders for variational autoencoders"};
  app.require_subcommand(1);
  app.set_version_flag("--version", remix::kVersion);

  remix::TrainArgs train;
  auto* t = app.add_subcommand("train", "Train a model from a JSON config");
  t->add_option("--config,-c", train.config, "Config file")->required();
  t->add_option("--set", train.overrides, "Override a config value, key=value (dotted keys allowed)");
  t->add_flag("--quiet,-q", train.quiet, "No per-epoch progress");

  remix::EvalArgs eval;
  std::string eval_data;
  auto* e = app.add_subcommand("eval", "IWAE of a checkpoint on a data split");
  e->add_option("--checkpoint", eval.checkpoint, "Checkpoint stem or manifest")->required();
  e->add_option("--data", eval_data, "Config whose dataset section replaces the run's");
  e->add_option("--k,-K", eval.K, "Importance samples")->capture_default_str();
  e->add_option("--batch-size", eval.batch_size)->capture_default_str();
  e->add_option("--split", eval.split, "test or val")->capture_default_str();
  e->add_option("--seed", eval.seed)->capture_default_str();

  remix::VizArgs viz;
  std::string viz_data;
  auto* v = app.add_subcommand("viz-posterior", "Write true/mixture/component density grids as CSV");
  v->add_option("--checkpoint", viz.checkpoint)->required();
  v->add_option("--index", viz.example_index, "Example index within the split")->capture_default_str();
  v->add_option("--out", viz.out_prefix, "Output path prefix")->required();
  v->add_option("--data", viz_data);
  v->add_option("--split", viz.split)->capture_default_str();
  v->add_option("--bound", viz.bound, "Grid covers [-bound, bound]^2")->capture_default_str();
  v->add_option("--resolution", viz.resolution)->capture_default_str();

  remix::BenchArgs bench;
  std::string bench_data;
  auto* b = app.add_subcommand("bench-inference", "Mean encoder-mixture time per test batch");
  b->add_option("--checkpoint", bench.checkpoint)->required();
  b->add_option("--data", bench_data);
  b->add_option("--batch-size", bench.batch_size)->capture_default_str();
  b->add_option("--repeats", bench.repeats)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  if (!eval_data.empty()) eval.data_config = eval_data;
  if (!viz_data.empty()) viz.data_config = viz_data;
  if (!bench_data.empty()) bench.data_config = bench_data;

  if (t->parsed()) return remix::cmd_train(train, std::cout, std::cerr);
  if (e->parsed()) return remix::cmd_eval(eval, std::cout, std::cerr);
  if (v->parsed()) return remix::cmd_viz_posterior(viz, std::cout, std::cerr);
  return remix::cmd_bench_inference(bench, std::cout, std::cerr);
}
