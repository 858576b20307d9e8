#ifndef REMIX_RUN_HPP_
#define REMIX_RUN_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace remix {

/// Process exit codes shared by every subcommand.
enum ExitCode : int {
  kExitOk = 0,
  kExitConfig = 1,  // bad config, NaN abort, busy output directory
  kExitData = 2,    // missing dataset file, empty split
  kExitCheckpoint = 3,
  kExitLatentDim = 4,  // visualization needs d_z = 2
};

inline constexpr const char* kVersion = "0.1.0";

struct TrainArgs {
  std::filesystem::path config;
  std::vector<std::string> overrides;
  bool quiet = false;
};

struct EvalArgs {
  std::filesystem::path checkpoint;
  std::optional<std::filesystem::path> data_config;  // dataset section to use instead of the run's
  std::size_t K = 100;
  std::size_t batch_size = 128;
  std::string split = "test";  // test | val
  std::uint64_t seed = 0;
};

struct VizArgs {
  std::filesystem::path checkpoint;
  std::size_t example_index = 0;
  std::filesystem::path out_prefix;
  std::optional<std::filesystem::path> data_config;
  std::string split = "test";
  double bound = 5.0;
  std::size_t resolution = 200;
};

struct BenchArgs {
  std::filesystem::path checkpoint;
  std::optional<std::filesystem::path> data_config;
  std::size_t batch_size = 128;
  std::size_t repeats = 5;
};

int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err);
int cmd_eval(const EvalArgs& args, std::ostream& out, std::ostream& err);
int cmd_viz_posterior(const VizArgs& args, std::ostream& out, std::ostream& err);
int cmd_bench_inference(const BenchArgs& args, std::ostream& out, std::ostream& err);

}  // namespace remix

#endif  // REMIX_RUN_HPP_
