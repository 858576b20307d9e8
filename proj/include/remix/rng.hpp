#ifndef REMIX_RNG_HPP_
#define REMIX_RNG_HPP_

#include <cstdint>
#include <random>
#include <string_view>

#include "remix/tensor.hpp"

namespace remix {

/// Seeded 64-bit Mersenne Twister with the draws this project needs.
/// Identical seeds give identical streams on one platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}
  explicit Rng(std::seed_seq& seq) : engine_(seq) {}

  /// Independent child stream keyed by (seed, tag, index); used so that data
  /// shuffling, initialization and training noise never share a stream.
  static Rng derive(std::uint64_t seed, std::string_view tag, std::uint64_t index = 0);

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform_(engine_); }
  std::uint64_t next_u64() { return engine_(); }

  Tensor randn(Shape shape);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace remix

#endif  // REMIX_RNG_HPP_
