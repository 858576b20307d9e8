#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include "doctest.h"
#include "remix/data.hpp"
#include "remix/errors.hpp"
#include "remix/rng.hpp"

using namespace remix;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("remix_test_data_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_bytes(const fs::path& p, const std::string& s) {
  std::ofstream(p, std::ios::binary) << s;
}

}  // namespace

TEST_CASE("IDX images and labels round-trip") {
  IdxImages img;
  img.count = 3;
  img.rows = 2;
  img.cols = 2;
  img.pixels = {0, 255, 128, 127, 10, 200, 255, 0, 1, 2, 3, 4};
  const fs::path dir = scratch_dir("roundtrip");
  write_bytes(dir / "img.idx", encode_idx_images(img));
  write_bytes(dir / "lab.idx", encode_idx_labels({7, 1, 9}));

  const IdxImages back = read_idx_images(dir / "img.idx");
  CHECK(back.count == 3);
  CHECK(back.rows == 2);
  CHECK(back.pixels == img.pixels);
  CHECK(read_idx_labels(dir / "lab.idx") == std::vector<std::uint8_t>{7, 1, 9});

  const Dataset ds = load_idx(dir / "img.idx", dir / "lab.idx", Binarize::kThreshold, 0);
  CHECK(ds.n == 3);
  CHECK(ds.d_x == 4);
  CHECK(ds.domain == Domain::kBinary);
  // 128/255 > 0.5, 127/255 < 0.5.
  CHECK(std::vector<double>(ds.row(0).begin(), ds.row(0).end()) == std::vector<double>{0, 1, 1, 0});
  CHECK(ds.labels.size() == 3);

  const Dataset raw = load_idx(dir / "img.idx", std::nullopt, Binarize::kNone, 0);
  CHECK(raw.domain == Domain::kReal);
  CHECK(raw.row(0)[2] == doctest::Approx(128.0 / 255.0));
}

TEST_CASE("stochastic binarization is seeded") {
  IdxImages img{2, 4, 4, std::vector<std::uint8_t>(32, 128)};
  const fs::path dir = scratch_dir("stoch");
  write_bytes(dir / "img.idx", encode_idx_images(img));
  const Dataset a = load_idx(dir / "img.idx", std::nullopt, Binarize::kStochastic, 5);
  const Dataset b = load_idx(dir / "img.idx", std::nullopt, Binarize::kStochastic, 5);
  CHECK(a.values == b.values);
  CHECK(a.domain == Domain::kBinary);
}

TEST_CASE("malformed IDX input raises DataError") {
  const fs::path dir = scratch_dir("bad");
  CHECK_THROWS_AS(read_idx_images(dir / "missing.idx"), DataError);
  CHECK_THROWS_AS(load_idx(dir / "missing.idx", std::nullopt, Binarize::kNone, 0), DataError);

  write_bytes(dir / "magic.idx", std::string("\x00\x00\x09\x03", 4));
  CHECK_THROWS_AS(read_idx_images(dir / "magic.idx"), DataError);

  IdxImages img{2, 2, 2, {1, 2, 3, 4, 5, 6, 7, 8}};
  std::string enc = encode_idx_images(img);
  write_bytes(dir / "trunc.idx", enc.substr(0, enc.size() - 3));
  CHECK_THROWS_AS(read_idx_images(dir / "trunc.idx"), DataError);

  write_bytes(dir / "img.idx", enc);
  write_bytes(dir / "lab.idx", encode_idx_labels({1, 2, 3}));
  CHECK_THROWS_AS(load_idx(dir / "img.idx", dir / "lab.idx", Binarize::kNone, 0), DataError);
}

TEST_CASE("dataset validation") {
  Dataset ds;
  ds.n = 2;
  ds.d_x = 2;
  ds.values = {0, 1, 1};
  CHECK_THROWS_AS(ds.validate(), DataError);
  ds.values = {0, 1, 1, 0.5};
  ds.domain = Domain::kBinary;
  CHECK_THROWS_AS(ds.validate(), DataError);
  ds.domain = Domain::kReal;
  ds.splits.train = {0, 1};
  ds.splits.test = {1};
  CHECK_THROWS_AS(ds.validate(), DataError);
  ds.splits.test = {};
  CHECK_NOTHROW(ds.validate());
}

TEST_CASE("bimodal toy: data is invariant under z -> -z") {
  BimodalToyOptions opt;
  opt.noise_std = 1e-12;
  const Dataset ds = gen_bimodal_toy(200, 3, opt);
  REQUIRE(ds.generator);
  const GeneratorInfo& g = *ds.generator;
  CHECK(g.W.size() == opt.d_x * opt.d_z);
  // Columns are orthogonal with norm sqrt(d_x).
  for (std::size_t a = 0; a < opt.d_z; ++a)
    for (std::size_t b = 0; b < opt.d_z; ++b) {
      double dot = 0.0;
      for (std::size_t i = 0; i < opt.d_x; ++i) dot += g.W[i * opt.d_z + a] * g.W[i * opt.d_z + b];
      CHECK(dot == doctest::Approx(a == b ? double(opt.d_x) : 0.0).epsilon(1e-9));
    }
  // Noise-free rows equal |W z*| + b for some z* in {-c, c}^2, and the
  // mirrored z* gives the same row.
  for (std::size_t r = 0; r < 20; ++r) {
    bool matched = false;
    for (int s = 0; s < 4; ++s) {
      const double z[2] = {(s & 1) ? g.c : -g.c, (s & 2) ? g.c : -g.c};
      double err = 0.0, err_mirror = 0.0;
      for (std::size_t i = 0; i < opt.d_x; ++i) {
        const double wz = g.W[i * 2] * z[0] + g.W[i * 2 + 1] * z[1];
        err = std::max(err, std::abs(ds.row(r)[i] - (std::abs(wz) + g.b[i])));
        err_mirror = std::max(err_mirror, std::abs(ds.row(r)[i] - (std::abs(-wz) + g.b[i])));
      }
      if (err < 1e-9) {
        matched = true;
        CHECK(err_mirror < 1e-9);
      }
    }
    CHECK(matched);
  }
}

TEST_CASE("bimodal toy: parameters depend on the seed, not on n") {
  const Dataset a = gen_bimodal_toy(10, 7), b = gen_bimodal_toy(50, 7), c = gen_bimodal_toy(10, 8);
  CHECK(a.generator->W == b.generator->W);
  CHECK(a.generator->b == b.generator->b);
  CHECK(a.generator->W != c.generator->W);
  CHECK_THROWS_AS(gen_bimodal_toy(10, 1, BimodalToyOptions{8, 2, -1.0, 0.1}), ConfigError);
}

TEST_CASE("linear-Gaussian closed forms match a direct computation") {
  // d_x = 1, d_z = 1: x ~ N(b, w^2 + s2), z|x ~ N(w(x-b)/(w^2+s2), s2/(w^2+s2)).
  const double w = 1.5, b = 0.3, s2 = 0.4;
  const Dataset ds = gen_linear_gaussian(5, {w}, {b}, s2, 1);
  const GeneratorInfo& g = *ds.generator;
  for (std::size_t i = 0; i < 5; ++i) {
    const double x = ds.row(i)[0];
    const double v = w * w + s2;
    const double lp = -0.5 * (std::log(2 * M_PI * v) + (x - b) * (x - b) / v);
    CHECK(linear_gaussian_log_marginal(g, ds.row(i)) == doctest::Approx(lp).epsilon(1e-12));
    const auto post = linear_gaussian_posterior(g, ds.row(i));
    CHECK(post.mean[0] == doctest::Approx(w * (x - b) / v).epsilon(1e-12));
    CHECK(post.covariance[0] == doctest::Approx(s2 / v).epsilon(1e-12));
  }
  CHECK_THROWS_AS(gen_linear_gaussian(5, {1.0, 2.0, 3.0}, {0.0, 0.0}, 1.0, 1), ConfigError);
  CHECK_THROWS_AS(gen_linear_gaussian(5, {1.0}, {0.0}, 0.0, 1), ConfigError);
}

TEST_CASE("linear-Gaussian sample moments") {
  const Dataset ds = gen_linear_gaussian(20000, {2.0}, {1.0}, 0.5, 4);
  double m = 0.0, v = 0.0;
  for (double x : ds.values) m += x;
  m /= ds.n;
  for (double x : ds.values) v += (x - m) * (x - m);
  v /= ds.n - 1;
  CHECK(std::abs(m - 1.0) < 4 * std::sqrt(4.5 / ds.n));
  CHECK(v == doctest::Approx(4.5).epsilon(0.05));
}

TEST_CASE("split plan partitions the pool and batches deterministically") {
  Dataset ds = gen_bimodal_toy(103, 1);
  ds.splits.train.resize(90);
  std::iota(ds.splits.train.begin(), ds.splits.train.end(), 0);
  ds.splits.test.resize(13);
  std::iota(ds.splits.test.begin(), ds.splits.test.end(), 90);
  const SplitPlan plan = split_and_batch(ds, 0.2, 16, 9);
  CHECK(plan.val().size() == 18);
  CHECK(plan.train().size() == 72);
  CHECK(plan.test() == ds.splits.test);
  std::set<std::size_t> all(plan.train().begin(), plan.train().end());
  all.insert(plan.val().begin(), plan.val().end());
  CHECK(all.size() == 90);
  CHECK(*all.rbegin() == 89);

  const auto e0 = plan.epoch_batches(0), e0b = plan.epoch_batches(0), e1 = plan.epoch_batches(1);
  CHECK(e0 == e0b);
  CHECK(e0 != e1);
  CHECK(e0.size() == 5);
  CHECK(e0.back().size() == 72 - 4 * 16);
  std::multiset<std::size_t> seen;
  for (const auto& batch : e0) seen.insert(batch.begin(), batch.end());
  CHECK(seen == std::multiset<std::size_t>(plan.train().begin(), plan.train().end()));

  CHECK(split_and_batch(ds, 0.2, 16, 9).val() == plan.val());
  CHECK_THROWS_AS(split_and_batch(ds, 1.0, 16, 9), ConfigError);
  CHECK_THROWS_AS(split_and_batch(ds, 0.2, 0, 9), ConfigError);
}
