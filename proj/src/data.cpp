#include "remix/data.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <limits>
#include <numeric>

#include "remix/errors.hpp"
#include "remix/rng.hpp"

namespace remix {

namespace fs = std::filesystem;

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;
constexpr std::size_t kMaxIdxElements = std::size_t{1} << 34;
}  // namespace

Tensor Dataset::rows(std::span<const std::size_t> idx) const {
  std::vector<double> out;
  out.reserve(idx.size() * d_x);
  for (std::size_t i : idx) {
    if (i >= n) throw DataError("row index " + std::to_string(i) + " out of range");
    auto r = row(i);
    out.insert(out.end(), r.begin(), r.end());
  }
  return Tensor({idx.size(), d_x}, std::move(out));
}

void Dataset::validate() const {
  if (values.size() != n * d_x) throw DataError("dataset values do not match n x d_x");
  if (domain == Domain::kBinary)
    for (double v : values)
      if (v != 0.0 && v != 1.0) throw DataError("binary dataset holds a value outside {0, 1}");
  std::vector<char> used(n, 0);
  for (const auto* split : {&splits.train, &splits.test})
    for (std::size_t i : *split) {
      if (i >= n) throw DataError("split index out of range");
      if (used[i]++) throw DataError("splits overlap at index " + std::to_string(i));
    }
}

// ---------------------------------------------------------------------------
// Generators

Dataset gen_bimodal_toy(std::size_t n, std::uint64_t seed, const BimodalToyOptions& opt) {
  if (opt.d_x < 1 || opt.d_z < 1 || !(opt.c > 0.0) || !(opt.noise_std > 0.0))
    throw ConfigError("bimodal toy needs d_x, d_z >= 1 and positive c, noise_std");
  GeneratorInfo g{GeneratorInfo::Kind::kBimodalToy, opt.d_z, {}, {}, opt.noise_std * opt.noise_std,
                  opt.c};
  Rng prng = Rng::derive(seed, "toy.params");
  g.W.resize(opt.d_x * opt.d_z);
  for (double& w : g.W) w = prng.normal();
  // Orthogonal columns of norm sqrt(d_x): every x then has the same
  // posterior shape, so a single KL scale fits the whole dataset.
  for (std::size_t j = 0; j < opt.d_z && j < opt.d_x; ++j) {
    for (std::size_t k = 0; k < j; ++k) {
      double dot = 0.0;
      for (std::size_t r = 0; r < opt.d_x; ++r) dot += g.W[r * opt.d_z + j] * g.W[r * opt.d_z + k];
      for (std::size_t r = 0; r < opt.d_x; ++r) g.W[r * opt.d_z + j] -= dot * g.W[r * opt.d_z + k];
    }
    double norm = 0.0;
    for (std::size_t r = 0; r < opt.d_x; ++r) norm += g.W[r * opt.d_z + j] * g.W[r * opt.d_z + j];
    norm = std::sqrt(norm);
    for (std::size_t r = 0; r < opt.d_x; ++r) g.W[r * opt.d_z + j] /= norm;
  }
  for (double& w : g.W) w *= std::sqrt(static_cast<double>(opt.d_x));
  g.b.resize(opt.d_x);
  for (double& v : g.b) v = 0.5 * prng.normal();

  Dataset ds;
  ds.n = n;
  ds.d_x = opt.d_x;
  ds.values.resize(n * opt.d_x);
  Rng rng = Rng::derive(seed, "toy.samples");
  std::vector<double> z(opt.d_z);
  for (std::size_t i = 0; i < n; ++i) {
    for (double& v : z) v = rng.uniform() < 0.5 ? -opt.c : opt.c;
    for (std::size_t r = 0; r < opt.d_x; ++r) {
      double a = 0.0;
      for (std::size_t j = 0; j < opt.d_z; ++j) a += g.W[r * opt.d_z + j] * z[j];
      ds.values[i * opt.d_x + r] = std::abs(a) + g.b[r] + opt.noise_std * rng.normal();
    }
  }
  ds.splits.train.resize(n);
  std::iota(ds.splits.train.begin(), ds.splits.train.end(), std::size_t{0});
  ds.generator = std::move(g);
  return ds;
}

Dataset gen_linear_gaussian(std::size_t n, const std::vector<double>& W,
                            const std::vector<double>& b, double noise_var, std::uint64_t seed) {
  const std::size_t d_x = b.size();
  if (d_x == 0 || W.size() % d_x != 0 || W.empty())
    throw ConfigError("linear-Gaussian generator: W must be d_x x d_z with d_x = len(b)");
  if (!(noise_var > 0.0)) throw ConfigError("linear-Gaussian generator: noise_var must be > 0");
  const std::size_t d_z = W.size() / d_x;
  Dataset ds;
  ds.n = n;
  ds.d_x = d_x;
  ds.values.resize(n * d_x);
  Rng rng = Rng::derive(seed, "linear_gaussian");
  const double sd = std::sqrt(noise_var);
  std::vector<double> z(d_z);
  for (std::size_t i = 0; i < n; ++i) {
    for (double& v : z) v = rng.normal();
    for (std::size_t r = 0; r < d_x; ++r) {
      double a = b[r];
      for (std::size_t j = 0; j < d_z; ++j) a += W[r * d_z + j] * z[j];
      ds.values[i * d_x + r] = a + sd * rng.normal();
    }
  }
  ds.splits.train.resize(n);
  std::iota(ds.splits.train.begin(), ds.splits.train.end(), std::size_t{0});
  ds.generator = GeneratorInfo{GeneratorInfo::Kind::kLinearGaussian, d_z, W, b, noise_var, 0.0};
  return ds;
}

namespace {
Eigen::MatrixXd as_matrix(const GeneratorInfo& g) {
  const std::size_t d_x = g.b.size();
  Eigen::MatrixXd W(d_x, g.d_z);
  for (std::size_t r = 0; r < d_x; ++r)
    for (std::size_t j = 0; j < g.d_z; ++j) W(r, j) = g.W[r * g.d_z + j];
  return W;
}
}  // namespace

double linear_gaussian_log_marginal(const GeneratorInfo& g, std::span<const double> x) {
  const auto d_x = static_cast<Eigen::Index>(g.b.size());
  if (x.size() != g.b.size()) throw ShapeError("log marginal: x has the wrong dimension");
  const Eigen::MatrixXd W = as_matrix(g);
  Eigen::MatrixXd cov = W * W.transpose();
  cov.diagonal().array() += g.noise_var;
  Eigen::VectorXd r(d_x);
  for (Eigen::Index i = 0; i < d_x; ++i) r(i) = x[i] - g.b[i];
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  const Eigen::MatrixXd L = llt.matrixL();
  const double logdet = 2.0 * L.diagonal().array().log().sum();
  const double quad = r.dot(llt.solve(r));
  return -0.5 * (static_cast<double>(d_x) * kLog2Pi + logdet + quad);
}

GaussianPosterior linear_gaussian_posterior(const GeneratorInfo& g, std::span<const double> x) {
  if (x.size() != g.b.size()) throw ShapeError("posterior: x has the wrong dimension");
  const Eigen::MatrixXd W = as_matrix(g);
  const auto d_z = static_cast<Eigen::Index>(g.d_z);
  Eigen::MatrixXd precision = W.transpose() * W / g.noise_var;
  precision.diagonal().array() += 1.0;
  const Eigen::MatrixXd cov = precision.inverse();
  Eigen::VectorXd r(W.rows());
  for (Eigen::Index i = 0; i < W.rows(); ++i) r(i) = x[i] - g.b[i];
  const Eigen::VectorXd mean = cov * W.transpose() * r / g.noise_var;
  GaussianPosterior out;
  out.mean.assign(mean.data(), mean.data() + d_z);
  out.covariance.resize(g.d_z * g.d_z);
  for (Eigen::Index i = 0; i < d_z; ++i)
    for (Eigen::Index j = 0; j < d_z; ++j) out.covariance[i * d_z + j] = cov(i, j);
  return out;
}

// ---------------------------------------------------------------------------
// IDX

namespace {

std::string read_all(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

std::uint32_t be32(const std::string& buf, std::size_t at) {
  return (std::uint32_t(std::uint8_t(buf[at])) << 24) | (std::uint32_t(std::uint8_t(buf[at + 1])) << 16) |
         (std::uint32_t(std::uint8_t(buf[at + 2])) << 8) | std::uint32_t(std::uint8_t(buf[at + 3]));
}

void put_be32(std::string& buf, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) buf.push_back(static_cast<char>((v >> s) & 0xFF));
}

// Header check shared by both IDX kinds; returns the dims.
std::vector<std::size_t> parse_header(const std::string& buf, std::uint32_t magic,
                                      const fs::path& path) {
  if (buf.size() < 4) throw DataError(path.string() + ": truncated IDX header");
  const std::uint32_t got = be32(buf, 0);
  if (got != magic) {
    char hex[16];
    std::snprintf(hex, sizeof hex, "0x%08X", got);
    throw DataError(path.string() + ": bad IDX magic " + hex);
  }
  const std::size_t ndims = magic & 0xFF;
  if (buf.size() < 4 + 4 * ndims) throw DataError(path.string() + ": truncated IDX header");
  std::vector<std::size_t> dims(ndims);
  std::size_t total = 1;
  for (std::size_t d = 0; d < ndims; ++d) {
    dims[d] = be32(buf, 4 + 4 * d);
    if (dims[d] != 0 && total > kMaxIdxElements / dims[d])
      throw DataError(path.string() + ": IDX dimensions overflow");
    total *= dims[d];
  }
  if (buf.size() - (4 + 4 * ndims) < total)
    throw DataError(path.string() + ": truncated IDX payload (" + std::to_string(total) +
                    " bytes expected)");
  return dims;
}

}  // namespace

IdxImages read_idx_images(const fs::path& path) {
  const std::string buf = read_all(path);
  const auto dims = parse_header(buf, kIdxImagesMagic, path);
  IdxImages img{dims[0], dims[1], dims[2], {}};
  const std::size_t start = 16;
  img.pixels.assign(buf.begin() + start, buf.begin() + static_cast<std::ptrdiff_t>(start + img.count * img.rows * img.cols));
  return img;
}

std::vector<std::uint8_t> read_idx_labels(const fs::path& path) {
  const std::string buf = read_all(path);
  const auto dims = parse_header(buf, kIdxLabelsMagic, path);
  return std::vector<std::uint8_t>(buf.begin() + 8, buf.begin() + 8 + static_cast<std::ptrdiff_t>(dims[0]));
}

std::string encode_idx_images(const IdxImages& images) {
  std::string out;
  put_be32(out, kIdxImagesMagic);
  put_be32(out, static_cast<std::uint32_t>(images.count));
  put_be32(out, static_cast<std::uint32_t>(images.rows));
  put_be32(out, static_cast<std::uint32_t>(images.cols));
  out.append(images.pixels.begin(), images.pixels.end());
  return out;
}

std::string encode_idx_labels(const std::vector<std::uint8_t>& labels) {
  std::string out;
  put_be32(out, kIdxLabelsMagic);
  put_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.append(labels.begin(), labels.end());
  return out;
}

Dataset load_idx(const fs::path& images, const std::optional<fs::path>& labels, Binarize binarize,
                 std::uint64_t seed) {
  if (!fs::exists(images)) throw DataError("dataset file not found: " + images.string());
  IdxImages img = read_idx_images(images);
  Dataset ds;
  ds.n = img.count;
  ds.d_x = img.rows * img.cols;
  ds.values.resize(img.pixels.size());
  Rng rng = Rng::derive(seed, "binarize");
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    const double p = img.pixels[i] / 255.0;
    switch (binarize) {
      case Binarize::kNone: ds.values[i] = p; break;
      case Binarize::kThreshold: ds.values[i] = p > 0.5 ? 1.0 : 0.0; break;
      case Binarize::kStochastic: ds.values[i] = rng.uniform() < p ? 1.0 : 0.0; break;
    }
  }
  ds.domain = binarize == Binarize::kNone ? Domain::kReal : Domain::kBinary;
  if (labels) {
    if (!fs::exists(*labels)) throw DataError("label file not found: " + labels->string());
    ds.labels = read_idx_labels(*labels);
    if (ds.labels.size() != ds.n)
      throw DataError(labels->string() + ": label count does not match image count");
  }
  ds.splits.train.resize(ds.n);
  std::iota(ds.splits.train.begin(), ds.splits.train.end(), std::size_t{0});
  return ds;
}

// ---------------------------------------------------------------------------
// Splits

SplitPlan::SplitPlan(std::vector<std::size_t> train, std::vector<std::size_t> val,
                     std::vector<std::size_t> test, std::size_t batch_size, std::uint64_t seed)
    : train_(std::move(train)),
      val_(std::move(val)),
      test_(std::move(test)),
      batch_size_(batch_size),
      seed_(seed) {
  if (batch_size_ < 1) throw ConfigError("batch_size must be >= 1");
}

std::vector<std::vector<std::size_t>> SplitPlan::epoch_batches(std::size_t epoch) const {
  std::vector<std::size_t> order = train_;
  Rng rng = Rng::derive(seed_, "epoch.shuffle", epoch);
  std::shuffle(order.begin(), order.end(), rng.engine());
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < order.size(); i += batch_size_)
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + batch_size_)));
  return out;
}

SplitPlan split_and_batch(const Dataset& ds, double val_fraction, std::size_t batch_size,
                          std::uint64_t seed) {
  if (!(val_fraction >= 0.0 && val_fraction < 1.0))
    throw ConfigError("val_fraction must be in [0, 1)");
  std::vector<std::size_t> pool = ds.splits.train;
  Rng rng = Rng::derive(seed, "split");
  std::shuffle(pool.begin(), pool.end(), rng.engine());
  const auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(pool.size())));
  std::vector<std::size_t> val(pool.end() - static_cast<std::ptrdiff_t>(n_val), pool.end());
  pool.resize(pool.size() - n_val);
  return SplitPlan(std::move(pool), std::move(val), ds.splits.test, batch_size, seed);
}

}  // namespace remix
