#include "remix/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>

#include "remix/errors.hpp"
#include "remix/checkpoint.hpp"

namespace remix {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

double logsumexp(std::span<const double> v) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double a : v) mx = std::max(mx, a);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double a : v) s += std::exp(a - mx);
  return mx + std::log(s);
}

double std_normal_log_density(std::span<const double> z) {
  double s = 0.0;
  for (double v : z) s += v * v;
  return -0.5 * (s + static_cast<double>(z.size()) * kLog2Pi);
}

// Evaluates log p(x|z) for rows of z against one repeated x row per z row.
// x_rows[r] selects which example row of x to pair with z row r.
std::vector<double> decoder_log_lik(const Decoder& decoder, const Tensor& x,
                                    const std::vector<std::size_t>& x_rows,
                                    const std::vector<double>& z, std::size_t d_z) {
  const std::size_t d_x = x.shape()[1];
  const std::size_t n = x_rows.size();
  constexpr std::size_t kChunk = 4096;
  std::vector<double> out(n);
  for (std::size_t start = 0; start < n; start += kChunk) {
    const std::size_t len = std::min(kChunk, n - start);
    std::vector<double> xs(len * d_x), zs(z.begin() + static_cast<std::ptrdiff_t>(start * d_z),
                                          z.begin() + static_cast<std::ptrdiff_t>((start + len) * d_z));
    for (std::size_t r = 0; r < len; ++r) {
      const auto src = x.data().subspan(x_rows[start + r] * d_x, d_x);
      std::copy(src.begin(), src.end(), xs.begin() + static_cast<std::ptrdiff_t>(r * d_x));
    }
    Tensor ll = decoder.log_lik(Tensor({len, d_x}, std::move(xs)), Tensor({len, d_z}, std::move(zs)));
    std::copy(ll.data().begin(), ll.data().end(), out.begin() + static_cast<std::ptrdiff_t>(start));
  }
  return out;
}

}  // namespace

double MixtureDensity::log_density(std::span<const double> z) const {
  std::vector<double> terms(log_weights.size());
  for (std::size_t m = 0; m < terms.size(); ++m)
    terms[m] = log_weights[m] + diag_log_density(mu[m], logvar[m], z);
  return logsumexp(terms);
}

MixtureDensity mixture_row(const MixturePosterior& q, std::size_t row) {
  MixtureDensity d;
  const std::size_t K = q.size(), dz = q.dim();
  for (std::size_t m = 0; m < K; ++m) {
    d.log_weights.push_back(q.log_alphas().at(row, m));
    const auto& c = q.components()[m];
    d.mu.emplace_back(c.mu().data().begin() + static_cast<std::ptrdiff_t>(row * dz),
                      c.mu().data().begin() + static_cast<std::ptrdiff_t>((row + 1) * dz));
    d.logvar.emplace_back(c.logvar().data().begin() + static_cast<std::ptrdiff_t>(row * dz),
                          c.logvar().data().begin() + static_cast<std::ptrdiff_t>((row + 1) * dz));
  }
  return d;
}

MixtureDensity gaussian_row(const DiagGaussian& q, std::size_t row) {
  return mixture_row(MixturePosterior({q}, Tensor::zeros({q.batch(), 1})), row);
}

std::vector<std::size_t> stratified_counts(std::span<const double> alphas, std::size_t K) {
  std::vector<std::size_t> counts(alphas.size());
  std::vector<std::pair<double, std::size_t>> rem(alphas.size());
  std::size_t used = 0;
  for (std::size_t m = 0; m < alphas.size(); ++m) {
    const double target = alphas[m] * static_cast<double>(K);
    counts[m] = static_cast<std::size_t>(std::floor(target));
    used += counts[m];
    rem[m] = {target - static_cast<double>(counts[m]), m};
  }
  // Largest remainder first; ties go to the lower component index.
  std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; used < K; i = (i + 1) % rem.size(), ++used) ++counts[rem[i].second];
  while (used > K) {  // only reachable if alphas sum slightly above 1
    auto it = std::max_element(counts.begin(), counts.end());
    --*it;
    --used;
  }
  return counts;
}

Tensor iwae(const MixturePosterior& q, const Decoder& decoder, const Tensor& x, std::size_t K,
            Rng& rng) {
  if (K < 1) throw ConfigError("IWAE needs K >= 1");
  NoGradGuard no_grad;
  const std::size_t B = q.batch(), dz = q.dim(), nc = q.size();
  std::vector<double> z(B * K * dz), log_w(B * K);
  std::vector<std::size_t> x_rows(B * K);
  std::vector<double> alphas(nc);
  for (std::size_t i = 0; i < B; ++i) {
    const MixtureDensity dens = mixture_row(q, i);
    for (std::size_t m = 0; m < nc; ++m) alphas[m] = std::exp(dens.log_weights[m]);
    const auto counts = stratified_counts(alphas, K);
    std::size_t k = 0;
    for (std::size_t m = 0; m < nc; ++m)
      for (std::size_t c = 0; c < counts[m]; ++c, ++k) {
        double* zr = z.data() + (i * K + k) * dz;
        for (std::size_t d = 0; d < dz; ++d)
          zr[d] = dens.mu[m][d] + std::exp(0.5 * dens.logvar[m][d]) * rng.normal();
        const std::span<const double> zs(zr, dz);
        log_w[i * K + k] = std_normal_log_density(zs) - dens.log_density(zs);
        x_rows[i * K + k] = i;
      }
  }
  const auto ll = decoder_log_lik(decoder, x, x_rows, z, dz);
  std::vector<double> out(B);
  const double log_k = std::log(static_cast<double>(K));
  for (std::size_t i = 0; i < B; ++i) {
    for (std::size_t k = 0; k < K; ++k) log_w[i * K + k] += ll[i * K + k];
    out[i] = logsumexp(std::span<const double>(log_w.data() + i * K, K)) - log_k;
  }
  return Tensor({B}, std::move(out));
}

Tensor iwae(const DiagGaussian& q, const Decoder& decoder, const Tensor& x, std::size_t K, Rng& rng) {
  return iwae(MixturePosterior({q}, Tensor::zeros({q.batch(), 1})), decoder, x, K, rng);
}

IwaeSummary iwae_dataset(const RecursiveMixtureModel& model, const Dataset& ds,
                         std::span<const std::size_t> rows, std::size_t K, std::size_t batch_size,
                         Rng& rng) {
  if (rows.empty()) throw DataError("IWAE requested on an empty set of examples");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  NoGradGuard no_grad;
  IwaeSummary s;
  s.per_example.reserve(rows.size());
  for (std::size_t start = 0; start < rows.size(); start += batch_size) {
    const auto idx = rows.subspan(start, std::min(batch_size, rows.size() - start));
    const Tensor x = ds.rows(idx);
    const Tensor v = iwae(model.encode_mixture(x, model.M()), model.decoder(), x, K, rng);
    s.per_example.insert(s.per_example.end(), v.data().begin(), v.data().end());
  }
  const double n = static_cast<double>(s.per_example.size());
  s.mean = std::accumulate(s.per_example.begin(), s.per_example.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : s.per_example) ss += (v - s.mean) * (v - s.mean);
  s.se = s.per_example.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
  return s;
}

double PosteriorGrid::mass() const {
  double s = 0.0;
  for (double v : log_density) s += std::exp(v);
  return s * cell_area();
}

namespace {

void normalize(PosteriorGrid& g) {
  const double shift = logsumexp(g.log_density) + std::log(g.cell_area());
  for (double& v : g.log_density) v -= shift;
}

PosteriorGrid empty_grid(const GridSpec& spec) {
  if (spec.resolution < 1 || !(spec.hi > spec.lo)) throw ConfigError("grid needs hi > lo and resolution >= 1");
  PosteriorGrid g;
  g.lo = spec.lo;
  g.hi = spec.hi;
  g.resolution = spec.resolution;
  g.log_density.resize(spec.resolution * spec.resolution);
  return g;
}

}  // namespace

PosteriorGrid true_posterior_grid(const Decoder& decoder, std::span<const double> x,
                                  const GridSpec& spec) {
  if (decoder.spec().input_dim != 2)
    throw ShapeError("posterior grid needs d_z = 2, model has d_z = " +
                     std::to_string(decoder.spec().input_dim));
  if (x.size() != decoder.spec().output_dim)
    throw ShapeError("posterior grid: x has " + std::to_string(x.size()) + " entries, decoder expects " +
                     std::to_string(decoder.spec().output_dim));
  NoGradGuard no_grad;
  PosteriorGrid g = empty_grid(spec);
  const std::size_t R = g.resolution, n = R * R;
  std::vector<double> z(n * 2);
  for (std::size_t i = 0; i < R; ++i)
    for (std::size_t j = 0; j < R; ++j) {
      z[(i * R + j) * 2] = g.coord(i);
      z[(i * R + j) * 2 + 1] = g.coord(j);
    }
  const Tensor xt({1, x.size()}, std::vector<double>(x.begin(), x.end()));
  const auto ll = decoder_log_lik(decoder, xt, std::vector<std::size_t>(n, 0), z, 2);
  for (std::size_t r = 0; r < n; ++r)
    g.log_density[r] = ll[r] + std_normal_log_density(std::span<const double>(z.data() + 2 * r, 2));
  normalize(g);
  return g;
}

PosteriorGrid density_grid(const MixtureDensity& q, const GridSpec& spec) {
  if (q.mu.empty() || q.mu.front().size() != 2) throw ShapeError("density grid needs d_z = 2");
  PosteriorGrid g = empty_grid(spec);
  const std::size_t R = g.resolution;
  for (std::size_t i = 0; i < R; ++i)
    for (std::size_t j = 0; j < R; ++j) {
      const double z[2] = {g.coord(i), g.coord(j)};
      g.log_density[i * R + j] = q.log_density(z);
    }
  normalize(g);
  return g;
}

double grid_kl(const MixtureDensity& q, const PosteriorGrid& grid) {
  if (q.mu.empty() || q.mu.front().size() != 2) throw ShapeError("grid_kl needs d_z = 2");
  const std::size_t R = grid.resolution;
  double kl = 0.0;
  for (std::size_t i = 0; i < R; ++i)
    for (std::size_t j = 0; j < R; ++j) {
      const double z[2] = {grid.coord(i), grid.coord(j)};
      const double lq = q.log_density(z);
      const double p = std::exp(lq);
      if (p > 0.0) kl += p * (lq - grid.log_density[i * R + j]);
    }
  return kl * grid.cell_area();
}

void write_grid_csv(const std::filesystem::path& path, const PosteriorGrid& grid) {
  std::string out = "z1,z2,log_density\n";
  char line[96];
  const std::size_t R = grid.resolution;
  for (std::size_t i = 0; i < R; ++i)
    for (std::size_t j = 0; j < R; ++j) {
      std::snprintf(line, sizeof line, "%.17g,%.17g,%.17g\n", grid.coord(i), grid.coord(j),
                    grid.log_density[i * R + j]);
      out += line;
    }
  write_file_atomic(path, out);
}

double time_inference(const RecursiveMixtureModel& model, const Dataset& ds,
                      std::span<const std::size_t> rows, std::size_t batch_size, std::size_t repeats) {
  if (rows.empty()) throw DataError("inference timing requested on an empty set of examples");
  if (batch_size < 1 || repeats < 1) throw ConfigError("batch_size and repeats must be >= 1");
  NoGradGuard no_grad;
  std::vector<Tensor> batches;
  for (std::size_t start = 0; start < rows.size(); start += batch_size)
    batches.push_back(ds.rows(rows.subspan(start, std::min(batch_size, rows.size() - start))));
  double sink = 0.0;
  const auto t0 = std::chrono::steady_clock::now();
  for (std::size_t r = 0; r < repeats; ++r)
    for (const Tensor& x : batches) {
      const MixturePosterior q = model.encode_mixture(x, model.M());
      sink += q.log_alphas()[0];
    }
  const auto t1 = std::chrono::steady_clock::now();
  if (!std::isfinite(sink)) throw NumericError("non-finite mixing weights during timing");
  const double ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  return ms / static_cast<double>(repeats * batches.size());
}

}  // namespace remix
