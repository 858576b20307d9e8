#include <cmath>
#include <numbers>

#include "doctest.h"
#include "remix/data.hpp"
#include "remix/errors.hpp"
#include "remix/objectives.hpp"
#include "../support/oracles.hpp"

using namespace remix;
using remix::testing::mean_se;

namespace {

ModelSpec spec(std::size_t M) {
  ModelSpec s;
  s.d_x = 3;
  s.d_z = 2;
  s.M = M;
  s.encoder_hidden = {8};
  s.decoder_hidden = {8};
  return s;
}

}  // namespace

TEST_CASE("bounded KL penalty: slope -1 below C, flat at and above") {
  Tensor kl = Tensor::vector({0.0, 499.0, 500.0, 800.0});
  kl.set_requires_grad(true);
  Tensor pen = bounded_kl_penalty(kl, 500.0);
  CHECK(pen[0] == 500.0);
  CHECK(pen[1] == 1.0);
  CHECK(pen[2] == 0.0);
  CHECK(pen[3] == 0.0);
  backward(sum_all(pen));
  CHECK(kl.grad()[0] == -1.0);
  CHECK(kl.grad()[1] == -1.0);
  CHECK(kl.grad()[2] == 0.0);
  CHECK(kl.grad()[3] == 0.0);
  CHECK_THROWS_AS(bounded_kl_penalty(kl, 0.0), ConfigError);
}

TEST_CASE("ELBO never exceeds the exact evidence on the conjugate model") {
  const std::vector<double> W{1.0, 0.5, -0.3, 0.8, 0.2, -1.0};
  const std::vector<double> b{0.1, 0.0, -0.2};
  const Dataset ds = gen_linear_gaussian(1, W, b, 0.5, 3);
  const Decoder dec = make_linear_decoder(W, b, 3, 2, 0.5, 0.01);
  const Tensor x = ds.rows(std::vector<std::size_t>{0});
  // A deliberately imperfect posterior approximation.
  DiagGaussian q(Tensor::matrix(1, 2, {0.2, -0.1}), Tensor::matrix(1, 2, {-1.0, -0.5}));
  Rng rng(4);
  std::vector<double> draws;
  for (int i = 0; i < 4000; ++i) draws.push_back(elbo_single(q, dec, x, rng).elbo[0]);
  const auto s = mean_se(draws);
  CHECK(s.mean <= linear_gaussian_log_marginal(*ds.generator, ds.row(0)) + 3 * s.se);
}

TEST_CASE("ELBO with the exact posterior equals the evidence") {
  const std::vector<double> W{1.0, 0.0, 0.0, 1.0, 0.0, 0.0};
  const std::vector<double> b{0.0, 0.0, 0.0};
  const Dataset ds = gen_linear_gaussian(1, W, b, 1.0, 8);
  const auto post = linear_gaussian_posterior(*ds.generator, ds.row(0));
  // W has orthogonal columns, so the posterior covariance is diagonal.
  DiagGaussian q(Tensor::matrix(1, 2, {post.mean[0], post.mean[1]}),
                 Tensor::matrix(1, 2, {std::log(post.covariance[0]), std::log(post.covariance[3])}));
  const Decoder dec = make_linear_decoder(W, b, 3, 2, 1.0, 0.01);
  Rng rng(9);
  const Tensor x = ds.rows(std::vector<std::size_t>{0});
  const double lp = linear_gaussian_log_marginal(*ds.generator, ds.row(0));
  // The closed-form KL term keeps per-draw noise, so only the mean is exact.
  std::vector<double> draws;
  for (int i = 0; i < 4000; ++i) draws.push_back(elbo_single(q, dec, x, rng).elbo[0]);
  const auto s = mean_se(draws);
  CHECK(std::abs(s.mean - lp) < 3 * s.se);
}

TEST_CASE("identical mixture components leave the ELBO unchanged in expectation") {
  Rng init(1);
  RecursiveMixtureModel model(spec(2), init);
  for (std::size_t m = 1; m <= 2; ++m) model.component(m).group().assign(model.component(0).group().flatten());
  Rng xr(2);
  const Tensor x = xr.randn({1, 3});
  Rng rng(3);
  std::vector<double> single, mixed;
  for (int i = 0; i < 4000; ++i) {
    single.push_back(elbo_single(model.encode_component(0, x), model.decoder(), x, rng).elbo[0]);
    mixed.push_back(elbo_mixture(model.encode_mixture(x, 2), model.decoder(), x, rng).elbo[0]);
  }
  const auto a = mean_se(single), b = mean_se(mixed);
  CHECK(std::abs(a.mean - b.mean) < 3 * std::hypot(a.se, b.se));
}

TEST_CASE("new-component objective at clone init is -ELBO(q0) + C") {
  Rng init(5);
  RecursiveMixtureModel model(spec(1), init);
  model.component(1).group().assign(model.component(0).group().flatten());
  Rng xr(6);
  const Tensor x = xr.randn({4, 3});
  Rng rng(7);
  std::vector<double> obj, ref;
  for (int i = 0; i < 2000; ++i) {
    const ComponentObjective o = new_component_loss(model, 1, x, 500.0, rng);
    CHECK(o.mean_kl == doctest::Approx(0.0));
    obj.push_back(o.loss.item());
    ref.push_back(-mean(elbo_single(model.encode_component(0, x), model.decoder(), x, rng).elbo, 0).item() + 500.0);
  }
  const auto a = mean_se(obj), b = mean_se(ref);
  CHECK(std::abs(a.mean - b.mean) < 3 * std::hypot(a.se, b.se));
  CHECK_THROWS_AS(new_component_loss(model, 0, x, 500.0, rng), ConfigError);
}

TEST_CASE("component loss only moves the component being trained") {
  Rng init(8);
  RecursiveMixtureModel model(spec(1), init);
  model.enable_only(model.component(1).group());
  Rng xr(9);
  const Tensor x = xr.randn({4, 3});
  Rng rng(10);
  backward(new_component_loss(model, 1, x, 500.0, rng).loss);
  for (const ParamGroup* g : model.groups())
    for (const auto& t : g->tensors()) CHECK(t.tensor.has_grad() == (g->name() == "phi_1"));
}

TEST_CASE("entropy weight schedule") {
  CHECK(entropy_weight(0) == 1.0);
  CHECK(entropy_weight(3) == 0.5);
  CHECK(entropy_weight(99) == doctest::Approx(0.1));
}

TEST_CASE("entropy regularizers") {
  DiagGaussian q(Tensor::matrix(2, 2, {0, 0, 1, 1}), Tensor::matrix(2, 2, {0.2, -0.4, 0.6, 0.0}));
  // Closed form: nu * mean over examples of the summed log variances.
  CHECK(bvi_entropy_reg_closed(q, 3).item() == doctest::Approx(0.5 * (-0.2 + 0.6) / 2));
  // Monte Carlo: nu * E[-log q] = nu * mean entropy.
  Rng rng(11);
  std::vector<double> draws;
  for (int i = 0; i < 20000; ++i) draws.push_back(bvi_entropy_reg_mc(q, 0, rng).item());
  const double h0 = 0.5 * (2 * std::log(2 * std::numbers::pi * std::numbers::e) + 0.2 - 0.4);
  const double h1 = 0.5 * (2 * std::log(2 * std::numbers::pi * std::numbers::e) + 0.6 + 0.0);
  const auto s = mean_se(draws);
  CHECK(std::abs(s.mean - 0.5 * (h0 + h1)) < 3 * s.se);
}
