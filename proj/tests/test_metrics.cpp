#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "lfm/codecs.hpp"
#include "lfm/errors.hpp"
#include "lfm/metrics.hpp"
#include "lfm/sampler.hpp"
#include "support.hpp"

using namespace lfm;

namespace {

Tensor gaussian_points(Rng& rng, std::size_t n, const Tensor& mean, double s) {
  Tensor x = rng.normal_tensor(n, mean.cols());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < mean.cols(); ++j) x.at(i, j) = mean[j] + s * x.at(i, j);
  }
  return x;
}

VelocityConfig net_config(std::vector<std::size_t> hidden) {
  VelocityConfig c;
  c.latent_dim = 2;
  c.hidden = std::move(hidden);
  c.time_embed_dim = 4;
  c.max_frequency = 10;
  c.zero_init_output = false;
  return c;
}

}  // namespace

TEST_CASE("w2 empirical small cases") {
  Rng rng(1);
  const Tensor a = rng.normal_tensor(6, 3);
  CHECK(w2_empirical(a, a) == 0.0);
  CHECK(w2_empirical(Tensor::row({0.0}).reshaped({1, 1}), Tensor::row({3.0}).reshaped({1, 1})) == 9.0);
  CHECK(w2_empirical(Tensor({2, 1}, std::vector<double>{0, 1}), Tensor({2, 1}, std::vector<double>{1, 0})) == 0.0);
  CHECK_THROWS_AS(w2_empirical(rng.normal_tensor(3, 2), rng.normal_tensor(4, 2)), ContractError);
  CHECK_THROWS_AS(w2_empirical(Tensor({2049, 1}), Tensor({2049, 1})), ContractError);
}

TEST_CASE("w2 empirical equals the exhaustive permutation minimum") {
  Rng rng(2);
  for (int k = 0; k < 300; ++k) {
    const std::size_t n = 1 + rng.uniform_index(7), d = 1 + rng.uniform_index(3);
    const Tensor a = rng.normal_tensor(n, d), b = rng.normal_tensor(n, d);
    CHECK(w2_empirical(a, b) == doctest::Approx(testing::brute_force_w2(a, b)).epsilon(1e-12));
  }
}

TEST_CASE("w2 empirical is a metric on point sets") {
  Rng rng(3);
  for (int k = 0; k < 100; ++k) {
    const std::size_t n = 2 + rng.uniform_index(40), d = 1 + rng.uniform_index(3);
    const Tensor a = rng.normal_tensor(n, d), b = 2.0 * rng.normal_tensor(n, d), c = rng.normal_tensor(n, d);
    const double ab = w2_empirical(a, b), ba = w2_empirical(b, a);
    CHECK(ab == doctest::Approx(ba).epsilon(1e-12));
    CHECK(std::sqrt(ab) <= std::sqrt(w2_empirical(a, c)) + std::sqrt(w2_empirical(c, b)) + 1e-9);
  }
}

TEST_CASE("assignment solver returns a permutation") {
  Rng rng(4);
  const Tensor cost = rng.uniform_tensor(9, 9, 0, 1);
  auto p = solve_assignment(cost);
  std::sort(p.begin(), p.end());
  for (std::size_t i = 0; i < 9; ++i) CHECK(p[i] == i);
}

TEST_CASE("w2 between isotropic gaussians") {
  const Tensor m = Tensor::row({1.0, -1.0});
  CHECK(w2_gaussian(m, 0.7, m, 0.7) == 0.0);
  CHECK(w2_gaussian(Tensor::row({0.0, 0.0}), 1.0, Tensor::row({0.0, 0.0}), 2.0) == 2.0);
  CHECK_THROWS_AS(w2_gaussian(m, 0.0, m, 1.0), DomainError);

  Rng rng(5);
  const Tensor m2 = Tensor::row({3.0, 0.0});
  const Tensor a = gaussian_points(rng, 2048, Tensor::row({0.0, 0.0}), 1.0);
  const Tensor b = gaussian_points(rng, 2048, m2, 2.0);
  const double exact = w2_gaussian(Tensor::row({0.0, 0.0}), 1.0, m2, 2.0);
  CHECK(exact == 11.0);
  CHECK(std::abs(w2_empirical(a, b) - exact) / exact < 0.10);
}

TEST_CASE("isotropic moment fit") {
  const Tensor x = Tensor::from_rows({{0, 0}, {2, 0}, {0, 2}, {2, 2}});
  const MomentFit f = fit_isotropic_gaussian(x);
  CHECK(f.mean == Tensor::row({1.0, 1.0}));
  // Each coordinate has squared deviations summing to 4 over n - 1 = 3.
  CHECK(f.sigma == doctest::Approx(std::sqrt(4.0 / 3.0)).epsilon(1e-14));
}

TEST_CASE("mmd") {
  Rng rng(6);
  const Tensor a = rng.normal_tensor(200, 2);
  CHECK(mmd_rbf(a, a) <= 1e-12);
  const Tensor p = gaussian_points(rng, 500, Tensor::row({0.0}), 1.0);
  const Tensor q = gaussian_points(rng, 500, Tensor::row({5.0}), 1.0);
  CHECK(mmd_rbf(p, q) > 0.5);
  CHECK_THROWS_AS(mmd_rbf(Tensor({1, 2}), Tensor({1, 2})), ContractError);
  CHECK(median_bandwidth(a, a) > 0.0);
}

TEST_CASE("permutation p-values are uniform under the null") {
  Rng rng(7);
  const std::size_t trials = 300;
  std::vector<double> ps;
  for (std::size_t k = 0; k < trials; ++k) {
    const Tensor a = rng.normal_tensor(25, 2), b = rng.normal_tensor(25, 2);
    const auto test = mmd_permutation_test(a, b, 99, rng.split(k));
    CHECK(test.null_statistics.size() == 99);
    ps.push_back(test.p_value);
  }
  std::sort(ps.begin(), ps.end());
  double ks = 0.0;
  for (std::size_t i = 0; i < trials; ++i) {
    ks = std::max({ks, std::abs(ps[i] - double(i) / trials), std::abs(ps[i] - double(i + 1) / trials)});
  }
  // 1% Kolmogorov-Smirnov critical value plus the 1/100 grid of the p-values.
  CHECK(ks < 1.63 / std::sqrt(double(trials)) + 0.01);
  const double rejections = double(std::count_if(ps.begin(), ps.end(), [](double p) { return p <= 0.05; }));
  CHECK(std::abs(rejections - 0.05 * trials) < 3 * std::sqrt(trials * 0.05 * 0.95));
}

TEST_CASE("permutation test detects a shift") {
  Rng rng(8);
  const Tensor a = rng.normal_tensor(100, 2);
  const Tensor b = gaussian_points(rng, 100, Tensor::row({1.0, 0.0}), 1.0);
  const auto t = mmd_permutation_test(a, b, 200, Rng(9));
  CHECK(t.p_value < 0.01);
  CHECK(t.statistic > t.threshold_95);
}

TEST_CASE("latent gaussian of the codecs") {
  const GaussianEndpointSpec data{Tensor::row({2.0, -4.0}), 1.5};
  const auto id = latent_gaussian(Codec::identity(2), data);
  CHECK(id.mean0 == data.mean0);
  CHECK(id.sigma0 == 1.5);
  const Codec half = Codec::linear_fixed(0.5 * Tensor::identity(2), Tensor::row({1.0, 0.0}), 2.0 * Tensor::identity(2),
                                         Tensor::row({-2.0, 0.0}));
  const auto lin = latent_gaussian(half, data);
  CHECK(max_abs_diff(lin.mean0, Tensor::row({2.0, -2.0})) < 1e-15);
  CHECK(lin.sigma0 == doctest::Approx(0.75).epsilon(1e-15));
  Rng rng(10);
  const Codec vae = Codec::gaussian_vae(2, 2, {4}, 1e-3, rng);
  CHECK_THROWS_AS(latent_gaussian(vae, data), ContractError);
  const Codec skew = Codec::linear_fixed(Tensor::from_rows({{1, 0}, {0, 2}}), Tensor({1, 2}),
                                         Tensor::from_rows({{1, 0}, {0, 0.5}}), Tensor({1, 2}));
  CHECK_THROWS_AS(latent_gaussian(skew, data), ContractError);
}

TEST_CASE("mismatch integral") {
  const GaussianEndpointSpec spec{Tensor::row({1.0, 0.5}), 0.8};
  const PathSpec cv;
  const Codec id = Codec::identity(2);
  const auto oracle = [&](const Tensor& z, double t) { return analytic_marginal_velocity(spec, z, t); };
  const auto zero = mismatch_integral(oracle, spec, cv, id, 16, 64, Rng(11));
  CHECK(zero.value == 0.0);

  const Tensor c = Tensor::row({0.3, -0.4});
  const auto shifted = [&](const Tensor& z, double t) {
    Tensor v = oracle(z, t);
    for (std::size_t i = 0; i < v.rows(); ++i) {
      for (std::size_t j = 0; j < 2; ++j) v.at(i, j) += c[j];
    }
    return v;
  };
  const auto s = mismatch_integral(shifted, spec, cv, id, 16, 64, Rng(12));
  CHECK(std::abs(s.value - squared_norm(c)) <= 3 * s.std_error + 1e-12);

  // A generic field: doubling the sample count moves the estimate by less
  // than two standard errors of the smaller run.
  Rng rng(13);
  const VelocityModel m(net_config({16}), rng);
  const auto small = mismatch_integral(m, spec, cv, id, 64, 128, Rng(14));
  const auto large = mismatch_integral(m, spec, cv, id, 128, 128, Rng(15));
  CHECK(small.std_error > 0.0);
  CHECK(std::abs(small.value - large.value) < 2 * small.std_error);

  const PathSpec vp = PathSpec::variance_preserving();
  const auto vpo = [&](const Tensor& z, double t) { return vp_gaussian_marginal_velocity(vp, spec, z, t); };
  CHECK(mismatch_integral(vpo, spec, vp, id, 8, 16, Rng(16)).value == 0.0);
}

TEST_CASE("velocity lipschitz estimates") {
  Rng rng(17);
  VelocityModel lin(net_config({}), rng);
  auto& w = lin.trunk().layers()[0].weight.value;
  for (std::size_t i = 0; i < w.rows(); ++i) {
    for (std::size_t j = 0; j < w.cols(); ++j) w.at(i, j) = i < 2 ? (i == j ? 2.0 : 0.0) : 0.3;
  }
  const auto l2 = lipschitz_velocity(lin, 100, Rng(18));
  CHECK(l2.bound == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(l2.empirical == doctest::Approx(2.0).epsilon(1e-9));

  VelocityConfig zc = net_config({8});
  zc.zero_init_output = true;
  const VelocityModel zero(zc, rng);
  for (auto* p : const_cast<VelocityModel&>(zero).parameters()) {
    for (double& v : p->value.storage()) v = 0.0;
  }
  CHECK(lipschitz_velocity(zero, 10, Rng(19)).bound == 0.0);

  const VelocityModel deep(net_config({32, 32}), rng);
  const auto est = lipschitz_velocity(deep, 10000, Rng(20));
  CHECK(est.empirical > 0.0);
  CHECK(est.empirical <= est.bound);
}

TEST_CASE("bound report arithmetic and serialisation") {
  BoundReport r;
  r.delta_sq = 0.1;
  r.lipschitz_decoder_sq = 4.0;
  r.lipschitz_velocity = 0.5;
  r.mismatch_integral = 0.02;
  r.rhs = BoundReport::compute_rhs(r.delta_sq, r.lipschitz_decoder_sq, r.lipschitz_velocity, r.mismatch_integral);
  CHECK(r.rhs == 0.1 + 4.0 * std::exp(2.0) * 0.02);
  CHECK(r.consistent());
  const BoundReport back = BoundReport::from_json(r.to_json());
  CHECK(back.rhs == r.rhs);
  CHECK(back.consistent());
  r.rhs += 1e-15;
  CHECK_FALSE(r.consistent());
}

TEST_CASE("exact field gives a zero bound that holds up to sampling noise") {
  const GaussianEndpointSpec spec{Tensor::row({1.0, -0.5}), 0.7};
  const auto oracle = [&](const Tensor& z, double t) { return analytic_marginal_velocity(spec, z, t); };
  const Codec id = Codec::identity(2);
  const Tensor z1 = Rng(21).normal_tensor(1000, 2);
  const Tensor gen = integrate_field(oracle, z1, SolverSpec::dopri5(1e-8, 1e-8)).z_final;
  Rng rng(22);
  const Tensor data = gaussian_points(rng, 1000, spec.mean0, spec.sigma0);
  BoundOptions opt;
  opt.n_t = 16;
  opt.n_x = 64;
  const BoundReport r = check_bound(oracle, 1.0, id, spec, PathSpec{}, data, gen, Tensor(), opt);
  CHECK(r.mismatch_integral == 0.0);
  CHECK(r.delta_sq == 0.0);
  CHECK(r.rhs == 0.0);
  CHECK(r.lhs_w2_sq > 0.0);
  CHECK(r.lhs_w2_sq <= r.lhs_noise_floor);
  CHECK(r.satisfied);
  CHECK(r.consistent());
}

TEST_CASE("a decoder with W = 2I scales the bound by four") {
  Rng rng(23);
  const VelocityModel m(net_config({16}), rng);
  const GaussianEndpointSpec latent{Tensor::row({0.5, 1.0}), 0.6};
  const GaussianEndpointSpec doubled{Tensor::row({1.0, 2.0}), 1.2};
  const Codec id = Codec::identity(2);
  const Codec two = Codec::linear_fixed(0.5 * Tensor::identity(2), Tensor({1, 2}), 2.0 * Tensor::identity(2),
                                        Tensor({1, 2}));
  const Tensor gen = gaussian_points(rng, 200, latent.mean0, latent.sigma0);
  BoundOptions opt;
  opt.n_t = 16;
  opt.n_x = 32;
  opt.seed = 24;
  const BoundReport a = check_bound(m, id, latent, PathSpec{}, gen, gen, Tensor(), opt);
  const BoundReport b = check_bound(m, two, doubled, PathSpec{}, 2.0 * gen, 2.0 * gen, Tensor(), opt);
  CHECK(a.delta_sq == 0.0);
  CHECK(b.delta_sq < 1e-24);
  CHECK(a.mismatch_integral == b.mismatch_integral);
  CHECK(b.rhs / a.rhs == doctest::Approx(4.0).epsilon(1e-9));
}
