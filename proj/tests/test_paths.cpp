#include <doctest.h>

#include <cmath>

#include "lfm/errors.hpp"
#include "lfm/paths.hpp"
#include "lfm/rng.hpp"

using namespace lfm;

namespace {

// Marginal flow of a Gaussian family N(mu_t, s_t^2 I): v = mu' + (s'/s)(x - mu).
struct GaussFlow {
  double mu, mu_dot, s, s_dot;
  double v(double x) const { return mu_dot + s_dot / s * (x - mu); }
};

GaussFlow cv_flow(double m, double s0, double t) {
  const double var = (1 - t) * (1 - t) * s0 * s0 + t * t;
  const double s = std::sqrt(var);
  return {(1 - t) * m, -m, s, (-(1 - t) * s0 * s0 + t) / s};
}

double vp_alpha(double bmin, double bmax, double t) { return std::exp(-0.5 * (bmin * t + 0.5 * (bmax - bmin) * t * t)); }

GaussFlow vp_flow(double bmin, double bmax, double m, double s0, double t) {
  const double a = vp_alpha(bmin, bmax, t);
  const double da = -0.5 * (bmin + (bmax - bmin) * t) * a;
  const double var = a * a * s0 * s0 + 1 - a * a;
  const double s = std::sqrt(var);
  return {a * m, da * m, s, (a * da * s0 * s0 - a * da) / s};
}

GaussianEndpointSpec spec1(double m, double s) { return {Tensor::row({m}), s}; }

}  // namespace

TEST_CASE("constant-velocity midpoint") {
  const auto s = interpolate(PathSpec::constant_velocity(), Tensor::row({0.0}), Tensor::row({1.0}), 0.5);
  CHECK(s.xt.item() == 0.5);
  CHECK(s.v_target.item() == 1.0);
}

TEST_CASE("endpoint consistency for both path kinds") {
  Rng rng(1);
  const Tensor x0 = rng.normal_tensor(4, 3), x1 = rng.normal_tensor(4, 3);
  const PathSpec cv = PathSpec::constant_velocity();
  CHECK(interpolate(cv, x0, x1, 0.0).xt == x0);
  CHECK(interpolate(cv, x0, x1, 1.0).xt == x1);
  CHECK(interpolate(cv, x0, x1, 0.37).v_target == x1 - x0);

  const PathSpec vp = PathSpec::variance_preserving();
  CHECK(max_abs_diff(interpolate(vp, x0, x1, 0.0).xt, x0) <= 1e-12);
  const double a1 = vp.alpha(1.0);
  CHECK(a1 < 1e-2);
  const double bound = a1 * 3.0 * 5 + (1 - std::sqrt(1 - a1 * a1)) * 5;
  CHECK(max_abs_diff(interpolate(vp, x0, x1, 1.0).xt, x1) <= bound);
}

TEST_CASE("vp alpha closed form and monotonicity") {
  const PathSpec vp = PathSpec::variance_preserving(0.1, 20.0);
  CHECK(vp.alpha(0.0) == 1.0);
  CHECK(vp.alpha(1.0) == doctest::Approx(std::exp(-5.025)).epsilon(1e-12));
  CHECK(vp.alpha(1.0) == doctest::Approx(6.57e-3).epsilon(1e-3));
  double prev = 1.0;
  for (int i = 1; i <= 100; ++i) {
    const double a = vp.alpha(i / 100.0);
    CHECK(a < prev);
    prev = a;
  }
  CHECK_THROWS_AS(PathSpec::variance_preserving(0.0, 1.0), ContractError);
  CHECK_THROWS_AS(PathSpec::variance_preserving(2.0, 1.0), ContractError);
}

TEST_CASE("target velocity is the time derivative of the interpolant") {
  Rng rng(2);
  const Tensor x0 = rng.normal_tensor(3, 2), x1 = rng.normal_tensor(3, 2);
  const double h = 1e-5;
  for (const PathSpec& p : {PathSpec::constant_velocity(), PathSpec::variance_preserving()}) {
    for (double t : {0.1, 0.4, 0.8}) {
      const Tensor fd = (1.0 / (2 * h)) * (interpolate(p, x0, x1, t + h).xt - interpolate(p, x0, x1, t - h).xt);
      CHECK(max_abs_diff(fd, interpolate(p, x0, x1, t).v_target) < 1e-6);
    }
  }
}

TEST_CASE("conditional score") {
  const Tensor x0 = Tensor::row({1.5, -2.0});
  CHECK(squared_norm(conditional_score(x0, 0.6 * x0, 0.4)) == 0.0);
  CHECK(conditional_score(Tensor::row({0.0}), Tensor::row({1.0}), 1.0).item() == -1.0);
  CHECK_THROWS_AS(conditional_score(x0, x0, 0.0), DomainError);

  // Numerical derivative of the log density of N((1-t) x0, t^2 I).
  Rng rng(3);
  const double h = 1e-5;
  for (int k = 0; k < 20; ++k) {
    const double t = rng.uniform(0.1, 1.0);
    const Tensor a = rng.normal_tensor(1, 3), x = rng.normal_tensor(1, 3);
    auto logp = [&](const Tensor& y) {
      double s = 0.0;
      for (std::size_t j = 0; j < 3; ++j) s += -0.5 * std::pow((y[j] - (1 - t) * a[j]) / t, 2);
      return s;
    };
    const Tensor sc = conditional_score(a, x, t);
    for (std::size_t j = 0; j < 3; ++j) {
      Tensor up = x, dn = x;
      up[j] += h;
      dn[j] -= h;
      CHECK(sc[j] == doctest::Approx((logp(up) - logp(dn)) / (2 * h)).epsilon(1e-6));
    }
  }
}

TEST_CASE("probability flow velocity") {
  const Tensor f = Tensor::row({1.0, -3.0}), s = Tensor::row({0.5, 2.0});
  CHECK(pf_ode_velocity(f, 0.0, s) == f);
  CHECK(pf_ode_velocity(Tensor::row({0.0, 0.0}), 2.0, s) == Tensor::row({-0.5, -2.0}));
}

TEST_CASE("constant path coefficients") {
  const auto c0 = constant_path_coefficients(Tensor::row({3.0}), 0.0);
  CHECK(c0.f.item() == -3.0);
  CHECK(c0.g2 == 0.0);
  const auto c = constant_path_coefficients(Tensor::row({2.0}), 0.5);
  CHECK(c.f.item() == -4.0);
  CHECK(c.g2 == 2.0);
  CHECK_THROWS_AS(constant_path_coefficients(Tensor::row({2.0}), 1.0), DomainError);

  Rng rng(4);
  for (int k = 0; k < 50; ++k) {
    const double t = rng.uniform(0.05, 0.95);
    const Tensor x0 = rng.normal_tensor(1, 2), x1 = rng.normal_tensor(1, 2);
    const Tensor xt = interpolate(PathSpec::constant_velocity(), x0, x1, t).xt;
    const auto co = constant_path_coefficients(xt, t);
    const Tensor v = pf_ode_velocity(co.f, co.g2, conditional_score(x0, xt, t));
    CHECK(max_abs_diff(v, x1 - x0) < 1e-10);
  }
}

TEST_CASE("analytic marginal velocity") {
  const auto std1 = spec1(0.0, 1.0);
  Rng rng(5);
  const Tensor x = rng.normal_tensor(5, 1);
  CHECK(squared_norm(analytic_marginal_velocity(std1, x, 0.5)) == 0.0);
  CHECK(max_abs_diff(analytic_marginal_velocity(std1, x, 0.75), 0.8 * x) < 1e-14);

  // Against the Gaussian-family flow oracle for a shifted, scaled endpoint.
  const GaussianEndpointSpec sp{Tensor::row({1.2, -0.4}), 0.6};
  for (double t : {0.05, 0.3, 0.6, 0.95}) {
    const Tensor z = rng.normal_tensor(3, 2);
    const Tensor v = analytic_marginal_velocity(sp, z, t);
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = 0; j < 2; ++j) {
        CHECK(v.at(i, j) == doctest::Approx(cv_flow(sp.mean0[j], 0.6, t).v(z.at(i, j))).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("vp marginal velocity agrees with the probability-flow form and the Gaussian oracle") {
  const PathSpec vp = PathSpec::variance_preserving(0.1, 20.0);
  const GaussianEndpointSpec sp{Tensor::row({0.8}), 0.5};
  Rng rng(6);
  for (double t : {0.05, 0.2, 0.5, 0.9}) {
    const Tensor x = rng.normal_tensor(4, 1);
    const auto co = vp_coefficients(vp, x, t);
    const Tensor pf = pf_ode_velocity(co.f, co.g2, vp_gaussian_marginal_score(vp, sp, x, t));
    const Tensor v = vp_gaussian_marginal_velocity(vp, sp, x, t);
    CHECK(max_abs_diff(pf, v) < 1e-10);
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(v[i] == doctest::Approx(vp_flow(0.1, 20.0, 0.8, 0.5, t).v(x[i])).epsilon(1e-9));
    }
  }
}

TEST_CASE("marginal velocity is the conditional expectation of the target") {
  // E[x1 - x0 | xt] is affine in xt, so the bin average of the target equals
  // the formula evaluated at the bin average of xt.
  const double m = 0.5, s0 = 0.7, t = 0.3;
  const auto sp = spec1(m, s0);
  Rng rng(7);
  const std::size_t n = 1000000;
  const double centers[] = {-1.0, 0.0, 0.4, 1.0};
  struct Bin {
    double sx = 0, sv = 0, sv2 = 0;
    std::size_t n = 0;
  } bins[4];
  for (std::size_t i = 0; i < n; ++i) {
    const double x0 = m + s0 * rng.normal(), x1 = rng.normal();
    const double xt = (1 - t) * x0 + t * x1;
    for (int b = 0; b < 4; ++b) {
      if (std::abs(xt - centers[b]) < 0.05) {
        bins[b].sx += xt;
        bins[b].sv += x1 - x0;
        bins[b].sv2 += (x1 - x0) * (x1 - x0);
        ++bins[b].n;
      }
    }
  }
  for (const auto& b : bins) {
    REQUIRE(b.n > 1000);
    const double mean_v = b.sv / b.n;
    const double var = b.sv2 / b.n - mean_v * mean_v;
    const double se = std::sqrt(var / b.n);
    const double pred = analytic_marginal_velocity(sp, Tensor::row({b.sx / b.n}), t).item();
    CHECK(std::abs(mean_v - pred) < 3 * se);
  }
}
