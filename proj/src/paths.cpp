#include "lfm/paths.hpp"

#include <cmath>
#include <sstream>

#include "lfm/errors.hpp"

namespace lfm {

namespace {

void require_unit_interval(double t, const char* op) {
  if (!(t >= 0.0 && t <= 1.0)) {
    std::ostringstream msg;
    msg << op << ": t = " << t << " outside [0, 1]";
    throw DomainError(msg.str());
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
}

// The VP noise coefficient sqrt(1 - alpha^2) has an unbounded derivative at
// t = 0; its target is evaluated at this offset instead.
constexpr double kVpDerivativeFloor = 1e-12;

}  // namespace

PathSpec PathSpec::variance_preserving(double beta_min, double beta_max) {
  PathSpec spec;
  spec.kind = PathKind::VariancePreserving;
  spec.beta_min = beta_min;
  spec.beta_max = beta_max;
  spec.validate();
  return spec;
}

void PathSpec::validate() const {
  if (kind == PathKind::VariancePreserving && !(beta_min > 0.0 && beta_min <= beta_max)) {
    throw ContractError("variance-preserving path requires 0 < beta_min <= beta_max");
  }
}

double PathSpec::beta(double t) const { return beta_min + (beta_max - beta_min) * t; }

double PathSpec::alpha(double t) const {
  return std::exp(-0.5 * (beta_min * t + 0.5 * (beta_max - beta_min) * t * t));
}

double PathSpec::alpha_derivative(double t) const { return -0.5 * beta(t) * alpha(t); }

PathSample interpolate(const PathSpec& spec, const Tensor& x0, const Tensor& x1, double t) {
  require_unit_interval(t, "interpolate");
  require_same_shape(x0, x1, "interpolate");
  PathSample s{t, x0, x1, Tensor(x0.shape()), Tensor(x0.shape())};
  if (spec.kind == PathKind::ConstantVelocity) {
    for (std::size_t i = 0; i < x0.size(); ++i) {
      s.xt[i] = (1.0 - t) * x0[i] + t * x1[i];
      s.v_target[i] = x1[i] - x0[i];
    }
    return s;
  }
  spec.validate();
  const double a = spec.alpha(t);
  const double noise = std::sqrt(std::max(0.0, 1.0 - a * a));
  const double td = std::max(t, kVpDerivativeFloor);
  const double ad = spec.alpha(td);
  const double da = spec.alpha_derivative(td);
  const double dnoise = -ad * da / std::sqrt(1.0 - ad * ad);
  for (std::size_t i = 0; i < x0.size(); ++i) {
    s.xt[i] = a * x0[i] + noise * x1[i];
    s.v_target[i] = spec.alpha_derivative(t) * x0[i] + dnoise * x1[i];
  }
  return s;
}

Tensor conditional_score(const Tensor& x0, const Tensor& xt, double t) {
  require_same_shape(x0, xt, "conditional_score");
  if (t == 0.0) throw DomainError("conditional_score: singular at t = 0");
  require_unit_interval(t, "conditional_score");
  Tensor out(xt.shape());
  const double inv = 1.0 / (t * t);
  for (std::size_t i = 0; i < xt.size(); ++i) out[i] = -(xt[i] - (1.0 - t) * x0[i]) * inv;
  return out;
}

Tensor pf_ode_velocity(const Tensor& f, double g2, const Tensor& score) {
  require_same_shape(f, score, "pf_ode_velocity");
  if (g2 < 0.0) throw DomainError("pf_ode_velocity: g2 must be non-negative");
  return axpy(f, -0.5 * g2, score);
}

DriftDiffusion constant_path_coefficients(const Tensor& x, double t) {
  if (t == 1.0) throw DomainError("constant_path_coefficients: singular at t = 1");
  require_unit_interval(t, "constant_path_coefficients");
  return {(-1.0 / (1.0 - t)) * x, 2.0 * t / (1.0 - t)};
}

DriftDiffusion vp_coefficients(const PathSpec& spec, const Tensor& x, double t) {
  require_unit_interval(t, "vp_coefficients");
  const double b = spec.beta(t);
  return {(-0.5 * b) * x, b};
}

void GaussianEndpointSpec::validate() const {
  if (!(sigma0 > 0.0)) throw ContractError("GaussianEndpointSpec: sigma0 must be positive");
  if (mean0.rank() != 2 || mean0.rows() != 1) throw DimensionError("GaussianEndpointSpec: mean0 must be [1 x d]");
}

Tensor analytic_marginal_velocity(const GaussianEndpointSpec& spec, const Tensor& x, double t) {
  spec.validate();
  require_unit_interval(t, "analytic_marginal_velocity");
  if (x.cols() != spec.dim()) throw DimensionError("analytic_marginal_velocity: dimension mismatch");
  const double s2 = spec.sigma0 * spec.sigma0;
  const double var_t = (1.0 - t) * (1.0 - t) * s2 + t * t;
  const double coef = (t - (1.0 - t) * s2) / var_t;
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.cols(); ++j) {
      const double m = spec.mean0[j];
      out.at(i, j) = -m + coef * (x.at(i, j) - (1.0 - t) * m);
    }
  }
  return out;
}

Tensor vp_gaussian_marginal_score(const PathSpec& spec, const GaussianEndpointSpec& data, const Tensor& x,
                                  double t) {
  data.validate();
  require_unit_interval(t, "vp_gaussian_marginal_score");
  const double a = spec.alpha(t);
  const double var_t = a * a * data.sigma0 * data.sigma0 + 1.0 - a * a;
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.cols(); ++j) out.at(i, j) = -(x.at(i, j) - a * data.mean0[j]) / var_t;
  }
  return out;
}

Tensor vp_gaussian_marginal_velocity(const PathSpec& spec, const GaussianEndpointSpec& data, const Tensor& x,
                                     double t) {
  data.validate();
  require_unit_interval(t, "vp_gaussian_marginal_velocity");
  const double a = spec.alpha(t);
  const double da = spec.alpha_derivative(t);
  const double s2 = data.sigma0 * data.sigma0;
  const double var_t = a * a * s2 + 1.0 - a * a;
  // Cov(alpha' x0 + noise' x1, xt) = alpha alpha' s^2 + noise noise' = alpha alpha' (s^2 - 1)
  const double coef = a * da * (s2 - 1.0) / var_t;
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.cols(); ++j) {
      const double m = data.mean0[j];
      out.at(i, j) = da * m + coef * (x.at(i, j) - a * m);
    }
  }
  return out;
}

}  // namespace lfm
