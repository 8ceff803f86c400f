#pragma once

#include "lfm/tensor.hpp"

namespace lfm {

enum class PathKind { ConstantVelocity, VariancePreserving };

// Interpolation path between data (t = 0) and noise (t = 1).
struct PathSpec {
  PathKind kind = PathKind::ConstantVelocity;
  // Linear beta schedule for the variance-preserving path, in 1/time.
  double beta_min = 0.1;
  double beta_max = 20.0;

  static PathSpec constant_velocity() { return {}; }
  static PathSpec variance_preserving(double beta_min = 0.1, double beta_max = 20.0);

  void validate() const;
  // beta(t) = beta_min + (beta_max - beta_min) t
  double beta(double t) const;
  // alpha_t = exp(-1/2 * integral_0^t beta(s) ds)
  double alpha(double t) const;
  double alpha_derivative(double t) const;
};

struct PathSample {
  double t = 0.0;
  Tensor x0;
  Tensor x1;
  Tensor xt;
  Tensor v_target;
};

// Throws DomainError for t outside [0, 1].
PathSample interpolate(const PathSpec& spec, const Tensor& x0, const Tensor& x1, double t);

// Score of N(xt; (1-t) x0, t^2 I): -(xt - (1-t) x0) / t^2. Singular at t = 0.
Tensor conditional_score(const Tensor& x0, const Tensor& xt, double t);

// Probability-flow velocity f - (g2 / 2) * score.
Tensor pf_ode_velocity(const Tensor& f, double g2, const Tensor& score);

struct DriftDiffusion {
  Tensor f;
  double g2 = 0.0;
};

// Drift and squared diffusion of the constant-velocity path:
// f = -x / (1 - t), g^2 = 2t / (1 - t). Singular at t = 1.
DriftDiffusion constant_path_coefficients(const Tensor& x, double t);

// Drift and squared diffusion of the variance-preserving SDE:
// f = -beta(t) x / 2, g^2 = beta(t).
DriftDiffusion vp_coefficients(const PathSpec& spec, const Tensor& x, double t);

// Data endpoint N(mean0, sigma0^2 I) paired independently with N(0, I) noise.
struct GaussianEndpointSpec {
  Tensor mean0;  // [1 x d]
  double sigma0 = 1.0;

  std::size_t dim() const { return mean0.cols(); }
  void validate() const;
};

// E[x1 - x0 | xt = x] under the constant-velocity path with Gaussian
// endpoints. Rows of x are independent query points.
Tensor analytic_marginal_velocity(const GaussianEndpointSpec& spec, const Tensor& x, double t);

// Score of the variance-preserving marginal p_t when the data endpoint is
// Gaussian: N(alpha_t mean0, (alpha_t^2 sigma0^2 + 1 - alpha_t^2) I).
Tensor vp_gaussian_marginal_score(const PathSpec& spec, const GaussianEndpointSpec& data, const Tensor& x,
                                  double t);

// E[dxt/dt | xt = x] for the variance-preserving path with Gaussian data.
Tensor vp_gaussian_marginal_velocity(const PathSpec& spec, const GaussianEndpointSpec& data, const Tensor& x,
                                     double t);

}  // namespace lfm
