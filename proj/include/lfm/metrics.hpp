#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include <json.hpp>

#include "lfm/codecs.hpp"
#include "lfm/paths.hpp"
#include "lfm/rng.hpp"
#include "lfm/velocity.hpp"

namespace lfm {

inline constexpr std::size_t kMaxAssignmentSize = 2048;

// Minimum-cost perfect matching on a square cost matrix; returns the column
// assigned to each row.
std::vector<std::size_t> solve_assignment(const Tensor& cost);

// Exact squared 2-Wasserstein distance between equal-size point sets under
// the mean convention: min over permutations of (1/n) sum ||a_i - b_pi(i)||^2.
double w2_empirical(const Tensor& a, const Tensor& b);

// Squared W2 between isotropic Gaussians N(m1, s1^2 I) and N(m2, s2^2 I).
double w2_gaussian(const Tensor& m1, double s1, const Tensor& m2, double s2);

struct MomentFit {
  Tensor mean;       // [1 x d]
  double sigma = 0;  // pooled isotropic standard deviation (n - 1 normalisation)
};
MomentFit fit_isotropic_gaussian(const Tensor& samples);

// Gaussian kernel k(x, y) = exp(-||x - y||^2 / (2 h^2)).
// Median of pooled pairwise distances.
double median_bandwidth(const Tensor& a, const Tensor& b);
// Unbiased MMD^2; the bandwidth defaults to the median heuristic.
double mmd_rbf(const Tensor& a, const Tensor& b, std::optional<double> bandwidth = std::nullopt);

struct PermutationTest {
  double statistic = 0.0;
  double bandwidth = 0.0;
  double p_value = 1.0;
  double threshold_95 = 0.0;  // 95th percentile of the permutation null
  std::vector<double> null_statistics;
};
// Permutation test of equal distributions with the MMD^2 statistic; the
// bandwidth is fixed from the pooled sample before permuting.
PermutationTest mmd_permutation_test(const Tensor& a, const Tensor& b, std::size_t permutations, Rng rng,
                                     std::optional<double> bandwidth = std::nullopt);

// Latent data distribution of an isotropic Gaussian under a deterministic
// affine codec. Throws ContractError when no isotropic Gaussian oracle exists.
GaussianEndpointSpec latent_gaussian(const Codec& codec, const GaussianEndpointSpec& data_spec);

// Oracle marginal velocity of the path for Gaussian data.
Tensor oracle_velocity(const PathSpec& path, const GaussianEndpointSpec& latent, const Tensor& z, double t);

struct MonteCarloEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

// E_{t ~ U[0,1], z ~ q_t} ||v*(z, t) - vhat(z, t)||^2. Each of n_t times
// draws n_x path points; the standard error comes from the per-time means.
MonteCarloEstimate mismatch_integral(const std::function<Tensor(const Tensor&, double)>& vhat,
                                     const GaussianEndpointSpec& data_spec, const PathSpec& path,
                                     const Codec& codec, std::size_t n_t, std::size_t n_x, Rng rng);
MonteCarloEstimate mismatch_integral(const VelocityModel& model, const GaussianEndpointSpec& data_spec,
                                     const PathSpec& path, const Codec& codec, std::size_t n_t, std::size_t n_x,
                                     Rng rng);

struct LipschitzEstimate {
  double bound = 0.0;      // spectral-product upper bound
  double empirical = 0.0;  // max sampled difference quotient
};
LipschitzEstimate lipschitz_velocity(const VelocityModel& model, std::size_t n_pairs, Rng rng);

struct BoundReport {
  double lhs_w2_sq = 0.0;
  double lhs_w2_empirical = 0.0;
  double lhs_noise_floor = 0.0;
  double lhs_std_error = 0.0;
  double delta_sq = 0.0;
  double lipschitz_decoder_sq = 0.0;
  double lipschitz_velocity = 0.0;
  double mismatch_integral = 0.0;
  double mismatch_std_error = 0.0;
  double rhs = 0.0;
  bool satisfied = false;
  std::size_t n_samples = 0;

  static double compute_rhs(double delta_sq, double lipschitz_decoder_sq, double lipschitz_velocity,
                            double mismatch_integral);
  // rhs recomputed from the stored fields equals the stored rhs exactly.
  bool consistent() const;
  nlohmann::json to_json() const;
  static BoundReport from_json(const nlohmann::json& j);
};

struct BoundOptions {
  std::size_t n_t = 64;
  std::size_t n_x = 256;
  // Moment-fit draws of exact p0 samples used for the lhs noise floor.
  std::size_t null_draws = 100;
  std::uint64_t seed = 0;
};

// `data` are data-space samples for the reconstruction offset; `generated`
// are decoded model samples; `reference`, when non-empty, are exact p0
// samples for the w2_empirical cross-check.
BoundReport check_bound(const VelocityModel& model, const Codec& codec, const GaussianEndpointSpec& data_spec,
                        const PathSpec& path, const Tensor& data, const Tensor& generated, const Tensor& reference,
                        const BoundOptions& options = {});

// Same check for an arbitrary latent field with a known Lipschitz constant in z.
BoundReport check_bound(const std::function<Tensor(const Tensor&, double)>& vhat, double lipschitz_velocity,
                        const Codec& codec, const GaussianEndpointSpec& data_spec, const PathSpec& path,
                        const Tensor& data, const Tensor& generated, const Tensor& reference,
                        const BoundOptions& options = {});

}  // namespace lfm
