#include "lfm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "lfm/errors.hpp"
#include "lfm/linalg.hpp"

namespace lfm {

namespace {

Tensor pairwise_sq_dists(const Tensor& a, const Tensor& b) {
  const std::size_t n = a.rows(), m = b.rows(), d = a.cols();
  Tensor out({n, m});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = a.at(i, k) - b.at(j, k);
        s += diff * diff;
      }
      out.at(i, j) = s;
    }
  }
  return out;
}

void require_points(const Tensor& a, const Tensor& b, const char* what) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols()) {
    throw ContractError(std::string(what) + ": point sets " + shape_to_string(a.shape()) + " and " +
                        shape_to_string(b.shape()) + " are incompatible");
  }
}

double percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

// Unbiased MMD^2 from a pooled kernel matrix and group membership.
double mmd_from_kernel(const Tensor& k, const std::vector<std::size_t>& ia, const std::vector<std::size_t>& ib) {
  double saa = 0.0, sbb = 0.0, sab = 0.0;
  for (std::size_t x = 0; x < ia.size(); ++x) {
    for (std::size_t y = 0; y < ia.size(); ++y) {
      if (x != y) saa += k.at(ia[x], ia[y]);
    }
  }
  for (std::size_t x = 0; x < ib.size(); ++x) {
    for (std::size_t y = 0; y < ib.size(); ++y) {
      if (x != y) sbb += k.at(ib[x], ib[y]);
    }
  }
  for (std::size_t i : ia) {
    for (std::size_t j : ib) sab += k.at(i, j);
  }
  const auto n = static_cast<double>(ia.size()), m = static_cast<double>(ib.size());
  return saa / (n * (n - 1)) + sbb / (m * (m - 1)) - 2.0 * sab / (n * m);
}

Tensor kernel_matrix(const Tensor& pooled, double h) {
  Tensor k = pairwise_sq_dists(pooled, pooled);
  const double inv = 1.0 / (2.0 * h * h);
  for (auto& v : k.data()) v = std::exp(-v * inv);
  return k;
}

}  // namespace

std::vector<std::size_t> solve_assignment(const Tensor& cost) {
  const std::size_t n = cost.rows();
  if (cost.cols() != n) throw ContractError("assignment needs a square cost matrix");
  constexpr double inf = std::numeric_limits<double>::infinity();
  constexpr std::size_t none = std::numeric_limits<std::size_t>::max();
  // Shortest augmenting paths (Jonker-Volgenant style): one Dijkstra search
  // per row over reduced costs, with dual updates applied after the search.
  std::vector<double> u(n, 0.0), v(n, 0.0), dist(n);
  std::vector<std::size_t> path(n), col4row(n, none), row4col(n, none), remaining(n);
  std::vector<char> seen_row(n), seen_col(n);
  const double* c = cost.data().data();
  for (std::size_t cur = 0; cur < n; ++cur) {
    std::fill(dist.begin(), dist.end(), inf);
    std::fill(seen_row.begin(), seen_row.end(), 0);
    std::fill(seen_col.begin(), seen_col.end(), 0);
    for (std::size_t k = 0; k < n; ++k) remaining[k] = n - k - 1;
    std::size_t left = n, i = cur, sink = none;
    double min_val = 0.0;
    while (sink == none) {
      seen_row[i] = 1;
      const double* row = c + i * n;
      const double ui = u[i];
      std::size_t best = 0;
      double lowest = inf;
      for (std::size_t k = 0; k < left; ++k) {
        const std::size_t j = remaining[k];
        const double r = min_val + row[j] - ui - v[j];
        if (r < dist[j]) {
          path[j] = i;
          dist[j] = r;
        }
        // Prefer a free column on ties so the search ends early.
        if (dist[j] < lowest || (dist[j] == lowest && row4col[j] == none)) {
          lowest = dist[j];
          best = k;
        }
      }
      min_val = lowest;
      if (min_val == inf) throw NumericError("assignment: cost matrix has no finite matching");
      const std::size_t j = remaining[best];
      if (row4col[j] == none) sink = j;
      else i = row4col[j];
      seen_col[j] = 1;
      remaining[best] = remaining[--left];
    }
    u[cur] += min_val;
    for (std::size_t r = 0; r < n; ++r) {
      if (seen_row[r] && r != cur) u[r] += min_val - dist[col4row[r]];
    }
    for (std::size_t j = 0; j < n; ++j) {
      if (seen_col[j]) v[j] -= min_val - dist[j];
    }
    for (std::size_t j = sink;;) {
      const std::size_t r = path[j];
      row4col[j] = r;
      std::swap(col4row[r], j);
      if (r == cur) break;
    }
  }
  return col4row;
}

double w2_empirical(const Tensor& a, const Tensor& b) {
  require_points(a, b, "w2_empirical");
  if (a.rows() != b.rows()) {
    throw ContractError("w2_empirical: sizes differ (" + std::to_string(a.rows()) + " vs " +
                        std::to_string(b.rows()) + ")");
  }
  const std::size_t n = a.rows();
  if (n > kMaxAssignmentSize) throw ContractError("w2_empirical supports at most 2048 points");
  double total = 0.0;
  if (a.cols() == 1) {
    // In one dimension the monotone (sorted) coupling is optimal.
    std::vector<double> x(a.data().begin(), a.data().end()), y(b.data().begin(), b.data().end());
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    for (std::size_t i = 0; i < n; ++i) total += (x[i] - y[i]) * (x[i] - y[i]);
  } else {
    // Only the cross term sum_i <a_i, b_perm(i)> depends on the coupling, so
    // centring each set and rescaling one of them leaves the optimal
    // permutation unchanged. Well-aligned sets keep augmenting paths short.
    auto centred = [](const Tensor& x) {
      const Tensor m = column_means(x);
      Tensor out = x;
      for (std::size_t i = 0; i < x.rows(); ++i) {
        for (std::size_t j = 0; j < x.cols(); ++j) out.at(i, j) -= m[j];
      }
      return out;
    };
    const Tensor ca = centred(a);
    Tensor cb = centred(b);
    const double na = squared_norm(ca), nb = squared_norm(cb);
    if (na > 0.0 && nb > 0.0) cb = std::sqrt(na / nb) * cb;
    const auto match = solve_assignment(pairwise_sq_dists(ca, cb));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < a.cols(); ++j) {
        const double d = a.at(i, j) - b.at(match[i], j);
        total += d * d;
      }
    }
  }
  return total / static_cast<double>(n);
}

double w2_gaussian(const Tensor& m1, double s1, const Tensor& m2, double s2) {
  if (m1.size() != m2.size()) throw DimensionError("w2_gaussian: mean dimensions differ");
  if (!(s1 > 0.0) || !(s2 > 0.0)) throw DomainError("w2_gaussian: scales must be positive");
  double s = 0.0;
  for (std::size_t i = 0; i < m1.size(); ++i) s += (m1[i] - m2[i]) * (m1[i] - m2[i]);
  return s + static_cast<double>(m1.size()) * (s1 - s2) * (s1 - s2);
}

MomentFit fit_isotropic_gaussian(const Tensor& samples) {
  const std::size_t n = samples.rows(), d = samples.cols();
  if (n < 2) throw ContractError("moment fit needs at least two samples");
  MomentFit fit{column_means(samples), 0.0};
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const double c = samples.at(i, j) - fit.mean[j];
      ss += c * c;
    }
  }
  fit.sigma = std::sqrt(ss / (static_cast<double>(d) * static_cast<double>(n - 1)));
  return fit;
}

double median_bandwidth(const Tensor& a, const Tensor& b) {
  const Tensor pooled = concat_rows({a, b});
  const Tensor d2 = pairwise_sq_dists(pooled, pooled);
  std::vector<double> dists;
  for (std::size_t i = 0; i < pooled.rows(); ++i) {
    for (std::size_t j = i + 1; j < pooled.rows(); ++j) dists.push_back(d2.at(i, j));
  }
  const auto mid = dists.begin() + static_cast<std::ptrdiff_t>(dists.size() / 2);
  std::nth_element(dists.begin(), mid, dists.end());
  const double h = std::sqrt(*mid);
  return h > 0.0 ? h : 1.0;
}

double mmd_rbf(const Tensor& a, const Tensor& b, std::optional<double> bandwidth) {
  require_points(a, b, "mmd_rbf");
  if (a.rows() < 2 || b.rows() < 2) throw ContractError("mmd_rbf needs at least two samples per set");
  const double h = bandwidth ? *bandwidth : median_bandwidth(a, b);
  if (!(h > 0.0)) throw DomainError("mmd_rbf: bandwidth must be positive");
  const Tensor k = kernel_matrix(concat_rows({a, b}), h);
  std::vector<std::size_t> ia(a.rows()), ib(b.rows());
  std::iota(ia.begin(), ia.end(), 0);
  std::iota(ib.begin(), ib.end(), a.rows());
  return mmd_from_kernel(k, ia, ib);
}

PermutationTest mmd_permutation_test(const Tensor& a, const Tensor& b, std::size_t permutations, Rng rng,
                                     std::optional<double> bandwidth) {
  require_points(a, b, "mmd_permutation_test");
  if (a.rows() < 2 || b.rows() < 2) throw ContractError("mmd_permutation_test needs at least two samples per set");
  if (permutations < 1) throw ContractError("mmd_permutation_test needs at least one permutation");
  PermutationTest out;
  out.bandwidth = bandwidth ? *bandwidth : median_bandwidth(a, b);
  const Tensor k = kernel_matrix(concat_rows({a, b}), out.bandwidth);
  const std::size_t n = a.rows(), total = a.rows() + b.rows();
  std::vector<std::size_t> idx(total);
  std::iota(idx.begin(), idx.end(), 0);
  out.statistic = mmd_from_kernel(k, {idx.begin(), idx.begin() + n}, {idx.begin() + n, idx.end()});
  std::size_t at_least = 0;
  for (std::size_t p = 0; p < permutations; ++p) {
    for (std::size_t i = total; i > 1; --i) std::swap(idx[i - 1], idx[rng.uniform_index(i)]);
    const double s = mmd_from_kernel(k, {idx.begin(), idx.begin() + n}, {idx.begin() + n, idx.end()});
    out.null_statistics.push_back(s);
    if (s >= out.statistic) ++at_least;
  }
  out.p_value = static_cast<double>(at_least + 1) / static_cast<double>(permutations + 1);
  out.threshold_95 = percentile(out.null_statistics, 0.95);
  return out;
}

GaussianEndpointSpec latent_gaussian(const Codec& codec, const GaussianEndpointSpec& data_spec) {
  data_spec.validate();
  if (data_spec.dim() != codec.data_dim()) throw DimensionError("latent_gaussian: data dimension mismatch");
  switch (codec.kind()) {
    case CodecKind::Identity: return data_spec;
    case CodecKind::Linear: {
      const Tensor& we = codec.encoder_linear().weight.value;
      const Tensor gram = matmul(we.transposed(), we);
      const std::size_t k = gram.rows();
      const double c = gram.at(0, 0);
      for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
          const double expect = i == j ? c : 0.0;
          if (std::abs(gram.at(i, j) - expect) > 1e-9 * std::max(1.0, c)) {
            throw ContractError("oracle unavailable: linear encoder does not preserve isotropy");
          }
        }
      }
      if (!(c > 0.0)) throw ContractError("oracle unavailable: degenerate linear encoder");
      return {codec.encode_mean(data_spec.mean0), data_spec.sigma0 * std::sqrt(c)};
    }
    case CodecKind::GaussianVAE: break;
  }
  throw ContractError("oracle unavailable: the bound check needs an Identity or Linear codec");
}

Tensor oracle_velocity(const PathSpec& path, const GaussianEndpointSpec& latent, const Tensor& z, double t) {
  if (path.kind == PathKind::ConstantVelocity) return analytic_marginal_velocity(latent, z, t);
  return vp_gaussian_marginal_velocity(path, latent, z, t);
}

MonteCarloEstimate mismatch_integral(const std::function<Tensor(const Tensor&, double)>& vhat,
                                     const GaussianEndpointSpec& data_spec, const PathSpec& path,
                                     const Codec& codec, std::size_t n_t, std::size_t n_x, Rng rng) {
  if (n_t < 2 || n_x < 1) throw ContractError("mismatch_integral needs n_t >= 2 and n_x >= 1");
  const GaussianEndpointSpec latent = latent_gaussian(codec, data_spec);
  const std::size_t d = latent.dim();
  Rng time_rng = rng.split("time");
  Rng data_rng = rng.split("data");
  Rng noise_rng = rng.split("noise");
  std::vector<double> group(n_t);
  for (std::size_t g = 0; g < n_t; ++g) {
    const double t = time_rng.uniform();
    Tensor z0 = data_rng.normal_tensor(n_x, d);
    for (std::size_t i = 0; i < n_x; ++i) {
      for (std::size_t j = 0; j < d; ++j) z0.at(i, j) = latent.mean0[j] + latent.sigma0 * z0.at(i, j);
    }
    const Tensor z1 = noise_rng.normal_tensor(n_x, d);
    Tensor zt({n_x, d});
    if (path.kind == PathKind::ConstantVelocity) {
      zt = axpy((1.0 - t) * z0, t, z1);
    } else {
      const double a = path.alpha(t);
      zt = axpy(a * z0, std::sqrt(std::max(0.0, 1.0 - a * a)), z1);
    }
    const Tensor diff = oracle_velocity(path, latent, zt, t) - vhat(zt, t);
    group[g] = squared_norm(diff) / static_cast<double>(n_x);
  }
  const double mean = std::accumulate(group.begin(), group.end(), 0.0) / static_cast<double>(n_t);
  double var = 0.0;
  for (double v : group) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n_t - 1);
  return {mean, std::sqrt(var / static_cast<double>(n_t))};
}

MonteCarloEstimate mismatch_integral(const VelocityModel& model, const GaussianEndpointSpec& data_spec,
                                     const PathSpec& path, const Codec& codec, std::size_t n_t, std::size_t n_x,
                                     Rng rng) {
  return mismatch_integral([&model](const Tensor& z, double t) { return model.velocity(z, Condition::none(), t); },
                           data_spec, path, codec, n_t, n_x, rng);
}

LipschitzEstimate lipschitz_velocity(const VelocityModel& model, std::size_t n_pairs, Rng rng) {
  LipschitzEstimate out;
  out.bound = model.lipschitz_bound();
  if (n_pairs == 0) return out;
  const std::size_t d = model.config().latent_dim;
  Rng base_rng = rng.split("base");
  Rng step_rng = rng.split("step");
  Rng scale_rng = rng.split("scale");
  Rng time_rng = rng.split("time");
  Tensor z = base_rng.normal_tensor(n_pairs, d);
  Tensor zp = z;
  Tensor t({n_pairs, 1});
  for (std::size_t i = 0; i < n_pairs; ++i) {
    // Separations spread over several orders of magnitude.
    const double scale = std::pow(10.0, scale_rng.uniform(-3.0, 0.5));
    for (std::size_t j = 0; j < d; ++j) zp.at(i, j) += scale * step_rng.normal();
    t[i] = time_rng.uniform();
  }
  Graph g;
  const std::vector<Condition> none{Condition::none()};
  const Tensor v = model.forward(g, g.constant(z), none, t).value();
  Graph g2;
  const Tensor vp = model.forward(g2, g2.constant(zp), none, t).value();
  for (std::size_t i = 0; i < n_pairs; ++i) {
    double num = 0.0, den = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      num += (v.at(i, j) - vp.at(i, j)) * (v.at(i, j) - vp.at(i, j));
      den += (z.at(i, j) - zp.at(i, j)) * (z.at(i, j) - zp.at(i, j));
    }
    if (den > 0.0) out.empirical = std::max(out.empirical, std::sqrt(num / den));
  }
  return out;
}

double BoundReport::compute_rhs(double delta_sq, double lipschitz_decoder_sq, double lipschitz_velocity,
                                double mismatch_integral) {
  return delta_sq + lipschitz_decoder_sq * std::exp(1.0 + 2.0 * lipschitz_velocity) * mismatch_integral;
}

bool BoundReport::consistent() const {
  return compute_rhs(delta_sq, lipschitz_decoder_sq, lipschitz_velocity, mismatch_integral) == rhs;
}

nlohmann::json BoundReport::to_json() const {
  return {{"lhs_w2_sq", lhs_w2_sq},
          {"lhs_w2_empirical", lhs_w2_empirical},
          {"lhs_noise_floor", lhs_noise_floor},
          {"lhs_std_error", lhs_std_error},
          {"delta_sq", delta_sq},
          {"lipschitz_decoder_sq", lipschitz_decoder_sq},
          {"lipschitz_velocity", lipschitz_velocity},
          {"mismatch_integral", mismatch_integral},
          {"mismatch_std_error", mismatch_std_error},
          {"rhs", rhs},
          {"satisfied", satisfied},
          {"n_samples", n_samples}};
}

BoundReport BoundReport::from_json(const nlohmann::json& j) {
  BoundReport r;
  r.lhs_w2_sq = j.at("lhs_w2_sq").get<double>();
  r.lhs_w2_empirical = j.at("lhs_w2_empirical").get<double>();
  r.lhs_noise_floor = j.at("lhs_noise_floor").get<double>();
  r.lhs_std_error = j.at("lhs_std_error").get<double>();
  r.delta_sq = j.at("delta_sq").get<double>();
  r.lipschitz_decoder_sq = j.at("lipschitz_decoder_sq").get<double>();
  r.lipschitz_velocity = j.at("lipschitz_velocity").get<double>();
  r.mismatch_integral = j.at("mismatch_integral").get<double>();
  r.mismatch_std_error = j.at("mismatch_std_error").get<double>();
  r.rhs = j.at("rhs").get<double>();
  r.satisfied = j.at("satisfied").get<bool>();
  r.n_samples = j.at("n_samples").get<std::size_t>();
  return r;
}

BoundReport check_bound(const std::function<Tensor(const Tensor&, double)>& vhat, double lipschitz_velocity,
                        const Codec& codec, const GaussianEndpointSpec& data_spec, const PathSpec& path,
                        const Tensor& data, const Tensor& generated, const Tensor& reference,
                        const BoundOptions& options) {
  data_spec.validate();
  if (!(lipschitz_velocity >= 0.0)) throw ContractError("check_bound: Lipschitz constant must be non-negative");
  if (generated.cols() != data_spec.dim()) throw DimensionError("check_bound: generated samples have wrong width");
  Rng rng(options.seed);
  BoundReport r;
  r.n_samples = generated.rows();

  const MomentFit fit = fit_isotropic_gaussian(generated);
  r.lhs_w2_sq = w2_gaussian(fit.mean, fit.sigma, data_spec.mean0, data_spec.sigma0);
  if (!reference.empty()) r.lhs_w2_empirical = w2_empirical(generated, reference);

  // Spread of the moment-fit estimator on exact p0 samples of the same size.
  if (options.null_draws >= 2) {
    Rng null_rng = rng.split("null");
    std::vector<double> null(options.null_draws);
    for (std::size_t k = 0; k < options.null_draws; ++k) {
      Tensor x = null_rng.normal_tensor(generated.rows(), data_spec.dim());
      for (std::size_t i = 0; i < x.rows(); ++i) {
        for (std::size_t j = 0; j < x.cols(); ++j) x.at(i, j) = data_spec.mean0[j] + data_spec.sigma0 * x.at(i, j);
      }
      const MomentFit f = fit_isotropic_gaussian(x);
      null[k] = w2_gaussian(f.mean, f.sigma, data_spec.mean0, data_spec.sigma0);
    }
    const double mean = std::accumulate(null.begin(), null.end(), 0.0) / static_cast<double>(null.size());
    double var = 0.0;
    for (double v : null) var += (v - mean) * (v - mean);
    r.lhs_std_error = std::sqrt(var / static_cast<double>(null.size() - 1));
    r.lhs_noise_floor = mean + 2.0 * r.lhs_std_error;
  }

  const CodecReport constants = measure_constants(codec, data);
  r.delta_sq = constants.recon_offset_max;
  r.lipschitz_decoder_sq = constants.lipschitz_decoder * constants.lipschitz_decoder;
  r.lipschitz_velocity = lipschitz_velocity;
  const MonteCarloEstimate mis =
      mismatch_integral(vhat, data_spec, path, codec, options.n_t, options.n_x, rng.split("mismatch"));
  r.mismatch_integral = mis.value;
  r.mismatch_std_error = mis.std_error;
  r.rhs = BoundReport::compute_rhs(r.delta_sq, r.lipschitz_decoder_sq, r.lipschitz_velocity, r.mismatch_integral);
  r.satisfied = r.lhs_w2_sq <= r.rhs || r.lhs_w2_sq <= r.lhs_noise_floor;
  return r;
}

BoundReport check_bound(const VelocityModel& model, const Codec& codec, const GaussianEndpointSpec& data_spec,
                        const PathSpec& path, const Tensor& data, const Tensor& generated, const Tensor& reference,
                        const BoundOptions& options) {
  return check_bound([&model](const Tensor& z, double t) { return model.velocity(z, Condition::none(), t); },
                     model.lipschitz_bound(), codec, data_spec, path, data, generated, reference, options);
}

}  // namespace lfm
