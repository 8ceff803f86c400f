#include "lfm/linalg.hpp"

#include <cmath>

#include "lfm/errors.hpp"
#include "lfm/rng.hpp"

namespace lfm {

double spectral_norm(const Tensor& w, std::size_t max_iters, double tol, std::uint64_t seed) {
  if (w.rank() != 2) throw DimensionError("spectral_norm: expected a 2-D tensor, got " + shape_to_string(w.shape()));
  if (squared_norm(w) == 0.0) return 0.0;

  const std::size_t n = w.cols();
  Rng rng(seed);
  Tensor v({n, 1});
  for (double& x : v.storage()) x = rng.normal();
  double nv = std::sqrt(squared_norm(v));
  for (double& x : v.storage()) x /= nv;

  double sigma = 0.0;
  for (std::size_t it = 0; it < max_iters; ++it) {
    const Tensor wv = kernels::matmul(w, v);
    const double next = std::sqrt(squared_norm(wv));
    Tensor u = kernels::matmul_tn(w, wv);
    const double nu = std::sqrt(squared_norm(u));
    if (nu == 0.0) return next;
    for (double& x : u.storage()) x /= nu;
    v = std::move(u);
    if (std::abs(next - sigma) <= tol * std::max(next, 1.0)) {
      sigma = next;
      break;
    }
    sigma = next;
  }
  return std::sqrt(squared_norm(kernels::matmul(w, v)));
}

}  // namespace lfm
