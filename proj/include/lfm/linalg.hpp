#pragma once

#include <cstddef>
#include <cstdint>

#include "lfm/tensor.hpp"

namespace lfm {

// Largest singular value of a rank-2 tensor by power iteration on W^T W.
// The start vector comes from a fixed seed, so the result is deterministic.
// Returns 0 for the zero matrix.
double spectral_norm(const Tensor& w, std::size_t max_iters = 5000, double tol = 1e-14,
                     std::uint64_t seed = 0x5eed);

}  // namespace lfm
