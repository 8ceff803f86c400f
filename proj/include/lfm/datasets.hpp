#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lfm/tensor.hpp"

namespace lfm {

struct Dataset {
  Tensor samples;  // [n x d]
  // Empty when unlabeled; otherwise one id in [0, num_classes) per sample.
  std::vector<std::size_t> labels;
  std::size_t num_classes = 0;
  // Coordinate masks (1 = missing) and the visible part samples * (1 - mask).
  Tensor masks;
  Tensor masked_samples;
  // One-hot grids, [n x cells * classes], cell-major.
  Tensor semantic_maps;
  std::size_t semantic_classes = 0;
  std::size_t semantic_cells = 0;
  // Generator description, enough to regenerate the data bit-for-bit.
  nlohmann::json spec = nlohmann::json::object();

  std::size_t size() const { return samples.rows(); }
  std::size_t dim() const { return samples.cols(); }
  bool has_labels() const { return !labels.empty(); }
  bool has_masks() const { return !masks.empty(); }
  bool has_semantic_maps() const { return !semantic_maps.empty(); }
};

Dataset make_gaussian(std::size_t d, const Tensor& mean, double sigma, std::size_t n, std::uint64_t seed);
// k modes equally spaced on a circle (the first at angle 0); label = mode.
Dataset make_mixture_ring(std::size_t k, double radius, double sigma, std::size_t n, std::uint64_t seed);
Dataset make_moons(std::size_t n, double noise, std::uint64_t seed);
// Uniform over the black cells of a 4x4 checkerboard on [-4, 4]^2.
Dataset make_checkerboard(std::size_t n, std::uint64_t seed);

struct MaskRule {
  enum class Kind { None, FirstHalf, All, Random };
  Kind kind = Kind::FirstHalf;
  // Bernoulli probability of masking each coordinate for Kind::Random.
  double density = 0.5;
};

// Attaches a binary coordinate mask to every sample.
Dataset make_masked(const Dataset& base, const MaskRule& rule, std::uint64_t seed);

// Samples in R^cells whose coordinate g is centred at the level chosen by the
// class of grid cell g: level(c) = spread * (2c / (classes - 1) - 1), or 0
// for a single class. Maps hold the one-hot cell classes.
Dataset make_semantic_grid(std::size_t classes, std::size_t cells, std::size_t n, std::uint64_t seed,
                           double spread = 3.0, double sigma = 0.3);
// Centre dictated by a map pattern (one class id per cell).
Tensor semantic_mode_center(const std::vector<std::size_t>& pattern, std::size_t classes, double spread);

Dataset subset(const Dataset& data, const std::vector<std::size_t>& indices);
// Random partition into (first `n_first` shuffled samples, the rest).
std::pair<Dataset, Dataset> split(const Dataset& data, std::size_t n_first, std::uint64_t seed);
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n, std::size_t n_first,
                                                                            std::uint64_t seed);

// Regenerates a dataset from its `spec` field.
Dataset regenerate(const nlohmann::json& spec);

// CSV with header x0..x{d-1},label (label -1 when unlabeled).
void export_csv(const Dataset& data, const std::filesystem::path& path);
// Reads the same CSV layout back; the label column is optional.
Dataset import_csv(const std::filesystem::path& path);

}  // namespace lfm
