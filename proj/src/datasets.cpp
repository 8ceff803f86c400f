#include "lfm/datasets.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "lfm/errors.hpp"
#include "lfm/rng.hpp"

namespace lfm {

namespace {

std::vector<std::size_t> permutation(std::size_t n, Rng rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_index(i));
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

void require_positive(std::size_t v, const char* what) {
  if (v == 0) throw ContractError(std::string(what) + " must be positive");
}

}  // namespace

Dataset make_gaussian(std::size_t d, const Tensor& mean, double sigma, std::size_t n, std::uint64_t seed) {
  require_positive(d, "make_gaussian: d");
  require_positive(n, "make_gaussian: n");
  if (mean.size() != d) throw DimensionError("make_gaussian: mean has wrong length");
  if (sigma < 0.0) throw ContractError("make_gaussian: sigma must be non-negative");
  Rng rng = Rng(seed).split("gaussian");
  Dataset out;
  out.samples = Tensor::zeros(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) out.samples.at(i, j) = mean[j] + sigma * rng.normal();
  }
  out.spec = {{"kind", "gaussian"}, {"dim", d}, {"mean", mean.storage()}, {"sigma", sigma}, {"n", n}, {"seed", seed}};
  return out;
}

Dataset make_mixture_ring(std::size_t k, double radius, double sigma, std::size_t n, std::uint64_t seed) {
  require_positive(k, "make_mixture_ring: k");
  require_positive(n, "make_mixture_ring: n");
  Rng root(seed);
  Rng label_rng = root.split("labels");
  Rng noise_rng = root.split("noise");
  Dataset out;
  out.samples = Tensor::zeros(n, 2);
  out.labels.resize(n);
  out.num_classes = k;
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<std::size_t>(label_rng.uniform_index(k));
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(k);
    out.labels[i] = c;
    out.samples.at(i, 0) = radius * std::cos(angle) + sigma * noise_rng.normal();
    out.samples.at(i, 1) = radius * std::sin(angle) + sigma * noise_rng.normal();
  }
  out.spec = {{"kind", "ring"}, {"classes", k}, {"radius", radius}, {"sigma", sigma}, {"n", n}, {"seed", seed}};
  return out;
}

Dataset make_moons(std::size_t n, double noise, std::uint64_t seed) {
  require_positive(n, "make_moons: n");
  Rng root(seed);
  Rng label_rng = root.split("labels");
  Rng pos_rng = root.split("position");
  Rng noise_rng = root.split("noise");
  Dataset out;
  out.samples = Tensor::zeros(n, 2);
  out.labels.resize(n);
  out.num_classes = 2;
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<std::size_t>(label_rng.uniform_index(2));
    const double a = std::numbers::pi * pos_rng.uniform();
    double x = c == 0 ? std::cos(a) : 1.0 - std::cos(a);
    double y = c == 0 ? std::sin(a) : 0.5 - std::sin(a);
    out.labels[i] = c;
    out.samples.at(i, 0) = x + noise * noise_rng.normal();
    out.samples.at(i, 1) = y + noise * noise_rng.normal();
  }
  out.spec = {{"kind", "moons"}, {"noise", noise}, {"n", n}, {"seed", seed}};
  return out;
}

Dataset make_checkerboard(std::size_t n, std::uint64_t seed) {
  require_positive(n, "make_checkerboard: n");
  Rng rng = Rng(seed).split("checkerboard");
  Dataset out;
  out.samples = Tensor::zeros(n, 2);
  for (std::size_t i = 0; i < n; ++i) {
    // 8 black cells of side 2; pick one, then a uniform point inside it.
    const auto cell = static_cast<std::size_t>(rng.uniform_index(8));
    const std::size_t row = cell / 2;
    const std::size_t col = 2 * (cell % 2) + (row % 2);
    out.samples.at(i, 0) = -4.0 + 2.0 * static_cast<double>(col) + 2.0 * rng.uniform();
    out.samples.at(i, 1) = -4.0 + 2.0 * static_cast<double>(row) + 2.0 * rng.uniform();
  }
  out.spec = {{"kind", "checkerboard"}, {"n", n}, {"seed", seed}};
  return out;
}

Dataset make_masked(const Dataset& base, const MaskRule& rule, std::uint64_t seed) {
  Dataset out = base;
  const std::size_t n = base.size(), d = base.dim();
  Rng rng = Rng(seed).split("mask");
  out.masks = Tensor::zeros(n, d);
  const std::size_t half = (d + 1) / 2;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      double m = 0.0;
      switch (rule.kind) {
        case MaskRule::Kind::None: m = 0.0; break;
        case MaskRule::Kind::FirstHalf: m = j < half ? 1.0 : 0.0; break;
        case MaskRule::Kind::All: m = 1.0; break;
        case MaskRule::Kind::Random: m = rng.bernoulli(rule.density) ? 1.0 : 0.0; break;
      }
      out.masks.at(i, j) = m;
    }
  }
  out.masked_samples = base.samples;
  for (std::size_t i = 0; i < out.masked_samples.size(); ++i) out.masked_samples[i] *= 1.0 - out.masks[i];
  static const char* kNames[] = {"none", "first_half", "all", "random"};
  out.spec["mask"] = {{"rule", kNames[static_cast<int>(rule.kind)]}, {"density", rule.density}, {"seed", seed}};
  return out;
}

Tensor semantic_mode_center(const std::vector<std::size_t>& pattern, std::size_t classes, double spread) {
  Tensor c({1, pattern.size()});
  for (std::size_t g = 0; g < pattern.size(); ++g) {
    c[g] = classes > 1
               ? spread * (2.0 * static_cast<double>(pattern[g]) / static_cast<double>(classes - 1) - 1.0)
               : 0.0;
  }
  return c;
}

Dataset make_semantic_grid(std::size_t classes, std::size_t cells, std::size_t n, std::uint64_t seed,
                           double spread, double sigma) {
  require_positive(classes, "make_semantic_grid: classes");
  require_positive(cells, "make_semantic_grid: cells");
  require_positive(n, "make_semantic_grid: n");
  Rng root(seed);
  Rng map_rng = root.split("maps");
  Rng noise_rng = root.split("noise");
  Dataset out;
  out.samples = Tensor::zeros(n, cells);
  out.semantic_maps = Tensor::zeros(n, cells * classes);
  out.semantic_classes = classes;
  out.semantic_cells = cells;
  std::vector<std::size_t> pattern(cells);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t g = 0; g < cells; ++g) {
      pattern[g] = static_cast<std::size_t>(map_rng.uniform_index(classes));
      out.semantic_maps.at(i, g * classes + pattern[g]) = 1.0;
    }
    const Tensor center = semantic_mode_center(pattern, classes, spread);
    for (std::size_t g = 0; g < cells; ++g) out.samples.at(i, g) = center[g] + sigma * noise_rng.normal();
  }
  out.spec = {{"kind", "semantic_grid"}, {"classes", classes}, {"cells", cells}, {"n", n},
              {"seed", seed},            {"spread", spread},   {"sigma", sigma}};
  return out;
}

Dataset subset(const Dataset& data, const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw ContractError("subset: empty index list");
  auto take_rows = [&](const Tensor& t) {
    if (t.empty()) return Tensor();
    Tensor out({indices.size(), t.cols()});
    for (std::size_t i = 0; i < indices.size(); ++i) {
      if (indices[i] >= t.rows()) throw ContractError("subset: index out of range");
      for (std::size_t j = 0; j < t.cols(); ++j) out.at(i, j) = t.at(indices[i], j);
    }
    return out;
  };
  Dataset out;
  out.samples = take_rows(data.samples);
  out.masks = take_rows(data.masks);
  out.masked_samples = take_rows(data.masked_samples);
  out.semantic_maps = take_rows(data.semantic_maps);
  out.num_classes = data.num_classes;
  out.semantic_classes = data.semantic_classes;
  out.semantic_cells = data.semantic_cells;
  if (data.has_labels()) {
    for (auto i : indices) out.labels.push_back(data.labels[i]);
  }
  out.spec = data.spec;
  return out;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(std::size_t n, std::size_t n_first,
                                                                            std::uint64_t seed) {
  if (n_first > n) throw ContractError("split: n_first exceeds dataset size");
  auto perm = permutation(n, Rng(seed).split("split"));
  std::vector<std::size_t> a(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_first));
  std::vector<std::size_t> b(perm.begin() + static_cast<std::ptrdiff_t>(n_first), perm.end());
  return {a, b};
}

std::pair<Dataset, Dataset> split(const Dataset& data, std::size_t n_first, std::uint64_t seed) {
  auto [a, b] = split_indices(data.size(), n_first, seed);
  if (a.empty() || b.empty()) throw ContractError("split: both parts must be non-empty");
  return {subset(data, a), subset(data, b)};
}

Dataset regenerate(const nlohmann::json& spec) {
  const std::string kind = spec.at("kind").get<std::string>();
  const auto n = spec.at("n").get<std::size_t>();
  const auto seed = spec.at("seed").get<std::uint64_t>();
  Dataset out;
  if (kind == "gaussian") {
    const auto mean = spec.at("mean").get<std::vector<double>>();
    out = make_gaussian(spec.at("dim").get<std::size_t>(), Tensor::row(mean), spec.at("sigma").get<double>(), n,
                        seed);
  } else if (kind == "ring") {
    out = make_mixture_ring(spec.at("classes").get<std::size_t>(), spec.at("radius").get<double>(),
                            spec.at("sigma").get<double>(), n, seed);
  } else if (kind == "moons") {
    out = make_moons(n, spec.at("noise").get<double>(), seed);
  } else if (kind == "checkerboard") {
    out = make_checkerboard(n, seed);
  } else if (kind == "semantic_grid") {
    out = make_semantic_grid(spec.at("classes").get<std::size_t>(), spec.at("cells").get<std::size_t>(), n, seed,
                             spec.at("spread").get<double>(), spec.at("sigma").get<double>());
  } else {
    throw ConfigError("unknown dataset kind '" + kind + "'");
  }
  if (spec.contains("mask")) {
    const auto& m = spec.at("mask");
    const std::string rule = m.at("rule").get<std::string>();
    MaskRule r;
    if (rule == "none") r.kind = MaskRule::Kind::None;
    else if (rule == "first_half") r.kind = MaskRule::Kind::FirstHalf;
    else if (rule == "all") r.kind = MaskRule::Kind::All;
    else if (rule == "random") r.kind = MaskRule::Kind::Random;
    else throw ConfigError("unknown mask rule '" + rule + "'");
    r.density = m.at("density").get<double>();
    out = make_masked(out, r, m.at("seed").get<std::uint64_t>());
  }
  return out;
}

void export_csv(const Dataset& data, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  for (std::size_t j = 0; j < data.dim(); ++j) out << 'x' << j << ',';
  out << "label\n";
  out.precision(17);
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t j = 0; j < data.dim(); ++j) out << data.samples.at(i, j) << ',';
    if (data.has_labels()) out << data.labels[i];
    else out << -1;
    out << '\n';
  }
}

Dataset import_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("empty CSV: " + path.string());
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  const bool has_label = !header.empty() && header.back() == "label";
  const std::size_t d = header.size() - (has_label ? 1 : 0);
  if (d == 0) throw ConfigError("CSV has no coordinate columns: " + path.string());
  std::vector<double> values;
  std::vector<long long> labels;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t col = 0;
    while (std::getline(ss, cell, ',')) {
      if (col < d) values.push_back(std::stod(cell));
      else labels.push_back(std::stoll(cell));
      ++col;
    }
    if (col != header.size()) throw ConfigError("ragged CSV row in " + path.string());
  }
  Dataset out;
  const std::size_t n = values.size() / d;
  if (n == 0) throw ConfigError("CSV has no rows: " + path.string());
  out.samples = Tensor({n, d}, std::move(values));
  if (has_label && !labels.empty() && labels.front() >= 0) {
    std::size_t k = 0;
    for (auto l : labels) {
      if (l < 0) throw ConfigError("mixed labeled/unlabeled rows in " + path.string());
      out.labels.push_back(static_cast<std::size_t>(l));
      k = std::max(k, static_cast<std::size_t>(l) + 1);
    }
    out.num_classes = k;
  }
  return out;
}

}  // namespace lfm
