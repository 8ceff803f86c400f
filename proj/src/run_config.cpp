#include "lfm/run_config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "lfm/errors.hpp"

namespace lfm {

namespace {

using nlohmann::json;

bool is_integer(const json& j) { return j.is_number_integer() || j.is_number_unsigned(); }

void check_against(const json& schema, const json& value, const std::string& path) {
  if (schema.is_object()) {
    if (!value.is_object()) throw ConfigError(path + ": expected an object");
    for (const auto& [key, v] : value.items()) {
      if (!schema.contains(key)) throw ConfigError(path + "/" + key + ": unknown key");
      check_against(schema.at(key), v, path + "/" + key);
    }
    return;
  }
  if (schema.is_null()) {
    if (!value.is_null() && !value.is_number()) throw ConfigError(path + ": expected a number or null");
  } else if (schema.is_boolean()) {
    if (!value.is_boolean()) throw ConfigError(path + ": expected a boolean");
  } else if (schema.is_string()) {
    if (!value.is_string()) throw ConfigError(path + ": expected a string");
  } else if (schema.is_array()) {
    if (!value.is_array()) throw ConfigError(path + ": expected an array");
  } else if (schema.is_number_unsigned()) {
    if (!is_integer(value) || value.get<std::int64_t>() < 0) {
      throw ConfigError(path + ": expected a non-negative integer");
    }
  } else if (schema.is_number_integer()) {
    if (!is_integer(value)) throw ConfigError(path + ": expected an integer");
  } else if (schema.is_number()) {
    if (!value.is_number()) throw ConfigError(path + ": expected a number");
  }
}

void merge_into(json& base, const json& over) {
  for (const auto& [key, v] : over.items()) {
    if (v.is_object() && base.contains(key) && base[key].is_object()) {
      merge_into(base[key], v);
    } else {
      base[key] = v;
    }
  }
}

template <typename T>
std::vector<T> array_of(const json& j, const std::string& path) {
  try {
    return j.get<std::vector<T>>();
  } catch (const json::exception&) {
    throw ConfigError(path + ": array has elements of the wrong type");
  }
}

std::size_t positive(const json& j, const std::string& path) {
  const auto v = j.get<std::size_t>();
  if (v == 0) throw ConfigError(path + ": must be positive");
  return v;
}

double sigma_default(const std::string& kind) {
  if (kind == "gaussian") return 1.0;
  return 0.3;
}

}  // namespace

json default_config() {
  return json::parse(R"({
    "schema_version": 1,
    "seed": 0,
    "output_dir": "",
    "dataset": {
      "kind": "ring",
      "n": 10000,
      "holdout": 2000,
      "dim": 2,
      "mean": [],
      "sigma": null,
      "k": 8,
      "radius": 4.0,
      "noise": 0.1,
      "classes": 4,
      "cells": 2,
      "spread": 3.0,
      "mask": {"kind": "none", "density": 0.5}
    },
    "codec": {
      "kind": "identity",
      "latent_dim": 0,
      "hidden": [64, 64],
      "activation": "silu",
      "kl_weight": 0.001,
      "fixed_scale": 0.0,
      "lr": 0.003,
      "epochs": 200,
      "batch_size": 128
    },
    "model": {
      "hidden": [256, 256, 256, 256],
      "activation": "silu",
      "time_embed_dim": 64,
      "max_frequency": 1000.0,
      "conditioning": "none",
      "label_embed_dim": 16,
      "adapter_hidden": 16,
      "zero_init_output": true
    },
    "train": {
      "lr": 0.001,
      "lr_schedule": "constant",
      "lr_min": 0.0,
      "betas": [0.9, 0.999],
      "weight_decay": 0.0,
      "batch_size": 256,
      "epochs": 100,
      "p_u": 0.1,
      "path": {"kind": "constant_velocity", "beta_min": 0.1, "beta_max": 20.0},
      "checkpoint_every": 0
    },
    "solver": {
      "kind": "euler",
      "steps": 100,
      "rtol": 1e-5,
      "atol": 1e-5,
      "max_nfe": 100000,
      "record_trajectory": false,
      "n_samples": 1000
    },
    "guidance": {
      "mode": "none",
      "gamma": 1.0,
      "label": -1,
      "classifier": {
        "hidden": [64, 64],
        "time_embed_dim": 16,
        "max_frequency": 100.0,
        "lr": 0.003,
        "epochs": 50,
        "batch_size": 256
      }
    },
    "metrics": {
      "record_timing": true,
      "eval_max_points": 2048,
      "mmd_permutations": 200,
      "bound": {"n_samples": 2000, "n_t": 64, "n_x": 256, "null_draws": 100, "empirical_check": true},
      "bench": {
        "euler_steps": [5, 10, 20, 50, 100],
        "heun_steps": [3, 5, 10, 25, 50],
        "tolerances": [1e-2, 1e-3, 1e-4, 1e-5],
        "n_samples": 1000
      }
    }
  })");
}

json resolve_config(const json& user) {
  if (!user.is_object()) throw ConfigError("/: config must be a JSON object");
  if (!user.contains("schema_version")) throw ConfigError("/schema_version: missing required key");
  if (!is_integer(user.at("schema_version")) || user.at("schema_version").get<std::int64_t>() != kSchemaVersion) {
    throw ConfigError("/schema_version: unsupported version (expected " + std::to_string(kSchemaVersion) + ")");
  }
  if (!user.contains("dataset")) throw ConfigError("/dataset: missing required section");
  const json defaults = default_config();
  check_against(defaults, user, "");
  json resolved = defaults;
  merge_into(resolved, user);

  json& ds = resolved["dataset"];
  const std::string kind = ds.at("kind").get<std::string>();
  if (kind != "gaussian" && kind != "ring" && kind != "moons" && kind != "checkerboard" && kind != "semantic_grid") {
    throw ConfigError("/dataset/kind: unknown dataset '" + kind + "'");
  }
  if (ds.at("sigma").is_null()) ds["sigma"] = sigma_default(kind);
  if (kind == "gaussian" && ds.at("mean").empty()) ds["mean"] = std::vector<double>(ds.at("dim").get<std::size_t>(), 0.0);
  if (kind == "ring" || kind == "moons" || kind == "checkerboard") ds["dim"] = 2;
  if (kind == "semantic_grid") ds["dim"] = ds.at("cells");
  positive(ds.at("n"), "/dataset/n");
  positive(ds.at("dim"), "/dataset/dim");

  // Exercise every typed view once so that errors surface before any work.
  solver_spec(resolved);
  train_config(resolved);
  path_spec(resolved);
  codec_train_config(resolved);
  const std::string gmode = resolved.at("guidance").at("mode").get<std::string>();
  if (gmode != "none" && gmode != "classifier_free" && gmode != "classifier_gradient") {
    throw ConfigError("/guidance/mode: expected none, classifier_free or classifier_gradient");
  }
  if (!(resolved.at("guidance").at("gamma").get<double>() >= 0.0)) throw ConfigError("/guidance/gamma: must be >= 0");
  codec_kind_from_string(resolved.at("codec").at("kind").get<std::string>() == "vae"
                             ? "gaussian_vae"
                             : resolved.at("codec").at("kind").get<std::string>());
  return resolved;
}

void apply_override(json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;
  }
  json* node = &config;
  std::stringstream ss(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) {
    if (part.empty()) throw ConfigError("override '" + assignment + "' has an empty path component");
    parts.push_back(part);
  }
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    json& next = (*node)[parts[i]];
    if (next.is_null()) next = json::object();
    if (!next.is_object()) throw ConfigError("override '" + assignment + "': /" + parts[i] + " is not a section");
    node = &next;
  }
  (*node)[parts.back()] = std::move(value);
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

json load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  json user = read_json_file(path);
  if (!user.is_object()) throw ConfigError("/: config must be a JSON object");
  for (const auto& o : overrides) apply_override(user, o);
  return resolve_config(user);
}

std::filesystem::path output_dir_of(const json& resolved) {
  std::string dir = resolved.at("output_dir").get<std::string>();
  if (dir.empty()) {
    if (const char* env = std::getenv("LFM_OUTPUT_DIR")) dir = env;
  }
  if (dir.empty()) throw ConfigError("/output_dir: not set and LFM_OUTPUT_DIR is empty");
  return dir;
}

std::uint64_t stream_seed(std::uint64_t seed, const std::string& name) { return Rng(seed).split(name).next_u64(); }

DataSplit build_data(const json& resolved) {
  const json& ds = resolved.at("dataset");
  const auto seed = resolved.at("seed").get<std::uint64_t>();
  const std::string kind = ds.at("kind").get<std::string>();
  const std::size_t n = ds.at("n").get<std::size_t>();
  const std::size_t holdout = ds.at("holdout").get<std::size_t>();
  const std::size_t total = n + holdout;
  const std::uint64_t data_seed = stream_seed(seed, "dataset");
  const double sigma = ds.at("sigma").get<double>();
  Dataset full;
  if (kind == "gaussian") {
    const auto mean = array_of<double>(ds.at("mean"), "/dataset/mean");
    if (mean.size() != ds.at("dim").get<std::size_t>()) throw ConfigError("/dataset/mean: length must equal dim");
    full = make_gaussian(mean.size(), Tensor::row(mean), sigma, total, data_seed);
  } else if (kind == "ring") {
    full = make_mixture_ring(positive(ds.at("k"), "/dataset/k"), ds.at("radius").get<double>(), sigma, total,
                             data_seed);
  } else if (kind == "moons") {
    full = make_moons(total, ds.at("noise").get<double>(), data_seed);
  } else if (kind == "checkerboard") {
    full = make_checkerboard(total, data_seed);
  } else {
    full = make_semantic_grid(positive(ds.at("classes"), "/dataset/classes"), positive(ds.at("cells"), "/dataset/cells"),
                              total, data_seed, ds.at("spread").get<double>(), sigma);
  }
  const json& mask = ds.at("mask");
  const std::string mkind = mask.at("kind").get<std::string>();
  if (mkind != "none") {
    MaskRule rule;
    if (mkind == "first_half") {
      rule.kind = MaskRule::Kind::FirstHalf;
    } else if (mkind == "all") {
      rule.kind = MaskRule::Kind::All;
    } else if (mkind == "random") {
      rule.kind = MaskRule::Kind::Random;
    } else if (mkind == "zero") {
      rule.kind = MaskRule::Kind::None;
    } else {
      throw ConfigError("/dataset/mask/kind: expected none, zero, first_half, all or random");
    }
    rule.density = mask.at("density").get<double>();
    full = make_masked(full, rule, stream_seed(seed, "mask"));
  }
  if (holdout == 0) return {full, Dataset{}};
  auto [train, held] = split(full, n, stream_seed(seed, "split"));
  return {std::move(train), std::move(held)};
}

GaussianEndpointSpec gaussian_spec_of(const json& resolved) {
  const json& ds = resolved.at("dataset");
  if (ds.at("kind").get<std::string>() != "gaussian") {
    throw ConfigError("/dataset/kind: the bound check needs Gaussian data (the oracle velocity is only known there)");
  }
  GaussianEndpointSpec spec{Tensor::row(array_of<double>(ds.at("mean"), "/dataset/mean")),
                            ds.at("sigma").get<double>()};
  spec.validate();
  return spec;
}

Codec build_codec(const json& resolved, std::size_t data_dim) {
  const json& c = resolved.at("codec");
  const std::string kind = c.at("kind").get<std::string>();
  std::size_t latent = c.at("latent_dim").get<std::size_t>();
  if (latent == 0) latent = data_dim;
  Rng rng(stream_seed(resolved.at("seed").get<std::uint64_t>(), "codec_init"));
  if (kind == "identity") {
    if (latent != data_dim) throw ConfigError("/codec/latent_dim: the identity codec keeps the data dimension");
    return Codec::identity(data_dim);
  }
  if (kind == "linear") {
    const double scale = c.at("fixed_scale").get<double>();
    if (scale < 0.0) throw ConfigError("/codec/fixed_scale: must be >= 0");
    if (scale > 0.0) {
      if (latent != data_dim) throw ConfigError("/codec/fixed_scale: needs latent_dim equal to the data dimension");
      return Codec::linear_fixed((1.0 / scale) * Tensor::identity(data_dim), Tensor({1, data_dim}),
                                 scale * Tensor::identity(data_dim), Tensor({1, data_dim}));
    }
    return Codec::linear(data_dim, latent, rng);
  }
  if (kind == "vae") {
    return Codec::gaussian_vae(data_dim, latent, array_of<std::size_t>(c.at("hidden"), "/codec/hidden"),
                               c.at("kl_weight").get<double>(), rng,
                               activation_from_string(c.at("activation").get<std::string>()));
  }
  throw ConfigError("/codec/kind: expected identity, linear or vae");
}

bool codec_needs_training(const json& resolved) {
  const json& c = resolved.at("codec");
  const std::string kind = c.at("kind").get<std::string>();
  return kind == "vae" || (kind == "linear" && c.at("fixed_scale").get<double>() == 0.0);
}

CodecTrainConfig codec_train_config(const json& resolved) {
  const json& c = resolved.at("codec");
  CodecTrainConfig tc;
  tc.lr = c.at("lr").get<double>();
  tc.epochs = c.at("epochs").get<std::size_t>();
  tc.batch_size = positive(c.at("batch_size"), "/codec/batch_size");
  return tc;
}

VelocityConfig velocity_config(const json& resolved, const Dataset& data, std::size_t latent_dim) {
  const json& m = resolved.at("model");
  VelocityConfig vc;
  vc.latent_dim = latent_dim;
  vc.hidden = array_of<std::size_t>(m.at("hidden"), "/model/hidden");
  vc.activation = activation_from_string(m.at("activation").get<std::string>());
  vc.time_embed_dim = m.at("time_embed_dim").get<std::size_t>();
  vc.max_frequency = m.at("max_frequency").get<double>();
  vc.label_embed_dim = m.at("label_embed_dim").get<std::size_t>();
  vc.adapter_hidden = m.at("adapter_hidden").get<std::size_t>();
  vc.zero_init_output = m.at("zero_init_output").get<bool>();
  const std::string cond = m.at("conditioning").get<std::string>();
  if (cond == "label") {
    if (!data.has_labels()) throw ConfigError("/model/conditioning: label conditioning needs a labeled dataset");
    vc.num_classes = data.num_classes;
  } else if (cond == "mask") {
    if (!data.has_masks()) throw ConfigError("/model/conditioning: mask conditioning needs /dataset/mask");
    vc.input_mode = InputMode::ConcatCondition;
  } else if (cond == "semantic") {
    if (!data.has_semantic_maps()) throw ConfigError("/model/conditioning: semantic conditioning needs semantic_grid data");
    vc.input_mode = InputMode::ConcatCondition;
    vc.semantic_classes = data.semantic_classes;
    vc.semantic_cells = data.semantic_cells;
  } else if (cond != "none") {
    throw ConfigError("/model/conditioning: expected none, label, mask or semantic");
  }
  try {
    vc.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("/model: ") + e.what());
  }
  return vc;
}

PathSpec path_spec(const json& resolved) {
  const json& p = resolved.at("train").at("path");
  const std::string kind = p.at("kind").get<std::string>();
  PathSpec spec;
  if (kind == "variance_preserving") {
    spec = PathSpec::variance_preserving(p.at("beta_min").get<double>(), p.at("beta_max").get<double>());
  } else if (kind != "constant_velocity") {
    throw ConfigError("/train/path/kind: expected constant_velocity or variance_preserving");
  }
  try {
    spec.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("/train/path: ") + e.what());
  }
  return spec;
}

TrainConfig train_config(const json& resolved) {
  const json& t = resolved.at("train");
  TrainConfig tc;
  tc.lr = t.at("lr").get<double>();
  tc.lr_schedule = t.at("lr_schedule").get<std::string>();
  tc.lr_min = t.at("lr_min").get<double>();
  const auto betas = array_of<double>(t.at("betas"), "/train/betas");
  if (betas.size() != 2) throw ConfigError("/train/betas: expected two values");
  tc.beta1 = betas[0];
  tc.beta2 = betas[1];
  tc.weight_decay = t.at("weight_decay").get<double>();
  tc.batch_size = t.at("batch_size").get<std::size_t>();
  tc.epochs = t.at("epochs").get<std::size_t>();
  tc.p_u = t.at("p_u").get<double>();
  tc.path = path_spec(resolved);
  tc.seed = stream_seed(resolved.at("seed").get<std::uint64_t>(), "train");
  tc.checkpoint_every = t.at("checkpoint_every").get<std::size_t>();
  tc.record_timing = resolved.at("metrics").at("record_timing").get<bool>();
  try {
    tc.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("/train: ") + e.what());
  }
  return tc;
}

ClassifierConfig classifier_config(const json& resolved, std::size_t latent_dim, std::size_t classes) {
  const json& c = resolved.at("guidance").at("classifier");
  ClassifierConfig cc;
  cc.input_dim = latent_dim;
  cc.num_classes = classes;
  cc.hidden = array_of<std::size_t>(c.at("hidden"), "/guidance/classifier/hidden");
  cc.time_embed_dim = c.at("time_embed_dim").get<std::size_t>();
  cc.max_frequency = c.at("max_frequency").get<double>();
  return cc;
}

ClassifierTrainConfig classifier_train_config(const json& resolved) {
  const json& c = resolved.at("guidance").at("classifier");
  ClassifierTrainConfig tc;
  tc.lr = c.at("lr").get<double>();
  tc.epochs = c.at("epochs").get<std::size_t>();
  tc.batch_size = positive(c.at("batch_size"), "/guidance/classifier/batch_size");
  tc.path = path_spec(resolved);
  tc.seed = stream_seed(resolved.at("seed").get<std::uint64_t>(), "classifier");
  return tc;
}

SolverSpec solver_spec(const json& resolved) {
  const json& s = resolved.at("solver");
  SolverSpec spec;
  spec.kind = solver_kind_from_string(s.at("kind").get<std::string>());
  spec.steps = s.at("steps").get<std::size_t>();
  spec.rtol = s.at("rtol").get<double>();
  spec.atol = s.at("atol").get<double>();
  spec.max_nfe = s.at("max_nfe").get<std::size_t>();
  spec.record_trajectory = s.at("record_trajectory").get<bool>();
  try {
    spec.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("/solver: ") + e.what());
  }
  return spec;
}

}  // namespace lfm
