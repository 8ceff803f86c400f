#include "lfm/velocity.hpp"

#include <cmath>
#include <utility>

#include "lfm/errors.hpp"

namespace lfm {

double frequency_ratio(std::size_t dim, double max_frequency) {
  const std::size_t pairs = dim / 2;
  if (pairs <= 1) return 1.0;
  return std::pow(max_frequency, 1.0 / static_cast<double>(pairs - 1));
}

Tensor time_embed(double t, std::size_t dim, double ratio) {
  return time_features(Tensor::scalar(t), dim, ratio);
}

Tensor time_features(const Tensor& t, std::size_t dim, double ratio) {
  if (dim == 0 || dim % 2 != 0) throw ContractError("time embedding dimension must be even and positive");
  const std::size_t b = t.size();
  Tensor out({b, dim});
  for (std::size_t k = 0; k < dim / 2; ++k) {
    const double w = std::pow(ratio, static_cast<double>(k));
    for (std::size_t i = 0; i < b; ++i) {
      out.at(i, 2 * k) = std::sin(w * t[i]);
      out.at(i, 2 * k + 1) = std::cos(w * t[i]);
    }
  }
  return out;
}

Tensor resize_mask(const Tensor& mask, std::size_t width) {
  const std::size_t d = mask.cols();
  if (d == width) return mask;
  Tensor out({mask.rows(), width});
  for (std::size_t i = 0; i < mask.rows(); ++i) {
    for (std::size_t j = 0; j < width; ++j) out.at(i, j) = mask.at(i, (j * d) / width);
  }
  return out;
}

Condition Condition::with_label(std::size_t id) {
  Condition c;
  c.kind = Kind::Label;
  c.label = id;
  return c;
}

Condition Condition::masked(Tensor masked_latent, Tensor mask) {
  if (masked_latent.shape() != mask.shape()) throw DimensionError("masked condition: z_m and mask shapes differ");
  for (double v : mask.data()) {
    if (v != 0.0 && v != 1.0) throw ContractError("masked condition: mask entries must be 0 or 1");
  }
  Condition c;
  c.kind = Kind::Masked;
  c.masked_latent = std::move(masked_latent);
  c.mask = std::move(mask);
  return c;
}

Condition Condition::semantic(Tensor onehot_map) {
  Condition c;
  c.kind = Kind::Semantic;
  c.semantic_map = std::move(onehot_map);
  return c;
}

std::size_t VelocityConfig::trunk_input_dim() const {
  std::size_t n = latent_dim + time_embed_dim;
  if (uses_labels()) n += label_embed_dim;
  if (uses_mask()) n += 2 * latent_dim;
  if (uses_semantic()) n += latent_dim;
  return n;
}

void VelocityConfig::validate() const {
  if (latent_dim == 0) throw ConfigError("model: latent_dim must be positive");
  if (time_embed_dim == 0 || time_embed_dim % 2 != 0) throw ConfigError("model: time_embed_dim must be even");
  if (max_frequency < 1.0) throw ConfigError("model: max_frequency must be >= 1");
  if (uses_labels() && input_mode != InputMode::Plain) {
    throw ConfigError("model: label conditioning requires the plain input mode");
  }
  if (uses_labels() && label_embed_dim == 0) throw ConfigError("model: label_embed_dim must be positive");
  if (uses_semantic()) {
    if (semantic_cells == 0 || latent_dim % semantic_cells != 0) {
      throw ConfigError("model: semantic_cells must divide latent_dim");
    }
    if (adapter_hidden == 0) throw ConfigError("model: adapter_hidden must be positive");
  }
}

nlohmann::json VelocityConfig::to_json() const {
  return {{"latent_dim", latent_dim},
          {"hidden", hidden},
          {"activation", to_string(activation)},
          {"time_embed_dim", time_embed_dim},
          {"max_frequency", max_frequency},
          {"num_classes", num_classes},
          {"label_embed_dim", label_embed_dim},
          {"input_mode", input_mode == InputMode::Plain ? "plain" : "concat_condition"},
          {"semantic_classes", semantic_classes},
          {"semantic_cells", semantic_cells},
          {"adapter_hidden", adapter_hidden},
          {"zero_init_output", zero_init_output}};
}

VelocityConfig VelocityConfig::from_json(const nlohmann::json& j) {
  VelocityConfig c;
  c.latent_dim = j.at("latent_dim").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::vector<std::size_t>>();
  c.activation = activation_from_string(j.at("activation").get<std::string>());
  c.time_embed_dim = j.at("time_embed_dim").get<std::size_t>();
  c.max_frequency = j.at("max_frequency").get<double>();
  c.num_classes = j.at("num_classes").get<std::size_t>();
  c.label_embed_dim = j.at("label_embed_dim").get<std::size_t>();
  c.input_mode = j.at("input_mode").get<std::string>() == "plain" ? InputMode::Plain : InputMode::ConcatCondition;
  c.semantic_classes = j.at("semantic_classes").get<std::size_t>();
  c.semantic_cells = j.at("semantic_cells").get<std::size_t>();
  c.adapter_hidden = j.at("adapter_hidden").get<std::size_t>();
  c.zero_init_output = j.at("zero_init_output").get<bool>();
  return c;
}

VelocityModel::VelocityModel(VelocityConfig config, Rng& rng) : config_(std::move(config)) {
  config_.validate();
  ratio_ = frequency_ratio(config_.time_embed_dim, config_.max_frequency);
  std::vector<std::size_t> widths{config_.trunk_input_dim()};
  widths.insert(widths.end(), config_.hidden.begin(), config_.hidden.end());
  widths.push_back(config_.latent_dim);
  Rng trunk_rng = rng.split("trunk");
  trunk_ = Mlp("trunk", widths, config_.activation, trunk_rng);
  if (config_.zero_init_output) trunk_.layers().back().zero_init();
  if (config_.uses_labels()) {
    Rng label_rng = rng.split("label_embed");
    label_table_ = Parameter("label_embed", label_rng.normal_tensor(config_.num_classes + 1, config_.label_embed_dim));
  }
  if (config_.uses_semantic()) {
    Rng adapter_rng = rng.split("adapter");
    adapter_ = Mlp("adapter",
                   {config_.semantic_classes, config_.adapter_hidden, config_.latent_dim / config_.semantic_cells},
                   config_.activation, adapter_rng);
  }
}

Var VelocityModel::param(Graph& g, const Parameter& p, bool trainable) const {
  return trainable ? g.param(const_cast<Parameter&>(p), true) : g.param(p);
}

void VelocityModel::check_condition(const Condition& c) const {
  switch (c.kind) {
    case Condition::Kind::None: return;
    case Condition::Kind::Label:
      if (!config_.uses_labels()) throw ConfigError("label condition given to a model without label embedding");
      if (c.label > config_.num_classes) {
        throw ContractError("label " + std::to_string(c.label) + " outside [0, " +
                            std::to_string(config_.num_classes) + "]");
      }
      return;
    case Condition::Kind::Masked:
      if (!config_.uses_mask()) throw ConfigError("masked condition given to a model without mask input");
      if (c.masked_latent.cols() != config_.latent_dim || c.mask.cols() != config_.latent_dim) {
        throw DimensionError("masked condition must have latent width");
      }
      return;
    case Condition::Kind::Semantic:
      if (!config_.uses_semantic()) throw ConfigError("semantic condition given to a model without an adapter");
      if (c.semantic_map.cols() != config_.semantic_cells * config_.semantic_classes) {
        throw DimensionError("semantic map has the wrong width");
      }
      return;
  }
}

Var VelocityModel::condition_features(Graph& g, const std::vector<Condition>& conditions, std::size_t batch,
                                      bool trainable) const {
  if (conditions.size() != batch && conditions.size() != 1) {
    throw DimensionError("conditions: expected 1 or " + std::to_string(batch) + " entries");
  }
  for (const auto& c : conditions) check_condition(c);
  auto at = [&](std::size_t i) -> const Condition& { return conditions.size() == 1 ? conditions[0] : conditions[i]; };
  const std::size_t d = config_.latent_dim;

  if (config_.uses_labels()) {
    Tensor onehot({batch, config_.num_classes + 1});
    for (std::size_t i = 0; i < batch; ++i) {
      const Condition& c = at(i);
      const std::size_t id = c.kind == Condition::Kind::Label ? c.label : config_.num_classes;
      onehot.at(i, id) = 1.0;
    }
    return ad::matmul(g.constant(std::move(onehot)), param(g, label_table_, trainable));
  }
  if (config_.uses_mask()) {
    Tensor feats({batch, 2 * d});
    for (std::size_t i = 0; i < batch; ++i) {
      const Condition& c = at(i);
      if (c.kind != Condition::Kind::Masked) continue;  // null condition: zeros
      for (std::size_t j = 0; j < d; ++j) {
        feats.at(i, j) = c.masked_latent[j];
        feats.at(i, d + j) = c.mask[j];
      }
    }
    return g.constant(std::move(feats));
  }
  if (config_.uses_semantic()) {
    const std::size_t classes = config_.semantic_classes, cells = config_.semantic_cells;
    Tensor maps({batch, cells * classes});
    for (std::size_t i = 0; i < batch; ++i) {
      const Condition& c = at(i);
      if (c.kind != Condition::Kind::Semantic) continue;
      for (std::size_t j = 0; j < cells * classes; ++j) maps.at(i, j) = c.semantic_map[j];
    }
    Var map = g.constant(std::move(maps));
    std::vector<Var> per_cell;
    for (std::size_t cell = 0; cell < cells; ++cell) {
      Var x = ad::slice_cols(map, cell * classes, (cell + 1) * classes);
      const auto& layers = adapter_.layers();
      for (std::size_t l = 0; l < layers.size(); ++l) {
        x = ad::add(ad::matmul(x, param(g, layers[l].weight, trainable)), param(g, layers[l].bias, trainable));
        if (l + 1 < layers.size()) x = apply_activation(adapter_.activation(), x);
      }
      per_cell.push_back(x);
    }
    return per_cell.size() == 1 ? per_cell.front() : ad::concat_cols(per_cell);
  }
  throw ContractError("condition_features on an unconditional model");
}

Var VelocityModel::forward_impl(Graph& g, Var z, const std::vector<Condition>& conditions, const Tensor& t,
                                bool trainable) const {
  const Tensor& zv = z.value();
  if (zv.rank() != 2 || zv.cols() != config_.latent_dim) {
    throw DimensionError("velocity model: expected z of width " + std::to_string(config_.latent_dim) + ", got " +
                         shape_to_string(zv.shape()));
  }
  const std::size_t batch = zv.rows();
  if (t.size() != batch) throw DimensionError("velocity model: need one time per row");
  Var temb = g.constant(time_features(t, config_.time_embed_dim, ratio_));

  std::vector<Var> parts{z};
  if (config_.uses_labels()) {
    parts.push_back(temb);
    parts.push_back(condition_features(g, conditions, batch, trainable));
  } else if (config_.input_mode == InputMode::ConcatCondition) {
    parts.push_back(condition_features(g, conditions, batch, trainable));
    parts.push_back(temb);
  } else {
    for (const auto& c : conditions) check_condition(c);
    parts.push_back(temb);
  }
  Var x = ad::concat_cols(parts);
  const auto& layers = trunk_.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    x = ad::add(ad::matmul(x, param(g, layers[l].weight, trainable)), param(g, layers[l].bias, trainable));
    if (l + 1 < layers.size()) x = apply_activation(trunk_.activation(), x);
  }
  return x;
}

Var VelocityModel::forward(Graph& g, Var z, const std::vector<Condition>& conditions, const Tensor& t,
                           bool trainable) {
  return forward_impl(g, z, conditions, t, trainable);
}

Var VelocityModel::forward(Graph& g, Var z, const std::vector<Condition>& conditions, const Tensor& t) const {
  return forward_impl(g, z, conditions, t, false);
}

Tensor VelocityModel::velocity(const Tensor& z, const std::vector<Condition>& conditions, double t) const {
  Graph g;
  return forward(g, g.constant(z), conditions, Tensor({z.rows(), 1}, t)).value();
}

Tensor VelocityModel::velocity(const Tensor& z, const Condition& condition, double t) const {
  return velocity(z, std::vector<Condition>{condition}, t);
}

std::vector<Parameter*> VelocityModel::parameters() {
  auto out = trunk_.parameters();
  if (config_.uses_labels()) out.push_back(&label_table_);
  if (config_.uses_semantic()) {
    auto a = adapter_.parameters();
    out.insert(out.end(), a.begin(), a.end());
  }
  return out;
}

Checkpoint VelocityModel::to_checkpoint() const {
  Checkpoint ckpt;
  ckpt.meta = {{"kind", "velocity_model"}, {"config", config_.to_json()}};
  store_parameters(ckpt, const_cast<VelocityModel*>(this)->parameters());
  return ckpt;
}

VelocityModel VelocityModel::from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.meta.value("kind", "") != "velocity_model") throw ConfigError("checkpoint does not hold a velocity model");
  Rng rng(0);
  VelocityModel m(VelocityConfig::from_json(ckpt.meta.at("config")), rng);
  restore_parameters(ckpt, m.parameters());
  return m;
}

nlohmann::json ClassifierConfig::to_json() const {
  return {{"input_dim", input_dim},
          {"num_classes", num_classes},
          {"hidden", hidden},
          {"activation", to_string(activation)},
          {"time_embed_dim", time_embed_dim},
          {"max_frequency", max_frequency}};
}

ClassifierConfig ClassifierConfig::from_json(const nlohmann::json& j) {
  ClassifierConfig c;
  c.input_dim = j.at("input_dim").get<std::size_t>();
  c.num_classes = j.at("num_classes").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::vector<std::size_t>>();
  c.activation = activation_from_string(j.at("activation").get<std::string>());
  c.time_embed_dim = j.at("time_embed_dim").get<std::size_t>();
  c.max_frequency = j.at("max_frequency").get<double>();
  return c;
}

Classifier::Classifier(ClassifierConfig config, Rng& rng) : config_(std::move(config)) {
  if (config_.num_classes < 2) throw ConfigError("classifier needs at least two classes");
  ratio_ = frequency_ratio(config_.time_embed_dim, config_.max_frequency);
  std::vector<std::size_t> widths{config_.input_dim + config_.time_embed_dim};
  widths.insert(widths.end(), config_.hidden.begin(), config_.hidden.end());
  widths.push_back(config_.num_classes);
  mlp_ = Mlp("classifier", widths, config_.activation, rng);
}

Var Classifier::log_probs(Graph& g, Var x, const Tensor& t, bool trainable) {
  Var temb = g.constant(time_features(t, config_.time_embed_dim, ratio_));
  Var in = ad::concat_cols({x, temb});
  return ad::log_softmax(trainable ? mlp_.forward(g, in) : std::as_const(mlp_).forward(g, in));
}

Var Classifier::log_probs(Graph& g, Var x, const Tensor& t) const {
  Var temb = g.constant(time_features(t, config_.time_embed_dim, ratio_));
  return ad::log_softmax(mlp_.forward(g, ad::concat_cols({x, temb})));
}

std::vector<Parameter*> Classifier::parameters() { return mlp_.parameters(); }

Checkpoint Classifier::to_checkpoint() const {
  Checkpoint ckpt;
  ckpt.meta = {{"kind", "classifier"}, {"config", config_.to_json()}};
  store_parameters(ckpt, const_cast<Classifier*>(this)->parameters());
  return ckpt;
}

Classifier Classifier::from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.meta.value("kind", "") != "classifier") throw ConfigError("checkpoint does not hold a classifier");
  Rng rng(0);
  Classifier c(ClassifierConfig::from_json(ckpt.meta.at("config")), rng);
  restore_parameters(ckpt, c.parameters());
  return c;
}

Tensor classifier_forward(const Classifier& clf, const Tensor& x, double t) {
  Graph g;
  return clf.log_probs(g, g.constant(x), Tensor({x.rows(), 1}, t)).value();
}

Tensor classifier_log_prob_gradient(const Classifier& clf, const Tensor& x, const std::vector<std::size_t>& labels,
                                    double t) {
  if (labels.size() != x.rows() && labels.size() != 1) throw DimensionError("classifier gradient: label count");
  Graph g;
  Var xin = g.input(x);
  Var lp = clf.log_probs(g, xin, Tensor({x.rows(), 1}, t));
  // Selecting log p(c_i | x_i) with a one-hot mask; rows are independent so
  // the gradient of the sum gives each row's own gradient.
  Tensor select(lp.value().shape());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const std::size_t c = labels.size() == 1 ? labels[0] : labels[i];
    if (c >= clf.config().num_classes) throw ContractError("classifier gradient: label out of range");
    select.at(i, c) = 1.0;
  }
  g.backward(ad::sum(ad::mul(lp, g.constant(std::move(select)))));
  return g.grad(xin);
}

}  // namespace lfm
