#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lfm/checkpoint.hpp"
#include "lfm/nn.hpp"

namespace lfm {

// Sinusoidal time features [sin(w_0 t), cos(w_0 t), sin(w_1 t), ...] with
// w_k = ratio^k. `dim` must be even.
Tensor time_embed(double t, std::size_t dim, double ratio);
// Ratio giving frequencies that span [1, max_frequency] over dim/2 pairs.
double frequency_ratio(std::size_t dim, double max_frequency);
// Row-wise features for a column of times [B x 1] -> [B x dim].
Tensor time_features(const Tensor& t, std::size_t dim, double ratio);

// Nearest-neighbour resampling of [B x d] masks to [B x width].
Tensor resize_mask(const Tensor& mask, std::size_t width);

struct Condition {
  enum class Kind { None, Label, Masked, Semantic };

  Kind kind = Kind::None;
  std::size_t label = 0;
  Tensor masked_latent;  // [1 x latent]
  Tensor mask;           // [1 x latent], entries in {0, 1}
  Tensor semantic_map;   // [1 x cells * classes] one-hot

  static Condition none() { return {}; }
  static Condition with_label(std::size_t id);
  static Condition masked(Tensor masked_latent, Tensor mask);
  static Condition semantic(Tensor onehot_map);
};

enum class InputMode { Plain, ConcatCondition };

struct VelocityConfig {
  std::size_t latent_dim = 2;
  std::vector<std::size_t> hidden{256, 256, 256, 256};
  Activation activation = Activation::SiLU;
  std::size_t time_embed_dim = 64;
  double max_frequency = 1000.0;
  // Label conditioning when > 0; index num_classes is the null token.
  std::size_t num_classes = 0;
  std::size_t label_embed_dim = 16;
  InputMode input_mode = InputMode::Plain;
  // With ConcatCondition, a non-zero semantic_classes selects the semantic
  // adapter instead of mask concatenation.
  std::size_t semantic_classes = 0;
  std::size_t semantic_cells = 0;
  std::size_t adapter_hidden = 16;
  bool zero_init_output = true;

  bool uses_labels() const { return num_classes > 0; }
  bool uses_mask() const { return input_mode == InputMode::ConcatCondition && semantic_classes == 0; }
  bool uses_semantic() const { return input_mode == InputMode::ConcatCondition && semantic_classes > 0; }
  std::size_t trunk_input_dim() const;
  void validate() const;

  nlohmann::json to_json() const;
  static VelocityConfig from_json(const nlohmann::json& j);
};

// Parametric velocity field v(z, c, t).
class VelocityModel {
 public:
  VelocityModel() = default;
  VelocityModel(VelocityConfig config, Rng& rng);

  // Differentiable forward for a batch. `conditions` holds one entry per
  // row or a single entry applied to every row; `t` is [B x 1].
  Var forward(Graph& g, Var z, const std::vector<Condition>& conditions, const Tensor& t, bool trainable);
  Var forward(Graph& g, Var z, const std::vector<Condition>& conditions, const Tensor& t) const;

  // Inference with a shared time.
  Tensor velocity(const Tensor& z, const std::vector<Condition>& conditions, double t) const;
  Tensor velocity(const Tensor& z, const Condition& condition, double t) const;

  // Condition features (everything but z and the time features), assembled
  // as constants plus adapter/label parameters.
  Var condition_features(Graph& g, const std::vector<Condition>& conditions, std::size_t batch,
                         bool trainable) const;

  std::vector<Parameter*> parameters();
  const VelocityConfig& config() const { return config_; }
  const Mlp& trunk() const { return trunk_; }
  Mlp& trunk() { return trunk_; }
  const Parameter& label_table() const { return label_table_; }
  const Mlp& adapter() const { return adapter_; }

  // Upper bound on the Lipschitz constant in z (time and condition inputs
  // enter by concatenation, so the bound holds for every t and c).
  double lipschitz_bound() const { return trunk_.lipschitz_bound(0, config_.latent_dim); }

  Checkpoint to_checkpoint() const;
  static VelocityModel from_checkpoint(const Checkpoint& ckpt);

 private:
  Var forward_impl(Graph& g, Var z, const std::vector<Condition>& conditions, const Tensor& t,
                   bool trainable) const;
  Var param(Graph& g, const Parameter& p, bool trainable) const;
  void check_condition(const Condition& c) const;

  VelocityConfig config_;
  double ratio_ = 1.0;
  Mlp trunk_;
  Parameter label_table_;
  Mlp adapter_;
};

struct ClassifierConfig {
  std::size_t input_dim = 2;
  std::size_t num_classes = 2;
  std::vector<std::size_t> hidden{64, 64};
  Activation activation = Activation::SiLU;
  std::size_t time_embed_dim = 16;
  double max_frequency = 100.0;

  nlohmann::json to_json() const;
  static ClassifierConfig from_json(const nlohmann::json& j);
};

// Noisy-input classifier p(c | x_t, t).
class Classifier {
 public:
  Classifier() = default;
  Classifier(ClassifierConfig config, Rng& rng);

  Var log_probs(Graph& g, Var x, const Tensor& t, bool trainable);
  Var log_probs(Graph& g, Var x, const Tensor& t) const;
  std::vector<Parameter*> parameters();
  const ClassifierConfig& config() const { return config_; }
  Mlp& mlp() { return mlp_; }

  Checkpoint to_checkpoint() const;
  static Classifier from_checkpoint(const Checkpoint& ckpt);

 private:
  ClassifierConfig config_;
  double ratio_ = 1.0;
  Mlp mlp_;
};

// Class log-probabilities [B x K] at a shared time t.
Tensor classifier_forward(const Classifier& clf, const Tensor& x, double t);

// Rows of grad_x log p(labels[i] | x_i, t).
Tensor classifier_log_prob_gradient(const Classifier& clf, const Tensor& x, const std::vector<std::size_t>& labels,
                                    double t);

}  // namespace lfm
