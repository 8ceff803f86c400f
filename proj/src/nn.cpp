#include "lfm/nn.hpp"

#include <cmath>

#include "lfm/errors.hpp"
#include "lfm/linalg.hpp"

namespace lfm {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::SiLU: return "silu";
    case Activation::Tanh: return "tanh";
    case Activation::Softplus: return "softplus";
  }
  return "silu";
}

Activation activation_from_string(const std::string& s) {
  if (s == "silu") return Activation::SiLU;
  if (s == "tanh") return Activation::Tanh;
  if (s == "softplus") return Activation::Softplus;
  throw ConfigError("unknown activation '" + s + "' (expected silu, tanh or softplus)");
}

Var apply_activation(Activation a, Var x) {
  switch (a) {
    case Activation::SiLU: return ad::silu(x);
    case Activation::Tanh: return ad::tanh(x);
    case Activation::Softplus: return ad::softplus(x);
  }
  return x;
}

double activation_lipschitz(Activation a) {
  switch (a) {
    // sup of silu'(x), attained near x = 2.3994
    case Activation::SiLU: return 1.0998393194;
    case Activation::Tanh: return 1.0;
    case Activation::Softplus: return 1.0;
  }
  return 1.0;
}

Linear::Linear(std::string name, std::size_t in, std::size_t out, Rng& rng)
    : weight(name + ".weight", rng.normal_tensor(in, out)), bias(name + ".bias", Tensor::zeros(1, out)) {
  const double s = 1.0 / std::sqrt(static_cast<double>(in));
  for (double& v : weight.value.storage()) v *= s;
}

Var Linear::operator()(Graph& g, Var x, bool trainable) {
  return ad::add(ad::matmul(x, g.param(weight, trainable)), g.param(bias, trainable));
}

Var Linear::operator()(Graph& g, Var x) const {
  return ad::add(ad::matmul(x, g.param(weight)), g.param(bias));
}

void Linear::zero_init() {
  weight.value = Tensor(weight.value.shape());
  bias.value = Tensor(bias.value.shape());
  weight.zero_grad();
  bias.zero_grad();
}

Mlp::Mlp(std::string name, std::vector<std::size_t> widths, Activation act, Rng& rng)
    : widths_(std::move(widths)), act_(act) {
  if (widths_.size() < 2) throw ContractError("Mlp needs at least input and output widths");
  for (std::size_t i = 0; i + 1 < widths_.size(); ++i) {
    Rng layer_rng = rng.split(i);
    layers_.emplace_back(name + "." + std::to_string(i), widths_[i], widths_[i + 1], layer_rng);
  }
}

Var Mlp::forward(Graph& g, Var x) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    x = layers_[i](g, x, true);
    if (i + 1 < layers_.size()) x = apply_activation(act_, x);
  }
  return x;
}

Var Mlp::forward(Graph& g, Var x) const {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    x = layers_[i](g, x);
    if (i + 1 < layers_.size()) x = apply_activation(act_, x);
  }
  return x;
}

Tensor Mlp::eval(const Tensor& x) const {
  Graph g;
  return forward(g, g.constant(x)).value();
}

std::vector<Parameter*> Mlp::parameters() {
  std::vector<Parameter*> out;
  for (auto& l : layers_) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

std::vector<const Parameter*> Mlp::parameters() const {
  std::vector<const Parameter*> out;
  for (const auto& l : layers_) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  return out;
}

double Mlp::lipschitz_bound(std::size_t input_begin, std::size_t input_end) const {
  double bound = 1.0;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const Tensor& w = layers_[i].weight.value;
    // Only the selected input rows of the first layer act on the variable.
    const Tensor block = i == 0 ? w.transposed().col_slice(input_begin, input_end) : w;
    bound *= spectral_norm(block);
    if (i + 1 < layers_.size()) bound *= activation_lipschitz(act_);
    if (bound == 0.0) return 0.0;
  }
  return bound;
}

}  // namespace lfm
