#pragma once

#include <string>
#include <vector>

#include "lfm/autodiff.hpp"
#include "lfm/rng.hpp"

namespace lfm {

enum class Activation { SiLU, Tanh, Softplus };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);
Var apply_activation(Activation a, Var x);
// Global Lipschitz constant of the scalar activation (sup |f'|).
double activation_lipschitz(Activation a);

// Row-vector affine layer: y = x W + b with W [in x out], b [1 x out].
class Linear {
 public:
  Linear() = default;
  // Weights ~ N(0, 1/in) (LeCun), bias zero.
  Linear(std::string name, std::size_t in, std::size_t out, Rng& rng);

  Var operator()(Graph& g, Var x, bool trainable = true);
  Var operator()(Graph& g, Var x) const;

  std::size_t in_features() const { return weight.value.rows(); }
  std::size_t out_features() const { return weight.value.cols(); }
  void zero_init();

  Parameter weight;
  Parameter bias;
};

// Stack of Linear layers with an activation between consecutive layers and
// none after the last one.
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::string name, std::vector<std::size_t> widths, Activation act, Rng& rng);

  Var forward(Graph& g, Var x);
  Var forward(Graph& g, Var x) const;
  // Graph-free convenience evaluation.
  Tensor eval(const Tensor& x) const;

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;

  // Product of per-layer spectral norms times activation constants, an upper
  // bound on the Lipschitz constant w.r.t. the input columns
  // [input_begin, input_end) of the first layer.
  double lipschitz_bound(std::size_t input_begin, std::size_t input_end) const;

  Activation activation() const { return act_; }
  const std::vector<std::size_t>& widths() const { return widths_; }
  std::vector<Linear>& layers() { return layers_; }
  const std::vector<Linear>& layers() const { return layers_; }

 private:
  std::vector<Linear> layers_;
  std::vector<std::size_t> widths_;
  Activation act_ = Activation::SiLU;
};

}  // namespace lfm
