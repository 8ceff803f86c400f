#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "lfm/autodiff.hpp"
#include "lfm/nn.hpp"
#include "lfm/rng.hpp"
#include "lfm/tensor.hpp"

namespace lfm::testing {

// Relative error with a small floor so entries that are zero on both sides
// do not divide by zero. Finite differences at h=1e-5 carry absolute noise
// near 1e-10, far below the floor.
inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-5});
}

// Builds a scalar loss from the parameters on a fresh graph.
using LossBuilder = std::function<Var(Graph&)>;

// Worst relative error between backward() and central differences over every
// entry of every parameter.
inline double max_gradient_error(const LossBuilder& build, const std::vector<Parameter*>& params,
                                 double h = 1e-5) {
  for (auto* p : params) p->zero_grad();
  {
    Graph g;
    g.backward(build(g));
  }
  double worst = 0.0;
  for (auto* p : params) {
    const Tensor analytic = p->grad;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double saved = p->value[i];
      p->value[i] = saved + h;
      double up;
      {
        Graph g;
        up = g.value(build(g)).item();
      }
      p->value[i] = saved - h;
      double down;
      {
        Graph g;
        down = g.value(build(g)).item();
      }
      p->value[i] = saved;
      worst = std::max(worst, relative_error(analytic[i], (up - down) / (2.0 * h)));
    }
  }
  return worst;
}

// A random small model exercising every differentiable primitive: an MLP
// trunk followed by a head mixing exp, log, softplus, tanh, mul, slices and
// log-softmax.
struct RandomModel {
  Mlp mlp;
  Parameter scale;
  Tensor x;
  Tensor target;

  explicit RandomModel(Rng rng) {
    const std::size_t in = 1 + rng.uniform_index(4);
    const std::size_t depth = 1 + rng.uniform_index(3);
    std::vector<std::size_t> widths{in};
    for (std::size_t i = 0; i < depth; ++i) widths.push_back(2 + rng.uniform_index(6));
    widths.push_back(2 + rng.uniform_index(3));
    const Activation acts[] = {Activation::SiLU, Activation::Tanh, Activation::Softplus};
    Rng init = rng.split("init");
    mlp = Mlp("m", widths, acts[rng.uniform_index(3)], init);
    scale = Parameter("scale", rng.normal_tensor(1, widths.back()));
    const std::size_t batch = 1 + rng.uniform_index(5);
    x = rng.normal_tensor(batch, in);
    target = rng.normal_tensor(batch, widths.back());
  }

  std::vector<Parameter*> parameters() {
    auto ps = mlp.parameters();
    ps.push_back(&scale);
    return ps;
  }

  Var loss(Graph& g) {
    Var h = mlp.forward(g, g.input(x));
    Var s = g.param(scale);
    Var y = ad::mul(h, s);
    const std::size_t w = target.cols();
    Var head = ad::slice_cols(y, 0, 1);
    Var rest = ad::slice_cols(y, w - 1, w);
    Var mixed = ad::concat_cols({ad::tanh(head), ad::log(ad::add_scalar(ad::softplus(rest), 1.0))});
    Var r = ad::sub(y, g.constant(target));
    Var sq = ad::mean(ad::mul(r, r));
    Var lp = ad::mean(ad::log_softmax(y));
    Var e = ad::mean(ad::exp(ad::scale(mixed, 0.3)));
    return ad::add(ad::add(sq, ad::scale(lp, -0.1)), ad::sum_rows(ad::scale(ad::sum(e), 0.5)));
  }
};

// Exhaustive minimum of the mean squared matching cost over permutations.
inline double brute_force_w2(const Tensor& a, const Tensor& b) {
  const std::size_t n = a.rows();
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  double best = INFINITY;
  do {
    double c = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < a.cols(); ++j) {
        const double d = a.at(i, j) - b.at(perm[i], j);
        c += d * d;
      }
    }
    best = std::min(best, c / static_cast<double>(n));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace lfm::testing
