#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "lfm/tensor.hpp"

namespace lfm {

// A trainable tensor together with its accumulated gradient.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}
  void zero_grad() { grad = Tensor(value.shape()); }
};

class Graph;

// Handle to a node on a Graph.
struct Var {
  Graph* graph = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

// Reverse-mode tape. Nodes are appended in evaluation order, which is a
// topological order, so backward() is a single reverse sweep.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  // Leaf whose gradient is wanted (e.g. the model input for input gradients).
  Var input(Tensor value);
  // Leaf bound to a parameter. Its value is referenced, not copied, so the
  // parameter must outlive the graph. When `trainable` is false the node is a
  // constant and no gradient flows into it.
  Var param(Parameter& p, bool trainable = true);
  Var param(const Parameter& p);

  // Seeds d(loss)/d(loss) = 1 and sweeps the tape once in reverse. Gradients
  // of trainable parameters are accumulated into Parameter::grad.
  // Throws ContractError unless loss holds exactly one element.
  void backward(Var loss);

  const Tensor& value(Var v) const;
  // Gradient after backward(); zeros for nodes that did not influence the loss.
  Tensor grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  using BackwardFn = std::function<void(Graph&, std::size_t self)>;
  // Records an operation node. Used by the primitive ops below.
  Var record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward);
  // Adds `delta` into the gradient slot of node `id`.
  void accumulate(std::size_t id, const Tensor& delta);
  Tensor& grad_slot(std::size_t id);
  const Tensor& node_grad(std::size_t id) const { return nodes_[id].grad; }

 private:
  struct Node {
    Tensor value;
    const Tensor* ref = nullptr;
    Tensor grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
};

namespace ad {

// Elementwise binary ops broadcast `b` when it is [1 x n], [m x 1] or [1 x 1]
// against an [m x n] `a`.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var matmul(Var a, Var b);

Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var neg(Var a);

Var tanh(Var a);
Var silu(Var a);
Var softplus(Var a);
Var exp(Var a);
Var log(Var a);

// Sum of all elements -> [1 x 1].
Var sum(Var a);
Var mean(Var a);
// Sum along the last axis -> [m x 1].
Var sum_rows(Var a);

Var slice_cols(Var a, std::size_t begin, std::size_t end);
Var concat_cols(const std::vector<Var>& parts);

// Row-wise log-softmax composed from the primitives above; the row maximum
// enters as a constant shift.
Var log_softmax(Var logits);

}  // namespace ad

Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);

// Scalar activation helpers shared by the graph ops and analytic code.
double silu(double x);
double silu_grad(double x);
double softplus(double x);
double sigmoid(double x);

}  // namespace lfm
