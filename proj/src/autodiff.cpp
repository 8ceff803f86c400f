#include "lfm/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "lfm/errors.hpp"

namespace lfm {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double silu(double x) { return x * sigmoid(x); }

double silu_grad(double x) {
  const double s = sigmoid(x);
  return s + x * s * (1.0 - s);
}

double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

const Tensor& Var::value() const { return graph->value(*this); }

Var Graph::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Graph::input(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Graph::param(Parameter& p, bool trainable) {
  Node n;
  n.ref = &p.value;
  if (trainable) {
    n.param = &p;
    n.requires_grad = true;
  }
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Graph::param(const Parameter& p) {
  Node n;
  n.ref = &p.value;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

const Tensor& Graph::value(Var v) const {
  const Node& n = nodes_.at(v.id);
  return n.ref ? *n.ref : n.value;
}

Tensor Graph::grad(Var v) const {
  const Node& n = nodes_.at(v.id);
  if (n.grad.empty()) return Tensor(value(v).shape());
  return n.grad;
}

Var Graph::record(Tensor value, std::vector<std::size_t> inputs, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  for (auto id : inputs) n.requires_grad = n.requires_grad || nodes_[id].requires_grad;
  if (n.requires_grad) {
    n.inputs = std::move(inputs);
    n.backward = std::move(backward);
  }
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Tensor& Graph::grad_slot(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor(value(Var{this, id}).shape());
  return n.grad;
}

void Graph::accumulate(std::size_t id, const Tensor& delta) {
  if (!nodes_[id].requires_grad) return;
  Tensor& g = grad_slot(id);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += delta[i];
}

void Graph::backward(Var loss) {
  if (loss.graph != this) throw ContractError("backward: loss belongs to a different graph");
  if (value(loss).size() != 1) {
    throw ContractError("backward: loss must be a scalar, got shape " +
                        shape_to_string(value(loss).shape()));
  }
  for (auto& n : nodes_) n.grad = Tensor();
  if (!nodes_[loss.id].requires_grad) return;
  grad_slot(loss.id)[0] = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(*this, i);
    if (n.param) {
      Tensor& pg = n.param->grad;
      if (pg.shape() != n.grad.shape()) pg = Tensor(n.grad.shape());
      for (std::size_t k = 0; k < pg.size(); ++k) pg[k] += n.grad[k];
    }
  }
}

namespace ad {

namespace {

enum class Broadcast { Same, Row, Col, Scalar };

Broadcast broadcast_kind(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return Broadcast::Same;
  if (a.rank() == 2 && b.rank() == 2) {
    if (b.rows() == 1 && b.cols() == 1) return Broadcast::Scalar;
    if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::Row;
    if (b.cols() == 1 && b.rows() == a.rows()) return Broadcast::Col;
  }
  throw DimensionError(std::string(op) + ": cannot broadcast " + shape_to_string(b.shape()) +
                       " against " + shape_to_string(a.shape()));
}

// Index into b for flat position i of a.
inline std::size_t bindex(Broadcast kind, std::size_t i, std::size_t cols) {
  switch (kind) {
    case Broadcast::Same: return i;
    case Broadcast::Row: return i % cols;
    case Broadcast::Col: return i / cols;
    case Broadcast::Scalar: return 0;
  }
  return 0;
}

template <typename F>
Tensor binary_values(const Tensor& a, const Tensor& b, Broadcast kind, F f) {
  Tensor out(a.shape());
  const std::size_t cols = a.rank() == 2 ? a.cols() : a.size();
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[bindex(kind, i, cols)]);
  return out;
}

// Reduces an a-shaped gradient onto b's shape.
Tensor reduce_to(const Tensor& g, const Tensor& b, Broadcast kind) {
  if (kind == Broadcast::Same) return g;
  Tensor out(b.shape());
  const std::size_t cols = g.rank() == 2 ? g.cols() : g.size();
  for (std::size_t i = 0; i < g.size(); ++i) out[bindex(kind, i, cols)] += g[i];
  return out;
}

template <typename Forward, typename Deriv>
Var unary(Var a, Forward f, Deriv df) {
  Graph& g = *a.graph;
  const Tensor& x = a.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  const std::size_t ia = a.id;
  return g.record(std::move(out), {ia}, [ia, df](Graph& gr, std::size_t self) {
    const Tensor& xin = gr.value(Var{&gr, ia});
    const Tensor& y = gr.value(Var{&gr, self});
    const Tensor& gy = gr.node_grad(self);
    Tensor gx(xin.shape());
    for (std::size_t i = 0; i < xin.size(); ++i) gx[i] = gy[i] * df(xin[i], y[i]);
    gr.accumulate(ia, gx);
  });
}

}  // namespace

Var add(Var a, Var b) {
  Graph& g = *a.graph;
  const Broadcast kind = broadcast_kind(a.value(), b.value(), "add");
  Tensor out = binary_values(a.value(), b.value(), kind, [](double x, double y) { return x + y; });
  const std::size_t ia = a.id, ib = b.id;
  return g.record(std::move(out), {ia, ib}, [ia, ib, kind](Graph& gr, std::size_t self) {
    const Tensor& gy = gr.node_grad(self);
    gr.accumulate(ia, gy);
    if (gr.requires_grad(Var{&gr, ib})) gr.accumulate(ib, reduce_to(gy, gr.value(Var{&gr, ib}), kind));
  });
}

Var sub(Var a, Var b) {
  Graph& g = *a.graph;
  const Broadcast kind = broadcast_kind(a.value(), b.value(), "sub");
  Tensor out = binary_values(a.value(), b.value(), kind, [](double x, double y) { return x - y; });
  const std::size_t ia = a.id, ib = b.id;
  return g.record(std::move(out), {ia, ib}, [ia, ib, kind](Graph& gr, std::size_t self) {
    const Tensor& gy = gr.node_grad(self);
    gr.accumulate(ia, gy);
    if (gr.requires_grad(Var{&gr, ib})) {
      Tensor gb = reduce_to(gy, gr.value(Var{&gr, ib}), kind);
      for (double& v : gb.storage()) v = -v;
      gr.accumulate(ib, gb);
    }
  });
}

Var mul(Var a, Var b) {
  Graph& g = *a.graph;
  const Broadcast kind = broadcast_kind(a.value(), b.value(), "mul");
  Tensor out = binary_values(a.value(), b.value(), kind, [](double x, double y) { return x * y; });
  const std::size_t ia = a.id, ib = b.id;
  return g.record(std::move(out), {ia, ib}, [ia, ib, kind](Graph& gr, std::size_t self) {
    const Tensor& gy = gr.node_grad(self);
    const Tensor& va = gr.value(Var{&gr, ia});
    const Tensor& vb = gr.value(Var{&gr, ib});
    const std::size_t cols = va.rank() == 2 ? va.cols() : va.size();
    if (gr.requires_grad(Var{&gr, ia})) {
      Tensor ga(va.shape());
      for (std::size_t i = 0; i < va.size(); ++i) ga[i] = gy[i] * vb[bindex(kind, i, cols)];
      gr.accumulate(ia, ga);
    }
    if (gr.requires_grad(Var{&gr, ib})) {
      Tensor prod(va.shape());
      for (std::size_t i = 0; i < va.size(); ++i) prod[i] = gy[i] * va[i];
      gr.accumulate(ib, reduce_to(prod, vb, kind));
    }
  });
}

Var matmul(Var a, Var b) {
  Graph& g = *a.graph;
  Tensor out = kernels::matmul(a.value(), b.value());
  const std::size_t ia = a.id, ib = b.id;
  return g.record(std::move(out), {ia, ib}, [ia, ib](Graph& gr, std::size_t self) {
    const Tensor& gy = gr.node_grad(self);
    if (gr.requires_grad(Var{&gr, ia})) gr.accumulate(ia, kernels::matmul_nt(gy, gr.value(Var{&gr, ib})));
    if (gr.requires_grad(Var{&gr, ib})) gr.accumulate(ib, kernels::matmul_tn(gr.value(Var{&gr, ia}), gy));
  });
}

Var scale(Var a, double s) {
  return unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(Var a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var neg(Var a) { return scale(a, -1.0); }

Var tanh(Var a) {
  return unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var silu(Var a) {
  return unary(a, [](double x) { return lfm::silu(x); }, [](double x, double) { return silu_grad(x); });
}

Var softplus(Var a) {
  return unary(a, [](double x) { return lfm::softplus(x); }, [](double x, double) { return sigmoid(x); });
}

Var exp(Var a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var sum(Var a) {
  Graph& g = *a.graph;
  const std::size_t ia = a.id;
  return g.record(Tensor::scalar(lfm::sum(a.value())), {ia}, [ia](Graph& gr, std::size_t self) {
    const double gy = gr.node_grad(self)[0];
    Tensor gx(gr.value(Var{&gr, ia}).shape(), gy);
    gr.accumulate(ia, gx);
  });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var sum_rows(Var a) {
  Graph& g = *a.graph;
  const Tensor& x = a.value();
  const std::size_t m = x.rows(), n = x.cols();
  Tensor out({m, 1});
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += x.at(i, j);
    out[i] = s;
  }
  const std::size_t ia = a.id;
  return g.record(std::move(out), {ia}, [ia, m, n](Graph& gr, std::size_t self) {
    const Tensor& gy = gr.node_grad(self);
    Tensor gx({m, n});
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) gx.at(i, j) = gy[i];
    }
    gr.accumulate(ia, gx);
  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  Graph& g = *a.graph;
  Tensor out = a.value().col_slice(begin, end);
  const std::size_t ia = a.id;
  return g.record(std::move(out), {ia}, [ia, begin, end](Graph& gr, std::size_t self) {
    const Tensor& gy = gr.node_grad(self);
    Tensor& gx = gr.grad_slot(ia);
    for (std::size_t i = 0; i < gy.rows(); ++i) {
      for (std::size_t j = begin; j < end; ++j) gx.at(i, j) += gy.at(i, j - begin);
    }
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  Graph& g = *parts.front().graph;
  std::vector<Tensor> values;
  std::vector<std::size_t> ids;
  std::vector<std::size_t> widths;
  for (const Var& p : parts) {
    values.push_back(p.value());
    ids.push_back(p.id);
    widths.push_back(p.value().cols());
  }
  Tensor out = lfm::concat_cols(values);
  return g.record(std::move(out), ids, [ids, widths](Graph& gr, std::size_t self) {
    const Tensor& gy = gr.node_grad(self);
    std::size_t offset = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (gr.requires_grad(Var{&gr, ids[k]})) {
        Tensor& gx = gr.grad_slot(ids[k]);
        for (std::size_t i = 0; i < gy.rows(); ++i) {
          for (std::size_t j = 0; j < widths[k]; ++j) gx.at(i, j) += gy.at(i, offset + j);
        }
      }
      offset += widths[k];
    }
  });
}

Var log_softmax(Var logits) {
  Graph& g = *logits.graph;
  const Tensor& x = logits.value();
  Tensor shift({x.rows(), 1});
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double m = x.at(i, 0);
    for (std::size_t j = 1; j < x.cols(); ++j) m = std::max(m, x.at(i, j));
    shift[i] = m;
  }
  Var centered = sub(logits, g.constant(std::move(shift)));
  Var lse = log(sum_rows(exp(centered)));
  return sub(centered, lse);
}

}  // namespace ad

Var operator+(Var a, Var b) { return ad::add(a, b); }
Var operator-(Var a, Var b) { return ad::sub(a, b); }
Var operator*(Var a, Var b) { return ad::mul(a, b); }

}  // namespace lfm
