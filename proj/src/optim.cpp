#include "lfm/optim.hpp"

#include <cmath>
#include <sstream>

#include "lfm/errors.hpp"

namespace lfm {

void zero_grads(const std::vector<Parameter*>& params) {
  for (Parameter* p : params) p->zero_grad();
}

void AdamW::step(const std::vector<Parameter*>& params) {
  if (m_.empty()) {
    for (const Parameter* p : params) {
      m_.emplace_back(p->value.shape());
      v_.emplace_back(p->value.shape());
    }
  }
  if (m_.size() != params.size()) throw ContractError("AdamW: parameter list changed between steps");

  for (std::size_t k = 0; k < params.size(); ++k) {
    const Parameter& p = *params[k];
    if (p.grad.shape() != p.value.shape() || m_[k].shape() != p.value.shape()) {
      throw DimensionError("AdamW: gradient/moment shape mismatch for '" + p.name + "'");
    }
    for (std::size_t i = 0; i < p.grad.size(); ++i) {
      if (!std::isfinite(p.grad[i])) {
        std::ostringstream msg;
        msg << "AdamW: non-finite gradient in '" << p.name << "' at flat index " << i << " (value "
            << p.grad[i] << "); update rejected at step " << step_ + 1;
        throw NumericError(msg.str());
      }
    }
  }

  ++step_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    Tensor& m = m_[k];
    Tensor& v = v_[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      double update = mhat / (std::sqrt(vhat) + config_.eps);
      if (config_.weight_decay != 0.0) update += config_.weight_decay * p.value[i];
      p.value[i] -= config_.lr * update;
    }
  }
}

}  // namespace lfm
