#pragma once

#include <cstddef>
#include <vector>

#include "lfm/autodiff.hpp"

namespace lfm {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Decoupled weight decay; 0 gives plain Adam.
  double weight_decay = 0.0;
};

// Adam with decoupled weight decay and bias correction.
class AdamW {
 public:
  explicit AdamW(AdamConfig config = {}) : config_(config) {}

  // Applies one update using each parameter's accumulated grad. If any
  // gradient entry is non-finite, throws NumericError naming the parameter
  // and leaves parameters and moments untouched.
  void step(const std::vector<Parameter*>& params);

  std::size_t steps() const { return step_; }
  const AdamConfig& config() const { return config_; }
  void set_lr(double lr) { config_.lr = lr; }

  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }

 private:
  AdamConfig config_;
  std::size_t step_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

void zero_grads(const std::vector<Parameter*>& params);

}  // namespace lfm
