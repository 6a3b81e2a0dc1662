#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mvad/backbone.hpp"

namespace mvad {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // L2 term added to the gradient
};

// Bias-corrected Adam over a fixed list of tensors. Moments are created on
// the first step and keyed by position, so the tensor list must keep its
// order and shapes across steps.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(std::span<const TensorRef> params, std::span<const TensorRef> grads);

  std::uint64_t steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::uint64_t t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::vector<double> scratch_;
};

}  // namespace mvad
