#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "se/grad/tensor.hpp"

namespace se::optim {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam on a fixed list of parameter tensors. `step` descends along the
/// given gradients; pass negated gradients to ascend.
class Adam {
 public:
  Adam(AdamConfig config, std::span<const grad::Tensor* const> params);

  void step(std::span<grad::Tensor* const> params, std::span<const grad::Tensor* const> grads);

  const AdamConfig& config() const { return config_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }
  std::int64_t steps() const { return steps_; }

  // Moment buffers, exposed for checkpointing.
  std::vector<grad::Tensor>& first_moments() { return m_; }
  std::vector<grad::Tensor>& second_moments() { return v_; }
  const std::vector<grad::Tensor>& first_moments() const { return m_; }
  const std::vector<grad::Tensor>& second_moments() const { return v_; }
  void set_steps(std::int64_t steps) { steps_ = steps; }

 private:
  AdamConfig config_;
  std::int64_t steps_ = 0;
  std::vector<grad::Tensor> m_;
  std::vector<grad::Tensor> v_;
};

}  // namespace se::optim
