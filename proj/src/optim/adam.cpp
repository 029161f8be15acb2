#include "se/optim/adam.hpp"

#include <cmath>

#include "se/errors.hpp"

namespace se::optim {

Adam::Adam(AdamConfig config, std::span<const grad::Tensor* const> params) : config_(config) {
  if (!(config_.learning_rate >= 0.0)) throw ContractError("Adam: learning rate must be non-negative");
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const grad::Tensor* p : params) {
    m_.emplace_back(p->shape());
    v_.emplace_back(p->shape());
  }
}

void Adam::step(std::span<grad::Tensor* const> params, std::span<const grad::Tensor* const> grads) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw ContractError("Adam: parameter list changed between steps");
  }
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double correction1 = 1.0 - std::pow(config_.beta1, t);
  const double correction2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    grad::Tensor& p = *params[k];
    const grad::Tensor& g = *grads[k];
    if (p.size() != g.size() || p.size() != m_[k].size()) throw DimensionError("Adam: gradient shape mismatch");
    auto m = m_[k].values();
    auto v = v_[k].values();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      p[i] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
  }
}

}  // namespace se::optim
