// SPDX-License-Identifier: Apache-2.0
#include "mtgrpo/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace mtgrpo {

void AdamWConfig::validate() const {
  if (!(lr > 0.0)) throw std::invalid_argument("AdamW: lr must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw std::invalid_argument("AdamW: betas must be in [0, 1)");
  if (!(eps > 0.0)) throw std::invalid_argument("AdamW: eps must be positive");
  if (weight_decay < 0.0) throw std::invalid_argument("AdamW: weight_decay must be >= 0");
}

AdamW::AdamW(AdamWConfig cfg, std::size_t num_params) : cfg_(cfg), m_(num_params, 0.0), v_(num_params, 0.0) {
  cfg_.validate();
}

void AdamW::step(std::span<double> params, std::span<const double> grad) {
  if (params.size() != m_.size() || grad.size() != m_.size())
    throw std::invalid_argument("AdamW::step: size mismatch");
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * grad[i];
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
    const double update = (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + cfg_.eps);
    params[i] -= cfg_.lr * (update + cfg_.weight_decay * params[i]);
  }
}

}  // namespace mtgrpo
