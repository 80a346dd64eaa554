// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace mtgrpo {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;

  void validate() const;
};

/// Adam with decoupled weight decay. Minimizes: params -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * params).
class AdamW {
 public:
  AdamW() = default;
  AdamW(AdamWConfig cfg, std::size_t num_params);

  void step(std::span<double> params, std::span<const double> grad);

  const AdamWConfig& config() const { return cfg_; }
  std::uint64_t steps_taken() const { return t_; }
  std::span<const double> first_moment() const { return m_; }
  std::span<const double> second_moment() const { return v_; }

 private:
  AdamWConfig cfg_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::uint64_t t_ = 0;
};

}  // namespace mtgrpo
