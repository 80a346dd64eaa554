// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <vector>

#include "mtgrpo/optim.hpp"

namespace mtgrpo {

enum class ReweightMode { strict, iwu, regularized, fixed_uniform };
enum class LogitOptimizer { plain, adamw };

ReweightMode parse_reweight_mode(const std::string& s);
std::string to_string(ReweightMode m);
LogitOptimizer parse_logit_optimizer(const std::string& s);
std::string to_string(LogitOptimizer o);

struct ReweightConfig {
  /// Logit step size. Plain mode: xi -= beta * grad. AdamW mode: the optimizer's learning rate.
  double beta = 0.025;
  double lambda = 0.2;
  double eta = 0.0;
  ReweightMode mode = ReweightMode::iwu;
  LogitOptimizer optimizer = LogitOptimizer::adamw;
  double weight_decay = 1e-5;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  /// Magnitude at which per-step improvements are clamped.
  double improvement_clip = 0.1;

  void validate() const;
};

std::vector<double> softmax(std::span<const double> logits);

/// Task weights z = Softmax(xi) with the logit optimizer state.
class TaskWeights {
 public:
  TaskWeights() = default;
  TaskWeights(int num_tasks, const ReweightConfig& cfg);

  int num_tasks() const { return static_cast<int>(xi_.size()); }
  std::span<const double> logits() const { return xi_; }
  std::span<const double> z() const { return z_; }

  /// Descends on `grad` with the configured logit optimizer and re-derives z.
  void descend(std::span<const double> grad);
  void set_logits(std::span<const double> xi);

 private:
  LogitOptimizer kind_ = LogitOptimizer::adamw;
  double beta_ = 0.0;
  std::vector<double> xi_;
  std::vector<double> z_;
  AdamW adam_;
};

/// g_k = z_k (s_k - sum_j z_j s_j): the gradient of sum_k z_k(xi) s_k w.r.t. xi.
std::vector<double> softmax_weight_gradient(std::span<const double> z, std::span<const double> signal);

/// xi <- xi - beta * grad_xi sum_k z_k J_k (reward-only worst-task update).
void strict_update(TaskWeights& w, std::span<const double> rewards, const ReweightConfig& cfg);

/// Improvement-aware update with signal s = I + lambda * J.
void iwu_update(TaskWeights& w, std::span<const double> rewards, std::span<const double> improvements,
                const ReweightConfig& cfg);

/// Reward-only update with logit shrinkage: xi <- xi - beta (g + eta xi).
void regularized_update(TaskWeights& w, std::span<const double> rewards, const ReweightConfig& cfg);

/// Dispatches on cfg.mode. fixed_uniform leaves the weights untouched.
void reweight_step(TaskWeights& w, std::span<const double> rewards, std::span<const double> improvements,
                   const ReweightConfig& cfg);

}  // namespace mtgrpo
