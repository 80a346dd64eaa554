// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mtgrpo/optim.hpp"
#include "mtgrpo/policy.hpp"

namespace mtgrpo {

struct ClipConfig {
  double clip_low = 0.2;
  double clip_high = 0.28;
  double kl_coeff = 0.0;
  double std_floor = 1e-8;

  void validate() const;
};

/// Group-normalized advantages, broadcast to every token of a rollout.
struct AdvantageSet {
  std::vector<double> values;
  double group_mean = 0.0;
  double group_std = 0.0;
  bool is_zero_gradient = false;
};

/// A rollout group together with its advantages; the unit the sampler and the update work on.
struct ScoredGroup {
  RolloutGroup group;
  AdvantageSet advantages;

  int task() const { return group.prompt.task_id; }
};

/// (R_i - mean) / std with population std. Groups whose std falls below std_floor
/// are flagged zero-gradient and get all-zero advantages.
AdvantageSet group_advantages(std::span<const double> rewards, const ClipConfig& cfg);

ScoredGroup score_group(RolloutGroup group, const ClipConfig& cfg);

/// f(u) = u - log u - 1
double kl_penalty(double u);

/// Token-level clipped objective of one group, using the group's stored logp_cur.
double clipped_surrogate(const RolloutGroup& group, const AdvantageSet& adv, const ClipConfig& cfg);

/// Evaluates the clipped objective with logp_cur recomputed under `params` and, when `grad`
/// is non-empty, adds scale * d(objective)/d(theta) into it. Returns the objective value.
double surrogate_value_and_grad(const PolicyParams& params, const ScoredGroup& scored, const ClipConfig& cfg,
                                double scale, std::span<double> grad);

struct OptimizerConfig {
  AdamWConfig adam{1e-2, 0.9, 0.99, 1e-8, 0.0};
  int num_minibatch = 4;

  void validate() const;
};

std::vector<int> task_group_counts(std::span<const ScoredGroup> batch, int num_tasks);

/// Ascent direction of sum_k z_k * (1/n_k) * sum_{g in subset, task(g) = k} objective_g,
/// where n_k counts task k in the whole batch. `objective`, when given, receives the value.
std::vector<double> weighted_surrogate_gradient(const PolicyParams& params, std::span<const ScoredGroup> batch,
                                                std::span<const std::size_t> subset,
                                                std::span<const int> task_counts, std::span<const double> z,
                                                const ClipConfig& cfg, double* objective = nullptr);

struct PolicyUpdateResult {
  int sub_updates = 0;
  std::vector<double> objectives;  // weighted objective before each sub-update
};

/// One training step worth of policy updates: the batch is shuffled with `shuffle_key`,
/// split into num_minibatch chunks and each chunk takes one optimizer step, pi_old fixed.
PolicyUpdateResult policy_update(PolicyParams& params, AdamW& optimizer, std::span<const ScoredGroup> batch,
                                 const ClipConfig& cfg, const OptimizerConfig& opt, std::span<const double> z,
                                 std::uint64_t shuffle_key);

/// Per-task values with presence flags; absent tasks hold 0.
struct TaskValues {
  std::vector<double> values;
  std::vector<bool> present;
};

/// Per-task mean of the clipped objective under `params` over the task's groups in the batch.
TaskValues task_losses(const PolicyParams& params, std::span<const ScoredGroup> batch, const ClipConfig& cfg,
                       int num_tasks);

/// clamp(J_new - J_old, -clip_mag, clip_mag); tasks missing on either side give 0, flagged absent.
TaskValues improvement(const TaskValues& j_new, const TaskValues& j_old, double clip_mag);

}  // namespace mtgrpo
