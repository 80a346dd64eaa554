// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mtgrpo/grpo.hpp"
#include "mtgrpo/rng.hpp"

namespace mtgrpo {

enum class FilterPolicy { none, strict, lenient };

FilterPolicy parse_filter_policy(const std::string& s);
std::string to_string(FilterPolicy f);

/// True when the group survives the zero-gradient filter.
/// strict: at least one reward of 1.0 and at least one other reward.
/// lenient: rewards are not all equal.
bool passes_filter(std::span<const double> rewards, FilterPolicy policy);

struct FilterStats {
  std::vector<double> rho;
  double ema_decay = 0.9;
  std::vector<long long> counts_seen;
  std::vector<long long> counts_filtered;

  static FilterStats initial(int num_tasks, double ema_decay);
};

inline constexpr double kMaxFilterRate = 1.0 - 1e-6;

/// rho_k <- decay * rho_k + (1 - decay) * filtered_k / generated_k for tasks that generated anything.
FilterStats update_filter_stats(const FilterStats& stats, std::span<const int> generated, std::span<const int> filtered);

struct SamplerConfig {
  int batch_size = 32;         // B
  int oversample = 3;          // M_os
  int max_resamples = 10;      // N_rs
  double max_inflation = 5.0;  // M_acc
  FilterPolicy filter = FilterPolicy::strict;
  /// Enforce per-task post-filter targets (deficiency-aware resampling and trimming).
  /// When off the sampler behaves like plain dynamic sampling: it only fills B.
  bool ratio_preserving = true;
  /// Inflate generation probabilities by the tracked filter rates.
  bool acceptance_aware = true;

  void validate() const;
};

struct BatchPlan {
  std::vector<int> target_counts;     // n
  std::vector<double> inflated_dist;  // z hat
  int oversample_total = 0;           // M_os * B
};

std::vector<int> desired_counts(std::span<const double> z, int batch_size, Stream& rng);
std::vector<double> inflation_factors(const FilterStats& stats, double max_inflation);
std::vector<double> recalibrated_dist(std::span<const double> z, std::span<const double> m);

struct FilterResult {
  std::vector<ScoredGroup> kept;
  std::vector<int> seen;
  std::vector<int> filtered;
};

FilterResult zero_grad_filter(std::vector<ScoredGroup> groups, FilterPolicy policy, int num_tasks);

struct AcceptedBatch {
  std::vector<ScoredGroup> groups;
  std::vector<int> per_task_counts;  // c
  int resample_rounds_used = 0;
  bool undersized = false;

  BatchPlan plan;
  // Telemetry over every group generated this step, all rounds.
  std::vector<int> generated;
  std::vector<int> filtered;
  std::vector<int> zero_gradient;
  std::vector<double> reward_sum;
  std::vector<long long> rollouts;
};

/// Produces one scored group for `task` from the stream keyed by `key`.
using GroupGenerator = std::function<ScoredGroup(int task, std::uint64_t key)>;

/// Ratio-preserving batch construction. Returns the batch and the updated filter stats.
std::pair<AcceptedBatch, FilterStats> rp_sample(const GroupGenerator& generate, std::span<const double> z,
                                                const SamplerConfig& cfg, const FilterStats& stats,
                                                std::uint64_t step_key);

/// Generator backed by the policy: draws a prompt of the task uniformly and samples G rollouts.
GroupGenerator policy_generator(const TaskSuite& suite, const PolicyParams& behavior, const PolicyParams& reference,
                                int group_size, const ClipConfig& clip);

/// Synthetic generator: a group of task k is informative with fixed probability rates[k].
/// Informative groups carry rewards {1, 0.1, ...}; the rest are all 0.1.
GroupGenerator acceptance_oracle(std::vector<double> rates, int group_size, const ClipConfig& clip);

}  // namespace mtgrpo
