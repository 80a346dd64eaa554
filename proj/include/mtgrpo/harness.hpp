// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mtgrpo/env.hpp"
#include "mtgrpo/grpo.hpp"
#include "mtgrpo/policy.hpp"
#include "mtgrpo/reweight.hpp"
#include "mtgrpo/sampler.hpp"

namespace mtgrpo {

enum class Method { mtgrpo_iwu, mtgrpo_regularized, mtgrpo_strict, grpo_uniform, dapo_uniform, sec_approx };

Method parse_method(const std::string& s);
std::string to_string(Method m);

/// Advantage-magnitude task weighting. Approximates a self-evolving curriculum; it is
/// not that method's implementation.
struct SecConfig {
  double smoothing = 0.9;  // EMA decay of per-task mean |A|
  double floor = 1e-3;
};

struct TrainConfig {
  Method method = Method::mtgrpo_iwu;
  std::vector<TaskSpec> tasks;
  int steps = 400;
  int group_size = 8;
  double init_scale = 0.0;
  int eval_every = 5;
  int eval_prompts_per_task = 0;  // 0 evaluates every prompt of the task
  std::uint64_t seed = 0;

  SamplerConfig sampler;
  double ema_decay = 0.9;
  OptimizerConfig policy;
  ClipConfig clip;
  ReweightConfig reweight;
  SecConfig sec;

  /// Defaults for a method: reweight mode and sampler behaviour.
  static TrainConfig preset(Method m);
  void validate() const;
};

struct MetricsRecord {
  int step = 0;
  bool evaluated = false;
  std::vector<double> accuracy;
  double worst_accuracy = 0.0;
  double average_accuracy = 0.0;

  std::vector<double> z;       // weights the batch was built under
  std::vector<double> logits;  // xi after this step's weight update
  std::vector<double> batch_reward;
  std::vector<bool> batch_reward_observed;
  std::vector<double> improvement;
  std::vector<bool> improvement_present;
  std::vector<double> rho;

  int resample_rounds = 0;
  bool undersized = false;
  int batch_groups = 0;
  std::vector<int> target_counts;
  std::vector<int> accepted_counts;
  std::vector<int> generated;
  std::vector<int> filtered;
  std::vector<double> realized_proportions;
  std::uint64_t policy_version = 0;
};

struct RunLog {
  std::string method;
  std::uint64_t seed = 0;
  std::vector<MetricsRecord> records;
  bool aborted = false;
  std::string abort_reason;
  PolicyParams final_params;
  std::vector<double> final_logits;
};

RunLog run_training(const TrainConfig& cfg);

/// Greedy-decoding accuracy per task over the first `prompts_per_task` prompts (0 = all).
std::vector<double> evaluate(const PolicyParams& params, const TaskSuite& suite, int prompts_per_task);

double worst_task(std::span<const double> acc);
double average_task(std::span<const double> acc);

/// Mean per-task relative change (percent) versus a baseline. Tasks with zero
/// baseline accuracy are skipped; the count of skipped tasks is reported through `excluded`.
double relative_change(std::span<const double> method_acc, std::span<const double> baseline_acc,
                       int* excluded = nullptr);

/// First step whose worst-task accuracy is at least `threshold`, among evaluated records.
std::optional<int> steps_to_threshold(const RunLog& log, double threshold);
std::optional<int> steps_to_threshold(std::span<const MetricsRecord> records, double threshold);

/// Sampling weights proportional to max(mean |A|, floor); uniform when no task has data.
std::vector<double> sec_weights(std::span<const double> mean_abs_adv, const std::vector<bool>& has_data,
                                double floor);

/// Convenience for the sec-approx baseline; identical to run_training with method sec-approx.
RunLog run_baseline_sec_approx(const TrainConfig& cfg);

}  // namespace mtgrpo
