// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace mtgrpo {

class PolicyParams;

using Answer = std::vector<int>;

inline constexpr double kRewardCorrect = 1.0;
inline constexpr double kRewardFormatted = 0.1;
inline constexpr double kRewardInvalid = 0.0;

enum class RewardTier : int { correct = 0, formatted = 1, invalid = 2 };

/// One synthetic verifiable task family D_k with its reward R_k.
struct TaskSpec {
  int task_id = 0;
  int num_prompts = 1;
  int answer_len = 1;
  int vocab_size = 2;
  double valid_format_fraction = 1.0;
  std::uint64_t difficulty_seed = 0;

  void validate() const;
  /// V^L. validate() guarantees it fits in 2^53.
  std::uint64_t answer_space() const;
  /// Size of the formatted set, ceil(valid_format_fraction * V^L) clamped to [1, V^L].
  std::uint64_t valid_count() const;
};

struct PromptInstance {
  int task_id = 0;
  int prompt_id = 0;
  std::vector<double> feature;  // one-hot of length num_prompts
};

/// Immutable collection of tasks with their correct-answer tables.
class TaskSuite {
 public:
  explicit TaskSuite(std::vector<TaskSpec> specs);

  int num_tasks() const { return static_cast<int>(specs_.size()); }
  const TaskSpec& spec(int task) const;
  const std::vector<TaskSpec>& specs() const { return specs_; }

  const Answer& correct_answer(int task, int prompt) const;
  PromptInstance prompt(int task, int prompt_id) const;

  /// Lexicographic index of an answer (position 0 most significant).
  std::uint64_t answer_index(int task, std::span<const int> answer) const;
  Answer answer_from_index(int task, std::uint64_t index) const;

  bool is_valid_format(int task, int prompt, std::span<const int> answer) const;
  RewardTier tier(const PromptInstance& prompt, std::span<const int> answer) const;
  double reward(const PromptInstance& prompt, std::span<const int> answer) const;

 private:
  void check_prompt(int task, int prompt) const;

  std::vector<TaskSpec> specs_;
  std::vector<std::vector<Answer>> correct_;
  std::vector<std::vector<std::uint64_t>> correct_index_;
};

TaskSuite make_task_suite(std::vector<TaskSpec> specs);

double evaluate_reward(const TaskSuite& suite, const PromptInstance& prompt, std::span<const int> answer);

double tier_reward(RewardTier tier);

/// Exact policy mass on each reward tier for one prompt, by enumeration of V^L answers.
std::array<double, 3> tier_masses(const TaskSuite& suite, const PolicyParams& params, const PromptInstance& prompt);

/// Probability, averaged over the task's prompts, that G i.i.d. rollouts all land
/// in the same reward tier. Diagnostic; requires V^L <= 4096.
double zero_grad_probability(const TaskSuite& suite, const PolicyParams& params, int task, int group_size);

inline constexpr std::uint64_t kMaxEnumeratedAnswers = 4096;

}  // namespace mtgrpo
