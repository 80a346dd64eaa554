// SPDX-License-Identifier: Apache-2.0
#include "mtgrpo/env.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "mtgrpo/rng.hpp"

namespace mtgrpo {

namespace {
constexpr std::uint64_t kMaxAnswerSpace = std::uint64_t{1} << 53;
}

void TaskSpec::validate() const {
  if (num_prompts < 1) throw std::invalid_argument("TaskSpec: num_prompts must be >= 1");
  if (answer_len < 1) throw std::invalid_argument("TaskSpec: answer_len must be >= 1");
  if (vocab_size < 2) throw std::invalid_argument("TaskSpec: vocab_size must be >= 2");
  if (!(valid_format_fraction > 0.0 && valid_format_fraction <= 1.0))
    throw std::invalid_argument("TaskSpec: valid_format_fraction must be in (0, 1]");
  std::uint64_t n = 1;
  for (int t = 0; t < answer_len; ++t) {
    if (n > kMaxAnswerSpace / static_cast<std::uint64_t>(vocab_size))
      throw std::invalid_argument("TaskSpec: answer space V^L too large");
    n *= static_cast<std::uint64_t>(vocab_size);
  }
}

std::uint64_t TaskSpec::answer_space() const {
  std::uint64_t n = 1;
  for (int t = 0; t < answer_len; ++t) n *= static_cast<std::uint64_t>(vocab_size);
  return n;
}

std::uint64_t TaskSpec::valid_count() const {
  const std::uint64_t n = answer_space();
  // The relative nudge keeps e.g. 0.3 * 10 from rounding up to 4.
  const double raw = valid_format_fraction * static_cast<double>(n) * (1.0 - 1e-12);
  auto m = static_cast<std::uint64_t>(std::ceil(raw));
  if (m < 1) m = 1;
  if (m > n) m = n;
  return m;
}

TaskSuite::TaskSuite(std::vector<TaskSpec> specs) : specs_(std::move(specs)) {
  if (specs_.empty()) throw std::invalid_argument("TaskSuite: empty spec list");
  correct_.resize(specs_.size());
  correct_index_.resize(specs_.size());
  for (std::size_t k = 0; k < specs_.size(); ++k) {
    const TaskSpec& s = specs_[k];
    s.validate();
    if (s.task_id != static_cast<int>(k))
      throw std::invalid_argument("TaskSuite: task_id " + std::to_string(s.task_id) +
                                  " does not match its position " + std::to_string(k));
    correct_[k].reserve(static_cast<std::size_t>(s.num_prompts));
    for (int p = 0; p < s.num_prompts; ++p) {
      Stream rng = Stream::derive(s.difficulty_seed, {static_cast<std::uint64_t>(p)});
      Answer a(static_cast<std::size_t>(s.answer_len));
      for (int& tok : a) tok = static_cast<int>(rng.below(static_cast<std::uint64_t>(s.vocab_size)));
      correct_index_[k].push_back(answer_index(static_cast<int>(k), a));
      correct_[k].push_back(std::move(a));
    }
  }
}

const TaskSpec& TaskSuite::spec(int task) const {
  if (task < 0 || task >= num_tasks()) throw std::out_of_range("TaskSuite: task id out of range");
  return specs_[static_cast<std::size_t>(task)];
}

void TaskSuite::check_prompt(int task, int prompt) const {
  const TaskSpec& s = spec(task);
  if (prompt < 0 || prompt >= s.num_prompts) throw std::out_of_range("TaskSuite: prompt id out of range");
}

const Answer& TaskSuite::correct_answer(int task, int prompt) const {
  check_prompt(task, prompt);
  return correct_[static_cast<std::size_t>(task)][static_cast<std::size_t>(prompt)];
}

PromptInstance TaskSuite::prompt(int task, int prompt_id) const {
  check_prompt(task, prompt_id);
  PromptInstance p;
  p.task_id = task;
  p.prompt_id = prompt_id;
  p.feature.assign(static_cast<std::size_t>(spec(task).num_prompts), 0.0);
  p.feature[static_cast<std::size_t>(prompt_id)] = 1.0;
  return p;
}

std::uint64_t TaskSuite::answer_index(int task, std::span<const int> answer) const {
  const TaskSpec& s = spec(task);
  if (static_cast<int>(answer.size()) != s.answer_len)
    throw std::invalid_argument("answer length " + std::to_string(answer.size()) + " != answer_len " +
                                std::to_string(s.answer_len));
  std::uint64_t idx = 0;
  for (int tok : answer) {
    if (tok < 0 || tok >= s.vocab_size) throw std::invalid_argument("answer token out of vocabulary");
    idx = idx * static_cast<std::uint64_t>(s.vocab_size) + static_cast<std::uint64_t>(tok);
  }
  return idx;
}

Answer TaskSuite::answer_from_index(int task, std::uint64_t index) const {
  const TaskSpec& s = spec(task);
  if (index >= s.answer_space()) throw std::out_of_range("answer index out of range");
  Answer a(static_cast<std::size_t>(s.answer_len));
  const auto v = static_cast<std::uint64_t>(s.vocab_size);
  for (int t = s.answer_len - 1; t >= 0; --t) {
    a[static_cast<std::size_t>(t)] = static_cast<int>(index % v);
    index /= v;
  }
  return a;
}

bool TaskSuite::is_valid_format(int task, int prompt, std::span<const int> answer) const {
  check_prompt(task, prompt);
  const std::uint64_t idx = answer_index(task, answer);
  const std::uint64_t correct = correct_index_[static_cast<std::size_t>(task)][static_cast<std::size_t>(prompt)];
  const std::uint64_t m = spec(task).valid_count();
  if (idx == correct) return true;
  // The correct answer displaces the last lexicographic member when it falls outside.
  if (correct >= m && idx == m - 1) return false;
  return idx < m;
}

RewardTier TaskSuite::tier(const PromptInstance& prompt, std::span<const int> answer) const {
  const std::uint64_t idx = answer_index(prompt.task_id, answer);
  check_prompt(prompt.task_id, prompt.prompt_id);
  if (idx == correct_index_[static_cast<std::size_t>(prompt.task_id)][static_cast<std::size_t>(prompt.prompt_id)])
    return RewardTier::correct;
  return is_valid_format(prompt.task_id, prompt.prompt_id, answer) ? RewardTier::formatted : RewardTier::invalid;
}

double tier_reward(RewardTier tier) {
  switch (tier) {
    case RewardTier::correct:
      return kRewardCorrect;
    case RewardTier::formatted:
      return kRewardFormatted;
    case RewardTier::invalid:
      return kRewardInvalid;
  }
  return kRewardInvalid;
}

double TaskSuite::reward(const PromptInstance& prompt, std::span<const int> answer) const {
  return tier_reward(tier(prompt, answer));
}

TaskSuite make_task_suite(std::vector<TaskSpec> specs) { return TaskSuite(std::move(specs)); }

double evaluate_reward(const TaskSuite& suite, const PromptInstance& prompt, std::span<const int> answer) {
  return suite.reward(prompt, answer);
}

}  // namespace mtgrpo
