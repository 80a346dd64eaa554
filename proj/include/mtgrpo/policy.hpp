// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "mtgrpo/env.hpp"

namespace mtgrpo {

/// Tabular linear-softmax policy. Weights are indexed (task, prompt, position, token);
/// with one-hot prompt features the logits at a position are just the prompt's row.
class PolicyParams {
 public:
  PolicyParams() = default;

  static PolicyParams zeros(const TaskSuite& suite);
  /// Entries uniform in [-scale, scale], keyed by seed.
  static PolicyParams uniform_noise(const TaskSuite& suite, double scale, std::uint64_t seed);

  int num_tasks() const { return static_cast<int>(blocks_.size()); }
  int num_prompts(int task) const { return block(task).num_prompts; }
  int answer_len(int task) const { return block(task).answer_len; }
  int vocab_size(int task) const { return block(task).vocab_size; }

  std::size_t size() const { return weights_.size(); }
  std::span<const double> values() const { return weights_; }
  /// Raw mutable access. Callers that change parameters must call mark_updated().
  std::span<double> mutable_values() { return weights_; }

  std::size_t offset(int task, int prompt, int position) const;
  std::span<const double> logits(int task, int prompt, int position) const;

  std::uint64_t version() const { return version_; }
  void mark_updated() { ++version_; }

  bool same_shape(const PolicyParams& other) const;

 private:
  struct Block {
    std::size_t offset = 0;
    int num_prompts = 0;
    int answer_len = 0;
    int vocab_size = 0;
  };
  const Block& block(int task) const;

  std::vector<Block> blocks_;
  std::vector<double> weights_;
  std::uint64_t version_ = 0;
};

/// Immutable shared copy of a policy, used for pi_old and pi_ref.
class FrozenPolicy {
 public:
  FrozenPolicy() = default;
  explicit FrozenPolicy(PolicyParams params) : params_(std::make_shared<const PolicyParams>(std::move(params))) {}
  const PolicyParams& get() const { return *params_; }
  const PolicyParams* operator->() const { return params_.get(); }
  explicit operator bool() const { return static_cast<bool>(params_); }

 private:
  std::shared_ptr<const PolicyParams> params_;
};

FrozenPolicy snapshot(const PolicyParams& params);

/// G sampled answers for one prompt plus per-token log-probabilities (G x L, row-major).
struct RolloutGroup {
  PromptInstance prompt;
  int answer_len = 0;
  std::vector<Answer> answers;
  std::vector<double> rewards;
  std::vector<double> logp_cur;
  std::vector<double> logp_old;
  std::vector<double> logp_ref;

  int size() const { return static_cast<int>(rewards.size()); }
  std::size_t at(int i, int t) const {
    return static_cast<std::size_t>(i) * static_cast<std::size_t>(answer_len) + static_cast<std::size_t>(t);
  }
};

void log_softmax(std::span<const double> logits, std::span<double> out);
void softmax_into(std::span<const double> logits, std::span<double> out);

std::vector<double> logprob(const PolicyParams& params, const PromptInstance& prompt, std::span<const int> answer);

/// Gradient of sum_t log pi(answer_t | prompt) w.r.t. every parameter (dense, zero off the prompt's rows).
std::vector<double> grad_logprob(const PolicyParams& params, const PromptInstance& prompt, std::span<const int> answer);

/// grad += sum_t scale[t] * d log pi(answer_t) / d theta.
void accumulate_grad_logprob(const PolicyParams& params, const PromptInstance& prompt, std::span<const int> answer,
                             std::span<const double> scale, std::span<double> grad);

/// Samples G answers i.i.d. at temperature 1 from `behavior`. logp_old and logp_cur both hold
/// the behavior log-probs; logp_ref is evaluated under `reference`.
RolloutGroup sample_rollouts(const TaskSuite& suite, const PolicyParams& behavior, const PolicyParams& reference,
                             const PromptInstance& prompt, int group_size, std::uint64_t stream_key);

/// Recomputes logp_cur under `params`.
void refresh_current_logprobs(RolloutGroup& group, const PolicyParams& params);

/// Argmax per position, lowest token index on ties.
Answer greedy_answer(const PolicyParams& params, const PromptInstance& prompt);

}  // namespace mtgrpo
