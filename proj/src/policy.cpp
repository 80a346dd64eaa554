// SPDX-License-Identifier: Apache-2.0
#include "mtgrpo/policy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mtgrpo/rng.hpp"

namespace mtgrpo {

PolicyParams PolicyParams::zeros(const TaskSuite& suite) {
  PolicyParams p;
  std::size_t off = 0;
  for (const TaskSpec& s : suite.specs()) {
    Block b;
    b.offset = off;
    b.num_prompts = s.num_prompts;
    b.answer_len = s.answer_len;
    b.vocab_size = s.vocab_size;
    off += static_cast<std::size_t>(s.num_prompts) * static_cast<std::size_t>(s.answer_len) *
           static_cast<std::size_t>(s.vocab_size);
    p.blocks_.push_back(b);
  }
  p.weights_.assign(off, 0.0);
  return p;
}

PolicyParams PolicyParams::uniform_noise(const TaskSuite& suite, double scale, std::uint64_t seed) {
  PolicyParams p = zeros(suite);
  if (scale == 0.0) return p;
  Stream rng = Stream::derive(seed, {0x706f6c696379ULL});
  for (double& w : p.weights_) w = scale * (2.0 * rng.uniform() - 1.0);
  return p;
}

const PolicyParams::Block& PolicyParams::block(int task) const {
  if (task < 0 || task >= num_tasks()) throw std::out_of_range("PolicyParams: task out of range");
  return blocks_[static_cast<std::size_t>(task)];
}

std::size_t PolicyParams::offset(int task, int prompt, int position) const {
  const Block& b = block(task);
  if (prompt < 0 || prompt >= b.num_prompts) throw std::out_of_range("PolicyParams: prompt out of range");
  if (position < 0 || position >= b.answer_len) throw std::out_of_range("PolicyParams: position out of range");
  return b.offset + (static_cast<std::size_t>(prompt) * static_cast<std::size_t>(b.answer_len) +
                     static_cast<std::size_t>(position)) *
                        static_cast<std::size_t>(b.vocab_size);
}

std::span<const double> PolicyParams::logits(int task, int prompt, int position) const {
  return std::span<const double>(weights_).subspan(offset(task, prompt, position),
                                                   static_cast<std::size_t>(block(task).vocab_size));
}

bool PolicyParams::same_shape(const PolicyParams& other) const {
  if (blocks_.size() != other.blocks_.size() || weights_.size() != other.weights_.size()) return false;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const Block& a = blocks_[i];
    const Block& b = other.blocks_[i];
    if (a.num_prompts != b.num_prompts || a.answer_len != b.answer_len || a.vocab_size != b.vocab_size) return false;
  }
  return true;
}

FrozenPolicy snapshot(const PolicyParams& params) { return FrozenPolicy(params); }

void log_softmax(std::span<const double> logits, std::span<double> out) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double l : logits) sum += std::exp(l - mx);
  const double lse = mx + std::log(sum);
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
}

void softmax_into(std::span<const double> logits, std::span<double> out) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] /= sum;
}

namespace {

void check_answer(const PolicyParams& params, const PromptInstance& prompt, std::span<const int> answer) {
  if (static_cast<int>(answer.size()) != params.answer_len(prompt.task_id))
    throw std::invalid_argument("answer length does not match the task's answer_len");
  const int v = params.vocab_size(prompt.task_id);
  for (int tok : answer)
    if (tok < 0 || tok >= v) throw std::invalid_argument("answer token out of vocabulary");
}

}  // namespace

std::vector<double> logprob(const PolicyParams& params, const PromptInstance& prompt, std::span<const int> answer) {
  check_answer(params, prompt, answer);
  const int len = params.answer_len(prompt.task_id);
  std::vector<double> lp(static_cast<std::size_t>(params.vocab_size(prompt.task_id)));
  std::vector<double> out(static_cast<std::size_t>(len));
  for (int t = 0; t < len; ++t) {
    log_softmax(params.logits(prompt.task_id, prompt.prompt_id, t), lp);
    out[static_cast<std::size_t>(t)] = lp[static_cast<std::size_t>(answer[static_cast<std::size_t>(t)])];
  }
  return out;
}

void accumulate_grad_logprob(const PolicyParams& params, const PromptInstance& prompt, std::span<const int> answer,
                             std::span<const double> scale, std::span<double> grad) {
  check_answer(params, prompt, answer);
  if (grad.size() != params.size()) throw std::invalid_argument("gradient buffer has wrong size");
  const int len = params.answer_len(prompt.task_id);
  const auto v = static_cast<std::size_t>(params.vocab_size(prompt.task_id));
  std::vector<double> probs(v);
  for (int t = 0; t < len; ++t) {
    const double s = scale[static_cast<std::size_t>(t)];
    if (s == 0.0) continue;
    softmax_into(params.logits(prompt.task_id, prompt.prompt_id, t), probs);
    const std::size_t off = params.offset(prompt.task_id, prompt.prompt_id, t);
    const auto chosen = static_cast<std::size_t>(answer[static_cast<std::size_t>(t)]);
    for (std::size_t j = 0; j < v; ++j) grad[off + j] += s * ((j == chosen ? 1.0 : 0.0) - probs[j]);
  }
}

std::vector<double> grad_logprob(const PolicyParams& params, const PromptInstance& prompt, std::span<const int> answer) {
  std::vector<double> grad(params.size(), 0.0);
  std::vector<double> ones(static_cast<std::size_t>(params.answer_len(prompt.task_id)), 1.0);
  accumulate_grad_logprob(params, prompt, answer, ones, grad);
  return grad;
}

RolloutGroup sample_rollouts(const TaskSuite& suite, const PolicyParams& behavior, const PolicyParams& reference,
                             const PromptInstance& prompt, int group_size, std::uint64_t stream_key) {
  if (group_size < 2) throw std::invalid_argument("sample_rollouts: group size must be >= 2");
  const int len = behavior.answer_len(prompt.task_id);
  const auto v = static_cast<std::size_t>(behavior.vocab_size(prompt.task_id));

  RolloutGroup g;
  g.prompt = prompt;
  g.answer_len = len;
  g.answers.reserve(static_cast<std::size_t>(group_size));
  const std::size_t cells = static_cast<std::size_t>(group_size) * static_cast<std::size_t>(len);
  g.logp_old.resize(cells);
  g.logp_ref.resize(cells);

  // Per-position distributions are shared by all rollouts of the prompt.
  std::vector<std::vector<double>> probs(static_cast<std::size_t>(len), std::vector<double>(v));
  std::vector<std::vector<double>> logp(static_cast<std::size_t>(len), std::vector<double>(v));
  std::vector<std::vector<double>> logp_ref(static_cast<std::size_t>(len), std::vector<double>(v));
  for (int t = 0; t < len; ++t) {
    const auto tt = static_cast<std::size_t>(t);
    softmax_into(behavior.logits(prompt.task_id, prompt.prompt_id, t), probs[tt]);
    log_softmax(behavior.logits(prompt.task_id, prompt.prompt_id, t), logp[tt]);
    log_softmax(reference.logits(prompt.task_id, prompt.prompt_id, t), logp_ref[tt]);
  }

  for (int i = 0; i < group_size; ++i) {
    Stream rng = Stream::derive(stream_key, {static_cast<std::uint64_t>(i)});
    Answer a(static_cast<std::size_t>(len));
    for (int t = 0; t < len; ++t) {
      const auto tt = static_cast<std::size_t>(t);
      const int tok = rng.categorical(probs[tt]);
      a[tt] = tok;
      g.logp_old[g.at(i, t)] = logp[tt][static_cast<std::size_t>(tok)];
      g.logp_ref[g.at(i, t)] = logp_ref[tt][static_cast<std::size_t>(tok)];
    }
    g.rewards.push_back(suite.reward(prompt, a));
    g.answers.push_back(std::move(a));
  }
  g.logp_cur = g.logp_old;
  return g;
}

void refresh_current_logprobs(RolloutGroup& group, const PolicyParams& params) {
  const int len = group.answer_len;
  const auto v = static_cast<std::size_t>(params.vocab_size(group.prompt.task_id));
  std::vector<double> lp(v);
  group.logp_cur.resize(group.answers.size() * static_cast<std::size_t>(len));
  for (int t = 0; t < len; ++t) {
    log_softmax(params.logits(group.prompt.task_id, group.prompt.prompt_id, t), lp);
    for (int i = 0; i < group.size(); ++i)
      group.logp_cur[group.at(i, t)] =
          lp[static_cast<std::size_t>(group.answers[static_cast<std::size_t>(i)][static_cast<std::size_t>(t)])];
  }
}

Answer greedy_answer(const PolicyParams& params, const PromptInstance& prompt) {
  const int len = params.answer_len(prompt.task_id);
  Answer a(static_cast<std::size_t>(len));
  for (int t = 0; t < len; ++t) {
    auto row = params.logits(prompt.task_id, prompt.prompt_id, t);
    a[static_cast<std::size_t>(t)] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return a;
}

std::array<double, 3> tier_masses(const TaskSuite& suite, const PolicyParams& params, const PromptInstance& prompt) {
  const TaskSpec& s = suite.spec(prompt.task_id);
  const std::uint64_t n = s.answer_space();
  if (n > kMaxEnumeratedAnswers) throw std::invalid_argument("tier_masses: V^L exceeds enumeration bound 4096");
  const auto v = static_cast<std::size_t>(s.vocab_size);
  std::vector<std::vector<double>> probs(static_cast<std::size_t>(s.answer_len), std::vector<double>(v));
  for (int t = 0; t < s.answer_len; ++t)
    softmax_into(params.logits(prompt.task_id, prompt.prompt_id, t), probs[static_cast<std::size_t>(t)]);
  std::array<double, 3> mass{0.0, 0.0, 0.0};
  for (std::uint64_t idx = 0; idx < n; ++idx) {
    const Answer a = suite.answer_from_index(prompt.task_id, idx);
    double p = 1.0;
    for (int t = 0; t < s.answer_len; ++t)
      p *= probs[static_cast<std::size_t>(t)][static_cast<std::size_t>(a[static_cast<std::size_t>(t)])];
    mass[static_cast<std::size_t>(suite.tier(prompt, a))] += p;
  }
  return mass;
}

double zero_grad_probability(const TaskSuite& suite, const PolicyParams& params, int task, int group_size) {
  if (group_size < 2) throw std::invalid_argument("zero_grad_probability: group size must be >= 2");
  const TaskSpec& s = suite.spec(task);
  if (s.answer_space() > kMaxEnumeratedAnswers)
    throw std::invalid_argument("zero_grad_probability: V^L exceeds enumeration bound 4096");
  double total = 0.0;
  for (int p = 0; p < s.num_prompts; ++p) {
    const auto mass = tier_masses(suite, params, suite.prompt(task, p));
    for (double m : mass) total += std::pow(m, group_size);
  }
  return total / s.num_prompts;
}

}  // namespace mtgrpo
