// SPDX-License-Identifier: Apache-2.0
#include "mtgrpo/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mtgrpo/rng.hpp"

namespace mtgrpo {

void ClipConfig::validate() const {
  if (!(clip_low > 0.0) || !(clip_high > 0.0)) throw std::invalid_argument("ClipConfig: clip bounds must be positive");
  if (clip_low >= 1.0) throw std::invalid_argument("ClipConfig: clip_low must be < 1");
  if (kl_coeff < 0.0) throw std::invalid_argument("ClipConfig: kl_coeff must be >= 0");
  if (!(std_floor > 0.0)) throw std::invalid_argument("ClipConfig: std_floor must be positive");
}

void OptimizerConfig::validate() const {
  adam.validate();
  if (num_minibatch < 1) throw std::invalid_argument("OptimizerConfig: num_minibatch must be >= 1");
}

AdvantageSet group_advantages(std::span<const double> rewards, const ClipConfig& cfg) {
  const std::size_t n = rewards.size();
  if (n < 2) throw std::invalid_argument("group_advantages: group size must be >= 2");
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  var /= static_cast<double>(n);

  AdvantageSet adv;
  adv.group_mean = mean;
  adv.group_std = std::sqrt(var);
  adv.values.assign(n, 0.0);
  if (adv.group_std < cfg.std_floor) {
    adv.is_zero_gradient = true;
    return adv;
  }
  for (std::size_t i = 0; i < n; ++i) adv.values[i] = (rewards[i] - mean) / adv.group_std;
  return adv;
}

ScoredGroup score_group(RolloutGroup group, const ClipConfig& cfg) {
  ScoredGroup s;
  s.advantages = group_advantages(group.rewards, cfg);
  s.group = std::move(group);
  return s;
}

double kl_penalty(double u) { return u - std::log(u) - 1.0; }

namespace {

struct TokenTerm {
  double value;
  double dlogp;  // derivative w.r.t. logp_cur of this token
};

TokenTerm token_term(double logp_cur, double logp_old, double logp_ref, double adv, const ClipConfig& cfg) {
  const double r = std::exp(logp_cur - logp_old);
  if (!std::isfinite(r)) throw std::domain_error("clipped surrogate: non-finite importance ratio");
  const double lo = 1.0 - cfg.clip_low;
  const double hi = 1.0 + cfg.clip_high;
  const double clipped = std::clamp(r, lo, hi);

  TokenTerm out{0.0, 0.0};
  if (adv != 0.0) {
    out.value = std::min(r * adv, clipped * adv);
    // The unclipped branch is active (and carries gradient) unless the ratio has
    // moved past the bound in the direction the advantage rewards.
    const bool active = adv > 0.0 ? r <= hi : r >= lo;
    if (active) out.dlogp = r * adv;
  }
  if (cfg.kl_coeff != 0.0) {
    const double u = std::exp(logp_ref - logp_cur);
    out.value -= cfg.kl_coeff * r * kl_penalty(u);
    // d/dl [r f(u)] = r (l - l_ref) since r*u does not depend on l.
    out.dlogp -= cfg.kl_coeff * r * (logp_cur - logp_ref);
  }
  return out;
}

void check_group(const RolloutGroup& g, const AdvantageSet& adv) {
  const std::size_t cells = static_cast<std::size_t>(g.size()) * static_cast<std::size_t>(g.answer_len);
  if (g.size() < 1 || static_cast<int>(adv.values.size()) != g.size() || g.logp_old.size() != cells ||
      g.logp_ref.size() != cells)
    throw std::invalid_argument("rollout group and advantages are inconsistent");
}

}  // namespace

double clipped_surrogate(const RolloutGroup& group, const AdvantageSet& adv, const ClipConfig& cfg) {
  check_group(group, adv);
  if (group.logp_cur.size() != group.logp_old.size()) throw std::invalid_argument("logp_cur missing");
  const int len = group.answer_len;
  double total = 0.0;
  for (int i = 0; i < group.size(); ++i) {
    double row = 0.0;
    for (int t = 0; t < len; ++t) {
      const std::size_t c = group.at(i, t);
      row += token_term(group.logp_cur[c], group.logp_old[c], group.logp_ref[c],
                        adv.values[static_cast<std::size_t>(i)], cfg)
                 .value;
    }
    total += row / len;
  }
  return total / group.size();
}

double surrogate_value_and_grad(const PolicyParams& params, const ScoredGroup& scored, const ClipConfig& cfg,
                                double scale, std::span<double> grad) {
  const RolloutGroup& g = scored.group;
  check_group(g, scored.advantages);
  const int len = g.answer_len;
  const auto v = static_cast<std::size_t>(params.vocab_size(g.prompt.task_id));
  std::vector<std::vector<double>> logp(static_cast<std::size_t>(len), std::vector<double>(v));
  for (int t = 0; t < len; ++t)
    log_softmax(params.logits(g.prompt.task_id, g.prompt.prompt_id, t), logp[static_cast<std::size_t>(t)]);

  const double norm = 1.0 / (static_cast<double>(g.size()) * len);
  std::vector<double> token_scale(static_cast<std::size_t>(len));
  double total = 0.0;
  for (int i = 0; i < g.size(); ++i) {
    const Answer& a = g.answers[static_cast<std::size_t>(i)];
    bool any = false;
    for (int t = 0; t < len; ++t) {
      const std::size_t c = g.at(i, t);
      const double lc = logp[static_cast<std::size_t>(t)][static_cast<std::size_t>(a[static_cast<std::size_t>(t)])];
      const TokenTerm term =
          token_term(lc, g.logp_old[c], g.logp_ref[c], scored.advantages.values[static_cast<std::size_t>(i)], cfg);
      total += term.value * norm;
      token_scale[static_cast<std::size_t>(t)] = scale * norm * term.dlogp;
      any = any || token_scale[static_cast<std::size_t>(t)] != 0.0;
    }
    if (!grad.empty() && any) accumulate_grad_logprob(params, g.prompt, a, token_scale, grad);
  }
  return total;
}

std::vector<int> task_group_counts(std::span<const ScoredGroup> batch, int num_tasks) {
  std::vector<int> counts(static_cast<std::size_t>(num_tasks), 0);
  for (const ScoredGroup& s : batch) {
    if (s.task() < 0 || s.task() >= num_tasks) throw std::out_of_range("group task id out of range");
    ++counts[static_cast<std::size_t>(s.task())];
  }
  return counts;
}

std::vector<double> weighted_surrogate_gradient(const PolicyParams& params, std::span<const ScoredGroup> batch,
                                                std::span<const std::size_t> subset,
                                                std::span<const int> task_counts, std::span<const double> z,
                                                const ClipConfig& cfg, double* objective) {
  std::vector<double> grad(params.size(), 0.0);
  double obj = 0.0;
  for (std::size_t idx : subset) {
    const ScoredGroup& s = batch[idx];
    const auto k = static_cast<std::size_t>(s.task());
    if (k >= z.size() || k >= task_counts.size() || task_counts[k] == 0)
      throw std::invalid_argument("weighted_surrogate_gradient: task without weight or count");
    const double w = z[k] / task_counts[k];
    obj += w * surrogate_value_and_grad(params, s, cfg, w, grad);
  }
  for (double gi : grad)
    if (!std::isfinite(gi)) throw std::domain_error("policy gradient is not finite");
  if (objective != nullptr) *objective = obj;
  return grad;
}

PolicyUpdateResult policy_update(PolicyParams& params, AdamW& optimizer, std::span<const ScoredGroup> batch,
                                 const ClipConfig& cfg, const OptimizerConfig& opt, std::span<const double> z,
                                 std::uint64_t shuffle_key) {
  if (batch.empty()) throw std::invalid_argument("policy_update: empty batch");
  const std::vector<int> counts = task_group_counts(batch, static_cast<int>(z.size()));

  Stream rng(shuffle_key);
  const std::vector<std::size_t> order = permutation(batch.size(), rng);
  const std::size_t chunks = std::min<std::size_t>(static_cast<std::size_t>(opt.num_minibatch), batch.size());
  const std::size_t base = batch.size() / chunks;
  const std::size_t extra = batch.size() % chunks;

  PolicyUpdateResult result;
  std::size_t begin = 0;
  for (std::size_t c = 0; c < chunks; ++c) {
    const std::size_t len = base + (c < extra ? 1 : 0);
    std::span<const std::size_t> subset(order.data() + begin, len);
    begin += len;
    double obj = 0.0;
    std::vector<double> grad = weighted_surrogate_gradient(params, batch, subset, counts, z, cfg, &obj);
    for (double& g : grad) g = -g;  // the optimizer descends
    optimizer.step(params.mutable_values(), grad);
    params.mark_updated();
    result.objectives.push_back(obj);
    ++result.sub_updates;
  }
  return result;
}

TaskValues task_losses(const PolicyParams& params, std::span<const ScoredGroup> batch, const ClipConfig& cfg,
                       int num_tasks) {
  TaskValues out;
  out.values.assign(static_cast<std::size_t>(num_tasks), 0.0);
  out.present.assign(static_cast<std::size_t>(num_tasks), false);
  std::vector<int> counts(static_cast<std::size_t>(num_tasks), 0);
  for (const ScoredGroup& s : batch) {
    const auto k = static_cast<std::size_t>(s.task());
    if (k >= counts.size()) throw std::out_of_range("group task id out of range");
    out.values[k] += surrogate_value_and_grad(params, s, cfg, 0.0, {});
    ++counts[k];
  }
  for (std::size_t k = 0; k < counts.size(); ++k) {
    if (counts[k] > 0) {
      out.values[k] /= counts[k];
      out.present[k] = true;
    }
  }
  return out;
}

TaskValues improvement(const TaskValues& j_new, const TaskValues& j_old, double clip_mag) {
  if (j_new.values.size() != j_old.values.size()) throw std::invalid_argument("improvement: task count mismatch");
  if (!(clip_mag > 0.0)) throw std::invalid_argument("improvement: clip magnitude must be positive");
  TaskValues out;
  out.values.assign(j_new.values.size(), 0.0);
  out.present.assign(j_new.values.size(), false);
  for (std::size_t k = 0; k < j_new.values.size(); ++k) {
    if (!j_new.present[k] || !j_old.present[k]) continue;
    out.values[k] = std::clamp(j_new.values[k] - j_old.values[k], -clip_mag, clip_mag);
    out.present[k] = true;
  }
  return out;
}

}  // namespace mtgrpo
