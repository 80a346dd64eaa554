// SPDX-License-Identifier: Apache-2.0
#include "mtgrpo/harness.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "mtgrpo/rng.hpp"

namespace mtgrpo {

Method parse_method(const std::string& s) {
  if (s == "mtgrpo-iwu") return Method::mtgrpo_iwu;
  if (s == "mtgrpo-regularized") return Method::mtgrpo_regularized;
  if (s == "mtgrpo-strict") return Method::mtgrpo_strict;
  if (s == "grpo-uniform") return Method::grpo_uniform;
  if (s == "dapo-uniform") return Method::dapo_uniform;
  if (s == "sec-approx") return Method::sec_approx;
  throw std::invalid_argument("unknown method: " + s);
}

std::string to_string(Method m) {
  switch (m) {
    case Method::mtgrpo_iwu:
      return "mtgrpo-iwu";
    case Method::mtgrpo_regularized:
      return "mtgrpo-regularized";
    case Method::mtgrpo_strict:
      return "mtgrpo-strict";
    case Method::grpo_uniform:
      return "grpo-uniform";
    case Method::dapo_uniform:
      return "dapo-uniform";
    case Method::sec_approx:
      return "sec-approx";
  }
  return "?";
}

TrainConfig TrainConfig::preset(Method m) {
  TrainConfig c;
  c.method = m;
  c.sampler.batch_size = 32;
  switch (m) {
    case Method::mtgrpo_iwu:
      c.reweight.mode = ReweightMode::iwu;
      break;
    case Method::mtgrpo_regularized:
      c.reweight.mode = ReweightMode::regularized;
      break;
    case Method::mtgrpo_strict:
      c.reweight.mode = ReweightMode::strict;
      break;
    case Method::grpo_uniform:
    case Method::sec_approx:
      c.reweight.mode = ReweightMode::fixed_uniform;
      c.sampler.filter = FilterPolicy::none;
      c.sampler.ratio_preserving = false;
      c.sampler.acceptance_aware = false;
      break;
    case Method::dapo_uniform:
      c.reweight.mode = ReweightMode::fixed_uniform;
      c.sampler.ratio_preserving = false;
      c.sampler.acceptance_aware = false;
      break;
  }
  return c;
}

void TrainConfig::validate() const {
  if (tasks.empty()) throw std::invalid_argument("TrainConfig: no tasks");
  if (steps < 1) throw std::invalid_argument("TrainConfig: steps must be >= 1");
  if (group_size < 2) throw std::invalid_argument("TrainConfig: group_size must be >= 2");
  if (eval_every < 1) throw std::invalid_argument("TrainConfig: eval_every must be >= 1");
  if (eval_prompts_per_task < 0) throw std::invalid_argument("TrainConfig: eval_prompts_per_task must be >= 0");
  if (init_scale < 0.0) throw std::invalid_argument("TrainConfig: init_scale must be >= 0");
  if (!(ema_decay >= 0.0 && ema_decay <= 1.0)) throw std::invalid_argument("TrainConfig: ema_decay must be in [0, 1]");
  if (!(sec.smoothing >= 0.0 && sec.smoothing < 1.0)) throw std::invalid_argument("TrainConfig: sec.smoothing in [0, 1)");
  if (!(sec.floor > 0.0)) throw std::invalid_argument("TrainConfig: sec.floor must be positive");
  for (const TaskSpec& t : tasks) t.validate();
  sampler.validate();
  policy.validate();
  clip.validate();
  reweight.validate();
  const bool uniform_method = method == Method::grpo_uniform || method == Method::dapo_uniform ||
                              method == Method::sec_approx;
  if (uniform_method != (reweight.mode == ReweightMode::fixed_uniform))
    throw std::invalid_argument("TrainConfig: reweight mode is inconsistent with method " + to_string(method));
}

std::vector<double> evaluate(const PolicyParams& params, const TaskSuite& suite, int prompts_per_task) {
  std::vector<double> acc(static_cast<std::size_t>(suite.num_tasks()), 0.0);
  for (int k = 0; k < suite.num_tasks(); ++k) {
    const int total = suite.spec(k).num_prompts;
    const int n = prompts_per_task > 0 ? std::min(prompts_per_task, total) : total;
    int correct = 0;
    for (int p = 0; p < n; ++p)
      if (greedy_answer(params, suite.prompt(k, p)) == suite.correct_answer(k, p)) ++correct;
    acc[static_cast<std::size_t>(k)] = static_cast<double>(correct) / n;
  }
  return acc;
}

double worst_task(std::span<const double> acc) {
  if (acc.empty()) throw std::invalid_argument("worst_task: empty");
  return *std::min_element(acc.begin(), acc.end());
}

double average_task(std::span<const double> acc) {
  if (acc.empty()) throw std::invalid_argument("average_task: empty");
  return std::accumulate(acc.begin(), acc.end(), 0.0) / static_cast<double>(acc.size());
}

double relative_change(std::span<const double> method_acc, std::span<const double> baseline_acc, int* excluded) {
  if (method_acc.size() != baseline_acc.size() || method_acc.empty())
    throw std::invalid_argument("relative_change: accuracy vectors must be non-empty and equal length");
  double total = 0.0;
  int used = 0;
  int skipped = 0;
  for (std::size_t k = 0; k < method_acc.size(); ++k) {
    if (!(baseline_acc[k] > 0.0)) {
      ++skipped;
      continue;
    }
    total += (method_acc[k] - baseline_acc[k]) / baseline_acc[k];
    ++used;
  }
  if (excluded != nullptr) *excluded = skipped;
  if (used == 0) throw std::invalid_argument("relative_change: baseline accuracies are all zero");
  return 100.0 * total / used;
}

std::optional<int> steps_to_threshold(std::span<const MetricsRecord> records, double threshold) {
  for (const MetricsRecord& r : records)
    if (r.evaluated && r.worst_accuracy >= threshold) return r.step;
  return std::nullopt;
}

std::optional<int> steps_to_threshold(const RunLog& log, double threshold) {
  return steps_to_threshold(std::span<const MetricsRecord>(log.records), threshold);
}

std::vector<double> sec_weights(std::span<const double> mean_abs_adv, const std::vector<bool>& has_data,
                                double floor) {
  const std::size_t k = mean_abs_adv.size();
  if (has_data.size() != k || k == 0) throw std::invalid_argument("sec_weights: size mismatch");
  const bool any = std::any_of(has_data.begin(), has_data.end(), [](bool b) { return b; });
  std::vector<double> w(k, 1.0 / static_cast<double>(k));
  if (!any) return w;
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    w[i] = has_data[i] ? std::max(mean_abs_adv[i], floor) : floor;
    total += w[i];
  }
  for (double& v : w) v /= total;
  return w;
}

namespace {

enum : std::uint64_t { kTagStep = 11, kTagShuffle = 12, kTagInit = 13 };

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

RunLog run_training(const TrainConfig& cfg) {
  cfg.validate();
  const TaskSuite suite = make_task_suite(cfg.tasks);
  const int num_tasks = suite.num_tasks();
  const auto nk = static_cast<std::size_t>(num_tasks);

  PolicyParams params = PolicyParams::uniform_noise(suite, cfg.init_scale, Stream::derive_key(cfg.seed, {kTagInit}));
  const FrozenPolicy reference = snapshot(params);
  AdamW policy_opt(cfg.policy.adam, params.size());
  TaskWeights weights(num_tasks, cfg.reweight);
  FilterStats stats = FilterStats::initial(num_tasks, cfg.ema_decay);
  const bool sec_mode = cfg.method == Method::sec_approx;

  std::vector<double> last_reward(nk, 0.0);
  std::vector<double> last_improvement(nk, 0.0);
  std::vector<double> sec_abs_adv(nk, 0.0);
  std::vector<bool> sec_seen(nk, false);
  std::vector<double> accuracy = evaluate(params, suite, cfg.eval_prompts_per_task);

  RunLog log;
  log.method = to_string(cfg.method);
  log.seed = cfg.seed;

  for (int t = 0; t < cfg.steps; ++t) {
    MetricsRecord rec;
    rec.step = t;
    try {
      const std::vector<double> z = sec_mode ? sec_weights(sec_abs_adv, sec_seen, cfg.sec.floor)
                                             : std::vector<double>(weights.z().begin(), weights.z().end());
      rec.z = z;

      const FrozenPolicy behavior = snapshot(params);
      const GroupGenerator gen = policy_generator(suite, behavior.get(), reference.get(), cfg.group_size, cfg.clip);
      const std::uint64_t step_key = Stream::derive_key(cfg.seed, {kTagStep, static_cast<std::uint64_t>(t)});
      SamplerConfig sampler = cfg.sampler;
      auto [batch, next_stats] = rp_sample(gen, z, sampler, stats, step_key);
      stats = std::move(next_stats);

      // J_k(theta_t): mean raw reward over every rollout generated for the task this step.
      rec.batch_reward.resize(nk);
      rec.batch_reward_observed.resize(nk);
      for (std::size_t k = 0; k < nk; ++k) {
        if (batch.rollouts[k] > 0) {
          last_reward[k] = batch.reward_sum[k] / static_cast<double>(batch.rollouts[k]);
          rec.batch_reward_observed[k] = true;
        }
        rec.batch_reward[k] = last_reward[k];
      }

      TaskValues imp;
      imp.values.assign(nk, 0.0);
      imp.present.assign(nk, false);
      if (!batch.groups.empty()) {
        const TaskValues before = task_losses(params, batch.groups, cfg.clip, num_tasks);
        policy_update(params, policy_opt, batch.groups, cfg.clip, cfg.policy, z,
                      Stream::derive_key(step_key, {kTagShuffle}));
        if (!all_finite(params.values())) throw std::domain_error("policy parameters became non-finite");
        const TaskValues after = task_losses(params, batch.groups, cfg.clip, num_tasks);
        imp = improvement(after, before, cfg.reweight.improvement_clip);
      }
      // Absent tasks reuse their last measured improvement.
      for (std::size_t k = 0; k < nk; ++k)
        if (imp.present[k]) last_improvement[k] = imp.values[k];
      rec.improvement = last_improvement;
      rec.improvement_present = imp.present;

      reweight_step(weights, rec.batch_reward, last_improvement, cfg.reweight);
      if (!all_finite(weights.logits())) throw std::domain_error("task-weight logits became non-finite");
      rec.logits.assign(weights.logits().begin(), weights.logits().end());

      if (sec_mode) {
        std::vector<double> abs_sum(nk, 0.0);
        std::vector<int> cnt(nk, 0);
        for (const ScoredGroup& g : batch.groups) {
          double a = 0.0;
          for (double v : g.advantages.values) a += std::abs(v);
          abs_sum[static_cast<std::size_t>(g.task())] += a / static_cast<double>(g.advantages.values.size());
          ++cnt[static_cast<std::size_t>(g.task())];
        }
        for (std::size_t k = 0; k < nk; ++k) {
          if (cnt[k] == 0) continue;
          const double obs = abs_sum[k] / cnt[k];
          sec_abs_adv[k] = sec_seen[k] ? cfg.sec.smoothing * sec_abs_adv[k] + (1.0 - cfg.sec.smoothing) * obs : obs;
          sec_seen[k] = true;
        }
      }

      rec.rho = stats.rho;
      rec.resample_rounds = batch.resample_rounds_used;
      rec.undersized = batch.undersized;
      rec.batch_groups = static_cast<int>(batch.groups.size());
      rec.target_counts = batch.plan.target_counts;
      rec.accepted_counts = batch.per_task_counts;
      rec.generated = batch.generated;
      rec.filtered = batch.filtered;
      rec.realized_proportions.assign(nk, 0.0);
      if (!batch.groups.empty())
        for (std::size_t k = 0; k < nk; ++k)
          rec.realized_proportions[k] = static_cast<double>(batch.per_task_counts[k]) / batch.groups.size();
      rec.policy_version = params.version();

      const bool eval_now = t == 0 || (t + 1) % cfg.eval_every == 0 || t + 1 == cfg.steps;
      if (eval_now) accuracy = evaluate(params, suite, cfg.eval_prompts_per_task);
      rec.evaluated = eval_now;
      rec.accuracy = accuracy;
      rec.worst_accuracy = worst_task(accuracy);
      rec.average_accuracy = average_task(accuracy);
    } catch (const std::domain_error& e) {
      log.aborted = true;
      log.abort_reason = "step " + std::to_string(t) + ": " + e.what();
      break;
    }
    log.records.push_back(std::move(rec));
  }
  log.final_logits.assign(weights.logits().begin(), weights.logits().end());
  log.final_params = std::move(params);
  return log;
}

RunLog run_baseline_sec_approx(const TrainConfig& cfg) {
  if (cfg.method != Method::sec_approx) throw std::invalid_argument("run_baseline_sec_approx: method must be sec-approx");
  return run_training(cfg);
}

}  // namespace mtgrpo
