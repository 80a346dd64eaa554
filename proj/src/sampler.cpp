// SPDX-License-Identifier: Apache-2.0
#include "mtgrpo/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mtgrpo {

FilterPolicy parse_filter_policy(const std::string& s) {
  if (s == "none") return FilterPolicy::none;
  if (s == "strict") return FilterPolicy::strict;
  if (s == "lenient") return FilterPolicy::lenient;
  throw std::invalid_argument("unknown filter policy: " + s);
}

std::string to_string(FilterPolicy f) {
  switch (f) {
    case FilterPolicy::none:
      return "none";
    case FilterPolicy::strict:
      return "strict";
    case FilterPolicy::lenient:
      return "lenient";
  }
  return "?";
}

bool passes_filter(std::span<const double> rewards, FilterPolicy policy) {
  switch (policy) {
    case FilterPolicy::none:
      return true;
    case FilterPolicy::strict: {
      const bool any_correct = std::any_of(rewards.begin(), rewards.end(), [](double r) { return r == kRewardCorrect; });
      const bool any_other = std::any_of(rewards.begin(), rewards.end(), [](double r) { return r != kRewardCorrect; });
      return any_correct && any_other;
    }
    case FilterPolicy::lenient:
      return std::any_of(rewards.begin(), rewards.end(), [&](double r) { return r != rewards.front(); });
  }
  return false;
}

FilterStats FilterStats::initial(int num_tasks, double ema_decay) {
  if (!(ema_decay >= 0.0 && ema_decay <= 1.0)) throw std::invalid_argument("FilterStats: ema_decay must be in [0, 1]");
  FilterStats s;
  const auto k = static_cast<std::size_t>(num_tasks);
  s.rho.assign(k, 0.0);
  s.ema_decay = ema_decay;
  s.counts_seen.assign(k, 0);
  s.counts_filtered.assign(k, 0);
  return s;
}

FilterStats update_filter_stats(const FilterStats& stats, std::span<const int> generated, std::span<const int> filtered) {
  if (generated.size() != stats.rho.size() || filtered.size() != stats.rho.size())
    throw std::invalid_argument("update_filter_stats: size mismatch");
  FilterStats out = stats;
  for (std::size_t k = 0; k < out.rho.size(); ++k) {
    if (filtered[k] < 0 || filtered[k] > generated[k])
      throw std::invalid_argument("update_filter_stats: filtered count exceeds generated count");
    out.counts_seen[k] += generated[k];
    out.counts_filtered[k] += filtered[k];
    if (generated[k] == 0) continue;
    const double obs = static_cast<double>(filtered[k]) / generated[k];
    out.rho[k] = std::min(out.ema_decay * out.rho[k] + (1.0 - out.ema_decay) * obs, kMaxFilterRate);
  }
  return out;
}

void SamplerConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("SamplerConfig: batch_size must be >= 1");
  if (oversample < 1) throw std::invalid_argument("SamplerConfig: oversample must be >= 1");
  if (max_resamples < 0) throw std::invalid_argument("SamplerConfig: max_resamples must be >= 0");
  if (!(max_inflation >= 1.0)) throw std::invalid_argument("SamplerConfig: max_inflation must be >= 1");
}

namespace {

void check_simplex(std::span<const double> z) {
  if (z.empty()) throw std::invalid_argument("task weights are empty");
  double sum = 0.0;
  for (double v : z) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("task weights must be finite and nonnegative");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("task weights must sum to 1");
}

// Stream tags for the per-step sampler streams.
enum : std::uint64_t { kTagCounts = 1, kTagGenerate = 2, kTagGroup = 3, kTagResample = 4, kTagTrim = 5 };

}  // namespace

std::vector<int> desired_counts(std::span<const double> z, int batch_size, Stream& rng) {
  check_simplex(z);
  if (batch_size < 1) throw std::invalid_argument("desired_counts: batch size must be >= 1");
  return multinomial(batch_size, z, rng);
}

std::vector<double> inflation_factors(const FilterStats& stats, double max_inflation) {
  if (!(max_inflation >= 1.0)) throw std::invalid_argument("inflation_factors: M_acc must be >= 1");
  std::vector<double> m(stats.rho.size());
  for (std::size_t k = 0; k < m.size(); ++k) m[k] = std::min(1.0 / (1.0 - stats.rho[k]), max_inflation);
  return m;
}

std::vector<double> recalibrated_dist(std::span<const double> z, std::span<const double> m) {
  check_simplex(z);
  if (m.size() != z.size()) throw std::invalid_argument("recalibrated_dist: size mismatch");
  std::vector<double> out(z.size());
  double total = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) {
    if (!(m[k] >= 1.0)) throw std::invalid_argument("recalibrated_dist: inflation factors must be >= 1");
    out[k] = z[k] * m[k];
    total += out[k];
  }
  for (double& v : out) v /= total;
  return out;
}

FilterResult zero_grad_filter(std::vector<ScoredGroup> groups, FilterPolicy policy, int num_tasks) {
  FilterResult r;
  r.seen.assign(static_cast<std::size_t>(num_tasks), 0);
  r.filtered.assign(static_cast<std::size_t>(num_tasks), 0);
  for (ScoredGroup& g : groups) {
    const auto k = static_cast<std::size_t>(g.task());
    if (k >= r.seen.size()) throw std::out_of_range("zero_grad_filter: task id out of range");
    ++r.seen[k];
    if (passes_filter(g.group.rewards, policy)) {
      r.kept.push_back(std::move(g));
    } else {
      ++r.filtered[k];
    }
  }
  return r;
}

namespace {

struct Candidate {
  ScoredGroup group;
  std::size_t order;  // generation order, for stable trimming
};

class RoundRunner {
 public:
  RoundRunner(const GroupGenerator& gen, FilterPolicy policy, std::uint64_t step_key, AcceptedBatch& out)
      : gen_(gen), policy_(policy), step_key_(step_key), out_(out) {}

  void run(int round, std::span<const int> counts, std::vector<Candidate>& accepted) {
    for (std::size_t k = 0; k < counts.size(); ++k) {
      for (int j = 0; j < counts[k]; ++j) {
        const std::uint64_t key = Stream::derive_key(
            step_key_, {kTagGroup, static_cast<std::uint64_t>(round), k, static_cast<std::uint64_t>(j)});
        ScoredGroup g = gen_(static_cast<int>(k), key);
        if (g.task() != static_cast<int>(k)) throw std::logic_error("group generator returned the wrong task");
        ++out_.generated[k];
        for (double r : g.group.rewards) out_.reward_sum[k] += r;
        out_.rollouts[k] += static_cast<long long>(g.group.rewards.size());
        if (g.advantages.is_zero_gradient) ++out_.zero_gradient[k];
        if (passes_filter(g.group.rewards, policy_)) {
          accepted.push_back(Candidate{std::move(g), next_order_++});
        } else {
          ++out_.filtered[k];
        }
      }
    }
  }

 private:
  const GroupGenerator& gen_;
  FilterPolicy policy_;
  std::uint64_t step_key_;
  AcceptedBatch& out_;
  std::size_t next_order_ = 0;
};

std::vector<int> accepted_counts(const std::vector<Candidate>& accepted, std::size_t k) {
  std::vector<int> c(k, 0);
  for (const Candidate& a : accepted) ++c[static_cast<std::size_t>(a.group.task())];
  return c;
}

}  // namespace

std::pair<AcceptedBatch, FilterStats> rp_sample(const GroupGenerator& generate, std::span<const double> z,
                                                const SamplerConfig& cfg, const FilterStats& stats,
                                                std::uint64_t step_key) {
  cfg.validate();
  check_simplex(z);
  const std::size_t num_tasks = z.size();
  if (stats.rho.size() != num_tasks) throw std::invalid_argument("rp_sample: filter stats size mismatch");
  const int batch = cfg.batch_size;

  AcceptedBatch out;
  out.generated.assign(num_tasks, 0);
  out.filtered.assign(num_tasks, 0);
  out.zero_gradient.assign(num_tasks, 0);
  out.reward_sum.assign(num_tasks, 0.0);
  out.rollouts.assign(num_tasks, 0);

  Stream count_rng = Stream::derive(step_key, {kTagCounts});
  out.plan.target_counts = desired_counts(z, batch, count_rng);

  RoundRunner runner(generate, cfg.filter, step_key, out);
  std::vector<Candidate> accepted;

  if (cfg.filter == FilterPolicy::none) {
    // No filtering: generate exactly the planned counts.
    out.plan.inflated_dist.assign(z.begin(), z.end());
    out.plan.oversample_total = batch;
    runner.run(0, out.plan.target_counts, accepted);
  } else {
    std::vector<double> m(num_tasks, 1.0);
    if (cfg.acceptance_aware) m = inflation_factors(stats, cfg.max_inflation);
    out.plan.inflated_dist = recalibrated_dist(z, m);
    out.plan.oversample_total = cfg.oversample * batch;

    Stream gen_rng = Stream::derive(step_key, {kTagGenerate});
    runner.run(0, multinomial(out.plan.oversample_total, out.plan.inflated_dist, gen_rng), accepted);

    auto deficits = [&]() {
      std::vector<int> def(num_tasks, 0);
      if (cfg.ratio_preserving) {
        const std::vector<int> c = accepted_counts(accepted, num_tasks);
        for (std::size_t k = 0; k < num_tasks; ++k) def[k] = std::max(out.plan.target_counts[k] - c[k], 0);
      }
      return def;
    };
    auto missing_total = [&](const std::vector<int>& def) {
      if (!cfg.ratio_preserving) return std::max(batch - static_cast<int>(accepted.size()), 0);
      int s = 0;
      for (int d : def) s += d;
      return s;
    };

    std::vector<int> def = deficits();
    int round = 1;
    while (missing_total(def) > 0 && round <= cfg.max_resamples) {
      std::vector<double> w(num_tasks);
      for (std::size_t k = 0; k < num_tasks; ++k)
        w[k] = cfg.ratio_preserving ? def[k] * m[k] : out.plan.inflated_dist[k];
      Stream rs_rng = Stream::derive(step_key, {kTagResample, static_cast<std::uint64_t>(round)});
      runner.run(round, multinomial(out.plan.oversample_total, w, rs_rng), accepted);
      def = deficits();
      ++round;
    }
    out.resample_rounds_used = round - 1;
  }

  std::vector<Candidate> chosen;
  if (static_cast<int>(accepted.size()) <= batch) {
    chosen = std::move(accepted);
    out.undersized = static_cast<int>(chosen.size()) < batch;
  } else {
    Stream trim_rng = Stream::derive(step_key, {kTagTrim});
    std::vector<Candidate> leftovers;
    if (cfg.ratio_preserving) {
      std::vector<int> kept(num_tasks, 0);
      for (Candidate& c : accepted) {
        const auto k = static_cast<std::size_t>(c.group.task());
        if (kept[k] < out.plan.target_counts[k]) {
          ++kept[k];
          chosen.push_back(std::move(c));
        } else {
          leftovers.push_back(std::move(c));
        }
      }
    } else {
      leftovers = std::move(accepted);
    }
    const std::size_t need = static_cast<std::size_t>(batch) - chosen.size();
    const std::vector<std::size_t> perm = permutation(leftovers.size(), trim_rng);
    for (std::size_t i = 0; i < need; ++i) chosen.push_back(std::move(leftovers[perm[i]]));
    std::sort(chosen.begin(), chosen.end(), [](const Candidate& a, const Candidate& b) { return a.order < b.order; });
  }

  out.groups.reserve(chosen.size());
  for (Candidate& c : chosen) out.groups.push_back(std::move(c.group));
  out.per_task_counts = task_group_counts(out.groups, static_cast<int>(num_tasks));

  // Without a filter nothing is removed; track the zero-gradient rate instead.
  const std::vector<int>& observed = cfg.filter == FilterPolicy::none ? out.zero_gradient : out.filtered;
  FilterStats next = update_filter_stats(stats, out.generated, observed);
  return {std::move(out), std::move(next)};
}

GroupGenerator policy_generator(const TaskSuite& suite, const PolicyParams& behavior, const PolicyParams& reference,
                                int group_size, const ClipConfig& clip) {
  return [&suite, &behavior, &reference, group_size, clip](int task, std::uint64_t key) {
    Stream rng = Stream::derive(key, {0});
    const auto prompt_id = static_cast<int>(rng.below(static_cast<std::uint64_t>(suite.spec(task).num_prompts)));
    RolloutGroup g = sample_rollouts(suite, behavior, reference, suite.prompt(task, prompt_id), group_size,
                                     Stream::derive_key(key, {1}));
    return score_group(std::move(g), clip);
  };
}

GroupGenerator acceptance_oracle(std::vector<double> rates, int group_size, const ClipConfig& clip) {
  if (group_size < 2) throw std::invalid_argument("acceptance_oracle: group size must be >= 2");
  for (double r : rates)
    if (!(r >= 0.0 && r <= 1.0)) throw std::invalid_argument("acceptance_oracle: rates must be in [0, 1]");
  return [rates = std::move(rates), group_size, clip](int task, std::uint64_t key) {
    Stream rng(key);
    const bool informative = rng.uniform() < rates.at(static_cast<std::size_t>(task));
    RolloutGroup g;
    g.prompt.task_id = task;
    g.answer_len = 0;
    g.answers.assign(static_cast<std::size_t>(group_size), Answer{});
    g.rewards.assign(static_cast<std::size_t>(group_size), kRewardFormatted);
    if (informative) g.rewards[0] = kRewardCorrect;
    return score_group(std::move(g), clip);
  };
}

}  // namespace mtgrpo
