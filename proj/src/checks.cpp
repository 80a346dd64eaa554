// SPDX-License-Identifier: Apache-2.0
#include "mtgrpo/checks.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>

#include "mtgrpo/env.hpp"
#include "mtgrpo/grpo.hpp"
#include "mtgrpo/policy.hpp"
#include "mtgrpo/reweight.hpp"
#include "mtgrpo/rng.hpp"
#include "mtgrpo/robust.hpp"

namespace mtgrpo {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// All compositions of n into k nonnegative parts.
void compositions(int n, int k, std::vector<int>& cur, const std::function<void(const std::vector<int>&)>& f) {
  if (static_cast<int>(cur.size()) == k - 1) {
    cur.push_back(n);
    f(cur);
    cur.pop_back();
    return;
  }
  for (int i = 0; i <= n; ++i) {
    cur.push_back(i);
    compositions(n - i, k, cur, f);
    cur.pop_back();
  }
}

// Max abs difference over the largest reference entry; the floor keeps exactly
// cancelling gradients (e.g. two identical rollouts with opposite advantages) finite.
double rel_error(std::span<const double> a, std::span<const double> b) {
  double diff = 0.0;
  double scale = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - b[i]));
    scale = std::max(scale, std::abs(b[i]));
  }
  return diff / std::max(scale, 1e-6);
}

std::vector<double> central_diff(std::vector<double> x, double h, const std::function<double(std::span<const double>)>& f) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double fp = f(x);
    x[i] = orig - h;
    const double fm = f(x);
    x[i] = orig;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

}  // namespace

CheckResult check_omega_equivalence(double grid_step, const std::vector<int>& dims) {
  const auto t0 = Clock::now();
  CheckResult r{"omega closed form vs min-flow oracle", true, 0.0, 1e-12, 0, 0.0};
  const int n = static_cast<int>(std::lround(1.0 / grid_step));
  for (int k : dims) {
    std::vector<int> cur;
    compositions(n, k, cur, [&](const std::vector<int>& parts) {
      std::vector<double> z(parts.size());
      for (std::size_t i = 0; i < parts.size(); ++i) z[i] = static_cast<double>(parts[i]) / n;
      const SimplexPoint p(z);
      r.measured = std::max(r.measured, std::abs(omega_closed_form(p) - omega_minflow_oracle(p)));
      ++r.instances;
    });
  }
  r.pass = r.measured < r.tolerance;
  r.seconds = elapsed(t0);
  return r;
}

CheckResult check_weight_gradient(int instances, std::uint64_t seed) {
  const auto t0 = Clock::now();
  CheckResult r{"task-weight gradient vs finite differences", true, 0.0, 1e-6, 0, 0.0};
  Stream rng(Stream::derive_key(seed, {1}));
  const ReweightMode modes[] = {ReweightMode::strict, ReweightMode::iwu, ReweightMode::regularized};
  for (int n = 0; n < instances; ++n) {
    const ReweightMode mode = modes[n % 3];
    const int k = 2 + static_cast<int>(rng.below(5));
    std::vector<double> xi(static_cast<std::size_t>(k)), rewards(xi.size()), imp(xi.size());
    for (std::size_t i = 0; i < xi.size(); ++i) {
      xi[i] = 4.0 * rng.uniform() - 2.0;
      rewards[i] = rng.uniform();
      imp[i] = 0.2 * rng.uniform() - 0.1;
    }
    ReweightConfig cfg;
    cfg.mode = mode;
    cfg.optimizer = LogitOptimizer::plain;
    cfg.beta = 1e-3;
    cfg.lambda = rng.uniform();
    cfg.eta = mode == ReweightMode::regularized ? rng.uniform() : 0.0;

    // The objective whose gradient each mode descends.
    auto objective = [&](std::span<const double> x) {
      const std::vector<double> z = softmax(x);
      double v = 0.0;
      for (std::size_t i = 0; i < z.size(); ++i) {
        const double s = mode == ReweightMode::iwu ? imp[i] + cfg.lambda * rewards[i] : rewards[i];
        v += z[i] * s;
      }
      if (mode == ReweightMode::regularized)
        for (double xv : x) v += 0.5 * cfg.eta * xv * xv;
      return v;
    };
    const std::vector<double> fd = central_diff(xi, 1e-6, objective);

    TaskWeights w(k, cfg);
    w.set_logits(xi);
    reweight_step(w, rewards, imp, cfg);
    std::vector<double> g(xi.size());
    for (std::size_t i = 0; i < xi.size(); ++i) g[i] = (xi[i] - w.logits()[i]) / cfg.beta;
    r.measured = std::max(r.measured, rel_error(g, fd));
    ++r.instances;
  }
  r.pass = r.measured < r.tolerance;
  r.seconds = elapsed(t0);
  return r;
}

CheckResult check_policy_gradient(int instances, std::uint64_t seed) {
  const auto t0 = Clock::now();
  CheckResult r{"clipped surrogate gradient vs finite differences", true, 0.0, 1e-5, 0, 0.0};
  Stream rng(Stream::derive_key(seed, {1}));
  const double margin = 1e-3;
  int attempt = 0;
  while (r.instances < instances) {
    ++attempt;
    TaskSpec spec;
    spec.num_prompts = 2;
    spec.answer_len = 1 + static_cast<int>(rng.below(3));
    spec.vocab_size = 2 + static_cast<int>(rng.below(4));
    spec.valid_format_fraction = 0.5;
    spec.difficulty_seed = rng.next_u64();
    const TaskSuite suite = make_task_suite({spec});
    const PolicyParams old_p = PolicyParams::uniform_noise(suite, 1.0, rng.next_u64());
    const PolicyParams ref_p = PolicyParams::uniform_noise(suite, 1.0, rng.next_u64());
    PolicyParams cur = old_p;
    {
      auto v = cur.mutable_values();
      for (double& x : v) x += 0.3 * (2.0 * rng.uniform() - 1.0);
    }
    ClipConfig cfg;
    cfg.kl_coeff = (attempt % 2 == 0) ? 0.01 : 0.0;
    const int g = 2 + static_cast<int>(rng.below(4));
    RolloutGroup group = sample_rollouts(suite, old_p, ref_p, suite.prompt(0, 0), g, rng.next_u64());
    // Distinct rewards so every rollout carries a nonzero advantage.
    for (int i = 0; i < g; ++i) group.rewards[static_cast<std::size_t>(i)] = rng.uniform();
    ScoredGroup scored = score_group(std::move(group), cfg);

    refresh_current_logprobs(scored.group, cur);
    bool near_boundary = false;
    for (std::size_t i = 0; i < scored.group.logp_cur.size(); ++i) {
      const double ratio = std::exp(scored.group.logp_cur[i] - scored.group.logp_old[i]);
      if (std::abs(ratio - (1.0 - cfg.clip_low)) < margin || std::abs(ratio - (1.0 + cfg.clip_high)) < margin)
        near_boundary = true;
    }
    if (near_boundary) continue;

    std::vector<double> grad(cur.size(), 0.0);
    surrogate_value_and_grad(cur, scored, cfg, 1.0, grad);
    std::vector<double> x(cur.values().begin(), cur.values().end());
    const std::vector<double> fd = central_diff(x, 1e-6, [&](std::span<const double> v) {
      PolicyParams p = cur;
      std::copy(v.begin(), v.end(), p.mutable_values().begin());
      return surrogate_value_and_grad(p, scored, cfg, 1.0, {});
    });
    r.measured = std::max(r.measured, rel_error(grad, fd));
    ++r.instances;
  }
  r.pass = r.measured < r.tolerance;
  r.seconds = elapsed(t0);
  return r;
}

CheckResult check_logprob_gradient(int instances, std::uint64_t seed) {
  const auto t0 = Clock::now();
  CheckResult r{"log-probability gradient vs finite differences", true, 0.0, 1e-6, 0, 0.0};
  Stream rng(Stream::derive_key(seed, {1}));
  for (int n = 0; n < instances; ++n) {
    TaskSpec spec;
    spec.num_prompts = 1 + static_cast<int>(rng.below(3));
    spec.answer_len = 1 + static_cast<int>(rng.below(3));
    spec.vocab_size = 2 + static_cast<int>(rng.below(5));
    spec.difficulty_seed = rng.next_u64();
    const TaskSuite suite = make_task_suite({spec});
    const PolicyParams p = PolicyParams::uniform_noise(suite, 2.0, rng.next_u64());
    const PromptInstance prompt = suite.prompt(0, static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.num_prompts))));
    Answer a(static_cast<std::size_t>(spec.answer_len));
    for (int& tok : a) tok = static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.vocab_size)));
    const std::vector<double> grad = grad_logprob(p, prompt, a);
    std::vector<double> x(p.values().begin(), p.values().end());
    const std::vector<double> fd = central_diff(x, 1e-6, [&](std::span<const double> v) {
      PolicyParams q = p;
      std::copy(v.begin(), v.end(), q.mutable_values().begin());
      double s = 0.0;
      for (double lp : logprob(q, prompt, a)) s += lp;
      return s;
    });
    r.measured = std::max(r.measured, rel_error(grad, fd));
    ++r.instances;
  }
  r.pass = r.measured < r.tolerance;
  r.seconds = elapsed(t0);
  return r;
}

std::string format_check(const CheckResult& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s  %s: worst=%.3g tol=%.3g n=%d (%.2fs)", r.pass ? "PASS" : "FAIL", r.name.c_str(),
                r.measured, r.tolerance, r.instances, r.seconds);
  return buf;
}

}  // namespace mtgrpo
