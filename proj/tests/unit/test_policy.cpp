// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "mtgrpo/env.hpp"
#include "mtgrpo/optim.hpp"
#include "mtgrpo/policy.hpp"
#include "mtgrpo/rng.hpp"

using namespace mtgrpo;

namespace {

TaskSuite single(int prompts, int len, int vocab) {
  TaskSpec s;
  s.num_prompts = prompts;
  s.answer_len = len;
  s.vocab_size = vocab;
  s.difficulty_seed = 9;
  return make_task_suite({s});
}

double total(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

}  // namespace

TEST_CASE("uniform logits give log(1/V) per token") {
  const TaskSuite s = single(2, 2, 4);
  const PolicyParams p = PolicyParams::zeros(s);
  const auto lp = logprob(p, s.prompt(0, 1), std::vector<int>{3, 0});
  REQUIRE(lp.size() == 2);
  for (double v : lp) CHECK(v == doctest::Approx(std::log(0.25)).epsilon(1e-14));
}

TEST_CASE("two-token logprob against a long-double softmax") {
  const TaskSuite s = single(1, 1, 2);
  PolicyParams p = PolicyParams::zeros(s);
  p.mutable_values()[p.offset(0, 0, 0)] = 1.0;
  const long double expect = -std::log1p(std::exp(-1.0L));
  const auto lp = logprob(p, s.prompt(0, 0), std::vector<int>{0});
  CHECK(lp[0] == doctest::Approx(static_cast<double>(expect)).epsilon(1e-14));
  CHECK(lp[0] == doctest::Approx(-0.3133).epsilon(1e-4));
}

TEST_CASE("per-position probabilities normalize") {
  const TaskSuite s = single(3, 2, 5);
  const PolicyParams p = PolicyParams::uniform_noise(s, 3.0, 2);
  for (int t = 0; t < 2; ++t) {
    double mass = 0.0;
    for (int tok = 0; tok < 5; ++tok) mass += std::exp(logprob(p, s.prompt(0, 1), std::vector<int>{tok, tok})[static_cast<std::size_t>(t)]);
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("grad_logprob matches central differences") {
  const TaskSuite s = single(2, 3, 4);
  PolicyParams p = PolicyParams::uniform_noise(s, 1.0, 5);
  const PromptInstance prompt = s.prompt(0, 1);
  const std::vector<int> ans{2, 0, 3};
  const auto g = grad_logprob(p, prompt, ans);
  const double h = 1e-6;
  double worst = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double keep = p.values()[i];
    p.mutable_values()[i] = keep + h;
    const double up = total(logprob(p, prompt, ans));
    p.mutable_values()[i] = keep - h;
    const double dn = total(logprob(p, prompt, ans));
    p.mutable_values()[i] = keep;
    worst = std::max(worst, std::abs((up - dn) / (2 * h) - g[i]));
  }
  CHECK(worst < 1e-8);
}

TEST_CASE("gradient rows sum to zero and vanish off the prompt") {
  const TaskSuite s = single(3, 2, 6);
  const PolicyParams p = PolicyParams::uniform_noise(s, 1.0, 8);
  const auto g = grad_logprob(p, s.prompt(0, 2), std::vector<int>{1, 5});
  for (int prompt = 0; prompt < 3; ++prompt)
    for (int t = 0; t < 2; ++t) {
      double row = 0.0, mag = 0.0;
      for (int tok = 0; tok < 6; ++tok) {
        row += g[p.offset(0, prompt, t) + static_cast<std::size_t>(tok)];
        mag += std::abs(g[p.offset(0, prompt, t) + static_cast<std::size_t>(tok)]);
      }
      CHECK(std::abs(row) < 1e-14);
      if (prompt != 2) CHECK(mag == 0.0);
    }
}

TEST_CASE("saturated softmax has vanishing gradient at the chosen token") {
  const TaskSuite s = single(1, 1, 3);
  PolicyParams p = PolicyParams::zeros(s);
  p.mutable_values()[p.offset(0, 0, 0) + 1] = 50.0;
  const auto g = grad_logprob(p, s.prompt(0, 0), std::vector<int>{1});
  CHECK(std::abs(g[1]) < 1e-20);
}

TEST_CASE("sampling is reproducible and keyed") {
  const TaskSuite s = single(1, 1, 2);
  const PolicyParams p = PolicyParams::zeros(s);
  const auto a = sample_rollouts(s, p, p, s.prompt(0, 0), 4, 123);
  const auto b = sample_rollouts(s, p, p, s.prompt(0, 0), 4, 123);
  CHECK(a.answers == b.answers);
  CHECK(a.rewards == b.rewards);
  CHECK(a.logp_cur == b.logp_cur);
  bool differs = false;
  for (std::uint64_t k = 0; k < 20 && !differs; ++k)
    differs = sample_rollouts(s, p, p, s.prompt(0, 0), 4, 1000 + k).answers != a.answers;
  CHECK(differs);
}

TEST_CASE("dominant logit makes every rollout identical") {
  const TaskSuite s = single(1, 2, 4);
  PolicyParams p = PolicyParams::zeros(s);
  p.mutable_values()[p.offset(0, 0, 0) + 2] = 50.0;
  p.mutable_values()[p.offset(0, 0, 1) + 1] = 50.0;
  const auto g = sample_rollouts(s, p, p, s.prompt(0, 0), 16, 7);
  for (const auto& a : g.answers) CHECK(a == std::vector<int>{2, 1});
}

TEST_CASE("empirical token frequencies follow the softmax") {
  const TaskSuite s = single(1, 1, 3);
  PolicyParams p = PolicyParams::zeros(s);
  p.mutable_values()[p.offset(0, 0, 0)] = std::log(2.0);  // probs (0.5, 0.25, 0.25)
  std::vector<int> counts(3, 0);
  const int n = 40000;
  for (int i = 0; i < n / 8; ++i) {
    const auto g = sample_rollouts(s, p, p, s.prompt(0, 0), 8, Stream::derive_key(3, {static_cast<std::uint64_t>(i)}));
    for (const auto& a : g.answers) ++counts[static_cast<std::size_t>(a[0])];
  }
  CHECK(std::abs(counts[0] - n * 0.5) < 4.0 * std::sqrt(n * 0.25));
  CHECK(std::abs(counts[1] - n * 0.25) < 4.0 * std::sqrt(n * 0.25 * 0.75));
}

TEST_CASE("rollout log-probs reflect behavior and reference") {
  const TaskSuite s = single(2, 2, 3);
  const PolicyParams beh = PolicyParams::uniform_noise(s, 1.0, 1);
  const PolicyParams ref = PolicyParams::zeros(s);
  auto g = sample_rollouts(s, beh, ref, s.prompt(0, 0), 3, 4);
  for (int i = 0; i < 3; ++i) {
    const auto lb = logprob(beh, g.prompt, g.answers[static_cast<std::size_t>(i)]);
    for (int t = 0; t < 2; ++t) {
      CHECK(g.logp_old[g.at(i, t)] == lb[static_cast<std::size_t>(t)]);
      CHECK(g.logp_cur[g.at(i, t)] == lb[static_cast<std::size_t>(t)]);
      CHECK(g.logp_ref[g.at(i, t)] == doctest::Approx(std::log(1.0 / 3.0)));
    }
  }
  refresh_current_logprobs(g, ref);
  CHECK(g.logp_cur[g.at(1, 1)] == doctest::Approx(std::log(1.0 / 3.0)));
}

TEST_CASE("snapshot is isolated from later mutation") {
  const TaskSuite s = single(1, 1, 2);
  PolicyParams p = PolicyParams::zeros(s);
  const FrozenPolicy frozen = snapshot(p);
  p.mutable_values()[0] = 3.0;
  p.mark_updated();
  CHECK(frozen->values()[0] == 0.0);
  CHECK(p.version() == frozen->version() + 1);
}

TEST_CASE("greedy answer breaks ties toward the lowest token") {
  const TaskSuite s = single(1, 2, 3);
  PolicyParams p = PolicyParams::zeros(s);
  p.mutable_values()[p.offset(0, 0, 1) + 2] = 0.5;
  CHECK(greedy_answer(p, s.prompt(0, 0)) == std::vector<int>{0, 2});
}

TEST_CASE("AdamW first step moves by lr against the gradient sign") {
  AdamW opt({0.1, 0.9, 0.999, 1e-12, 0.0}, 3);
  std::vector<double> x{1.0, 1.0, 1.0};
  const std::vector<double> g{2.0, -0.5, 0.0};
  opt.step(x, g);
  CHECK(x[0] == doctest::Approx(0.9).epsilon(1e-9));
  CHECK(x[1] == doctest::Approx(1.1).epsilon(1e-9));
  CHECK(x[2] == 1.0);
}

TEST_CASE("AdamW decoupled decay acts without gradient") {
  AdamW opt({0.1, 0.9, 0.999, 1e-8, 0.5}, 1);
  std::vector<double> x{2.0};
  opt.step(x, std::vector<double>{0.0});
  CHECK(x[0] == doctest::Approx(2.0 - 0.1 * 0.5 * 2.0));
}
