// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "mtgrpo/env.hpp"
#include "mtgrpo/policy.hpp"
#include "mtgrpo/rng.hpp"

using namespace mtgrpo;

namespace {

TaskSpec spec(int id, int prompts, int len, int vocab, double f, std::uint64_t seed) {
  TaskSpec s;
  s.task_id = id;
  s.num_prompts = prompts;
  s.answer_len = len;
  s.vocab_size = vocab;
  s.valid_format_fraction = f;
  s.difficulty_seed = seed;
  return s;
}

// Sets the logit of `token` at every position of `prompt` to `value`.
void set_logit(PolicyParams& p, int task, int prompt, int token, double value) {
  for (int t = 0; t < p.answer_len(task); ++t) p.mutable_values()[p.offset(task, prompt, t) + static_cast<std::size_t>(token)] = value;
  p.mark_updated();
}

}  // namespace

TEST_CASE("suite construction is deterministic") {
  const TaskSuite a = make_task_suite({spec(0, 10, 1, 4, 1.0, 5)});
  const TaskSuite b = make_task_suite({spec(0, 10, 1, 4, 1.0, 5)});
  for (int p = 0; p < 10; ++p) {
    CHECK(a.correct_answer(0, p) == b.correct_answer(0, p));
    REQUIRE(a.correct_answer(0, p).size() == 1);
    CHECK(a.correct_answer(0, p)[0] >= 0);
    CHECK(a.correct_answer(0, p)[0] < 4);
  }
}

TEST_CASE("suite size and validation") {
  CHECK(make_task_suite({spec(0, 2, 1, 2, 1.0, 1), spec(1, 2, 1, 2, 1.0, 2), spec(2, 2, 1, 2, 1.0, 3)}).num_tasks() ==
        3);
  CHECK_THROWS_AS(make_task_suite({}), std::invalid_argument);
  CHECK_THROWS_AS(make_task_suite({spec(0, 2, 1, 1, 1.0, 1)}), std::invalid_argument);
  CHECK_THROWS_AS(make_task_suite({spec(0, 2, 0, 2, 1.0, 1)}), std::invalid_argument);
  CHECK_THROWS_AS(make_task_suite({spec(0, 2, 1, 2, 0.0, 1)}), std::invalid_argument);
  CHECK_THROWS_AS(make_task_suite({spec(1, 2, 1, 2, 1.0, 1)}), std::invalid_argument);
}

TEST_CASE("prompt features are one-hot") {
  const TaskSuite s = make_task_suite({spec(0, 5, 1, 3, 1.0, 1)});
  const PromptInstance p = s.prompt(0, 3);
  CHECK(p.feature.size() == 5);
  double sum = 0.0;
  for (double v : p.feature) sum += v;
  CHECK(sum == 1.0);
  CHECK(p.feature[3] == 1.0);
}

TEST_CASE("reward tiers") {
  // 3^2 = 9 answers, 4 of them formatted.
  const TaskSuite s = make_task_suite({spec(0, 20, 2, 3, 0.4, 17)});
  CHECK(s.spec(0).valid_count() == 4);
  for (int p = 0; p < 20; ++p) {
    const PromptInstance prompt = s.prompt(0, p);
    const Answer& correct = s.correct_answer(0, p);
    CHECK(evaluate_reward(s, prompt, correct) == 1.0);
    int formatted = 0;
    for (std::uint64_t i = 0; i < 9; ++i) {
      const Answer a = s.answer_from_index(0, i);
      CHECK(s.answer_index(0, a) == i);
      const double r = evaluate_reward(s, prompt, a);
      CHECK((r == 1.0 || r == 0.1 || r == 0.0));
      if (r > 0.0) ++formatted;
      CHECK((r == 1.0) == (a == correct));
    }
    CHECK(formatted == 4);
    CHECK(s.is_valid_format(0, p, correct));
  }
}

TEST_CASE("formatted set is the lexicographic prefix with the correct answer swapped in") {
  const TaskSuite s = make_task_suite({spec(0, 50, 1, 10, 0.3, 3)});
  for (int p = 0; p < 50; ++p) {
    const int c = s.correct_answer(0, p)[0];
    for (int tok = 0; tok < 10; ++tok) {
      const bool expect = c < 3 ? tok < 3 : (tok < 2 || tok == c);
      CHECK(s.is_valid_format(0, p, std::vector<int>{tok}) == expect);
    }
  }
}

TEST_CASE("reward rejects wrong answer length") {
  const TaskSuite s = make_task_suite({spec(0, 2, 2, 3, 1.0, 1)});
  CHECK_THROWS_AS(evaluate_reward(s, s.prompt(0, 0), std::vector<int>{0}), std::invalid_argument);
  CHECK_THROWS_AS(evaluate_reward(s, s.prompt(0, 0), std::vector<int>{0, 3}), std::invalid_argument);
}

TEST_CASE("tier masses sum to one") {
  const TaskSuite s = make_task_suite({spec(0, 3, 2, 4, 0.5, 2)});
  const PolicyParams p = PolicyParams::uniform_noise(s, 2.0, 11);
  for (int i = 0; i < 3; ++i) {
    const auto m = tier_masses(s, p, s.prompt(0, i));
    CHECK(m[0] + m[1] + m[2] == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("zero-gradient probability examples") {
  SUBCASE("uniform policy over two formatted answers") {
    const TaskSuite s = make_task_suite({spec(0, 4, 1, 2, 1.0, 1)});
    CHECK(zero_grad_probability(s, PolicyParams::zeros(s), 0, 2) == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("deterministic policy") {
    const TaskSuite s = make_task_suite({spec(0, 1, 1, 3, 1.0, 1)});
    PolicyParams p = PolicyParams::zeros(s);
    set_logit(p, 0, 0, 1, 200.0);
    CHECK(zero_grad_probability(s, p, 0, 4) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("tier masses 0.9 / 0.1") {
    const TaskSuite s = make_task_suite({spec(0, 1, 1, 2, 1.0, 1)});
    PolicyParams p = PolicyParams::zeros(s);
    set_logit(p, 0, 0, s.correct_answer(0, 0)[0], std::log(9.0));
    CHECK(zero_grad_probability(s, p, 0, 2) == doctest::Approx(0.82).epsilon(1e-12));
  }
  SUBCASE("bounds") {
    const TaskSuite s = make_task_suite({spec(0, 1, 3, 17, 1.0, 1)});
    CHECK_THROWS(zero_grad_probability(s, PolicyParams::zeros(s), 0, 2));
    const TaskSuite t = make_task_suite({spec(0, 1, 1, 2, 1.0, 1)});
    CHECK_THROWS(zero_grad_probability(t, PolicyParams::zeros(t), 0, 1));
  }
}

TEST_CASE("zero-gradient probability agrees with simulated groups") {
  const TaskSuite s = make_task_suite({spec(0, 3, 2, 3, 0.5, 8)});
  const PolicyParams p = PolicyParams::uniform_noise(s, 1.5, 4);
  const int g = 3;
  const double exact = zero_grad_probability(s, p, 0, g);
  const int n = 100000;
  int hits = 0;
  for (int i = 0; i < n; ++i) {
    const int prompt = i % 3;
    const RolloutGroup grp = sample_rollouts(s, p, p, s.prompt(0, prompt), g, Stream::derive_key(77, {static_cast<std::uint64_t>(i)}));
    bool same = true;
    for (double r : grp.rewards) same = same && r == grp.rewards[0];
    hits += same ? 1 : 0;
  }
  const double est = static_cast<double>(hits) / n;
  const double se = std::sqrt(exact * (1 - exact) / n);
  CHECK(std::abs(est - exact) < 3.0 * se);
}
