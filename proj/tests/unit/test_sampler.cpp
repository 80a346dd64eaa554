// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "mtgrpo/sampler.hpp"

using namespace mtgrpo;

namespace {

ScoredGroup with_rewards(std::vector<double> r, int task = 0) {
  RolloutGroup g;
  g.prompt.task_id = task;
  g.answer_len = 1;
  g.rewards = std::move(r);
  g.answers.assign(g.rewards.size(), Answer{0});
  g.logp_cur.assign(g.rewards.size(), 0.0);
  g.logp_old = g.logp_ref = g.logp_cur;
  return score_group(std::move(g), ClipConfig{});
}

int sum(const std::vector<int>& v) { return std::accumulate(v.begin(), v.end(), 0); }

}  // namespace

TEST_CASE("filter policies") {
  for (auto p : {FilterPolicy::strict, FilterPolicy::lenient}) {
    CHECK_FALSE(passes_filter(std::vector<double>{1, 1, 1}, p));
    CHECK(passes_filter(std::vector<double>{1.0, 0.0}, p));
  }
  CHECK(passes_filter(std::vector<double>{0.1, 0.0, 0.1}, FilterPolicy::lenient));
  CHECK_FALSE(passes_filter(std::vector<double>{0.1, 0.0, 0.1}, FilterPolicy::strict));
  CHECK(passes_filter(std::vector<double>{0.1, 0.1}, FilterPolicy::none));

  const auto r = zero_grad_filter({with_rewards({1, 1}, 0), with_rewards({1, 0}, 1), with_rewards({0.1, 0}, 1)},
                                  FilterPolicy::strict, 2);
  CHECK(r.kept.size() == 1);
  CHECK(r.seen == std::vector<int>{1, 2});
  CHECK(r.filtered == std::vector<int>{1, 1});
}

TEST_CASE("desired counts") {
  Stream s(1);
  CHECK(desired_counts(std::vector<double>{0, 1, 0}, 32, s) == std::vector<int>{0, 32, 0});
  double mean = 0;
  for (int i = 0; i < 200; ++i) {
    const auto n = desired_counts(std::vector<double>{0.5, 0.5}, 10000, s);
    CHECK(sum(n) == 10000);
    mean += n[0];
  }
  mean /= 200;
  // sd of the mean over 200 draws is 50 / sqrt(200)
  CHECK(std::abs(mean - 5000) < 3.0 * 50.0 / std::sqrt(200.0));
}

TEST_CASE("inflation factors") {
  FilterStats st = FilterStats::initial(3, 0.9);
  st.rho = {0.0, 0.5, 0.9};
  const auto m = inflation_factors(st, 5.0);
  CHECK(m[0] == 1.0);
  CHECK(m[1] == doctest::Approx(2.0));
  CHECK(m[2] == 5.0);
}

TEST_CASE("recalibrated distribution") {
  const auto a = recalibrated_dist(std::vector<double>{0.2, 0.8}, std::vector<double>{3.0, 3.0});
  CHECK(a[0] == doctest::Approx(0.2));
  const auto b = recalibrated_dist(std::vector<double>{0.5, 0.5}, std::vector<double>{1.0, 4.0});
  CHECK(b[0] == doctest::Approx(0.2));
  CHECK(b[1] == doctest::Approx(0.8));
  const auto c = recalibrated_dist(std::vector<double>{0.0, 0.4, 0.6}, std::vector<double>{5.0, 1.0, 2.0});
  CHECK(c[0] == 0.0);
}

TEST_CASE("filter-rate tracking") {
  FilterStats st = FilterStats::initial(2, 0.9);
  st.rho = {0.5, 0.3};
  const auto a = update_filter_stats(st, std::vector<int>{4, 0}, std::vector<int>{4, 0});
  CHECK(a.rho[0] == doctest::Approx(0.55));
  CHECK(a.rho[1] == 0.3);
  FilterStats d = FilterStats::initial(1, 0.0);
  CHECK(update_filter_stats(d, std::vector<int>{4}, std::vector<int>{3}).rho[0] == doctest::Approx(0.75));
}

TEST_CASE("perfect acceptance fills targets exactly") {
  SamplerConfig cfg;
  cfg.batch_size = 20;
  cfg.oversample = 1;
  const auto gen = acceptance_oracle({1.0, 1.0, 1.0}, 4, ClipConfig{});
  SUBCASE("one-hot weights need no resampling") {
    const auto [batch, st] = rp_sample(gen, std::vector<double>{0.0, 1.0, 0.0}, cfg, FilterStats::initial(3, 0.9), 5);
    CHECK(batch.resample_rounds_used == 0);
    CHECK(batch.per_task_counts == std::vector<int>{0, 20, 0});
  }
  SUBCASE("mixed weights hit every target") {
    for (std::uint64_t key = 0; key < 20; ++key) {
      const auto [batch, st] = rp_sample(gen, std::vector<double>{0.2, 0.3, 0.5}, cfg, FilterStats::initial(3, 0.9), key);
      CHECK(batch.per_task_counts == batch.plan.target_counts);
      CHECK(batch.groups.size() == 20);
      CHECK(batch.resample_rounds_used <= 1);
      CHECK_FALSE(batch.undersized);
      CHECK(st.rho == std::vector<double>{0.0, 0.0, 0.0});
    }
  }
}

TEST_CASE("budget exhaustion is reported") {
  SamplerConfig cfg;
  cfg.batch_size = 32;
  cfg.oversample = 1;
  cfg.max_resamples = 0;
  const auto gen = acceptance_oracle({0.1, 0.1}, 4, ClipConfig{});
  const auto [batch, st] = rp_sample(gen, std::vector<double>{0.5, 0.5}, cfg, FilterStats::initial(2, 0.9), 2);
  CHECK(batch.undersized);
  CHECK(sum(batch.per_task_counts) < 32);
  bool short_somewhere = false;
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(batch.per_task_counts[k] <= batch.plan.target_counts[k]);
    short_somewhere = short_somewhere || batch.per_task_counts[k] < batch.plan.target_counts[k];
  }
  CHECK(short_somewhere);
}

TEST_CASE("batches never exceed B and telemetry is consistent") {
  SamplerConfig cfg;
  cfg.batch_size = 24;
  const auto gen = acceptance_oracle({0.9, 0.4, 0.15}, 6, ClipConfig{});
  FilterStats st = FilterStats::initial(3, 0.9);
  for (std::uint64_t t = 0; t < 50; ++t) {
    auto [batch, next] = rp_sample(gen, std::vector<double>{0.3, 0.3, 0.4}, cfg, st, t);
    CHECK(batch.groups.size() <= 24);
    CHECK(static_cast<int>(batch.groups.size()) == sum(batch.per_task_counts));
    for (std::size_t k = 0; k < 3; ++k) CHECK(batch.filtered[k] <= batch.generated[k]);
    for (const auto& g : batch.groups) CHECK(passes_filter(g.group.rewards, FilterPolicy::strict));
    st = next;
  }
  CHECK(st.rho[2] > st.rho[0]);
}

TEST_CASE("sampling is deterministic per key") {
  SamplerConfig cfg;
  const auto gen = acceptance_oracle({0.7, 0.3}, 4, ClipConfig{});
  const FilterStats st = FilterStats::initial(2, 0.9);
  const std::vector<double> z{0.6, 0.4};
  const auto a = rp_sample(gen, z, cfg, st, 77);
  const auto b = rp_sample(gen, z, cfg, st, 77);
  CHECK(a.first.per_task_counts == b.first.per_task_counts);
  CHECK(a.first.plan.target_counts == b.first.plan.target_counts);
  CHECK(a.second.rho == b.second.rho);
  REQUIRE(a.first.groups.size() == b.first.groups.size());
  for (std::size_t i = 0; i < a.first.groups.size(); ++i) {
    CHECK(a.first.groups[i].task() == b.first.groups[i].task());
    CHECK(a.first.groups[i].group.rewards == b.first.groups[i].group.rewards);
  }
}

TEST_CASE("config validation") {
  SamplerConfig c;
  c.batch_size = 0;
  CHECK_THROWS(c.validate());
  SamplerConfig d;
  d.max_inflation = 0.5;
  CHECK_THROWS(d.validate());
  CHECK(parse_filter_policy("lenient") == FilterPolicy::lenient);
  CHECK_THROWS(parse_filter_policy("loose"));
}
