// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mtgrpo {

struct CheckResult {
  std::string name;
  bool pass = false;
  double measured = 0.0;   // worst error (or statistic) observed
  double tolerance = 0.0;
  int instances = 0;
  double seconds = 0.0;
};

/// Closed-form Omega against the min-flow oracle on every simplex grid point of the given step.
CheckResult check_omega_equivalence(double grid_step = 0.05, const std::vector<int>& dims = {2, 3, 4});

/// Logit updates of the strict, improvement-aware and regularized modes against central
/// differences of the objective each one descends.
CheckResult check_weight_gradient(int instances = 100, std::uint64_t seed = 7);

/// Analytic gradient of the clipped surrogate against central differences, away from clip
/// boundaries, for kl_coeff 0 and 0.01.
CheckResult check_policy_gradient(int instances = 50, std::uint64_t seed = 11);

/// grad_logprob against central differences of logprob.
CheckResult check_logprob_gradient(int instances = 100, std::uint64_t seed = 13);

std::string format_check(const CheckResult& r);

}  // namespace mtgrpo
