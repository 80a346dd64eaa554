// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

namespace mtgrpo {

/// A point of the probability simplex. Construction validates it.
class SimplexPoint {
 public:
  explicit SimplexPoint(std::vector<double> z);
  std::span<const double> values() const { return z_; }
  int dim() const { return static_cast<int>(z_.size()); }

 private:
  std::vector<double> z_;
};

/// Dual variables mu_kj >= 0 on the complete directed graph; the diagonal is ignored.
class DualVariables {
 public:
  explicit DualVariables(int num_tasks);
  DualVariables(int num_tasks, std::vector<double> row_major);

  int dim() const { return k_; }
  double operator()(int from, int to) const { return mu_[index(from, to)]; }
  void set(int from, int to, double value);
  /// Sum over off-diagonal entries.
  double total() const;

 private:
  std::size_t index(int from, int to) const;
  int k_;
  std::vector<double> mu_;
};

/// (K/2) * || z - 1/K ||_1
double omega_closed_form(const SimplexPoint& z);

inline constexpr int kMinflowOracleMaxTasks = 8;

/// Total positive supply of d_k = K z_k - 1, the value of the min-flow problem.
/// Computed without the L1 identity; K <= 8.
double omega_minflow_oracle(const SimplexPoint& z);

/// A feasible flow attaining the min-flow value, built by greedily shipping
/// supply from surplus nodes to deficit nodes.
DualVariables greedy_transport(const SimplexPoint& z);

/// z_k = (1 + sum_j mu_kj - sum_j mu_jk) / K. Throws if any induced weight is negative.
SimplexPoint weights_from_duals(const DualVariables& mu);

}  // namespace mtgrpo
