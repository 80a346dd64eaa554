// SPDX-License-Identifier: Apache-2.0
#include "mtgrpo/robust.hpp"

#include <cmath>
#include <stdexcept>

namespace mtgrpo {

namespace {
constexpr double kSimplexTol = 1e-12;
}

SimplexPoint::SimplexPoint(std::vector<double> z) : z_(std::move(z)) {
  if (z_.empty()) throw std::invalid_argument("SimplexPoint: empty");
  double sum = 0.0;
  for (double v : z_) {
    if (!(v >= 0.0)) throw std::invalid_argument("SimplexPoint: entries must be nonnegative");
    sum += v;
  }
  if (std::abs(sum - 1.0) > kSimplexTol * static_cast<double>(z_.size()))
    throw std::invalid_argument("SimplexPoint: entries must sum to 1");
}

DualVariables::DualVariables(int num_tasks)
    : k_(num_tasks), mu_(static_cast<std::size_t>(num_tasks) * static_cast<std::size_t>(num_tasks), 0.0) {
  if (num_tasks < 1) throw std::invalid_argument("DualVariables: need at least one task");
}

DualVariables::DualVariables(int num_tasks, std::vector<double> row_major) : k_(num_tasks), mu_(std::move(row_major)) {
  if (num_tasks < 1 || mu_.size() != static_cast<std::size_t>(num_tasks) * static_cast<std::size_t>(num_tasks))
    throw std::invalid_argument("DualVariables: expected K*K entries");
  for (double v : mu_)
    if (!(v >= 0.0)) throw std::invalid_argument("DualVariables: entries must be nonnegative");
}

std::size_t DualVariables::index(int from, int to) const {
  if (from < 0 || from >= k_ || to < 0 || to >= k_) throw std::out_of_range("DualVariables: index out of range");
  return static_cast<std::size_t>(from) * static_cast<std::size_t>(k_) + static_cast<std::size_t>(to);
}

void DualVariables::set(int from, int to, double value) {
  if (!(value >= 0.0)) throw std::invalid_argument("DualVariables: entries must be nonnegative");
  mu_[index(from, to)] = value;
}

double DualVariables::total() const {
  double s = 0.0;
  for (int i = 0; i < k_; ++i)
    for (int j = 0; j < k_; ++j)
      if (i != j) s += mu_[index(i, j)];
  return s;
}

double omega_closed_form(const SimplexPoint& z) {
  const double k = z.dim();
  double l1 = 0.0;
  for (double v : z.values()) l1 += std::abs(v - 1.0 / k);
  return 0.5 * k * l1;
}

double omega_minflow_oracle(const SimplexPoint& z) {
  if (z.dim() > kMinflowOracleMaxTasks) throw std::invalid_argument("omega_minflow_oracle: K exceeds 8");
  const double k = z.dim();
  double supply = 0.0;
  for (double v : z.values()) {
    const double d = k * v - 1.0;
    if (d > 0.0) supply += d;
  }
  return supply;
}

DualVariables greedy_transport(const SimplexPoint& z) {
  if (z.dim() > kMinflowOracleMaxTasks) throw std::invalid_argument("greedy_transport: K exceeds 8");
  const int k = z.dim();
  std::vector<double> d(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) d[static_cast<std::size_t>(i)] = k * z.values()[static_cast<std::size_t>(i)] - 1.0;
  DualVariables mu(k);
  int demand = 0;
  for (int s = 0; s < k; ++s) {
    double left = d[static_cast<std::size_t>(s)];
    while (left > 0.0 && demand < k) {
      double& need = d[static_cast<std::size_t>(demand)];
      if (need >= 0.0) {
        ++demand;
        continue;
      }
      const double ship = std::min(left, -need);
      mu.set(s, demand, mu(s, demand) + ship);
      left -= ship;
      need += ship;
      if (need >= 0.0) ++demand;
    }
  }
  return mu;
}

SimplexPoint weights_from_duals(const DualVariables& mu) {
  const int k = mu.dim();
  std::vector<double> z(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    double out = 0.0;
    double in = 0.0;
    for (int j = 0; j < k; ++j) {
      if (j == i) continue;
      out += mu(i, j);
      in += mu(j, i);
    }
    const double v = (1.0 + out - in) / k;
    if (v < 0.0) throw std::invalid_argument("weights_from_duals: duals induce a negative task weight");
    z[static_cast<std::size_t>(i)] = v;
  }
  return SimplexPoint(std::move(z));
}

}  // namespace mtgrpo
