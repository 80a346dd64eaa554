// SPDX-License-Identifier: Apache-2.0
#include "mtgrpo/reweight.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mtgrpo {

ReweightMode parse_reweight_mode(const std::string& s) {
  if (s == "strict") return ReweightMode::strict;
  if (s == "iwu") return ReweightMode::iwu;
  if (s == "regularized") return ReweightMode::regularized;
  if (s == "fixed-uniform") return ReweightMode::fixed_uniform;
  throw std::invalid_argument("unknown reweight mode: " + s);
}

std::string to_string(ReweightMode m) {
  switch (m) {
    case ReweightMode::strict:
      return "strict";
    case ReweightMode::iwu:
      return "iwu";
    case ReweightMode::regularized:
      return "regularized";
    case ReweightMode::fixed_uniform:
      return "fixed-uniform";
  }
  return "?";
}

LogitOptimizer parse_logit_optimizer(const std::string& s) {
  if (s == "plain") return LogitOptimizer::plain;
  if (s == "adamw") return LogitOptimizer::adamw;
  throw std::invalid_argument("unknown logit optimizer: " + s);
}

std::string to_string(LogitOptimizer o) { return o == LogitOptimizer::plain ? "plain" : "adamw"; }

void ReweightConfig::validate() const {
  if (mode != ReweightMode::fixed_uniform && !(beta > 0.0))
    throw std::invalid_argument("ReweightConfig: beta must be positive");
  if (lambda < 0.0) throw std::invalid_argument("ReweightConfig: lambda must be >= 0");
  if (eta < 0.0) throw std::invalid_argument("ReweightConfig: eta must be >= 0");
  if (weight_decay < 0.0) throw std::invalid_argument("ReweightConfig: weight_decay must be >= 0");
  if (!(improvement_clip > 0.0)) throw std::invalid_argument("ReweightConfig: improvement_clip must be positive");
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

TaskWeights::TaskWeights(int num_tasks, const ReweightConfig& cfg)
    : kind_(cfg.optimizer),
      beta_(cfg.beta),
      xi_(static_cast<std::size_t>(num_tasks), 0.0),
      z_(static_cast<std::size_t>(num_tasks), 1.0 / num_tasks) {
  if (num_tasks < 1) throw std::invalid_argument("TaskWeights: need at least one task");
  if (kind_ == LogitOptimizer::adamw && cfg.beta > 0.0)
    adam_ = AdamW(AdamWConfig{cfg.beta, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, cfg.weight_decay},
                  static_cast<std::size_t>(num_tasks));
}

void TaskWeights::descend(std::span<const double> grad) {
  if (grad.size() != xi_.size()) throw std::invalid_argument("TaskWeights::descend: size mismatch");
  if (kind_ == LogitOptimizer::plain) {
    for (std::size_t k = 0; k < xi_.size(); ++k) xi_[k] -= beta_ * grad[k];
  } else {
    adam_.step(xi_, grad);
  }
  z_ = softmax(xi_);
}

void TaskWeights::set_logits(std::span<const double> xi) {
  if (xi.size() != xi_.size()) throw std::invalid_argument("TaskWeights::set_logits: size mismatch");
  xi_.assign(xi.begin(), xi.end());
  z_ = softmax(xi_);
}

std::vector<double> softmax_weight_gradient(std::span<const double> z, std::span<const double> signal) {
  if (z.size() != signal.size()) throw std::invalid_argument("softmax_weight_gradient: size mismatch");
  double avg = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) avg += z[k] * signal[k];
  std::vector<double> g(z.size());
  for (std::size_t k = 0; k < z.size(); ++k) g[k] = z[k] * (signal[k] - avg);
  return g;
}

namespace {
void check_len(const TaskWeights& w, std::span<const double> v) {
  if (static_cast<int>(v.size()) != w.num_tasks()) throw std::invalid_argument("reweight: signal length mismatch");
}
}  // namespace

void strict_update(TaskWeights& w, std::span<const double> rewards, const ReweightConfig& cfg) {
  (void)cfg;
  check_len(w, rewards);
  w.descend(softmax_weight_gradient(w.z(), rewards));
}

void iwu_update(TaskWeights& w, std::span<const double> rewards, std::span<const double> improvements,
                const ReweightConfig& cfg) {
  check_len(w, rewards);
  check_len(w, improvements);
  std::vector<double> s(rewards.size());
  for (std::size_t k = 0; k < s.size(); ++k) s[k] = improvements[k] + cfg.lambda * rewards[k];
  w.descend(softmax_weight_gradient(w.z(), s));
}

void regularized_update(TaskWeights& w, std::span<const double> rewards, const ReweightConfig& cfg) {
  check_len(w, rewards);
  std::vector<double> g = softmax_weight_gradient(w.z(), rewards);
  for (std::size_t k = 0; k < g.size(); ++k) g[k] += cfg.eta * w.logits()[k];
  w.descend(g);
}

void reweight_step(TaskWeights& w, std::span<const double> rewards, std::span<const double> improvements,
                   const ReweightConfig& cfg) {
  switch (cfg.mode) {
    case ReweightMode::strict:
      strict_update(w, rewards, cfg);
      break;
    case ReweightMode::iwu:
      iwu_update(w, rewards, improvements, cfg);
      break;
    case ReweightMode::regularized:
      regularized_update(w, rewards, cfg);
      break;
    case ReweightMode::fixed_uniform:
      break;
  }
}

}  // namespace mtgrpo
