// SPDX-License-Identifier: Apache-2.0
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mtgrpo/checks.hpp"
#include "mtgrpo/config.hpp"
#include "mtgrpo/grpo.hpp"
#include "mtgrpo/harness.hpp"
#include "mtgrpo/reweight.hpp"
#include "mtgrpo/robust.hpp"
#include "mtgrpo/sampler.hpp"

namespace py = pybind11;
using namespace mtgrpo;

namespace {

// Runs training from a JSON config string and returns (records as JSON lines, aborted, reason).
py::tuple train_json(const std::string& config, std::uint64_t seed) {
  TrainConfig cfg = config_from_json(nlohmann::json::parse(config));
  cfg.seed = seed;
  RunLog log;
  {
    py::gil_scoped_release release;
    log = run_training(cfg);
  }
  std::vector<std::string> lines;
  lines.reserve(log.records.size());
  for (const auto& r : log.records) lines.push_back(record_to_json(r).dump());
  return py::make_tuple(lines, log.aborted, log.abort_reason);
}

py::dict sample_with_oracle(std::vector<double> rates, std::vector<double> z, int batch_size, int oversample,
                            int max_resamples, double max_inflation, bool ratio_preserving, bool acceptance_aware,
                            int batches, std::uint64_t seed) {
  SamplerConfig cfg;
  cfg.batch_size = batch_size;
  cfg.oversample = oversample;
  cfg.max_resamples = max_resamples;
  cfg.max_inflation = max_inflation;
  cfg.ratio_preserving = ratio_preserving;
  cfg.acceptance_aware = acceptance_aware;
  const auto gen = acceptance_oracle(rates, 8, ClipConfig{});
  FilterStats stats = FilterStats::initial(static_cast<int>(z.size()), 0.9);
  std::vector<std::vector<int>> counts;
  std::vector<int> rounds;
  for (int b = 0; b < batches; ++b) {
    auto [batch, next] = rp_sample(gen, z, cfg, stats, Stream::derive_key(seed, {static_cast<std::uint64_t>(b)}));
    counts.push_back(batch.per_task_counts);
    rounds.push_back(batch.resample_rounds_used);
    stats = next;
  }
  py::dict out;
  out["counts"] = counts;
  out["rounds"] = rounds;
  out["rho"] = stats.rho;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Multi-task GRPO laboratory";

  m.def("train_json", &train_json, py::arg("config"), py::arg("seed"));
  m.def("validate_config", [](const std::string& config) { config_from_json(nlohmann::json::parse(config)); },
        py::arg("config"));

  m.def("group_advantages", [](std::vector<double> rewards, double std_floor) {
    ClipConfig c;
    c.std_floor = std_floor;
    const AdvantageSet a = group_advantages(rewards, c);
    return py::make_tuple(a.values, a.is_zero_gradient);
  }, py::arg("rewards"), py::arg("std_floor") = 1e-8);
  m.def("kl_penalty", &kl_penalty);

  m.def("softmax", [](std::vector<double> xi) { return softmax(xi); });
  m.def("softmax_weight_gradient",
        [](std::vector<double> z, std::vector<double> s) { return softmax_weight_gradient(z, s); });

  m.def("omega_closed_form", [](std::vector<double> z) { return omega_closed_form(SimplexPoint(std::move(z))); });
  m.def("omega_minflow_oracle", [](std::vector<double> z) { return omega_minflow_oracle(SimplexPoint(std::move(z))); });
  m.def("weights_from_duals", [](int k, std::vector<double> mu) {
    const SimplexPoint z = weights_from_duals(DualVariables(k, std::move(mu)));
    return std::vector<double>(z.values().begin(), z.values().end());
  }, py::arg("num_tasks"), py::arg("mu_row_major"));

  m.def("sample_with_oracle", &sample_with_oracle, py::arg("rates"), py::arg("z"), py::arg("batch_size") = 64,
        py::arg("oversample") = 3, py::arg("max_resamples") = 10, py::arg("max_inflation") = 5.0,
        py::arg("ratio_preserving") = true, py::arg("acceptance_aware") = true, py::arg("batches") = 200,
        py::arg("seed") = 0);

  m.def("relative_change", [](std::vector<double> a, std::vector<double> b) { return relative_change(a, b); });
  m.def("verify", [] {
    std::vector<py::dict> rows;
    for (const CheckResult& r : {check_omega_equivalence(), check_weight_gradient(), check_policy_gradient(),
                                 check_logprob_gradient()}) {
      py::dict d;
      d["name"] = r.name;
      d["pass"] = r.pass;
      d["measured"] = r.measured;
      d["tolerance"] = r.tolerance;
      rows.push_back(d);
    }
    return rows;
  });
}
