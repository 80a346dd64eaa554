// SPDX-License-Identifier: Apache-2.0
// mtgrpo command line: train, verify, ablate, report.
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "mtgrpo/checks.hpp"
#include "mtgrpo/config.hpp"
#include "mtgrpo/harness.hpp"

namespace fs = std::filesystem;
using namespace mtgrpo;

namespace {

struct RunSummary {
  std::string method;
  std::uint64_t seed = 0;
  fs::path dir;
  std::vector<MetricsRecord> records;
  std::vector<double> final_acc;
  double final_worst = 0.0;
  double final_avg = 0.0;
  double mean_rounds = 0.0;
  double ratio_gap = 0.0;  // mean L1 distance between realized proportions and z
};

RunSummary summarize(const std::string& method, std::uint64_t seed, fs::path dir, std::vector<MetricsRecord> recs) {
  RunSummary s{method, seed, std::move(dir), std::move(recs), {}, 0.0, 0.0, 0.0, 0.0};
  if (s.records.empty()) return s;
  const MetricsRecord& last = s.records.back();
  s.final_acc = last.accuracy;
  s.final_worst = last.worst_accuracy;
  s.final_avg = last.average_accuracy;
  int n = 0;
  for (const MetricsRecord& r : s.records) {
    s.mean_rounds += r.resample_rounds;
    if (r.batch_groups == 0) continue;
    double gap = 0.0;
    for (std::size_t k = 0; k < r.z.size(); ++k) gap += std::abs(r.realized_proportions[k] - r.z[k]);
    s.ratio_gap += gap;
    ++n;
  }
  s.mean_rounds /= static_cast<double>(s.records.size());
  if (n > 0) s.ratio_gap /= n;
  return s;
}

RunSummary train_one(const TrainConfig& cfg, const fs::path& out) {
  const RunLog log = run_training(cfg);
  write_run(out, cfg, log);
  if (log.aborted) std::cerr << "run aborted: " << log.abort_reason << '\n';
  if (cfg.method == Method::sec_approx)
    std::cerr << "note: sec-approx is an advantage-magnitude approximation, not the published method\n";
  return summarize(log.method, log.seed, out, log.records);
}

int cmd_train(const std::string& config, std::optional<std::uint64_t> seed, int seeds, const fs::path& out) {
  TrainConfig cfg = load_config(config);
  if (seed) cfg.seed = *seed;
  const std::uint64_t first = cfg.seed;
  int status = 0;
  for (int i = 0; i < seeds; ++i) {
    cfg.seed = first + static_cast<std::uint64_t>(i);
    const fs::path dir = seeds == 1 ? out : out / ("seed" + std::to_string(cfg.seed));
    const RunSummary s = train_one(cfg, dir);
    std::printf("%s seed=%llu steps=%zu final_worst=%.4f final_avg=%.4f -> %s\n", s.method.c_str(),
                static_cast<unsigned long long>(s.seed), s.records.size(), s.final_worst, s.final_avg,
                dir.string().c_str());
    if (s.records.size() != static_cast<std::size_t>(cfg.steps)) status = 2;
  }
  return status;
}

int cmd_verify() {
  const std::vector<CheckResult> results = {check_omega_equivalence(), check_weight_gradient(),
                                            check_policy_gradient(), check_logprob_gradient()};
  bool ok = true;
  for (const CheckResult& r : results) {
    std::cout << format_check(r) << '\n';
    ok = ok && r.pass;
  }
  return ok ? 0 : 1;
}

int cmd_ablate(const std::string& config, const std::string& toggle, std::optional<std::uint64_t> seed, int seeds,
               const fs::path& out) {
  const TrainConfig base = load_config(config);
  TrainConfig off = base;
  if (toggle == "rps") {
    off.sampler.ratio_preserving = false;
  } else if (toggle == "aas") {
    off.sampler.acceptance_aware = false;
  } else if (toggle == "iwu") {
    if (base.reweight.mode != ReweightMode::iwu) throw std::invalid_argument("ablate iwu needs method mtgrpo-iwu");
    off.method = Method::mtgrpo_strict;
    off.reweight.mode = ReweightMode::strict;
  } else {
    throw std::invalid_argument("unknown toggle: " + toggle);
  }
  std::printf("%-6s %-5s %12s %12s %12s %12s\n", "variant", "seed", "final_worst", "final_avg", "mean_rounds",
              "ratio_gap");
  for (int i = 0; i < seeds; ++i) {
    const std::uint64_t s = (seed ? *seed : base.seed) + static_cast<std::uint64_t>(i);
    for (int variant = 0; variant < 2; ++variant) {
      TrainConfig cfg = variant == 0 ? base : off;
      cfg.seed = s;
      const std::string name = variant == 0 ? "with" : "without";
      const RunSummary r = train_one(cfg, out / (name + "-" + toggle) / ("seed" + std::to_string(s)));
      std::printf("%-7s %-5llu %12.4f %12.4f %12.4f %12.4f\n", name.c_str(), static_cast<unsigned long long>(s),
                  r.final_worst, r.final_avg, r.mean_rounds, r.ratio_gap);
    }
  }
  return 0;
}

int cmd_report(const fs::path& runs, const std::string& baseline, const std::vector<double>& thresholds) {
  std::vector<RunSummary> all;
  for (const auto& entry : fs::recursive_directory_iterator(runs)) {
    if (entry.path().filename() != "metrics.jsonl") continue;
    const fs::path dir = entry.path().parent_path();
    std::ifstream cin(dir / "config.json");
    if (!cin) continue;
    const nlohmann::json cj = nlohmann::json::parse(cin);
    all.push_back(summarize(cj.at("method").get<std::string>(), cj.at("seed").get<std::uint64_t>(), dir,
                            read_metrics(entry.path())));
  }
  if (all.empty()) {
    std::cerr << "no runs under " << runs << '\n';
    return 1;
  }
  std::sort(all.begin(), all.end(), [](const RunSummary& a, const RunSummary& b) {
    return std::tie(a.method, a.seed, a.dir) < std::tie(b.method, b.seed, b.dir);
  });

  std::map<std::string, std::vector<const RunSummary*>> by_method;
  for (const RunSummary& r : all) by_method[r.method].push_back(&r);

  auto mean_acc = [](const std::vector<const RunSummary*>& rs) {
    std::vector<double> m(rs.front()->final_acc.size(), 0.0);
    for (const RunSummary* r : rs)
      for (std::size_t k = 0; k < m.size(); ++k) m[k] += r->final_acc[k] / rs.size();
    return m;
  };

  std::optional<std::vector<double>> base_acc;
  if (by_method.count(baseline)) base_acc = mean_acc(by_method[baseline]);

  std::ofstream csv(runs / "report.csv");
  csv << "method,runs,mean_final_worst,mean_final_average,delta_m_percent,excluded_tasks";
  for (double t : thresholds) csv << ",steps_to_" << t;
  csv << '\n';
  std::printf("%-20s %4s %10s %10s %10s", "method", "runs", "worst", "average", "dm%");
  for (double t : thresholds) std::printf("  t>=%-5.2f", t);
  std::printf("\n");

  for (const auto& [method, rs] : by_method) {
    double worst = 0.0, avg = 0.0;
    for (const RunSummary* r : rs) {
      worst += r->final_worst / rs.size();
      avg += r->final_avg / rs.size();
    }
    std::string dm = "";
    int excluded = 0;
    if (base_acc) {
      try {
        dm = std::to_string(relative_change(mean_acc(rs), *base_acc, &excluded));
      } catch (const std::invalid_argument&) {
        dm = "";
      }
    }
    csv << method << ',' << rs.size() << ',' << worst << ',' << avg << ',' << dm << ',' << excluded;
    std::printf("%-20s %4zu %10.4f %10.4f %10s", method.c_str(), rs.size(), worst, avg,
                dm.empty() ? "-" : dm.substr(0, dm.find('.') + 3).c_str());
    for (double t : thresholds) {
      // Seed-median of the first crossing; runs that never cross count as not reached.
      std::vector<int> hits;
      for (const RunSummary* r : rs)
        if (auto s = steps_to_threshold(std::span<const MetricsRecord>(r->records), t)) hits.push_back(*s);
      std::string cell = "not-reached";
      if (hits.size() * 2 > rs.size()) {
        std::sort(hits.begin(), hits.end());
        cell = std::to_string(hits[hits.size() / 2]);
      }
      csv << ',' << cell;
      std::printf("  %-9s", cell.c_str());
    }
    csv << '\n';
    std::printf("\n");
  }
  if (!base_acc) std::printf("(baseline %s not found; dm%% omitted)\n", baseline.c_str());
  std::printf("wrote %s\n", (runs / "report.csv").string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-task GRPO laboratory"};
  app.require_subcommand(1);

  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;

  auto* train = app.add_subcommand("train", "Run one training job");
  train->add_option("--config", config, "JSON config")->required()->check(CLI::ExistingFile);
  train->add_option("--seed", seed, "Override the config seed");
  train->add_option("--out", out, "Output directory")->required();
  int train_seeds = 1;
  train->add_option("--seeds", train_seeds, "Run this many consecutive seeds into <out>/seed<n>")
      ->check(CLI::PositiveNumber);

  app.add_subcommand("verify", "Oracle sweeps and gradient checks");

  std::string toggle;
  int seeds = 1;
  auto* ablate = app.add_subcommand("ablate", "Run a config with and without one component");
  ablate->add_option("--config", config, "JSON config")->required()->check(CLI::ExistingFile);
  ablate->add_option("--toggle", toggle, "Component to remove")->required()->check(CLI::IsMember({"rps", "aas", "iwu"}));
  ablate->add_option("--seed", seed, "First seed");
  ablate->add_option("--seeds", seeds, "Number of consecutive seeds")->check(CLI::PositiveNumber);
  ablate->add_option("--out", out, "Output directory (default runs/ablate)");

  std::string runs;
  std::string baseline = "dapo-uniform";
  std::vector<double> thresholds = {0.3, 0.5, 0.7};
  auto* report = app.add_subcommand("report", "Aggregate runs: worst/average accuracy, dm%, steps to threshold");
  report->add_option("--runs", runs, "Directory searched recursively for runs")->required()->check(CLI::ExistingDirectory);
  report->add_option("--baseline", baseline, "Reference method for dm%");
  report->add_option("--thresholds", thresholds, "Worst-task accuracy thresholds");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*train) return cmd_train(config, seed, train_seeds, out);
    if (app.got_subcommand("verify")) return cmd_verify();
    if (*ablate) return cmd_ablate(config, toggle, seed, seeds, out.empty() ? fs::path("runs/ablate") : fs::path(out));
    if (*report) return cmd_report(runs, baseline, thresholds);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
