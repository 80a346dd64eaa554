// SPDX-License-Identifier: Apache-2.0
#include "mtgrpo/config.hpp"

#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <stdexcept>

namespace mtgrpo {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw std::invalid_argument("config: " + where + " must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items())
    if (!ok.count(key)) throw std::invalid_argument("config: unknown key '" + where + key + "'");
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

TaskSpec task_from_json(const json& j, int index) {
  const std::string where = "tasks[" + std::to_string(index) + "].";
  reject_unknown(j, where,
                 {"task_id", "num_prompts", "answer_len", "vocab_size", "valid_format_fraction", "difficulty_seed"});
  TaskSpec t;
  t.task_id = index;
  if (j.contains("task_id") && j.at("task_id").get<int>() != index)
    throw std::invalid_argument("config: " + where + "task_id must equal its position");
  for (const char* key : {"num_prompts", "answer_len", "vocab_size", "valid_format_fraction"})
    if (!j.contains(key)) throw std::invalid_argument("config: missing key '" + where + key + "'");
  t.num_prompts = j.at("num_prompts").get<int>();
  t.answer_len = j.at("answer_len").get<int>();
  t.vocab_size = j.at("vocab_size").get<int>();
  t.valid_format_fraction = j.at("valid_format_fraction").get<double>();
  t.difficulty_seed = j.value("difficulty_seed", static_cast<std::uint64_t>(1000 + index));
  return t;
}

}  // namespace

TrainConfig config_from_json(const json& j) {
  reject_unknown(j, "", {"method", "seed", "steps", "group_size", "init_scale", "eval_every", "eval_prompts_per_task",
                         "tasks", "policy", "clip", "reweight", "sampler", "sec"});
  if (!j.contains("method")) throw std::invalid_argument("config: missing key 'method'");
  if (!j.contains("tasks")) throw std::invalid_argument("config: missing key 'tasks'");
  TrainConfig c = TrainConfig::preset(parse_method(j.at("method").get<std::string>()));
  read(j, "seed", c.seed);
  read(j, "steps", c.steps);
  read(j, "group_size", c.group_size);
  read(j, "init_scale", c.init_scale);
  read(j, "eval_every", c.eval_every);
  read(j, "eval_prompts_per_task", c.eval_prompts_per_task);

  const json& tasks = j.at("tasks");
  if (!tasks.is_array()) throw std::invalid_argument("config: tasks must be an array");
  for (std::size_t i = 0; i < tasks.size(); ++i) c.tasks.push_back(task_from_json(tasks[i], static_cast<int>(i)));

  if (j.contains("policy")) {
    const json& p = j.at("policy");
    reject_unknown(p, "policy.", {"lr", "beta1", "beta2", "eps", "weight_decay", "num_minibatch"});
    read(p, "lr", c.policy.adam.lr);
    read(p, "beta1", c.policy.adam.beta1);
    read(p, "beta2", c.policy.adam.beta2);
    read(p, "eps", c.policy.adam.eps);
    read(p, "weight_decay", c.policy.adam.weight_decay);
    read(p, "num_minibatch", c.policy.num_minibatch);
  }
  if (j.contains("clip")) {
    const json& p = j.at("clip");
    reject_unknown(p, "clip.", {"clip_low", "clip_high", "kl_coeff", "std_floor"});
    read(p, "clip_low", c.clip.clip_low);
    read(p, "clip_high", c.clip.clip_high);
    read(p, "kl_coeff", c.clip.kl_coeff);
    read(p, "std_floor", c.clip.std_floor);
  }
  if (j.contains("reweight")) {
    const json& p = j.at("reweight");
    reject_unknown(p, "reweight.", {"beta", "lambda", "eta", "optimizer", "weight_decay", "adam_beta1", "adam_beta2",
                                    "adam_eps", "improvement_clip"});
    read(p, "beta", c.reweight.beta);
    read(p, "lambda", c.reweight.lambda);
    read(p, "eta", c.reweight.eta);
    if (p.contains("optimizer")) c.reweight.optimizer = parse_logit_optimizer(p.at("optimizer").get<std::string>());
    read(p, "weight_decay", c.reweight.weight_decay);
    read(p, "adam_beta1", c.reweight.adam_beta1);
    read(p, "adam_beta2", c.reweight.adam_beta2);
    read(p, "adam_eps", c.reweight.adam_eps);
    read(p, "improvement_clip", c.reweight.improvement_clip);
  }
  if (j.contains("sampler")) {
    const json& p = j.at("sampler");
    reject_unknown(p, "sampler.", {"batch_size", "oversample", "max_resamples", "max_inflation", "filter",
                                   "ratio_preserving", "acceptance_aware", "ema_decay"});
    read(p, "batch_size", c.sampler.batch_size);
    read(p, "oversample", c.sampler.oversample);
    read(p, "max_resamples", c.sampler.max_resamples);
    read(p, "max_inflation", c.sampler.max_inflation);
    if (p.contains("filter")) c.sampler.filter = parse_filter_policy(p.at("filter").get<std::string>());
    read(p, "ratio_preserving", c.sampler.ratio_preserving);
    read(p, "acceptance_aware", c.sampler.acceptance_aware);
    read(p, "ema_decay", c.ema_decay);
  }
  if (j.contains("sec")) {
    const json& p = j.at("sec");
    reject_unknown(p, "sec.", {"smoothing", "floor"});
    read(p, "smoothing", c.sec.smoothing);
    read(p, "floor", c.sec.floor);
  }
  c.validate();
  return c;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("config: " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

json config_to_json(const TrainConfig& c) {
  json tasks = json::array();
  for (const TaskSpec& t : c.tasks)
    tasks.push_back({{"task_id", t.task_id},
                     {"num_prompts", t.num_prompts},
                     {"answer_len", t.answer_len},
                     {"vocab_size", t.vocab_size},
                     {"valid_format_fraction", t.valid_format_fraction},
                     {"difficulty_seed", t.difficulty_seed}});
  return {
      {"method", to_string(c.method)},
      {"seed", c.seed},
      {"steps", c.steps},
      {"group_size", c.group_size},
      {"init_scale", c.init_scale},
      {"eval_every", c.eval_every},
      {"eval_prompts_per_task", c.eval_prompts_per_task},
      {"tasks", tasks},
      {"policy",
       {{"lr", c.policy.adam.lr},
        {"beta1", c.policy.adam.beta1},
        {"beta2", c.policy.adam.beta2},
        {"eps", c.policy.adam.eps},
        {"weight_decay", c.policy.adam.weight_decay},
        {"num_minibatch", c.policy.num_minibatch}}},
      {"clip",
       {{"clip_low", c.clip.clip_low},
        {"clip_high", c.clip.clip_high},
        {"kl_coeff", c.clip.kl_coeff},
        {"std_floor", c.clip.std_floor}}},
      {"reweight",
       {{"beta", c.reweight.beta},
        {"lambda", c.reweight.lambda},
        {"eta", c.reweight.eta},
        {"optimizer", to_string(c.reweight.optimizer)},
        {"weight_decay", c.reweight.weight_decay},
        {"adam_beta1", c.reweight.adam_beta1},
        {"adam_beta2", c.reweight.adam_beta2},
        {"adam_eps", c.reweight.adam_eps},
        {"improvement_clip", c.reweight.improvement_clip}}},
      {"sampler",
       {{"batch_size", c.sampler.batch_size},
        {"oversample", c.sampler.oversample},
        {"max_resamples", c.sampler.max_resamples},
        {"max_inflation", c.sampler.max_inflation},
        {"filter", to_string(c.sampler.filter)},
        {"ratio_preserving", c.sampler.ratio_preserving},
        {"acceptance_aware", c.sampler.acceptance_aware},
        {"ema_decay", c.ema_decay}}},
      {"sec", {{"smoothing", c.sec.smoothing}, {"floor", c.sec.floor}}},
  };
}

json record_to_json(const MetricsRecord& r) {
  json j = {
      {"step", r.step},
      {"evaluated", r.evaluated},
      {"accuracy", r.accuracy},
      {"worst_accuracy", r.worst_accuracy},
      {"average_accuracy", r.average_accuracy},
      {"z", r.z},
      {"logits", r.logits},
      {"batch_reward", r.batch_reward},
      {"batch_reward_observed", r.batch_reward_observed},
      {"improvement", r.improvement},
      {"improvement_present", r.improvement_present},
      {"rho", r.rho},
      {"resample_rounds", r.resample_rounds},
      {"undersized", r.undersized},
      {"batch_groups", r.batch_groups},
      {"target_counts", r.target_counts},
      {"accepted_counts", r.accepted_counts},
      {"generated", r.generated},
      {"filtered", r.filtered},
      {"realized_proportions", r.realized_proportions},
      {"policy_version", r.policy_version},
  };
  return j;
}

MetricsRecord record_from_json(const json& j) {
  MetricsRecord r;
  r.step = j.at("step").get<int>();
  r.evaluated = j.at("evaluated").get<bool>();
  r.accuracy = j.at("accuracy").get<std::vector<double>>();
  r.worst_accuracy = j.at("worst_accuracy").get<double>();
  r.average_accuracy = j.at("average_accuracy").get<double>();
  r.z = j.at("z").get<std::vector<double>>();
  r.logits = j.at("logits").get<std::vector<double>>();
  r.batch_reward = j.at("batch_reward").get<std::vector<double>>();
  r.batch_reward_observed = j.at("batch_reward_observed").get<std::vector<bool>>();
  r.improvement = j.at("improvement").get<std::vector<double>>();
  r.improvement_present = j.at("improvement_present").get<std::vector<bool>>();
  r.rho = j.at("rho").get<std::vector<double>>();
  r.resample_rounds = j.at("resample_rounds").get<int>();
  r.undersized = j.at("undersized").get<bool>();
  r.batch_groups = j.at("batch_groups").get<int>();
  r.target_counts = j.at("target_counts").get<std::vector<int>>();
  r.accepted_counts = j.at("accepted_counts").get<std::vector<int>>();
  r.generated = j.at("generated").get<std::vector<int>>();
  r.filtered = j.at("filtered").get<std::vector<int>>();
  r.realized_proportions = j.at("realized_proportions").get<std::vector<double>>();
  r.policy_version = j.at("policy_version").get<std::uint64_t>();
  return r;
}

namespace {

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << std::setprecision(17);
  return out;
}

}  // namespace

void write_run(const std::filesystem::path& dir, const TrainConfig& cfg, const RunLog& log) {
  std::filesystem::create_directories(dir);
  const std::size_t k = cfg.tasks.size();

  {
    auto out = open_out(dir / "metrics.jsonl");
    for (const MetricsRecord& r : log.records) out << record_to_json(r).dump() << '\n';
  }
  {
    auto out = open_out(dir / "config.json");
    out << config_to_json(cfg).dump(2) << '\n';
  }
  {
    auto out = open_out(dir / "weights.csv");
    out << "step,task,z,logit\n";
    for (const MetricsRecord& r : log.records)
      for (std::size_t i = 0; i < k; ++i) out << r.step << ',' << i << ',' << r.z[i] << ',' << r.logits[i] << '\n';
  }
  {
    auto out = open_out(dir / "accuracy.csv");
    out << "step,task,accuracy\n";
    for (const MetricsRecord& r : log.records) {
      if (!r.evaluated) continue;
      for (std::size_t i = 0; i < k; ++i) out << r.step << ',' << i << ',' << r.accuracy[i] << '\n';
      out << r.step << ",worst," << r.worst_accuracy << '\n';
      out << r.step << ",average," << r.average_accuracy << '\n';
    }
  }
  {
    auto out = open_out(dir / "summary.csv");
    out << "method,seed,steps_completed,aborted,final_worst,final_average";
    for (std::size_t i = 0; i < k; ++i) out << ",final_task" << i;
    out << ",undersized_steps,mean_resample_rounds\n";
    int undersized = 0;
    double rounds = 0.0;
    for (const MetricsRecord& r : log.records) {
      undersized += r.undersized ? 1 : 0;
      rounds += r.resample_rounds;
    }
    out << log.method << ',' << log.seed << ',' << log.records.size() << ',' << (log.aborted ? 1 : 0);
    if (log.records.empty()) {
      out << ",,";
      for (std::size_t i = 0; i < k; ++i) out << ',';
    } else {
      const MetricsRecord& last = log.records.back();
      out << ',' << last.worst_accuracy << ',' << last.average_accuracy;
      for (double a : last.accuracy) out << ',' << a;
    }
    out << ',' << undersized << ',' << (log.records.empty() ? 0.0 : rounds / log.records.size()) << '\n';
  }
  {
    auto out = open_out(dir / "final_state.json");
    json j = {{"method", log.method},
              {"seed", log.seed},
              {"aborted", log.aborted},
              {"abort_reason", log.abort_reason},
              {"final_logits", log.final_logits},
              {"steps_completed", log.records.size()}};
    out << j.dump(2) << '\n';
  }
}

std::vector<MetricsRecord> read_metrics(const std::filesystem::path& jsonl) {
  std::ifstream in(jsonl);
  if (!in) throw std::runtime_error("cannot open " + jsonl.string());
  std::vector<MetricsRecord> out;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) out.push_back(record_from_json(json::parse(line)));
  return out;
}

}  // namespace mtgrpo
