// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"
#include "mtgrpo/harness.hpp"

namespace mtgrpo {

/// Parse a training config. The method picks the preset; every other key overrides it.
/// Unknown keys are rejected with the offending path in the message.
TrainConfig config_from_json(const nlohmann::json& j);
TrainConfig load_config(const std::filesystem::path& path);
nlohmann::json config_to_json(const TrainConfig& cfg);

nlohmann::json record_to_json(const MetricsRecord& r);
MetricsRecord record_from_json(const nlohmann::json& j);

/// Writes metrics.jsonl, summary.csv, weights.csv, accuracy.csv, config.json and
/// final_state.json into `dir` (created if needed).
void write_run(const std::filesystem::path& dir, const TrainConfig& cfg, const RunLog& log);

std::vector<MetricsRecord> read_metrics(const std::filesystem::path& jsonl);

}  // namespace mtgrpo
