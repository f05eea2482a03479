/*
 * Copyright 2026 The REDS Toolkit Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

// Commands behind the CLI. Every command writes its artifacts and a
// manifest.json under the output directory.

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "reds/boundslab.hpp"
#include "reds/bundle.hpp"
#include "reds/cachesim.hpp"
#include "reds/datasets.hpp"
#include "reds/finetune.hpp"
#include "reds/importance.hpp"
#include "reds/netgraph.hpp"
#include "reds/planner.hpp"

namespace reds {

struct DataSource {
  /// "blobs" (synthetic) or "idx".
  std::string kind = "blobs";
  std::string images;
  std::string labels;
  std::array<unsigned, 3> split{80, 10, 10};
  BlobOptions blobs;
};

struct RunConfig {
  std::uint64_t seed = 0;
  Arch arch = Arch::DNN;
  ModelSize size = ModelSize::S;
  /// Percent of full MACs, descending, each in (0, 100].
  std::vector<double> capacities{100, 75, 50, 25};
  /// bu, td, l1 or random.
  std::string heuristic = "bu";
  DataSource data;
  TrainConfig train;
  TrainConfig finetune;
  std::size_t importance_batches = kImportanceBatches;
  /// Plan depthwise-separable models with the count DP when its work
  /// estimate stays below this many operations.
  double depthwise_work_limit = 2e9;
  bool cache_layout = false;
  CacheConfig cache;
  BenchSweep bench;
  VerifyOptions bounds;
  std::string out = "reds_out";

  RunConfig();
  /// Missing keys keep their defaults; unknown keys are config errors.
  static RunConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  void validate() const;
};

/// Dataset named by the config, split with the config seed.
Dataset load_dataset(const RunConfig& cfg);

struct TrainResult {
  ModelGraph graph;
  FinetuneLog log;
};

/// Fresh reference model trained on the train split.
TrainResult cmd_train(const RunConfig& cfg, const Dataset& data);

struct ScoreResult {
  /// Units reordered by descending importance.
  ModelGraph permuted;
  /// Scores in the new order.
  std::vector<UnitScore> scores;
  /// Accumulated gradients, reindexed like `permuted`.
  GradStore grads;
};

ScoreResult cmd_score(const RunConfig& cfg, const ModelGraph& trained,
                      const Dataset& data);

struct PlanResult {
  ModelGraph model;
  SlicingPlan plan;
  std::vector<std::string> warnings;
  bool used_depthwise_solver = false;
};

/// bu/td plan the scored order. The equal-share baselines apply their own
/// unit order to scored.permuted and ignore scores and gradients.
PlanResult cmd_plan(const RunConfig& cfg, const ScoreResult& scored);

struct FinetuneResult {
  RedsModel model;
  FinetuneLog log;
};

FinetuneResult cmd_finetune(const RunConfig& cfg, const Dataset& data,
                            ModelGraph model, SlicingPlan plan);

struct EvalRow {
  std::size_t row = 0;
  double capacity_pct = 0.0;
  std::uint64_t capacity_macs = 0;
  std::uint64_t macs = 0;
  std::uint64_t params = 0;
  double accuracy = 0.0;
};

/// Test-split accuracy of every row.
std::vector<EvalRow> cmd_eval(RedsModel& model, const Dataset& data);
void write_eval_csv(std::ostream& out, const std::vector<EvalRow>& rows);

struct ScheduleEntry {
  std::uint64_t time = 0;
  std::size_t row = 0;
};

/// "time:row,time:row,..."; whitespace is ignored.
std::vector<ScheduleEntry> parse_schedule(const std::string& text);
/// `count` switches alternating between the smallest and largest rows.
std::vector<ScheduleEntry> alternating_schedule(const SlicingPlan& plan,
                                                std::size_t count);

struct SwitchLogEntry {
  ScheduleEntry entry;
  SwitchStats stats;
  /// Multiplies of one inference of the newly active subnetwork.
  std::uint64_t inference_macs = 0;
};

std::vector<SwitchLogEntry> cmd_switch_sim(RedsModel& model,
                                           const std::vector<ScheduleEntry>& schedule);
void write_switch_csv(std::ostream& out, const std::vector<SwitchLogEntry>& log);

/// Runs every stage, writing train/, score/, plan/, bundle/ and eval.csv
/// under cfg.out. A failing stage is reported with its name.
RedsModel cmd_pipeline(const RunConfig& cfg);

/// Scores as written by write_scores_csv.
std::vector<UnitScore> read_scores_csv(const std::string& path);

/// Manifest of a command run with this config.
RunManifest make_manifest(const std::string& command, const RunConfig& cfg,
                          std::vector<std::string> artifacts = {});

}  // namespace reds
