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

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "reds/autograd.hpp"
#include "reds/datasets.hpp"
#include "reds/nest.hpp"

namespace reds {

/// Loss weight of each plan row: active encoder parameters (weights, biases,
/// batchnorm scale/shift) over all encoder parameters.
struct PiWeights {
  std::vector<double> pi;
};

PiWeights compute_pi(const RedsModel& m);

struct EpochRecord {
  std::size_t epoch = 0;
  std::size_t row = 0;
  std::uint64_t capacity_macs = 0;
  double pi = 0.0;
  double loss = 0.0;
  double val_accuracy = 0.0;
};

struct BatchRecord {
  double total_loss = 0.0;
  std::vector<double> row_loss;
};

struct FinetuneLog {
  std::vector<EpochRecord> epochs;
  std::vector<BatchRecord> batches;
  std::uint64_t steps = 0;
  /// Set when a non-finite loss stopped training; the model then holds the
  /// weights from the end of the last completed epoch.
  bool diverged = false;
  std::string divergence;

  void write_csv(std::ostream& out) const;
  /// Validation accuracy of each row after the last epoch.
  std::vector<double> final_accuracy() const;
};

struct FinetuneOptions {
  /// Keep per-batch loss records.
  bool record_batches = true;
  /// Validate before the first step (logged as epoch 0).
  bool log_initial = true;
};

/// One step: summed gradient of sum_n pi_n * CE_n over all rows, applied to
/// the shared store. Returns the per-row losses and the weighted total.
BatchRecord joint_gradient(RedsModel& m, const Minibatch& batch,
                           const PiWeights& pi, GradStore& out);

/// All rows trained together on every batch. Training uses the standard
/// weight layout; a cache-optimized model is switched back afterwards.
FinetuneLog finetune_joint(RedsModel& m, const Dataset& data,
                           const TrainConfig& cfg,
                           const FinetuneOptions& options = {});

/// finetune_joint restricted to `samples_per_class` training samples per
/// class, chosen with cfg.seed.
FinetuneLog finetune_fewshot(RedsModel& m, const Dataset& data,
                             std::size_t samples_per_class,
                             const TrainConfig& cfg,
                             const FinetuneOptions& options = {});

/// Accuracy of every row on the given indices.
std::vector<double> row_accuracy(RedsModel& m, const Dataset& data,
                                 const std::vector<std::size_t>& indices);

struct ShotComparison {
  std::size_t shots = 0;
  /// curve[epoch][row] validation accuracy.
  std::vector<std::vector<double>> bu_curve;
  std::vector<std::vector<double>> td_curve;
  /// Mean over epochs and rows of BU minus TD accuracy.
  double mean_delta = 0.0;
};

struct FewShotReport {
  std::vector<ShotComparison> shots;

  void write_csv(std::ostream& out) const;
};

/// Plans BU and TD from the same permuted model and scores, fine-tunes each
/// on identical few-shot subsamples, and pairs the recovery curves.
FewShotReport compare_bu_td(const ModelGraph& permuted,
                            const std::vector<UnitScore>& scores,
                            const std::vector<std::uint64_t>& capacities,
                            const Dataset& data,
                            const std::vector<std::size_t>& shot_counts,
                            const TrainConfig& cfg);

}  // namespace reds
