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
#include <vector>

#include "reds/autograd.hpp"
#include "reds/netgraph.hpp"

namespace reds {

struct UnitScore {
  std::size_t layer = 0;
  std::size_t unit = 0;
  double importance = 0.0;
  /// Full-width MACs of the unit itself.
  std::uint64_t macs = 0;
};

/// Elementwise |g * w|.
Tensor weight_scores(const Tensor& grad, const Tensor& weight);

struct ScoreOptions {
  /// Fold depthwise filters (and their batchnorm) into the score of the unit
  /// that feeds them. Off when depthwise filters are planned separately.
  bool include_bound_depthwise = true;
};

/// One score per sliceable unit, layer-major. A unit's weight set is its
/// fan-in, its bias, and the per-channel parameters bound to it downstream.
std::vector<UnitScore> score_units(const ModelGraph& g, const GradStore& grads,
                                   const ScoreOptions& options = {});

/// Score of each depthwise filter (with its bias and following batchnorm),
/// indexed [layer][channel]; empty for other layers.
std::vector<std::vector<double>> depthwise_scores(const ModelGraph& g,
                                                  const GradStore& grads);

/// Layers (after l) whose per-channel parameters are bound to l's units.
std::vector<std::size_t> bound_layers(const ModelGraph& g, std::size_t l);

struct Permutation {
  /// old_to_new[l][old] = new, per layer; empty means identity.
  std::vector<std::vector<std::size_t>> old_to_new;

  static Permutation identity(const ModelGraph& g);
  bool is_identity() const;
  Permutation inverse() const;
};

/// Reindexes layer outputs, every bound per-channel tensor, and the inputs of
/// the consuming layer. The network function is unchanged.
void apply_permutation(ModelGraph& g, const Permutation& p);

/// Stable sort of each sliceable layer by descending score.
Permutation descending_permutation(const ModelGraph& g,
                                   const std::vector<UnitScore>& scores);

struct PermuteResult {
  ModelGraph graph;
  Permutation permutation;
};

PermuteResult permute_descending(const ModelGraph& g,
                                 const std::vector<UnitScore>& scores);

/// Scores reindexed through a permutation (unit fields updated, order kept
/// layer-major by new index).
std::vector<UnitScore> permute_scores(const std::vector<UnitScore>& scores,
                                      const Permutation& p);

void write_scores_csv(std::ostream& out, const std::vector<UnitScore>& scores);

}  // namespace reds
