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
#include <string>
#include <vector>

#include "reds/autograd.hpp"
#include "reds/importance.hpp"
#include "reds/netgraph.hpp"

namespace reds {

// ---------------------------------------------------------------------------
// 0-1 knapsack

struct KnapsackItem {
  double profit = 0.0;
  std::uint64_t weight = 1;
};

struct KnapsackInstance {
  std::vector<KnapsackItem> items;
  std::uint64_t capacity = 0;
  std::vector<std::size_t> forced_in;
  std::vector<std::size_t> excluded;

  void validate() const;
};

struct KnapsackSolution {
  /// Ascending item indices.
  std::vector<std::size_t> selected;
  double profit = 0.0;
  std::uint64_t weight = 0;
};

/// Profit of a subset, summed in ascending index order.
double subset_profit(const std::vector<KnapsackItem>& items,
                     const std::vector<std::size_t>& subset);

struct SolverLimits {
  /// Above this many DP table bits the solver switches to branch and bound.
  std::uint64_t max_table_bits = std::uint64_t{1} << 33;
};

/// Exact maximum-profit selection. Among optima, earlier items are preferred:
/// the returned inclusion vector is the lexicographically greatest optimal
/// one. Profits within a relative 1e-12 count as equal.
KnapsackSolution solve_exact(const KnapsackInstance& inst,
                             const SolverLimits& limits = {});

/// Branch and bound with a fractional upper bound; exact, no tie guarantees.
KnapsackSolution solve_branch_and_bound(const KnapsackInstance& inst);

/// Smallest capacity first; each stage's selection is forced into the next.
/// Returns selections in the order of `capacities` (any order accepted).
std::vector<KnapsackSolution> iterate_bottom_up(
    const std::vector<KnapsackItem>& items,
    const std::vector<std::uint64_t>& capacities,
    const std::vector<std::size_t>& forced_in = {});

/// Largest capacity first; each smaller stage may only use the previous
/// stage's selection.
std::vector<KnapsackSolution> iterate_top_down(
    const std::vector<KnapsackItem>& items,
    const std::vector<std::uint64_t>& capacities,
    const std::vector<std::size_t>& forced_in = {});

// ---------------------------------------------------------------------------
// Slicing plans

struct SlicingPlan {
  /// MAC budgets, descending.
  std::vector<std::uint64_t> capacities;
  /// points[k][s]: active units of sliceable layer s in subnetwork k.
  std::vector<Points> points;
  std::string heuristic = "bu";
  std::uint64_t seed = 0;

  std::size_t rows() const { return points.size(); }
  /// Checks ordering, nestedness, point ranges and, given a model, that each
  /// row's MACs fit its capacity. Throws an integrity error on violation.
  void validate(const ModelGraph* g = nullptr) const;
};

std::string plan_to_json(const SlicingPlan& plan);
SlicingPlan plan_from_json(const std::string& text);
void save_plan(const std::string& path, const SlicingPlan& plan);
SlicingPlan load_plan(const std::string& path);

/// floor(f * full MACs) for each fraction, sorted descending.
std::vector<std::uint64_t> capacities_from_fractions(
    const ModelGraph& g, const std::vector<double>& fractions);

/// Planner view of a model: one item per sliceable unit. A unit's weight is
/// its full-width MACs plus those of the depthwise filter bound to it.
struct UnitCatalog {
  std::vector<std::size_t> layers;
  std::vector<std::vector<double>> profits;
  std::vector<std::uint64_t> unit_weight;
  /// MACs not attributable to any sliceable unit (the classifier, mostly).
  std::uint64_t fixed_macs = 0;
  std::uint64_t full_macs = 0;
};

/// Scores must be in post-permutation order (descending per layer).
UnitCatalog build_catalog(const ModelGraph& g,
                          const std::vector<UnitScore>& scores);

SlicingPlan plan_bottom_up(const UnitCatalog& catalog,
                           const std::vector<std::uint64_t>& capacities);
SlicingPlan plan_top_down(const UnitCatalog& catalog,
                          const std::vector<std::uint64_t>& capacities);

// ---------------------------------------------------------------------------
// Depthwise-separable formulation

struct DwBlock {
  /// Depthwise filter profits, one per incoming channel.
  std::vector<double> depthwise_profit;
  std::uint64_t depthwise_macs = 0;
  /// kernel_profit[k][t]: kernel t of pointwise filter k.
  std::vector<std::vector<double>> kernel_profit;
  std::uint64_t kernel_macs = 0;

  std::size_t filters() const { return kernel_profit.size(); }
};

struct DwInstance {
  std::vector<double> first_profit;
  std::uint64_t first_macs = 0;
  std::vector<DwBlock> blocks;
  /// Cost per channel leaving the last block (the classifier).
  std::uint64_t tail_macs_per_channel = 0;
  std::uint64_t capacity = 0;
  /// Optional per-layer count bounds (size d + 1 when set).
  std::vector<std::size_t> min_counts;
  std::vector<std::size_t> max_counts;

  std::size_t depth() const { return blocks.size(); }
  std::size_t width(std::size_t layer) const {
    return layer == 0 ? first_profit.size() : blocks[layer - 1].filters();
  }
  void validate() const;
};

/// MACs and objective of a count tuple (x_0, ..., x_d) under prefix choice.
std::uint64_t dw_macs(const DwInstance& inst,
                      const std::vector<std::size_t>& counts);
double dw_objective(const DwInstance& inst,
                    const std::vector<std::size_t>& counts);

/// Rough operation count of solve_depthwise.
double dw_work(const DwInstance& inst);

struct DwSolution {
  std::vector<std::size_t> counts;
  double profit = 0.0;
  std::uint64_t macs = 0;
};

DwSolution solve_depthwise(const DwInstance& inst);

/// True when the model is a first conv followed by depthwise/pointwise
/// blocks and a flatten + classifier, with exactly the conv and pointwise
/// layers sliceable.
bool has_depthwise_structure(const ModelGraph& g);

/// Instance template (capacity 0) for a permuted model and its gradients.
DwInstance build_dw_instance(const ModelGraph& g, const GradStore& grads);

SlicingPlan plan_depthwise_bottom_up(const DwInstance& base,
                                     const std::vector<std::uint64_t>& capacities);
SlicingPlan plan_depthwise_top_down(const DwInstance& base,
                                    const std::vector<std::uint64_t>& capacities);

// ---------------------------------------------------------------------------
// Equal-share baselines

enum class BaselineStrategy { L1EqualShare, RandomEqualShare };

struct BaselineResult {
  SlicingPlan plan;
  /// Unit order the plan assumes; apply to the model before slicing.
  Permutation order;
  std::vector<std::string> warnings;
};

/// Per-layer ordering by descending L1 norm of each unit's fan-in weights.
Permutation l1_order(const ModelGraph& g);
Permutation random_order(const ModelGraph& g, std::uint64_t seed);

BaselineResult plan_baseline(const ModelGraph& g, BaselineStrategy strategy,
                             const std::vector<std::uint64_t>& capacities,
                             std::uint64_t seed = 0);

}  // namespace reds
