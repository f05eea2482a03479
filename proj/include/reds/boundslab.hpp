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

// Worst-case behaviour of two-stage iterative knapsack heuristics, checked
// against exhaustive optima.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "reds/planner.hpp"

namespace reds {

inline constexpr std::size_t kBruteForceLimit = 22;

/// Exhaustive optimum; throws a size error above kBruteForceLimit items.
KnapsackSolution brute_opt(const std::vector<KnapsackItem>& items,
                           std::uint64_t capacity);

struct SplitItemResult {
  std::vector<std::size_t> ordering;
  /// Position in `ordering` of the first item whose addition crosses the
  /// capacity while everything before it stays strictly below.
  std::optional<std::size_t> split_index;
};

SplitItemResult find_split_item(const std::vector<KnapsackItem>& items,
                                const std::vector<std::size_t>& ordering,
                                std::uint64_t capacity);

struct BoundInstance {
  std::string name;
  std::vector<KnapsackItem> items;
  /// Even, so that half the capacity is integral.
  std::uint64_t capacity = 0;
};

/// Four items where bottom-up approaches 2/3 of the optimum: profits
/// {P + eps, P, P, P}, weights {c/3 + eps, c/3, c/3, c/3}. Weights are scaled
/// by the smallest power of ten that makes them integral.
BoundInstance bottom_up_tight_instance(double P = 10.0, double eps = 0.1,
                                       double c = 6.0);

/// Four items where top-down approaches 1/2 of the half-capacity optimum:
/// profits {P + eps, P + eps, P + eps, 2P}, weights {c/3, c/3, c/3, c/2}.
BoundInstance top_down_tight_instance(double P = 10.0, double eps = 0.1,
                                      double c = 6.0);

/// Instances with an item heavier than c/2 where each heuristic does badly.
BoundInstance bottom_up_bad_instance();
BoundInstance top_down_bad_instance();

struct BoundReport {
  std::string instance;
  std::string heuristic;
  double opt_c = 0.0;
  double opt_half = 0.0;
  double heuristic_profit = 0.0;
  double ratio = 0.0;
  double bound = 0.0;
  bool passed = false;
  /// Bottom-up only: no split item exists in the optimum at c/2, in which
  /// case the heuristic must match the optimum exactly.
  bool no_split_item = false;
  bool no_split_matches = true;
};

/// Bottom-up: optimum at c/2, then extended to c; compared with Opt_c.
BoundReport bottom_up_report(const BoundInstance& inst);
/// Top-down: optimum at c, then restricted to c/2; compared with Opt_{c/2}.
BoundReport top_down_report(const BoundInstance& inst);

/// Capacity even in [20, 200], weights uniform in [1, c/2] (or [1, c] when
/// unrestricted), profits uniform in [1, 100], 2..max_items items.
BoundInstance random_bound_instance(std::uint64_t seed, std::size_t max_items,
                                    bool restrict_weights = true);

struct VerifyOptions {
  std::size_t instances = 1000;
  std::uint64_t seed = 0;
  std::size_t max_items = 12;
  bool restrict_weights = true;
  /// Epsilon of the tight instances as a fraction of P.
  double tight_eps_fraction = 1e-3;
};

/// Two reports per random instance plus both tight instances.
std::vector<BoundReport> verify_bounds(const VerifyOptions& options);

std::string reports_to_json(const std::vector<BoundReport>& reports);

}  // namespace reds
