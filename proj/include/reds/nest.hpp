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

#include <chrono>
#include <cstdint>
#include <vector>

#include "reds/netgraph.hpp"
#include "reds/planner.hpp"

namespace reds {

enum class Layout { Standard, CacheOptimized };

struct SwitchStats {
  std::uint64_t integers_updated = 0;
  /// Layout flag bits consulted by the next forward (one per dense layer in
  /// the cache-optimized layout).
  std::uint64_t flag_bits = 0;
  std::uint64_t weights_copied = 0;
  std::chrono::nanoseconds elapsed{0};
};

/// One weight store shared by every subnetwork of a plan. Switching rewrites
/// the per-layer width registers and nothing else.
class RedsModel {
 public:
  RedsModel(ModelGraph graph, SlicingPlan plan);

  const ModelGraph& graph() const { return graph_; }
  ModelGraph& mutable_graph() { return graph_; }
  const SlicingPlan& plan() const { return plan_; }
  std::size_t rows() const { return plan_.rows(); }

  std::size_t active() const { return active_; }
  /// Width registers: active units per sliceable layer.
  const Points& widths() const { return widths_; }
  Layout layout() const { return layout_; }
  void set_layout(Layout layout);

  SwitchStats activate(std::size_t row);

  /// Logits of the active subnetwork. Adds the multiply count to `macs`.
  Tensor infer(const Tensor& x, std::uint64_t* macs = nullptr) const;
  /// Full-width forward with inactive inputs zeroed, for row `row`.
  Tensor masked_infer(std::size_t row, const Tensor& x,
                      std::uint64_t* macs = nullptr) const;

  /// Batchnorm running statistics of each plan row.
  BnStatsSet& row_stats(std::size_t row) { return bn_.at(row); }
  const BnStatsSet& row_stats(std::size_t row) const { return bn_.at(row); }
  std::vector<BnStatsSet>& all_row_stats() { return bn_; }
  const std::vector<BnStatsSet>& all_row_stats() const { return bn_; }

 private:
  ModelGraph graph_;
  SlicingPlan plan_;
  std::vector<BnStatsSet> bn_;
  Points widths_;
  std::size_t active_ = 0;
  Layout layout_ = Layout::Standard;
};

}  // namespace reds
