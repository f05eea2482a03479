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

#include "reds/nest.hpp"

namespace reds {

RedsModel::RedsModel(ModelGraph graph, SlicingPlan plan)
    : graph_(std::move(graph)), plan_(std::move(plan)) {
  if (plan_.rows() == 0) fail(ErrorKind::Config, "plan has no rows");
  plan_.validate(&graph_);
  bn_.assign(plan_.rows(), BnStatsSet::from_graph(graph_));
  widths_ = plan_.points.front();
  for (std::size_t l = 0; l < graph_.num_layers(); ++l) {
    if (graph_.params(l).transposed) layout_ = Layout::CacheOptimized;
  }
  if (layout_ == Layout::CacheOptimized) set_cache_layout(graph_, true);
}

void RedsModel::set_layout(Layout layout) {
  set_cache_layout(graph_, layout == Layout::CacheOptimized);
  layout_ = layout;
}

SwitchStats RedsModel::activate(std::size_t row) {
  if (row >= plan_.rows()) {
    fail(ErrorKind::Bounds, "subnetwork " + std::to_string(row) + " outside 0.." +
                                std::to_string(plan_.rows() - 1));
  }
  const auto t0 = std::chrono::steady_clock::now();
  const auto copies0 = element_copy_count();
  SwitchStats s;
  const Points& target = plan_.points[row];
  for (std::size_t i = 0; i < widths_.size(); ++i) {
    widths_[i] = target[i];
    ++s.integers_updated;
  }
  active_ = row;
  if (layout_ == Layout::CacheOptimized) {
    for (const auto& spec : graph_.layers()) {
      if (spec.kind == LayerKind::Dense) ++s.flag_bits;
    }
  }
  s.weights_copied = element_copy_count() - copies0;
  s.elapsed = std::chrono::steady_clock::now() - t0;
  return s;
}

Tensor RedsModel::infer(const Tensor& x, std::uint64_t* macs) const {
  const Points snapshot = widths_;
  ForwardOptions o;
  o.points = &snapshot;
  // Inference mode only reads the statistics.
  o.bn_stats = const_cast<BnStatsSet*>(&bn_[active_]);
  o.mac_counter = macs;
  return forward(graph_, x, o);
}

Tensor RedsModel::masked_infer(std::size_t row, const Tensor& x,
                               std::uint64_t* macs) const {
  if (row >= plan_.rows()) fail(ErrorKind::Bounds, "subnetwork index out of range");
  ForwardOptions o;
  o.points = &plan_.points[row];
  o.masked = true;
  o.bn_stats = const_cast<BnStatsSet*>(&bn_[row]);
  o.mac_counter = macs;
  return forward(graph_, x, o);
}

}  // namespace reds
