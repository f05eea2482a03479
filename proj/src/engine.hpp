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

// Layer-by-layer batch executor shared by inference and backpropagation.

#include <vector>

#include "reds/autograd.hpp"
#include "reds/netgraph.hpp"

namespace reds::detail {

/// A batch of activations, one contiguous HWC block per sample. The channel
/// count is the active width, not the layer's full width.
struct Activations {
  Shape3 shape;
  std::size_t count = 0;
  std::vector<float> data;

  std::size_t stride() const { return shape.size(); }
};

struct LayerTrace {
  Activations input;
  Activations output;
  std::vector<float> xhat;
  std::vector<float> inv_std;
  bool batch_stats = false;
};

struct EngineOptions {
  const Points* points = nullptr;
  bool masked = false;
  BnMode bn_mode = BnMode::Inference;
  BnStatsSet* bn_stats = nullptr;
  float bn_momentum = 0.99f;
  bool record = false;
  std::uint64_t* mac_counter = nullptr;
};

class Engine {
 public:
  Engine(const ModelGraph& g, const EngineOptions& options);

  Activations run(const Tensor& inputs);

  /// Consumes d(loss)/d(logits) and accumulates parameter gradients. Needs a
  /// prior run() with record = true.
  void backward(Activations grad, GradStore& grads) const;

 private:
  Activations dense(std::size_t l, const Activations& x);
  Activations conv(std::size_t l, const Activations& x);
  Activations depthwise(std::size_t l, const Activations& x);
  Activations batchnorm(std::size_t l, const Activations& x, LayerTrace& tr);
  Activations flatten(std::size_t l, const Activations& x);
  void apply_mask(std::size_t l, Activations& x) const;

  Activations dense_back(std::size_t l, const Activations& g,
                         LayerGrads& out) const;
  Activations conv_back(std::size_t l, const Activations& g,
                        LayerGrads& out) const;
  Activations depthwise_back(std::size_t l, const Activations& g,
                             LayerGrads& out) const;
  Activations batchnorm_back(std::size_t l, const Activations& g,
                             LayerGrads& out) const;
  Activations flatten_back(std::size_t l, const Activations& g) const;

  const ModelGraph& g_;
  EngineOptions opt_;
  ActiveWidths widths_;
  ActiveWidths mask_;
  std::vector<LayerTrace> traces_;
  std::uint64_t macs_ = 0;
};

}  // namespace reds::detail
