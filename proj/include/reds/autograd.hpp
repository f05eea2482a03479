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
#include <functional>
#include <optional>
#include <vector>

#include "reds/batch.hpp"
#include "reds/netgraph.hpp"

namespace reds {

struct LayerGrads {
  Tensor weight;
  Tensor bias;
  Tensor gamma;
  Tensor beta;
};

/// Gradient sums mirroring every learnable tensor of a model.
struct GradStore {
  std::vector<LayerGrads> layers;
  std::size_t minibatch_count = 0;

  GradStore() = default;
  explicit GradStore(const ModelGraph& g);

  void reset();
  /// Adds scale * other elementwise; minibatch counts add.
  void add(const GradStore& other, float scale = 1.0f);
  /// Throws an integrity error unless shapes mirror the model exactly.
  void check_matches(const ModelGraph& g) const;
};

enum class LossKind {
  CrossEntropy,
  /// 0.5 * ||output||^2 averaged over the batch; a test hook for checking
  /// the chain rule without a softmax in the way.
  HalfSquaredNorm,
};

struct BackwardOptions {
  const Points* points = nullptr;
  BnMode bn_mode = BnMode::Inference;
  BnStatsSet* bn_stats = nullptr;
  float bn_momentum = 0.99f;
  LossKind loss = LossKind::CrossEntropy;
};

struct BackwardResult {
  double loss = 0.0;
  GradStore grads;
};

/// Mean loss over the batch and its gradient w.r.t. every active parameter.
/// Sliced-off parameters receive exactly zero.
BackwardResult backward(const ModelGraph& g, const Minibatch& batch,
                        const BackwardOptions& options = {});

/// Loss only; same semantics as backward (used by finite differences).
double evaluate_loss(const ModelGraph& g, const Minibatch& batch,
                     const BackwardOptions& options = {});

using MinibatchSource = std::function<std::optional<Minibatch>()>;

inline constexpr std::size_t kImportanceBatches = 100;

/// Sum of per-batch gradients over exactly n_batches batches, batchnorm in
/// inference mode.
GradStore accumulate_importance_grads(const ModelGraph& g,
                                      const MinibatchSource& next,
                                      std::size_t n_batches = kImportanceBatches);

/// w -= lr * grad on the active slice; everything else is untouched.
void sgd_step(ModelGraph& g, const GradStore& grads, float lr,
              const Points* points = nullptr);

struct LrStage {
  std::uint64_t until_step;
  float rate;
};

struct TrainConfig {
  std::size_t batch_size = 100;
  std::size_t epochs = 75;
  /// Piecewise-constant schedule: rate applies while step < until_step; the
  /// last rate holds forever after.
  std::vector<LrStage> schedule{{15000, 1e-3f}, {18000, 1e-4f}};
  bool use_adam = false;
  std::uint64_t seed = 0;

  float rate_at(std::uint64_t step) const;
  void validate() const;
};

/// Adam with beta1 0.9, beta2 0.999, epsilon 1e-7.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(const ModelGraph& g);
  void step(ModelGraph& g, const GradStore& grads, float lr,
            const Points* points = nullptr);

 private:
  GradStore m_;
  GradStore v_;
  std::uint64_t t_ = 0;
};

}  // namespace reds
