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

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "reds/tensor.hpp"

namespace reds {

enum class LayerKind {
  Dense,
  Conv2D,
  DepthwiseConv2D,
  PointwiseConv2D,
  BatchNorm,
  Flatten,
};

enum class Activation { None, ReLU, Softmax };
enum class Padding { Same, Valid };
enum class Arch { DNN, CNN, DSCNN };
enum class ModelSize { S, L };

std::string to_string(LayerKind kind);
std::string to_string(Activation act);
std::string to_string(Padding pad);
std::string to_string(Arch arch);
std::string to_string(ModelSize size);
LayerKind parse_layer_kind(const std::string& s);
Activation parse_activation(const std::string& s);
Padding parse_padding(const std::string& s);
Arch parse_arch(const std::string& s);
ModelSize parse_size(const std::string& s);

struct Shape3 {
  std::size_t h = 1;
  std::size_t w = 1;
  std::size_t c = 1;

  std::size_t size() const { return h * w * c; }
  std::size_t spatial() const { return h * w; }
  friend bool operator==(const Shape3&, const Shape3&) = default;
};

struct LayerSpec {
  LayerKind kind = LayerKind::Dense;
  /// Neurons or filters. For depthwise and batchnorm layers this equals the
  /// incoming channel count; for Flatten it is the flattened length.
  std::size_t units = 0;
  std::array<std::size_t, 2> kernel{1, 1};
  std::array<std::size_t, 2> stride{1, 1};
  Padding padding = Padding::Same;
  Activation activation = Activation::None;
  bool sliceable = false;
};

/// Parameters of one layer. Dense weights are [in x out]; when `transposed`
/// is set they are held as [out x in] so each neuron's fan-in is contiguous.
/// Conv2D [filters x kh x kw x cin], depthwise [cin x kh x kw], pointwise
/// [filters x 1 x 1 x cin].
struct LayerParams {
  Tensor weight;
  Tensor bias;
  Tensor gamma;
  Tensor beta;
  Tensor running_mean;
  Tensor running_var;
  bool transposed = false;
};

inline constexpr float kBatchNormEpsilon = 1e-3f;

bool has_weights(LayerKind kind);

class ModelGraph {
 public:
  ModelGraph() = default;
  /// Validates shapes and allocates zero-filled parameters (batchnorm gamma
  /// and running variance start at one).
  ModelGraph(Shape3 input_shape, std::vector<LayerSpec> layers);

  const std::vector<LayerSpec>& layers() const { return layers_; }
  const LayerSpec& layer(std::size_t l) const { return layers_.at(l); }
  std::size_t num_layers() const { return layers_.size(); }

  Shape3 input_shape() const { return input_shape_; }
  Shape3 layer_input_shape(std::size_t l) const { return in_shapes_.at(l); }
  Shape3 layer_output_shape(std::size_t l) const { return out_shapes_.at(l); }

  std::size_t classifier() const { return layers_.size() - 1; }
  /// Index of the last layer before the classifier.
  std::size_t encoder_end() const { return layers_.size() - 2; }
  std::size_t classes() const { return layers_.back().units; }

  const std::vector<std::size_t>& sliceable_layers() const {
    return sliceable_;
  }
  /// Position of layer l in sliceable_layers(), if sliceable.
  std::optional<std::size_t> slot_of(std::size_t l) const;

  /// Layer that determines the channel count entering layer l, or nullopt
  /// when l consumes the model input unchanged.
  std::optional<std::size_t> channel_source(std::size_t l) const {
    return source_.at(l);
  }

  LayerParams& params(std::size_t l) { return params_.at(l); }
  const LayerParams& params(std::size_t l) const { return params_.at(l); }
  std::vector<LayerParams>& all_params() { return params_; }
  const std::vector<LayerParams>& all_params() const { return params_; }

  std::size_t parameter_count() const;

 private:
  Shape3 input_shape_;
  std::vector<LayerSpec> layers_;
  std::vector<LayerParams> params_;
  std::vector<Shape3> in_shapes_;
  std::vector<Shape3> out_shapes_;
  std::vector<std::size_t> sliceable_;
  std::vector<std::optional<std::size_t>> source_;
};

/// Reference families: DNN, CNN, DS-CNN in sizes S and L. Parameters are
/// zero until initialize_weights is called.
ModelGraph build_reference(Arch arch, ModelSize size, Shape3 input_shape,
                           std::size_t classes);

/// He-normal weights, zero biases, identity batchnorm.
void initialize_weights(ModelGraph& g, std::uint64_t seed);

/// Active units per sliceable layer (one row of a slicing plan).
using Points = std::vector<std::size_t>;

Points full_points(const ModelGraph& g);

/// Per-layer active extents resolved from slicing points.
struct ActiveWidths {
  /// Channels (or flat features for dense inputs) entering each layer.
  std::vector<std::size_t> in;
  /// Channels (or features) leaving each layer.
  std::vector<std::size_t> out;
};

ActiveWidths resolve_widths(const ModelGraph& g, const Points* points);

struct UnitCost {
  std::size_t layer = 0;
  std::size_t unit = 0;
  std::uint64_t macs = 0;
};

/// MACs contributed by every unit of every weighted layer at full widths.
std::vector<UnitCost> unit_macs(const ModelGraph& g);

/// Exact multiply-accumulate count of a forward pass for one sample.
std::uint64_t config_macs(const ModelGraph& g, const Points* points);

std::uint64_t total_macs(const ModelGraph& g);

/// Learnable parameters active under the given points (weights, biases,
/// batchnorm gamma/beta). With `encoder_only` the classifier is skipped.
std::uint64_t active_parameters(const ModelGraph& g, const Points* points,
                                bool encoder_only);

enum class BnMode { Inference, Training };

/// Running statistics for every batchnorm layer (empty tensors elsewhere).
struct BnStatsSet {
  std::vector<Tensor> mean;
  std::vector<Tensor> var;

  static BnStatsSet from_graph(const ModelGraph& g);
};

struct ForwardOptions {
  const Points* points = nullptr;
  /// Compute at full width and zero the inactive inputs of every layer.
  bool masked = false;
  BnMode bn_mode = BnMode::Inference;
  /// Statistics used instead of the graph's own; updated in Training mode.
  BnStatsSet* bn_stats = nullptr;
  float bn_momentum = 0.99f;
  std::uint64_t* mac_counter = nullptr;
};

/// Pre-softmax logits [b x classes] for inputs [b x input_size].
Tensor forward(const ModelGraph& g, const Tensor& x,
               const ForwardOptions& options = {});

std::vector<int> predict(const ModelGraph& g, const Tensor& x,
                         const ForwardOptions& options = {});

/// Switches dense layers to the cache-optimized [out x in] weight layout or
/// back. Returns the number of layers whose flag changed.
std::size_t set_cache_layout(ModelGraph& g, bool optimized);

}  // namespace reds
