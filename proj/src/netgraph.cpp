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

#include "reds/netgraph.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace reds {

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Dense: return "dense";
    case LayerKind::Conv2D: return "conv2d";
    case LayerKind::DepthwiseConv2D: return "depthwise";
    case LayerKind::PointwiseConv2D: return "pointwise";
    case LayerKind::BatchNorm: return "batchnorm";
    case LayerKind::Flatten: return "flatten";
  }
  return "?";
}

std::string to_string(Activation act) {
  switch (act) {
    case Activation::None: return "none";
    case Activation::ReLU: return "relu";
    case Activation::Softmax: return "softmax";
  }
  return "?";
}

std::string to_string(Padding pad) {
  return pad == Padding::Same ? "same" : "valid";
}

std::string to_string(Arch arch) {
  switch (arch) {
    case Arch::DNN: return "dnn";
    case Arch::CNN: return "cnn";
    case Arch::DSCNN: return "dscnn";
  }
  return "?";
}

std::string to_string(ModelSize size) { return size == ModelSize::S ? "S" : "L"; }

LayerKind parse_layer_kind(const std::string& s) {
  for (auto k : {LayerKind::Dense, LayerKind::Conv2D, LayerKind::DepthwiseConv2D,
                 LayerKind::PointwiseConv2D, LayerKind::BatchNorm,
                 LayerKind::Flatten}) {
    if (to_string(k) == s) return k;
  }
  fail(ErrorKind::Config, "unknown layer kind '" + s + "'");
}

Activation parse_activation(const std::string& s) {
  for (auto a : {Activation::None, Activation::ReLU, Activation::Softmax}) {
    if (to_string(a) == s) return a;
  }
  fail(ErrorKind::Config, "unknown activation '" + s + "'");
}

Padding parse_padding(const std::string& s) {
  if (s == "same") return Padding::Same;
  if (s == "valid") return Padding::Valid;
  fail(ErrorKind::Config, "unknown padding '" + s + "'");
}

Arch parse_arch(const std::string& s) {
  for (auto a : {Arch::DNN, Arch::CNN, Arch::DSCNN}) {
    if (to_string(a) == s) return a;
  }
  fail(ErrorKind::Config, "unknown architecture '" + s + "'");
}

ModelSize parse_size(const std::string& s) {
  if (s == "S" || s == "s") return ModelSize::S;
  if (s == "L" || s == "l") return ModelSize::L;
  fail(ErrorKind::Config, "unknown model size '" + s + "'");
}

bool has_weights(LayerKind kind) {
  return kind == LayerKind::Dense || kind == LayerKind::Conv2D ||
         kind == LayerKind::DepthwiseConv2D ||
         kind == LayerKind::PointwiseConv2D;
}

namespace {

std::size_t conv_out(std::size_t in, std::size_t k, std::size_t s,
                     Padding pad) {
  if (pad == Padding::Same) return (in + s - 1) / s;
  if (in < k) fail(ErrorKind::Config, "valid convolution kernel exceeds input");
  return (in - k) / s + 1;
}

bool produces_channels(LayerKind kind) {
  return kind == LayerKind::Dense || kind == LayerKind::Conv2D ||
         kind == LayerKind::PointwiseConv2D;
}

}  // namespace

ModelGraph::ModelGraph(Shape3 input_shape, std::vector<LayerSpec> layers)
    : input_shape_(input_shape), layers_(std::move(layers)) {
  if (input_shape_.size() == 0) fail(ErrorKind::Config, "empty input shape");
  if (layers_.empty()) fail(ErrorKind::Config, "model has no layers");
  if (layers_.back().kind != LayerKind::Dense) {
    fail(ErrorKind::Config, "final layer must be a dense classifier");
  }
  if (layers_.back().sliceable) {
    fail(ErrorKind::Config, "the classifier cannot be sliceable");
  }

  params_.resize(layers_.size());
  in_shapes_.resize(layers_.size());
  out_shapes_.resize(layers_.size());
  source_.assign(layers_.size(), std::nullopt);

  Shape3 cur = input_shape_;
  std::optional<std::size_t> src;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    auto& spec = layers_[l];
    auto& p = params_[l];
    in_shapes_[l] = cur;
    source_[l] = src;
    const bool prev_flat = l > 0 && (layers_[l - 1].kind == LayerKind::Flatten ||
                                     layers_[l - 1].kind == LayerKind::Dense);
    switch (spec.kind) {
      case LayerKind::Dense: {
        if (l > 0 && !prev_flat && cur.spatial() != 1) {
          fail(ErrorKind::Config, "dense layer " + std::to_string(l) +
                                      " needs a flatten before it");
        }
        if (spec.units == 0) fail(ErrorKind::Config, "dense layer with 0 units");
        const std::size_t in = cur.size();
        p.weight = Tensor({in, spec.units});
        p.bias = Tensor({spec.units});
        cur = Shape3{1, 1, spec.units};
        break;
      }
      case LayerKind::Conv2D:
      case LayerKind::DepthwiseConv2D:
      case LayerKind::PointwiseConv2D: {
        if (prev_flat) {
          fail(ErrorKind::Config, "convolution after a flat layer at " +
                                      std::to_string(l));
        }
        if (spec.kind == LayerKind::PointwiseConv2D) {
          spec.kernel = {1, 1};
          spec.stride = {1, 1};
        }
        if (spec.kind == LayerKind::DepthwiseConv2D) {
          if (spec.units != 0 && spec.units != cur.c) {
            fail(ErrorKind::Config, "depthwise units must equal input channels");
          }
          spec.units = cur.c;
          if (spec.sliceable) {
            fail(ErrorKind::Config, "depthwise layers follow their input width");
          }
        }
        if (spec.units == 0) fail(ErrorKind::Config, "conv layer with 0 filters");
        const auto [kh, kw] = spec.kernel;
        const auto [sh, sw] = spec.stride;
        if (kh == 0 || kw == 0 || sh == 0 || sw == 0) {
          fail(ErrorKind::Config, "kernel and stride must be positive");
        }
        Shape3 out{conv_out(cur.h, kh, sh, spec.padding),
                   conv_out(cur.w, kw, sw, spec.padding), spec.units};
        if (spec.kind == LayerKind::DepthwiseConv2D) {
          p.weight = Tensor({cur.c, kh, kw});
        } else {
          p.weight = Tensor({spec.units, kh, kw, cur.c});
        }
        p.bias = Tensor({spec.units});
        cur = out;
        break;
      }
      case LayerKind::BatchNorm: {
        if (spec.units != 0 && spec.units != cur.c) {
          fail(ErrorKind::Config, "batchnorm units must equal input channels");
        }
        if (spec.sliceable) fail(ErrorKind::Config, "batchnorm is never sliceable");
        spec.units = cur.c;
        p.gamma = Tensor({cur.c}, std::vector<float>(cur.c, 1.0f));
        p.beta = Tensor({cur.c});
        p.running_mean = Tensor({cur.c});
        p.running_var = Tensor({cur.c}, std::vector<float>(cur.c, 1.0f));
        break;
      }
      case LayerKind::Flatten: {
        if (spec.sliceable) fail(ErrorKind::Config, "flatten is never sliceable");
        spec.units = cur.size();
        cur = Shape3{1, 1, spec.units};
        break;
      }
    }
    out_shapes_[l] = cur;
    if (spec.sliceable) {
      if (!produces_channels(spec.kind) || l == layers_.size() - 1) {
        fail(ErrorKind::Config, "layer " + std::to_string(l) + " cannot be sliced");
      }
      sliceable_.push_back(l);
    }
    if (produces_channels(spec.kind)) src = l;
  }
}

std::optional<std::size_t> ModelGraph::slot_of(std::size_t l) const {
  const auto it = std::find(sliceable_.begin(), sliceable_.end(), l);
  if (it == sliceable_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - sliceable_.begin());
}

std::size_t ModelGraph::parameter_count() const {
  return active_parameters(*this, nullptr, false);
}

ModelGraph build_reference(Arch arch, ModelSize size, Shape3 input_shape,
                           std::size_t classes) {
  if (classes < 2) fail(ErrorKind::Config, "need at least two classes");
  if (input_shape.size() == 0) fail(ErrorKind::Config, "empty input shape");
  const bool small = size == ModelSize::S;
  std::vector<LayerSpec> layers;

  auto dense = [&](std::size_t units, Activation act, bool sliceable) {
    LayerSpec s;
    s.kind = LayerKind::Dense;
    s.units = units;
    s.activation = act;
    s.sliceable = sliceable;
    layers.push_back(s);
  };
  auto conv = [&](LayerKind kind, std::size_t units) {
    LayerSpec s;
    s.kind = kind;
    s.units = units;
    s.kernel = kind == LayerKind::PointwiseConv2D
                   ? std::array<std::size_t, 2>{1, 1}
                   : std::array<std::size_t, 2>{3, 3};
    s.sliceable = kind != LayerKind::DepthwiseConv2D;
    layers.push_back(s);
    LayerSpec bn;
    bn.kind = LayerKind::BatchNorm;
    bn.activation = Activation::ReLU;
    layers.push_back(bn);
  };
  auto flatten = [&] {
    LayerSpec s;
    s.kind = LayerKind::Flatten;
    layers.push_back(s);
  };

  switch (arch) {
    case Arch::DNN: {
      const std::size_t width = small ? 144 : 436;
      dense(width, Activation::ReLU, true);
      dense(width, Activation::ReLU, true);
      break;
    }
    case Arch::CNN: {
      if (input_shape.spatial() == 1) {
        fail(ErrorKind::Config, "cnn needs a spatial input shape");
      }
      conv(LayerKind::Conv2D, small ? 28 : 60);
      conv(LayerKind::Conv2D, small ? 30 : 76);
      flatten();
      dense(small ? 16 : 58, Activation::None, true);
      dense(128, Activation::ReLU, true);
      break;
    }
    case Arch::DSCNN: {
      if (input_shape.spatial() == 1) {
        fail(ErrorKind::Config, "dscnn needs a spatial input shape");
      }
      const std::size_t width = small ? 64 : 276;
      const std::size_t blocks = small ? 4 : 5;
      conv(LayerKind::Conv2D, width);
      for (std::size_t b = 0; b < blocks; ++b) {
        conv(LayerKind::DepthwiseConv2D, 0);
        conv(LayerKind::PointwiseConv2D, width);
      }
      flatten();
      break;
    }
  }
  dense(classes, Activation::Softmax, false);
  return ModelGraph(input_shape, std::move(layers));
}

void initialize_weights(ModelGraph& g, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l < g.num_layers(); ++l) {
    const auto& spec = g.layer(l);
    auto& p = g.params(l);
    if (has_weights(spec.kind)) {
      const Shape3 in = g.layer_input_shape(l);
      std::size_t fan_in = 1;
      switch (spec.kind) {
        case LayerKind::Dense: fan_in = in.size(); break;
        case LayerKind::Conv2D: fan_in = spec.kernel[0] * spec.kernel[1] * in.c; break;
        case LayerKind::DepthwiseConv2D: fan_in = spec.kernel[0] * spec.kernel[1]; break;
        case LayerKind::PointwiseConv2D: fan_in = in.c; break;
        default: break;
      }
      std::normal_distribution<float> dist(
          0.0f, std::sqrt(2.0f / static_cast<float>(fan_in)));
      for (auto& v : p.weight.mutable_data()) v = dist(rng);
      for (auto& v : p.bias.mutable_data()) v = 0.0f;
    } else if (spec.kind == LayerKind::BatchNorm) {
      for (auto& v : p.gamma.mutable_data()) v = 1.0f;
      for (auto& v : p.beta.mutable_data()) v = 0.0f;
      for (auto& v : p.running_mean.mutable_data()) v = 0.0f;
      for (auto& v : p.running_var.mutable_data()) v = 1.0f;
    }
  }
}

Points full_points(const ModelGraph& g) {
  Points pts;
  for (auto l : g.sliceable_layers()) pts.push_back(g.layer(l).units);
  return pts;
}

ActiveWidths resolve_widths(const ModelGraph& g, const Points* points) {
  if (points && points->size() != g.sliceable_layers().size()) {
    fail(ErrorKind::Bounds, "expected " +
                                std::to_string(g.sliceable_layers().size()) +
                                " slicing points, got " +
                                std::to_string(points->size()));
  }
  ActiveWidths w;
  w.in.resize(g.num_layers());
  w.out.resize(g.num_layers());
  std::size_t cur = g.input_shape().c;
  std::size_t slot = 0;
  for (std::size_t l = 0; l < g.num_layers(); ++l) {
    const auto& spec = g.layer(l);
    switch (spec.kind) {
      case LayerKind::Dense:
        w.in[l] = l == 0 ? g.input_shape().size() : cur;
        break;
      default:
        w.in[l] = cur;
        break;
    }
    std::size_t out = w.in[l];
    if (spec.kind == LayerKind::Dense || spec.kind == LayerKind::Conv2D ||
        spec.kind == LayerKind::PointwiseConv2D) {
      out = spec.units;
      if (spec.sliceable && points) {
        out = (*points)[slot];
        if (out == 0 || out > spec.units) {
          fail(ErrorKind::Bounds, "slicing point " + std::to_string(out) +
                                      " outside 1.." +
                                      std::to_string(spec.units) +
                                      " for layer " + std::to_string(l));
        }
      }
    } else if (spec.kind == LayerKind::Flatten) {
      out = w.in[l] * g.layer_input_shape(l).spatial();
    }
    if (spec.sliceable) ++slot;
    w.out[l] = out;
    cur = out;
  }
  return w;
}

std::vector<UnitCost> unit_macs(const ModelGraph& g) {
  std::vector<UnitCost> costs;
  for (std::size_t l = 0; l < g.num_layers(); ++l) {
    const auto& spec = g.layer(l);
    if (!has_weights(spec.kind)) continue;
    const Shape3 in = g.layer_input_shape(l);
    const Shape3 out = g.layer_output_shape(l);
    const std::uint64_t khw = spec.kernel[0] * spec.kernel[1];
    std::uint64_t per_unit = 0;
    switch (spec.kind) {
      case LayerKind::Dense: per_unit = in.size(); break;
      case LayerKind::Conv2D: per_unit = khw * in.c * out.spatial(); break;
      case LayerKind::DepthwiseConv2D: per_unit = khw * out.spatial(); break;
      case LayerKind::PointwiseConv2D: per_unit = in.c * out.spatial(); break;
      default: break;
    }
    for (std::size_t u = 0; u < spec.units; ++u) {
      costs.push_back(UnitCost{l, u, per_unit});
    }
  }
  return costs;
}

std::uint64_t config_macs(const ModelGraph& g, const Points* points) {
  const auto w = resolve_widths(g, points);
  std::uint64_t total = 0;
  for (std::size_t l = 0; l < g.num_layers(); ++l) {
    const auto& spec = g.layer(l);
    const std::uint64_t khw = spec.kernel[0] * spec.kernel[1];
    const std::uint64_t hw = g.layer_output_shape(l).spatial();
    switch (spec.kind) {
      case LayerKind::Dense: total += w.in[l] * w.out[l]; break;
      case LayerKind::Conv2D: total += khw * w.in[l] * w.out[l] * hw; break;
      case LayerKind::DepthwiseConv2D: total += khw * w.in[l] * hw; break;
      case LayerKind::PointwiseConv2D: total += w.in[l] * w.out[l] * hw; break;
      default: break;
    }
  }
  return total;
}

std::uint64_t total_macs(const ModelGraph& g) { return config_macs(g, nullptr); }

std::uint64_t active_parameters(const ModelGraph& g, const Points* points,
                                bool encoder_only) {
  const auto w = resolve_widths(g, points);
  std::uint64_t total = 0;
  const std::size_t last = encoder_only ? g.classifier() : g.num_layers();
  for (std::size_t l = 0; l < last; ++l) {
    const auto& spec = g.layer(l);
    const std::uint64_t khw = spec.kernel[0] * spec.kernel[1];
    switch (spec.kind) {
      case LayerKind::Dense: total += w.in[l] * w.out[l] + w.out[l]; break;
      case LayerKind::Conv2D: total += khw * w.in[l] * w.out[l] + w.out[l]; break;
      case LayerKind::DepthwiseConv2D: total += khw * w.in[l] + w.in[l]; break;
      case LayerKind::PointwiseConv2D: total += w.in[l] * w.out[l] + w.out[l]; break;
      case LayerKind::BatchNorm: total += 2 * w.in[l]; break;
      case LayerKind::Flatten: break;
    }
  }
  return total;
}

BnStatsSet BnStatsSet::from_graph(const ModelGraph& g) {
  BnStatsSet s;
  s.mean.resize(g.num_layers());
  s.var.resize(g.num_layers());
  for (std::size_t l = 0; l < g.num_layers(); ++l) {
    if (g.layer(l).kind == LayerKind::BatchNorm) {
      s.mean[l] = g.params(l).running_mean;
      s.var[l] = g.params(l).running_var;
    }
  }
  return s;
}

std::size_t set_cache_layout(ModelGraph& g, bool optimized) {
  std::size_t changed = 0;
  for (std::size_t l = 0; l < g.num_layers(); ++l) {
    if (g.layer(l).kind != LayerKind::Dense) continue;
    auto& p = g.params(l);
    if (p.transposed == optimized) continue;
    p.weight = transpose(p.weight);
    p.transposed = optimized;
    ++changed;
  }
  return changed;
}

}  // namespace reds
