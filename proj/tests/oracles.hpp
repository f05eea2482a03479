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

// Slow, obviously-correct reference implementations and seeded generators
// shared by the unit tests and the acceptance binary. Nothing here calls the
// code under test for the value it is meant to check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <list>
#include <random>
#include <vector>

#include "reds/autograd.hpp"
#include "reds/netgraph.hpp"
#include "reds/planner.hpp"

namespace oracle {

using reds::BnMode;
using reds::BnStatsSet;
using reds::LayerKind;
using reds::ModelGraph;
using reds::Points;
using reds::Tensor;

// ---------------------------------------------------------------------------
// Generators

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : eng_(seed) {}

  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(eng_);
  }
  std::size_t index(std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(eng_);
  }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(eng_); }
  bool coin() { return index(0, 1) == 1; }
  std::mt19937_64& engine() { return eng_; }

 private:
  std::mt19937_64 eng_;
};

inline Tensor random_tensor(reds::Extents shape, Gen& gen, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.mutable_data()) v = static_cast<float>(scale * gen.normal());
  return t;
}

/// Every parameter random; batchnorm variances positive.
inline void randomize(ModelGraph& g, Gen& gen, double scale = 0.3) {
  for (std::size_t l = 0; l < g.num_layers(); ++l) {
    auto& p = g.params(l);
    for (Tensor* t : {&p.weight, &p.bias, &p.beta, &p.running_mean}) {
      for (auto& v : t->mutable_data()) v = static_cast<float>(scale * gen.normal());
    }
    for (auto& v : p.gamma.mutable_data()) v = static_cast<float>(gen.uniform(0.5, 1.5));
    for (auto& v : p.running_var.mutable_data()) v = static_cast<float>(gen.uniform(0.5, 1.5));
  }
}

inline Tensor random_inputs(const ModelGraph& g, std::size_t b, Gen& gen) {
  return random_tensor({b, g.input_shape().size()}, gen);
}

/// Random nested plan rows (descending widths), points[0] at full width.
inline std::vector<Points> random_nested_points(const ModelGraph& g, std::size_t rows,
                                                Gen& gen) {
  std::vector<Points> out;
  Points cur = reds::full_points(g);
  out.push_back(cur);
  for (std::size_t r = 1; r < rows; ++r) {
    for (auto& v : cur) v = gen.index(1, v);
    out.push_back(cur);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dense products

/// x [m x b], w [m x n] -> [b x n], accumulated in double.
inline std::vector<double> naive_matmul(const Tensor& x, const Tensor& w) {
  const std::size_t m = x.rows(), b = x.cols(), n = w.cols();
  std::vector<double> out(b * n, 0.0);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < m; ++k) out[i * n + j] += double(x(k, i)) * double(w(k, j));
  return out;
}

// ---------------------------------------------------------------------------
// Knapsack

struct BruteResult {
  double profit = 0.0;
  /// Lexicographically greatest optimal inclusion vector.
  std::vector<bool> take;
};

inline BruteResult brute_knapsack(const std::vector<reds::KnapsackItem>& items,
                                  std::uint64_t capacity,
                                  const std::vector<std::size_t>& forced = {},
                                  const std::vector<std::size_t>& excluded = {}) {
  const std::size_t n = items.size();
  BruteResult best;
  best.profit = -1.0;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
    bool ok = true;
    for (auto f : forced) ok &= (mask >> f & 1U) != 0;
    for (auto e : excluded) ok &= (mask >> e & 1U) == 0;
    if (!ok) continue;
    std::uint64_t w = 0;
    double p = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask >> i & 1U) {
        w += items[i].weight;
        p += items[i].profit;
      }
    }
    if (w > capacity) continue;
    std::vector<bool> take(n);
    for (std::size_t i = 0; i < n; ++i) take[i] = (mask >> i & 1U) != 0;
    if (p > best.profit || (p == best.profit && take > best.take)) {
      best.profit = p;
      best.take = take;
    }
  }
  return best;
}

inline std::vector<reds::KnapsackItem> random_items(Gen& gen, std::size_t n,
                                                    std::uint64_t max_weight,
                                                    bool integral_profit = false) {
  std::vector<reds::KnapsackItem> items(n);
  for (auto& it : items) {
    it.weight = gen.index(1, max_weight);
    it.profit = integral_profit ? double(gen.index(0, 30)) : gen.uniform(0.0, 100.0);
  }
  return items;
}

// ---------------------------------------------------------------------------
// Depthwise count tuples

struct TupleResult {
  double profit = -1.0;
  std::vector<std::size_t> counts;
};

inline std::uint64_t tuple_macs(const reds::DwInstance& in, const std::vector<std::size_t>& x) {
  std::uint64_t m = x[0] * in.first_macs;
  for (std::size_t i = 0; i < in.blocks.size(); ++i) {
    m += x[i] * in.blocks[i].depthwise_macs;
    m += x[i] * x[i + 1] * in.blocks[i].kernel_macs;
  }
  return m + x.back() * in.tail_macs_per_channel;
}

inline double tuple_profit(const reds::DwInstance& in, const std::vector<std::size_t>& x) {
  double v = 0.0;
  for (std::size_t j = 0; j < x[0]; ++j) v += in.first_profit[j];
  for (std::size_t i = 0; i < in.blocks.size(); ++i) {
    const auto& b = in.blocks[i];
    for (std::size_t t = 0; t < x[i]; ++t) v += b.depthwise_profit[t];
    for (std::size_t k = 0; k < x[i + 1]; ++k)
      for (std::size_t t = 0; t < x[i]; ++t) v += b.kernel_profit[k][t];
  }
  return v;
}

/// Every tuple with 1 <= x_l <= width_l inside the optional bounds.
inline TupleResult enumerate_tuples(const reds::DwInstance& in) {
  const std::size_t layers = in.blocks.size() + 1;
  auto lo = [&](std::size_t l) { return in.min_counts.empty() ? 1 : std::max<std::size_t>(1, in.min_counts[l]); };
  auto hi = [&](std::size_t l) { return in.max_counts.empty() ? in.width(l) : std::min(in.width(l), in.max_counts[l]); };
  TupleResult best;
  std::vector<std::size_t> x(layers);
  for (std::size_t l = 0; l < layers; ++l) x[l] = lo(l);
  while (true) {
    if (tuple_macs(in, x) <= in.capacity) {
      const double p = tuple_profit(in, x);
      if (p > best.profit) {
        best.profit = p;
        best.counts = x;
      }
    }
    std::size_t l = 0;
    while (l < layers && x[l] == hi(l)) {
      x[l] = lo(l);
      ++l;
    }
    if (l == layers) break;
    ++x[l];
  }
  return best;
}

/// Integer profits so sums are exact.
inline reds::DwInstance random_dw_instance(Gen& gen, std::size_t depth, std::size_t max_width) {
  reds::DwInstance in;
  std::size_t prev = gen.index(1, max_width);
  for (std::size_t j = 0; j < prev; ++j) in.first_profit.push_back(double(gen.index(0, 20)));
  in.first_macs = gen.index(1, 20);
  for (std::size_t d = 0; d < depth; ++d) {
    reds::DwBlock b;
    for (std::size_t t = 0; t < prev; ++t) b.depthwise_profit.push_back(double(gen.index(0, 10)));
    b.depthwise_macs = gen.index(1, 10);
    const std::size_t w = gen.index(1, max_width);
    b.kernel_profit.assign(w, std::vector<double>(prev));
    for (auto& row : b.kernel_profit)
      for (auto& v : row) v = double(gen.index(0, 10));
    b.kernel_macs = gen.index(1, 10);
    in.blocks.push_back(b);
    prev = w;
  }
  in.tail_macs_per_channel = gen.index(0, 10);
  std::vector<std::size_t> full(depth + 1);
  for (std::size_t l = 0; l <= depth; ++l) full[l] = in.width(l);
  std::vector<std::size_t> ones(depth + 1, 1);
  const auto lo = tuple_macs(in, ones), hi = tuple_macs(in, full);
  in.capacity = gen.index(lo, hi);
  return in;
}

// ---------------------------------------------------------------------------
// Model truncation

/// A standalone model holding only the leading units selected by `points`,
/// with copied weights. Batchnorm statistics come from `stats` when given.
inline ModelGraph truncate_model(const ModelGraph& src_in, const Points& points,
                                 const BnStatsSet* stats = nullptr) {
  ModelGraph src = src_in;
  reds::set_cache_layout(src, false);
  std::vector<reds::LayerSpec> specs = src.layers();
  std::size_t slot = 0;
  for (std::size_t l = 0; l < specs.size(); ++l) {
    auto& s = specs[l];
    if (s.sliceable) s.units = points.at(slot++);
    if (s.kind == LayerKind::BatchNorm || s.kind == LayerKind::DepthwiseConv2D ||
        s.kind == LayerKind::Flatten) {
      s.units = 0;
    }
  }
  ModelGraph dst(src.input_shape(), specs);
  for (std::size_t l = 0; l < specs.size(); ++l) {
    const auto& sp = src.params(l);
    auto& dp = dst.params(l);
    const auto kind = specs[l].kind;
    auto copy_prefix = [](const Tensor& from, Tensor& to) {
      for (std::size_t i = 0; i < to.size(); ++i) to.mutable_data()[i] = from.data()[i];
    };
    if (kind == LayerKind::Dense) {
      for (std::size_t i = 0; i < dp.weight.rows(); ++i)
        for (std::size_t j = 0; j < dp.weight.cols(); ++j) dp.weight(i, j) = sp.weight(i, j);
      copy_prefix(sp.bias, dp.bias);
    } else if (kind == LayerKind::Conv2D || kind == LayerKind::PointwiseConv2D) {
      const auto& e = dp.weight.shape();
      for (std::size_t f = 0; f < e[0]; ++f)
        for (std::size_t y = 0; y < e[1]; ++y)
          for (std::size_t x = 0; x < e[2]; ++x)
            for (std::size_t c = 0; c < e[3]; ++c) dp.weight.at(f, y, x, c) = sp.weight.at(f, y, x, c);
      copy_prefix(sp.bias, dp.bias);
    } else if (kind == LayerKind::DepthwiseConv2D) {
      copy_prefix(sp.weight, dp.weight);  // [C x kh x kw]: channel-major prefix
      copy_prefix(sp.bias, dp.bias);
    } else if (kind == LayerKind::BatchNorm) {
      copy_prefix(sp.gamma, dp.gamma);
      copy_prefix(sp.beta, dp.beta);
      copy_prefix(stats ? stats->mean[l] : sp.running_mean, dp.running_mean);
      copy_prefix(stats ? stats->var[l] : sp.running_var, dp.running_var);
    }
  }
  return dst;
}

/// Weights, biases and batchnorm scale/shift of a model, counted tensor by
/// tensor. With encoder_only the classifier is skipped.
inline std::uint64_t audit_parameters(const ModelGraph& g, bool encoder_only) {
  std::uint64_t n = 0;
  const std::size_t last = encoder_only ? g.num_layers() - 1 : g.num_layers();
  for (std::size_t l = 0; l < last; ++l) {
    const auto& p = g.params(l);
    n += p.weight.size() + p.bias.size() + p.gamma.size() + p.beta.size();
  }
  return n;
}

// ---------------------------------------------------------------------------
// Double-precision reference forward

struct Act {
  std::size_t h = 1, w = 1, c = 1;
  /// [sample][h][w][c]
  std::vector<std::vector<double>> v;
};

inline std::size_t same_pad_before(std::size_t in, std::size_t out, std::size_t k, std::size_t s) {
  const std::size_t need = (out - 1) * s + k;
  return need > in ? (need - in) / 2 : 0;
}

/// Logits of every sample, computed directly from the layer definitions.
/// In Training mode batchnorm uses biased batch statistics.
inline std::vector<std::vector<double>> reference_forward(const ModelGraph& g, const Tensor& x,
                                                          BnMode mode = BnMode::Inference) {
  const auto in = g.input_shape();
  Act a{in.h, in.w, in.c, {}};
  for (std::size_t s = 0; s < x.rows(); ++s) {
    std::vector<double> row(x.cols());
    for (std::size_t i = 0; i < x.cols(); ++i) row[i] = x(s, i);
    a.v.push_back(row);
  }
  const std::size_t B = a.v.size();
  for (std::size_t l = 0; l < g.num_layers(); ++l) {
    const auto& sp = g.layer(l);
    const auto& p = g.params(l);
    const auto out = g.layer_output_shape(l);
    Act y{out.h, out.w, out.c, std::vector<std::vector<double>>(B, std::vector<double>(out.size(), 0.0))};
    switch (sp.kind) {
      case LayerKind::Dense: {
        const std::size_t nin = a.h * a.w * a.c;
        for (std::size_t s = 0; s < B; ++s)
          for (std::size_t j = 0; j < out.c; ++j) {
            double acc = p.bias.data()[j];
            for (std::size_t i = 0; i < nin; ++i) {
              const double w = p.transposed ? p.weight(j, i) : p.weight(i, j);
              acc += a.v[s][i] * w;
            }
            y.v[s][j] = acc;
          }
        break;
      }
      case LayerKind::Conv2D:
      case LayerKind::PointwiseConv2D:
      case LayerKind::DepthwiseConv2D: {
        const auto [kh, kw] = sp.kernel;
        const auto [sh, sw] = sp.stride;
        const bool same = sp.padding == reds::Padding::Same;
        const std::size_t top = same ? same_pad_before(a.h, out.h, kh, sh) : 0;
        const std::size_t left = same ? same_pad_before(a.w, out.w, kw, sw) : 0;
        const bool dw = sp.kind == LayerKind::DepthwiseConv2D;
        for (std::size_t s = 0; s < B; ++s)
          for (std::size_t oy = 0; oy < out.h; ++oy)
            for (std::size_t ox = 0; ox < out.w; ++ox)
              for (std::size_t f = 0; f < out.c; ++f) {
                double acc = p.bias.data()[f];
                for (std::size_t ky = 0; ky < kh; ++ky)
                  for (std::size_t kx = 0; kx < kw; ++kx) {
                    const long iy = long(oy * sh + ky) - long(top);
                    const long ix = long(ox * sw + kx) - long(left);
                    if (iy < 0 || ix < 0 || iy >= long(a.h) || ix >= long(a.w)) continue;
                    const std::size_t base = (std::size_t(iy) * a.w + std::size_t(ix)) * a.c;
                    if (dw) {
                      acc += a.v[s][base + f] * p.weight.at(f, ky, kx);
                    } else {
                      for (std::size_t c = 0; c < a.c; ++c)
                        acc += a.v[s][base + c] * p.weight.at(f, ky, kx, c);
                    }
                  }
                y.v[s][(oy * out.w + ox) * out.c + f] = acc;
              }
        break;
      }
      case LayerKind::BatchNorm: {
        const std::size_t hw = a.h * a.w;
        for (std::size_t c = 0; c < a.c; ++c) {
          double mean = p.running_mean.data()[c], var = p.running_var.data()[c];
          if (mode == BnMode::Training) {
            double s1 = 0.0, s2 = 0.0;
            for (std::size_t s = 0; s < B; ++s)
              for (std::size_t q = 0; q < hw; ++q) s1 += a.v[s][q * a.c + c];
            mean = s1 / double(B * hw);
            for (std::size_t s = 0; s < B; ++s)
              for (std::size_t q = 0; q < hw; ++q) {
                const double d = a.v[s][q * a.c + c] - mean;
                s2 += d * d;
              }
            var = s2 / double(B * hw);
          }
          const double inv = 1.0 / std::sqrt(var + double(reds::kBatchNormEpsilon));
          for (std::size_t s = 0; s < B; ++s)
            for (std::size_t q = 0; q < hw; ++q) {
              const std::size_t i = q * a.c + c;
              y.v[s][i] = p.gamma.data()[c] * (a.v[s][i] - mean) * inv + p.beta.data()[c];
            }
        }
        break;
      }
      case LayerKind::Flatten: {
        const std::size_t hw = a.h * a.w;
        for (std::size_t s = 0; s < B; ++s)
          for (std::size_t q = 0; q < hw; ++q)
            for (std::size_t c = 0; c < a.c; ++c) y.v[s][c * hw + q] = a.v[s][q * a.c + c];
        break;
      }
    }
    if (sp.activation == reds::Activation::ReLU) {
      for (auto& row : y.v)
        for (auto& v : row) v = std::max(0.0, v);
    }
    a = std::move(y);
  }
  return a.v;
}

/// Mean cross-entropy of the reference logits.
inline double reference_loss(const ModelGraph& g, const reds::Minibatch& batch,
                             BnMode mode = BnMode::Inference) {
  const auto logits = reference_forward(g, batch.inputs, mode);
  double total = 0.0;
  for (std::size_t s = 0; s < logits.size(); ++s) {
    const double mx = *std::max_element(logits[s].begin(), logits[s].end());
    double z = 0.0;
    for (double v : logits[s]) z += std::exp(v - mx);
    total += -(logits[s][batch.labels[s]] - mx - std::log(z));
  }
  return total / double(logits.size());
}

// ---------------------------------------------------------------------------
// Finite differences

enum class Which { Weight, Bias, Gamma, Beta };

struct ParamRef {
  std::size_t layer = 0;
  Which which = Which::Weight;
  std::size_t index = 0;
};

inline Tensor& param_tensor(reds::LayerParams& p, Which w) {
  switch (w) {
    case Which::Weight: return p.weight;
    case Which::Bias: return p.bias;
    case Which::Gamma: return p.gamma;
    case Which::Beta: return p.beta;
  }
  return p.weight;
}

inline const Tensor& grad_tensor(const reds::GradStore& g, const ParamRef& r) {
  const auto& l = g.layers.at(r.layer);
  switch (r.which) {
    case Which::Weight: return l.weight;
    case Which::Bias: return l.bias;
    case Which::Gamma: return l.gamma;
    case Which::Beta: return l.beta;
  }
  return l.weight;
}

/// Central difference of the double-precision reference loss. The step is
/// taken in float and the divisor is the step actually realised.
inline double central_difference(const ModelGraph& g, const reds::Minibatch& batch,
                                 const ParamRef& r, const Points* points, BnMode mode,
                                 double h = 1e-4) {
  ModelGraph work = g;
  float& w = param_tensor(work.params(r.layer), r.which).mutable_data()[r.index];
  const float w0 = w;
  auto loss = [&] {
    return points ? reference_loss(truncate_model(work, *points), batch, mode)
                  : reference_loss(work, batch, mode);
  };
  const float up = static_cast<float>(w0 + h);
  const float down = static_cast<float>(w0 - h);
  w = up;
  const double lu = loss();
  w = down;
  const double ld = loss();
  return (lu - ld) / (double(up) - double(down));
}

inline double relative_error(double a, double b) {
  const double scale = std::max(std::fabs(a), std::fabs(b));
  return scale == 0.0 ? 0.0 : std::fabs(a - b) / scale;
}

// ---------------------------------------------------------------------------
// Cache

/// Set-associative LRU cache kept as one recency list per set.
class ListCache {
 public:
  ListCache(std::uint64_t bytes, std::uint64_t ways, std::uint64_t line)
      : ways_(ways), line_(line), sets_(bytes / (ways * line)), lru_(sets_) {}

  bool access(std::uint64_t addr) {
    const std::uint64_t block = addr / line_;
    auto& l = lru_[block % sets_];
    const auto it = std::find(l.begin(), l.end(), block);
    if (it != l.end()) {
      l.erase(it);
      l.push_front(block);
      return true;
    }
    l.push_front(block);
    if (l.size() > ways_) l.pop_back();
    return false;
  }

 private:
  std::uint64_t ways_, line_, sets_;
  std::vector<std::list<std::uint64_t>> lru_;
};

}  // namespace oracle
