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

#include "reds/importance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

namespace reds {
namespace {

bool produces_channels(LayerKind k) {
  return k == LayerKind::Dense || k == LayerKind::Conv2D ||
         k == LayerKind::PointwiseConv2D;
}

// First layer after l that consumes l's channels through its weights.
std::optional<std::size_t> consumer_of(const ModelGraph& g, std::size_t l) {
  for (std::size_t k = l + 1; k < g.num_layers(); ++k) {
    if (g.channel_source(k) != l) return std::nullopt;
    if (produces_channels(g.layer(k).kind)) return k;
  }
  return std::nullopt;
}

double abs_product(float gv, float w) {
  return std::fabs(static_cast<double>(gv) * static_cast<double>(w));
}

// Reorders `axis` of a tensor: index i along the axis is channel i / group at
// position i % group; channel c moves to perm[c].
void permute_axis(Tensor& t, std::size_t axis, const std::vector<std::size_t>& perm,
                  std::size_t group = 1) {
  if (t.empty()) return;
  const bool col_major = t.order() == StorageOrder::ColMajor;
  Tensor rm = col_major ? t.with_order(StorageOrder::RowMajor) : std::move(t);
  const auto& shape = rm.shape();
  const std::size_t len = shape.at(axis);
  if (len != perm.size() * group) {
    fail(ErrorKind::Shape, "permutation length does not match tensor axis");
  }
  std::size_t outer = 1;
  std::size_t inner = 1;
  for (std::size_t d = 0; d < axis; ++d) outer *= shape[d];
  for (std::size_t d = axis + 1; d < shape.size(); ++d) inner *= shape[d];
  const auto src = rm.data();
  std::vector<float> dst(src.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < len; ++i) {
      const std::size_t ni = perm[i / group] * group + i % group;
      std::copy_n(src.begin() + (o * len + i) * inner, inner,
                  dst.begin() + (o * len + ni) * inner);
    }
  }
  Tensor out(shape, std::move(dst));
  t = col_major ? out.with_order(StorageOrder::ColMajor) : std::move(out);
}

}  // namespace

Tensor weight_scores(const Tensor& grad, const Tensor& weight) {
  if (grad.shape() != weight.shape()) {
    fail(ErrorKind::Integrity, "gradient and weight shapes differ");
  }
  Tensor out(weight.shape(), weight.order());
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    o[i] = std::fabs(grad.data()[i] * weight.data()[i]);
  }
  return out;
}

std::vector<std::size_t> bound_layers(const ModelGraph& g, std::size_t l) {
  std::vector<std::size_t> out;
  for (std::size_t k = l + 1; k < g.num_layers(); ++k) {
    if (g.channel_source(k) != l) break;
    const auto kind = g.layer(k).kind;
    if (produces_channels(kind)) break;
    if (kind == LayerKind::BatchNorm || kind == LayerKind::DepthwiseConv2D) {
      out.push_back(k);
    }
  }
  return out;
}

std::vector<UnitScore> score_units(const ModelGraph& g, const GradStore& grads,
                                   const ScoreOptions& options) {
  grads.check_matches(g);
  const auto costs = unit_macs(g);
  std::vector<UnitScore> scores;
  for (const std::size_t l : g.sliceable_layers()) {
    const auto& p = g.params(l);
    const auto& q = grads.layers[l];
    const std::size_t units = g.layer(l).units;
    std::vector<double> s(units, 0.0);
    const auto w = p.weight.data();
    const auto gw = q.weight.data();
    if (g.layer(l).kind == LayerKind::Dense && !p.transposed) {
      const std::size_t cols = p.weight.cols();
      for (std::size_t i = 0; i < w.size(); ++i) s[i % cols] += abs_product(gw[i], w[i]);
    } else {
      const std::size_t per = w.size() / units;
      for (std::size_t i = 0; i < w.size(); ++i) s[i / per] += abs_product(gw[i], w[i]);
    }
    for (std::size_t u = 0; u < units; ++u) {
      s[u] += abs_product(q.bias.data()[u], p.bias.data()[u]);
    }
    for (const std::size_t k : bound_layers(g, l)) {
      const auto& pk = g.params(k);
      const auto& qk = grads.layers[k];
      if (g.layer(k).kind == LayerKind::BatchNorm) {
        for (std::size_t u = 0; u < units; ++u) {
          s[u] += abs_product(qk.gamma.data()[u], pk.gamma.data()[u]) +
                  abs_product(qk.beta.data()[u], pk.beta.data()[u]);
        }
      } else if (options.include_bound_depthwise) {
        const std::size_t per = pk.weight.size() / units;
        for (std::size_t i = 0; i < pk.weight.size(); ++i) {
          s[i / per] += abs_product(qk.weight.data()[i], pk.weight.data()[i]);
        }
        for (std::size_t u = 0; u < units; ++u) {
          s[u] += abs_product(qk.bias.data()[u], pk.bias.data()[u]);
        }
      } else {
        // Parameters after the depthwise filter belong to its own score.
        break;
      }
    }
    std::uint64_t per_unit = 0;
    for (const auto& c : costs) {
      if (c.layer == l) {
        per_unit = c.macs;
        break;
      }
    }
    for (std::size_t u = 0; u < units; ++u) {
      if (!std::isfinite(s[u])) {
        fail(ErrorKind::Numeric, "non-finite importance in layer " +
                                     std::to_string(l));
      }
      scores.push_back(UnitScore{l, u, s[u], per_unit});
    }
  }
  return scores;
}

std::vector<std::vector<double>> depthwise_scores(const ModelGraph& g,
                                                  const GradStore& grads) {
  grads.check_matches(g);
  std::vector<std::vector<double>> out(g.num_layers());
  for (std::size_t k = 0; k < g.num_layers(); ++k) {
    if (g.layer(k).kind != LayerKind::DepthwiseConv2D) continue;
    const auto& p = g.params(k);
    const auto& q = grads.layers[k];
    const std::size_t units = g.layer(k).units;
    auto& s = out[k];
    s.assign(units, 0.0);
    const std::size_t per = p.weight.size() / units;
    for (std::size_t i = 0; i < p.weight.size(); ++i) {
      s[i / per] += abs_product(q.weight.data()[i], p.weight.data()[i]);
    }
    for (std::size_t u = 0; u < units; ++u) {
      s[u] += abs_product(q.bias.data()[u], p.bias.data()[u]);
    }
    for (std::size_t b = k + 1; b < g.num_layers(); ++b) {
      if (g.layer(b).kind != LayerKind::BatchNorm) break;
      for (std::size_t u = 0; u < units; ++u) {
        s[u] += abs_product(grads.layers[b].gamma.data()[u], g.params(b).gamma.data()[u]) +
                abs_product(grads.layers[b].beta.data()[u], g.params(b).beta.data()[u]);
      }
    }
  }
  return out;
}

Permutation Permutation::identity(const ModelGraph& g) {
  Permutation p;
  p.old_to_new.resize(g.num_layers());
  return p;
}

bool Permutation::is_identity() const {
  for (const auto& m : old_to_new) {
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (m[i] != i) return false;
    }
  }
  return true;
}

Permutation Permutation::inverse() const {
  Permutation inv;
  inv.old_to_new.resize(old_to_new.size());
  for (std::size_t l = 0; l < old_to_new.size(); ++l) {
    const auto& m = old_to_new[l];
    auto& r = inv.old_to_new[l];
    r.resize(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) r[m[i]] = i;
  }
  return inv;
}

void apply_permutation(ModelGraph& g, const Permutation& p) {
  if (p.old_to_new.size() != g.num_layers()) {
    fail(ErrorKind::Shape, "permutation does not match the model");
  }
  for (std::size_t l = 0; l < g.num_layers(); ++l) {
    const auto& perm = p.old_to_new[l];
    if (perm.empty()) continue;
    if (!g.layer(l).sliceable) {
      fail(ErrorKind::Config, "layer " + std::to_string(l) + " is not sliceable");
    }
    if (perm.size() != g.layer(l).units) {
      fail(ErrorKind::Shape, "permutation size mismatch at layer " +
                                 std::to_string(l));
    }
    std::vector<bool> seen(perm.size(), false);
    for (const auto v : perm) {
      if (v >= perm.size() || seen[v]) {
        fail(ErrorKind::Config, "permutation is not a bijection");
      }
      seen[v] = true;
    }

    auto& own = g.params(l);
    if (g.layer(l).kind == LayerKind::Dense) {
      permute_axis(own.weight, own.transposed ? 0 : 1, perm);
    } else {
      permute_axis(own.weight, 0, perm);
    }
    permute_axis(own.bias, 0, perm);

    for (const std::size_t k : bound_layers(g, l)) {
      auto& pk = g.params(k);
      if (g.layer(k).kind == LayerKind::BatchNorm) {
        permute_axis(pk.gamma, 0, perm);
        permute_axis(pk.beta, 0, perm);
        permute_axis(pk.running_mean, 0, perm);
        permute_axis(pk.running_var, 0, perm);
      } else {
        permute_axis(pk.weight, 0, perm);
        permute_axis(pk.bias, 0, perm);
      }
    }

    const auto next = consumer_of(g, l);
    if (!next) continue;
    auto& pn = g.params(*next);
    switch (g.layer(*next).kind) {
      case LayerKind::Dense: {
        const bool after_flatten =
            *next > 0 && g.layer(*next - 1).kind == LayerKind::Flatten;
        const std::size_t group =
            after_flatten ? g.layer_input_shape(*next - 1).spatial() : 1;
        permute_axis(pn.weight, pn.transposed ? 1 : 0, perm, group);
        break;
      }
      default:
        permute_axis(pn.weight, 3, perm);
        break;
    }
  }
}

Permutation descending_permutation(const ModelGraph& g,
                                   const std::vector<UnitScore>& scores) {
  Permutation p = Permutation::identity(g);
  for (const std::size_t l : g.sliceable_layers()) {
    const std::size_t units = g.layer(l).units;
    std::vector<double> s(units, 0.0);
    std::vector<bool> seen(units, false);
    for (const auto& u : scores) {
      if (u.layer != l) continue;
      if (u.unit >= units) fail(ErrorKind::Integrity, "score for missing unit");
      s[u.unit] = u.importance;
      seen[u.unit] = true;
    }
    if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
      fail(ErrorKind::Integrity, "scores do not cover layer " + std::to_string(l));
    }
    std::vector<std::size_t> order(units);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return s[a] > s[b]; });
    auto& m = p.old_to_new[l];
    m.resize(units);
    for (std::size_t k = 0; k < units; ++k) m[order[k]] = k;
  }
  return p;
}

PermuteResult permute_descending(const ModelGraph& g,
                                 const std::vector<UnitScore>& scores) {
  PermuteResult r{g, descending_permutation(g, scores)};
  apply_permutation(r.graph, r.permutation);
  return r;
}

std::vector<UnitScore> permute_scores(const std::vector<UnitScore>& scores,
                                      const Permutation& p) {
  std::vector<UnitScore> out = scores;
  for (auto& u : out) {
    if (u.layer < p.old_to_new.size() && !p.old_to_new[u.layer].empty()) {
      u.unit = p.old_to_new[u.layer].at(u.unit);
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.layer != b.layer ? a.layer < b.layer : a.unit < b.unit;
  });
  return out;
}

void write_scores_csv(std::ostream& out, const std::vector<UnitScore>& scores) {
  out << "layer,unit,importance,macs\n";
  const auto old = out.precision(17);
  for (const auto& s : scores) {
    out << s.layer << ',' << s.unit << ',' << s.importance << ',' << s.macs
        << '\n';
  }
  out.precision(old);
}

}  // namespace reds
