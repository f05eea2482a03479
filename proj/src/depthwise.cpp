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

// Exact solver for the depthwise-separable slicing problem. Choosing a count
// per layer fixes everything else: the depthwise layer follows the previous
// count and each kept pointwise filter keeps exactly that many kernels. A DP
// over (block, previous count, budget) is therefore exact for prefix choice.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>

#include "reds/planner.hpp"

namespace reds {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::size_t lower(const DwInstance& inst, std::size_t layer) {
  return inst.min_counts.empty() ? 1 : std::max<std::size_t>(1, inst.min_counts[layer]);
}

std::size_t upper(const DwInstance& inst, std::size_t layer) {
  return inst.max_counts.empty() ? inst.width(layer)
                                 : std::min(inst.width(layer), inst.max_counts[layer]);
}

// prefix[x][p] = sum of kernel_profit[k][t] for k < x, t < p.
std::vector<std::vector<double>> kernel_prefix(const DwBlock& b, std::size_t prev) {
  const std::size_t n = b.filters();
  std::vector<std::vector<double>> s(n + 1, std::vector<double>(prev + 1, 0.0));
  for (std::size_t k = 0; k < n; ++k) {
    double row = 0.0;
    for (std::size_t t = 0; t < prev; ++t) {
      row += b.kernel_profit[k][t];
      s[k + 1][t + 1] = s[k][t + 1] + row;
    }
  }
  return s;
}

std::vector<double> prefix(const std::vector<double>& v) {
  std::vector<double> s(v.size() + 1, 0.0);
  for (std::size_t i = 0; i < v.size(); ++i) s[i + 1] = s[i] + v[i];
  return s;
}

}  // namespace

void DwInstance::validate() const {
  if (first_profit.empty()) fail(ErrorKind::Config, "first layer has no filters");
  if (first_macs == 0) fail(ErrorKind::Config, "first layer MACs must be positive");
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    const std::size_t prev = width(i);
    if (b.depthwise_profit.size() != prev) {
      fail(ErrorKind::Shape, "block " + std::to_string(i + 1) +
                                 " depthwise count must match previous width");
    }
    if (b.kernel_profit.empty()) fail(ErrorKind::Config, "block without filters");
    for (const auto& row : b.kernel_profit) {
      if (row.size() != prev) {
        fail(ErrorKind::Shape, "pointwise kernels must match previous width");
      }
    }
    if (b.depthwise_macs == 0 || b.kernel_macs == 0) {
      fail(ErrorKind::Config, "MAC coefficients must be positive");
    }
  }
  const std::size_t layers = blocks.size() + 1;
  for (const auto* v : {&min_counts, &max_counts}) {
    if (!v->empty() && v->size() != layers) {
      fail(ErrorKind::Shape, "count bounds need one entry per layer");
    }
  }
  for (std::size_t l = 0; l < layers; ++l) {
    if (lower(*this, l) > upper(*this, l)) {
      fail(ErrorKind::Infeasible, "empty count range at layer " + std::to_string(l));
    }
  }
}

std::uint64_t dw_macs(const DwInstance& inst,
                      const std::vector<std::size_t>& counts) {
  if (counts.size() != inst.depth() + 1) fail(ErrorKind::Shape, "count tuple size");
  std::uint64_t m = counts[0] * inst.first_macs;
  for (std::size_t i = 0; i < inst.depth(); ++i) {
    const auto& b = inst.blocks[i];
    m += counts[i] * b.depthwise_macs + counts[i + 1] * counts[i] * b.kernel_macs;
  }
  return m + counts.back() * inst.tail_macs_per_channel;
}

double dw_objective(const DwInstance& inst,
                    const std::vector<std::size_t>& counts) {
  if (counts.size() != inst.depth() + 1) fail(ErrorKind::Shape, "count tuple size");
  double v = 0.0;
  for (std::size_t j = 0; j < counts[0]; ++j) v += inst.first_profit[j];
  for (std::size_t i = 0; i < inst.depth(); ++i) {
    const auto& b = inst.blocks[i];
    for (std::size_t t = 0; t < counts[i]; ++t) v += b.depthwise_profit[t];
    for (std::size_t k = 0; k < counts[i + 1]; ++k) {
      for (std::size_t t = 0; t < counts[i]; ++t) v += b.kernel_profit[k][t];
    }
  }
  return v;
}

namespace {

std::uint64_t instance_gcd(const DwInstance& inst) {
  std::uint64_t g = inst.first_macs;
  for (const auto& b : inst.blocks) {
    g = std::gcd(g, b.depthwise_macs);
    g = std::gcd(g, b.kernel_macs);
  }
  if (inst.tail_macs_per_channel) g = std::gcd(g, inst.tail_macs_per_channel);
  return g;
}

}  // namespace

double dw_work(const DwInstance& inst) {
  const double budget =
      static_cast<double>(inst.capacity / std::max<std::uint64_t>(1, instance_gcd(inst))) + 1;
  double w = static_cast<double>(inst.width(0)) * budget;
  for (std::size_t i = 0; i < inst.depth(); ++i) {
    w += static_cast<double>(inst.width(i)) * inst.width(i + 1) * budget;
  }
  return w;
}

DwSolution solve_depthwise(const DwInstance& inst) {
  inst.validate();
  const std::uint64_t g = instance_gcd(inst);
  const std::size_t B = static_cast<std::size_t>(inst.capacity / g);
  const std::size_t stride = B + 1;
  const std::size_t d = inst.depth();

  // f[x * stride + b]: best objective of layers 0..i with x units in layer i
  // and cost at most b budget units.
  const std::size_t n0 = inst.width(0);
  std::vector<double> f((n0 + 1) * stride, kNegInf);
  {
    const auto p = prefix(inst.first_profit);
    const std::size_t w1 = static_cast<std::size_t>(inst.first_macs / g);
    for (std::size_t x = lower(inst, 0); x <= upper(inst, 0); ++x) {
      for (std::size_t b = x * w1; b <= B; ++b) f[x * stride + b] = p[x];
    }
  }

  std::vector<std::vector<std::uint16_t>> choice(d);
  for (std::size_t i = 0; i < d; ++i) {
    const auto& blk = inst.blocks[i];
    const std::size_t np = inst.width(i);
    const std::size_t nx = inst.width(i + 1);
    const auto kp = kernel_prefix(blk, np);
    const auto dp = prefix(blk.depthwise_profit);
    const std::size_t w2 = static_cast<std::size_t>(blk.depthwise_macs / g);
    const std::size_t w3 = static_cast<std::size_t>(blk.kernel_macs / g);
    std::vector<double> h((nx + 1) * stride, kNegInf);
    auto& ch = choice[i];
    ch.assign((nx + 1) * stride, 0);
    for (std::size_t x = lower(inst, i + 1); x <= upper(inst, i + 1); ++x) {
      double* hx = h.data() + x * stride;
      std::uint16_t* cx = ch.data() + x * stride;
      for (std::size_t p = lower(inst, i); p <= upper(inst, i); ++p) {
        const std::size_t cost = p * w2 + x * p * w3;
        if (cost > B) continue;
        const double gain = dp[p] + kp[x][p];
        const double* fp = f.data() + p * stride;
        for (std::size_t b = cost; b <= B; ++b) {
          const double prev = fp[b - cost];
          if (prev == kNegInf) continue;
          const double v = prev + gain;
          if (v > hx[b]) {
            hx[b] = v;
            cx[b] = static_cast<std::uint16_t>(p);
          }
        }
      }
    }
    f = std::move(h);
  }

  const std::size_t tail = static_cast<std::size_t>(inst.tail_macs_per_channel / g);
  DwSolution sol;
  double best = kNegInf;
  std::size_t best_x = 0;
  for (std::size_t x = lower(inst, d); x <= upper(inst, d); ++x) {
    if (x * tail > B) continue;
    const double v = f[x * stride + (B - x * tail)];
    if (v > best) {
      best = v;
      best_x = x;
    }
  }
  if (best == kNegInf) {
    fail(ErrorKind::Infeasible, "capacity " + std::to_string(inst.capacity) +
                                    " is below the smallest admissible network");
  }
  sol.counts.assign(d + 1, 0);
  sol.counts[d] = best_x;
  std::size_t b = B - best_x * tail;
  for (std::size_t i = d; i-- > 0;) {
    const std::size_t x = sol.counts[i + 1];
    const std::size_t p = choice[i][x * (B + 1) + b];
    const auto& blk = inst.blocks[i];
    b -= p * static_cast<std::size_t>(blk.depthwise_macs / g) +
         x * p * static_cast<std::size_t>(blk.kernel_macs / g);
    sol.counts[i] = p;
  }
  sol.macs = dw_macs(inst, sol.counts);
  sol.profit = dw_objective(inst, sol.counts);
  return sol;
}

bool has_depthwise_structure(const ModelGraph& g) {
  const auto& L = g.layers();
  std::size_t i = 0;
  auto skip_bn = [&] {
    while (i < L.size() && L[i].kind == LayerKind::BatchNorm) ++i;
  };
  if (L.empty() || L[0].kind != LayerKind::Conv2D || !L[0].sliceable) return false;
  ++i;
  skip_bn();
  std::size_t blocks = 0;
  while (i < L.size() && L[i].kind == LayerKind::DepthwiseConv2D) {
    ++i;
    skip_bn();
    if (i >= L.size() || L[i].kind != LayerKind::PointwiseConv2D || !L[i].sliceable) {
      return false;
    }
    ++i;
    skip_bn();
    ++blocks;
  }
  if (blocks == 0 || blocks > 64) return false;
  if (i + 2 != L.size()) return false;
  if (L[i].kind != LayerKind::Flatten || L[i + 1].kind != LayerKind::Dense) return false;
  for (const auto& s : L) {
    if (s.units > 65535) return false;
  }
  return g.sliceable_layers().size() == blocks + 1;
}

DwInstance build_dw_instance(const ModelGraph& g, const GradStore& grads) {
  if (!has_depthwise_structure(g)) {
    fail(ErrorKind::Config, "model is not a plain depthwise-separable stack");
  }
  grads.check_matches(g);
  ScoreOptions so;
  so.include_bound_depthwise = false;
  const auto unit = score_units(g, grads, so);
  const auto dws = depthwise_scores(g, grads);
  const auto costs = unit_macs(g);
  auto cost_of = [&](std::size_t l) -> std::uint64_t {
    for (const auto& c : costs) {
      if (c.layer == l) return c.macs;
    }
    return 0;
  };
  auto unit_score = [&](std::size_t l, std::size_t u) {
    for (const auto& s : unit) {
      if (s.layer == l && s.unit == u) return s.importance;
    }
    return 0.0;
  };

  DwInstance inst;
  const auto& layers = g.sliceable_layers();
  const std::size_t first = layers[0];
  for (std::size_t u = 0; u < g.layer(first).units; ++u) {
    inst.first_profit.push_back(unit_score(first, u));
  }
  inst.first_macs = cost_of(first);

  std::size_t prev = first;
  for (std::size_t bi = 1; bi < layers.size(); ++bi) {
    const std::size_t pw = layers[bi];
    std::size_t dw = prev + 1;
    while (g.layer(dw).kind != LayerKind::DepthwiseConv2D) ++dw;
    DwBlock b;
    b.depthwise_profit = dws[dw];
    b.depthwise_macs = cost_of(dw);
    const auto& p = g.params(pw);
    const auto& q = grads.layers[pw];
    const std::size_t filters = g.layer(pw).units;
    const std::size_t cin = p.weight.extent(3);
    b.kernel_profit.assign(filters, std::vector<double>(cin, 0.0));
    for (std::size_t k = 0; k < filters; ++k) {
      double fan_in = 0.0;
      for (std::size_t t = 0; t < cin; ++t) {
        const double v = std::fabs(static_cast<double>(q.weight.data()[k * cin + t]) *
                                   p.weight.data()[k * cin + t]);
        b.kernel_profit[k][t] = v;
        fan_in += v;
      }
      // Bias and batchnorm terms ride on the first kernel.
      b.kernel_profit[k][0] += unit_score(pw, k) - fan_in;
    }
    b.kernel_macs = g.layer_output_shape(pw).spatial();
    inst.blocks.push_back(std::move(b));
    prev = pw;
  }
  const std::size_t flat = g.num_layers() - 2;
  inst.tail_macs_per_channel =
      g.layer_input_shape(flat).spatial() * g.classes();
  return inst;
}

namespace {

SlicingPlan dw_plan(const DwInstance& base, const std::vector<std::uint64_t>& capacities,
                    bool bottom_up) {
  if (capacities.empty()) fail(ErrorKind::Config, "no capacities given");
  SlicingPlan plan;
  plan.heuristic = bottom_up ? "bu" : "td";
  plan.capacities = capacities;
  std::sort(plan.capacities.rbegin(), plan.capacities.rend());
  plan.points.resize(plan.capacities.size());
  DwInstance inst = base;
  inst.min_counts.clear();
  inst.max_counts.clear();
  const std::size_t rows = plan.capacities.size();
  for (std::size_t step = 0; step < rows; ++step) {
    const std::size_t k = bottom_up ? rows - 1 - step : step;
    inst.capacity = plan.capacities[k];
    try {
      const DwSolution s = solve_depthwise(inst);
      plan.points[k] = s.counts;
      if (bottom_up) {
        inst.min_counts = s.counts;
      } else {
        inst.max_counts = s.counts;
      }
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Infeasible) throw;
      fail(ErrorKind::Infeasible, "stage " + std::to_string(step) + " (capacity " +
                                      std::to_string(inst.capacity) + "): " + e.what());
    }
  }
  plan.validate();
  return plan;
}

}  // namespace

SlicingPlan plan_depthwise_bottom_up(const DwInstance& base,
                                     const std::vector<std::uint64_t>& capacities) {
  return dw_plan(base, capacities, true);
}

SlicingPlan plan_depthwise_top_down(const DwInstance& base,
                                    const std::vector<std::uint64_t>& capacities) {
  return dw_plan(base, capacities, false);
}

}  // namespace reds
