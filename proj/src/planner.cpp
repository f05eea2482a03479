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

#include "reds/planner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

namespace reds {

using nlohmann::json;

void SlicingPlan::validate(const ModelGraph* g) const {
  if (capacities.size() != points.size()) {
    fail(ErrorKind::Integrity, "plan has " + std::to_string(capacities.size()) +
                                   " capacities but " +
                                   std::to_string(points.size()) + " rows");
  }
  for (std::size_t k = 0; k < points.size(); ++k) {
    if (k > 0 && capacities[k] > capacities[k - 1]) {
      fail(ErrorKind::Integrity, "plan capacities must be descending");
    }
    if (points[k].size() != points.front().size()) {
      fail(ErrorKind::Integrity, "plan rows differ in length");
    }
    for (std::size_t s = 0; s < points[k].size(); ++s) {
      if (points[k][s] == 0) {
        fail(ErrorKind::Integrity, "row " + std::to_string(k) +
                                       " leaves a layer empty");
      }
      if (k > 0 && points[k][s] > points[k - 1][s]) {
        fail(ErrorKind::Integrity, "row " + std::to_string(k) +
                                       " is not nested in row " +
                                       std::to_string(k - 1));
      }
    }
  }
  if (!g) return;
  for (std::size_t k = 0; k < points.size(); ++k) {
    if (points[k].size() != g->sliceable_layers().size()) {
      fail(ErrorKind::Integrity, "plan does not match the model's sliceable layers");
    }
    for (std::size_t s = 0; s < points[k].size(); ++s) {
      if (points[k][s] > g->layer(g->sliceable_layers()[s]).units) {
        fail(ErrorKind::Integrity, "slicing point exceeds layer width");
      }
    }
    const auto macs = config_macs(*g, &points[k]);
    if (macs > capacities[k]) {
      fail(ErrorKind::Integrity, "row " + std::to_string(k) + " needs " +
                                     std::to_string(macs) + " MACs > capacity " +
                                     std::to_string(capacities[k]));
    }
  }
}

std::string plan_to_json(const SlicingPlan& plan) {
  json j;
  j["capacities"] = plan.capacities;
  j["points"] = plan.points;
  j["heuristic"] = plan.heuristic;
  j["seed"] = plan.seed;
  return j.dump(2) + "\n";
}

SlicingPlan plan_from_json(const std::string& text) {
  SlicingPlan plan;
  try {
    const json j = json::parse(text);
    plan.capacities = j.at("capacities").get<std::vector<std::uint64_t>>();
    plan.points = j.at("points").get<std::vector<Points>>();
    plan.heuristic = j.at("heuristic").get<std::string>();
    plan.seed = j.value("seed", std::uint64_t{0});
  } catch (const json::exception& e) {
    fail(ErrorKind::Data, std::string("malformed plan: ") + e.what());
  }
  static const char* kKnown[] = {"bu", "td", "l1", "random"};
  if (std::find(std::begin(kKnown), std::end(kKnown), plan.heuristic) ==
      std::end(kKnown)) {
    fail(ErrorKind::Data, "unknown plan heuristic '" + plan.heuristic + "'");
  }
  plan.validate();
  return plan;
}

void save_plan(const std::string& path, const SlicingPlan& plan) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Data, "cannot write " + path);
  out << plan_to_json(plan);
}

SlicingPlan load_plan(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Data, "cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return plan_from_json(ss.str());
}

std::vector<std::uint64_t> capacities_from_fractions(
    const ModelGraph& g, const std::vector<double>& fractions) {
  const std::uint64_t full = total_macs(g);
  std::vector<std::uint64_t> caps;
  for (const double f : fractions) {
    if (!(f > 0.0) || f > 1.0) {
      fail(ErrorKind::Config, "capacity fractions must lie in (0, 1]");
    }
    caps.push_back(static_cast<std::uint64_t>(
        std::floor(f * static_cast<double>(full) + 1e-9)));
  }
  std::sort(caps.rbegin(), caps.rend());
  return caps;
}

UnitCatalog build_catalog(const ModelGraph& g,
                          const std::vector<UnitScore>& scores) {
  UnitCatalog cat;
  cat.layers = g.sliceable_layers();
  cat.full_macs = total_macs(g);
  const auto costs = unit_macs(g);
  auto cost_of = [&](std::size_t l) -> std::uint64_t {
    for (const auto& c : costs) {
      if (c.layer == l) return c.macs;
    }
    return 0;
  };
  std::uint64_t sliceable_total = 0;
  for (const std::size_t l : cat.layers) {
    const std::size_t units = g.layer(l).units;
    std::vector<double> p(units, 0.0);
    std::vector<bool> seen(units, false);
    for (const auto& s : scores) {
      if (s.layer != l) continue;
      if (s.unit >= units) fail(ErrorKind::Integrity, "score for missing unit");
      p[s.unit] = s.importance;
      seen[s.unit] = true;
    }
    if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
      fail(ErrorKind::Integrity, "scores do not cover layer " + std::to_string(l));
    }
    for (std::size_t u = 1; u < units; ++u) {
      if (p[u] > p[u - 1]) {
        fail(ErrorKind::Config, "scores of layer " + std::to_string(l) +
                                    " are not descending; permute the model first");
      }
    }
    std::uint64_t w = cost_of(l);
    for (const std::size_t k : bound_layers(g, l)) {
      if (g.layer(k).kind == LayerKind::DepthwiseConv2D) w += cost_of(k);
    }
    cat.profits.push_back(std::move(p));
    cat.unit_weight.push_back(w);
    sliceable_total += w * units;
  }
  if (sliceable_total > cat.full_macs) {
    fail(ErrorKind::Integrity, "unit MACs exceed the model total");
  }
  cat.fixed_macs = cat.full_macs - sliceable_total;
  return cat;
}

namespace {

struct CatalogItems {
  std::vector<KnapsackItem> items;
  std::vector<std::size_t> first;  // index of each layer's first item
  std::vector<std::size_t> tops;
};

CatalogItems flatten_catalog(const UnitCatalog& cat) {
  CatalogItems ci;
  for (std::size_t s = 0; s < cat.layers.size(); ++s) {
    ci.first.push_back(ci.items.size());
    ci.tops.push_back(ci.items.size());
    for (const double p : cat.profits[s]) {
      ci.items.push_back(KnapsackItem{p, cat.unit_weight[s]});
    }
  }
  ci.first.push_back(ci.items.size());
  return ci;
}

Points to_points(const CatalogItems& ci, const KnapsackSolution& sol) {
  const std::size_t layers = ci.first.size() - 1;
  Points pts(layers, 0);
  std::vector<char> in(ci.items.size(), 0);
  for (auto i : sol.selected) in[i] = 1;
  for (std::size_t s = 0; s < layers; ++s) {
    std::size_t count = 0;
    while (ci.first[s] + count < ci.first[s + 1] && in[ci.first[s] + count]) ++count;
    for (std::size_t i = ci.first[s] + count; i < ci.first[s + 1]; ++i) {
      if (in[i]) {
        fail(ErrorKind::Integrity, "selection in sliceable layer " +
                                       std::to_string(s) + " is not a prefix");
      }
    }
    pts[s] = count;
  }
  return pts;
}

std::vector<std::uint64_t> descending(std::vector<std::uint64_t> caps) {
  if (caps.empty()) fail(ErrorKind::Config, "no capacities given");
  std::sort(caps.rbegin(), caps.rend());
  return caps;
}

SlicingPlan plan_iterative(const UnitCatalog& cat,
                           const std::vector<std::uint64_t>& capacities,
                           bool bottom_up) {
  SlicingPlan plan;
  plan.heuristic = bottom_up ? "bu" : "td";
  plan.capacities = descending(capacities);
  const CatalogItems ci = flatten_catalog(cat);
  std::vector<std::uint64_t> budgets;
  for (std::size_t k = 0; k < plan.capacities.size(); ++k) {
    const auto c = plan.capacities[k];
    if (c < cat.fixed_macs) {
      fail(ErrorKind::Infeasible,
           "capacity " + std::to_string(c) + " is below the " +
               std::to_string(cat.fixed_macs) + " MACs of the fixed layers");
    }
    budgets.push_back(c - cat.fixed_macs);
  }
  const auto sols = bottom_up ? iterate_bottom_up(ci.items, budgets, ci.tops)
                              : iterate_top_down(ci.items, budgets, ci.tops);
  for (const auto& s : sols) plan.points.push_back(to_points(ci, s));
  plan.validate();
  return plan;
}

}  // namespace

SlicingPlan plan_bottom_up(const UnitCatalog& catalog,
                           const std::vector<std::uint64_t>& capacities) {
  return plan_iterative(catalog, capacities, true);
}

SlicingPlan plan_top_down(const UnitCatalog& catalog,
                          const std::vector<std::uint64_t>& capacities) {
  return plan_iterative(catalog, capacities, false);
}

Permutation l1_order(const ModelGraph& g) {
  Permutation p = Permutation::identity(g);
  for (const std::size_t l : g.sliceable_layers()) {
    const auto& par = g.params(l);
    const std::size_t units = g.layer(l).units;
    std::vector<double> norm(units, 0.0);
    const auto w = par.weight.data();
    if (g.layer(l).kind == LayerKind::Dense && !par.transposed) {
      const std::size_t cols = par.weight.cols();
      for (std::size_t i = 0; i < w.size(); ++i) norm[i % cols] += std::fabs(w[i]);
    } else {
      const std::size_t per = w.size() / units;
      for (std::size_t i = 0; i < w.size(); ++i) norm[i / per] += std::fabs(w[i]);
    }
    std::vector<std::size_t> order(units);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return norm[a] > norm[b];
    });
    auto& m = p.old_to_new[l];
    m.resize(units);
    for (std::size_t k = 0; k < units; ++k) m[order[k]] = k;
  }
  return p;
}

Permutation random_order(const ModelGraph& g, std::uint64_t seed) {
  Permutation p = Permutation::identity(g);
  std::mt19937_64 rng(seed);
  for (const std::size_t l : g.sliceable_layers()) {
    const std::size_t units = g.layer(l).units;
    std::vector<std::size_t> order(units);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = units; i > 1; --i) {
      std::swap(order[i - 1], order[rng() % i]);
    }
    auto& m = p.old_to_new[l];
    m.resize(units);
    for (std::size_t k = 0; k < units; ++k) m[order[k]] = k;
  }
  return p;
}

BaselineResult plan_baseline(const ModelGraph& g, BaselineStrategy strategy,
                             const std::vector<std::uint64_t>& capacities,
                             std::uint64_t seed) {
  BaselineResult r;
  r.order = strategy == BaselineStrategy::L1EqualShare ? l1_order(g)
                                                       : random_order(g, seed);
  r.plan.heuristic = strategy == BaselineStrategy::L1EqualShare ? "l1" : "random";
  r.plan.seed = seed;
  r.plan.capacities = descending(capacities);

  const auto& layers = g.sliceable_layers();
  std::vector<double> fractions;
  for (const std::size_t l : layers) {
    const std::size_t n = g.layer(l).units;
    for (std::size_t k = 0; k <= n; ++k) {
      fractions.push_back(static_cast<double>(k) / static_cast<double>(n));
    }
  }
  fractions.push_back(1.0);
  std::sort(fractions.begin(), fractions.end());
  fractions.erase(std::unique(fractions.begin(), fractions.end()), fractions.end());

  auto points_at = [&](double f, bool* clamped) {
    Points pts;
    for (const std::size_t l : layers) {
      const std::size_t n = g.layer(l).units;
      auto k = static_cast<std::size_t>(std::floor(f * static_cast<double>(n) + 1e-9));
      if (k == 0) {
        k = 1;
        if (clamped) *clamped = true;
      }
      pts.push_back(std::min(k, n));
    }
    return pts;
  };

  for (const auto cap : r.plan.capacities) {
    // Largest feasible fraction; MACs grow monotonically with the fraction.
    std::size_t lo = 0;
    std::size_t hi = fractions.size();
    while (lo < hi) {
      const std::size_t mid = (lo + hi) / 2;
      const Points pts = points_at(fractions[mid], nullptr);
      if (config_macs(g, &pts) <= cap) {
        lo = mid + 1;
      } else {
        hi = mid;
      }
    }
    if (lo == 0) {
      fail(ErrorKind::Infeasible, "capacity " + std::to_string(cap) +
                                      " cannot hold one unit per layer");
    }
    bool clamped = false;
    r.plan.points.push_back(points_at(fractions[lo - 1], &clamped));
    if (clamped) {
      r.warnings.push_back("capacity " + std::to_string(cap) +
                           ": equal share rounds a layer to 0 units, kept 1");
    }
  }
  r.plan.validate(&g);
  return r;
}

}  // namespace reds
