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

#include "reds/boundslab.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <json.hpp>

namespace reds {
namespace {

constexpr double kRatioSlack = 1e-9;

// Smallest power of ten (at least 10) turning every value into an integer.
double integer_scale(const std::vector<double>& values) {
  for (double s = 10.0; s <= 1e9; s *= 10.0) {
    bool ok = true;
    for (const double v : values) {
      const double x = v * s;
      if (std::fabs(x - std::round(x)) > 1e-6 * std::max(1.0, std::fabs(x))) {
        ok = false;
        break;
      }
    }
    if (ok) return s;
  }
  fail(ErrorKind::Config, "instance parameters have no decimal scale");
}

std::uint64_t as_weight(double v) {
  const double r = std::round(v);
  if (r < 1.0) fail(ErrorKind::Config, "instance weights must be positive");
  return static_cast<std::uint64_t>(r);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t i) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (i + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double safe_ratio(double num, double den) { return den > 0.0 ? num / den : 1.0; }

}  // namespace

KnapsackSolution brute_opt(const std::vector<KnapsackItem>& items,
                           std::uint64_t capacity) {
  const std::size_t n = items.size();
  if (n > kBruteForceLimit) {
    fail(ErrorKind::Size, std::to_string(n) + " items exceed the exhaustive limit of " +
                              std::to_string(kBruteForceLimit));
  }
  KnapsackSolution best;
  std::uint64_t best_mask = 0;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
    std::uint64_t w = 0;
    double p = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask >> i & 1U) {
        w += items[i].weight;
        p += items[i].profit;
      }
    }
    if (w <= capacity && p > best.profit) {
      best.profit = p;
      best.weight = w;
      best_mask = mask;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (best_mask >> i & 1U) best.selected.push_back(i);
  }
  return best;
}

SplitItemResult find_split_item(const std::vector<KnapsackItem>& items,
                                const std::vector<std::size_t>& ordering,
                                std::uint64_t capacity) {
  SplitItemResult r;
  r.ordering = ordering;
  std::uint64_t before = 0;
  for (std::size_t pos = 0; pos < ordering.size(); ++pos) {
    if (before >= capacity) break;
    const std::uint64_t w = items.at(ordering[pos]).weight;
    if (before + w > capacity) {
      r.split_index = pos;
      break;
    }
    before += w;
  }
  return r;
}

BoundInstance bottom_up_tight_instance(double P, double eps, double c) {
  if (!(P > 0.0) || !(eps > 0.0) || !(c > 0.0)) {
    fail(ErrorKind::Config, "tight instance parameters must be positive");
  }
  const double s = integer_scale({c / 3.0 + eps, c / 3.0, c / 2.0});
  BoundInstance inst;
  inst.name = "bottom-up tight (P=" + std::to_string(P) + ", eps=" + std::to_string(eps) + ")";
  inst.items = {{P + eps, as_weight((c / 3.0 + eps) * s)},
                {P, as_weight(c / 3.0 * s)},
                {P, as_weight(c / 3.0 * s)},
                {P, as_weight(c / 3.0 * s)}};
  inst.capacity = as_weight(c * s);
  return inst;
}

BoundInstance top_down_tight_instance(double P, double eps, double c) {
  if (!(P > 0.0) || !(eps > 0.0) || !(c > 0.0)) {
    fail(ErrorKind::Config, "tight instance parameters must be positive");
  }
  const double s = integer_scale({c / 3.0, c / 2.0});
  BoundInstance inst;
  inst.name = "top-down tight (P=" + std::to_string(P) + ", eps=" + std::to_string(eps) + ")";
  const auto third = as_weight(c / 3.0 * s);
  inst.items = {{P + eps, third}, {P + eps, third}, {P + eps, third},
                {2.0 * P, as_weight(c / 2.0 * s)}};
  inst.capacity = as_weight(c * s);
  return inst;
}

BoundInstance bottom_up_bad_instance() {
  return BoundInstance{"bottom-up unrestricted", {{2.0, 1}, {100.0, 10}}, 10};
}

BoundInstance top_down_bad_instance() {
  return BoundInstance{"top-down unrestricted", {{100.0, 10}, {99.0, 5}}, 10};
}

BoundReport bottom_up_report(const BoundInstance& inst) {
  const std::uint64_t c = inst.capacity;
  BoundReport r;
  r.instance = inst.name;
  r.heuristic = "bu";
  r.bound = 2.0 / 3.0;
  const auto opt_c = brute_opt(inst.items, c);
  r.opt_c = opt_c.profit;
  r.opt_half = brute_opt(inst.items, c / 2).profit;
  const auto stages = iterate_bottom_up(inst.items, {c / 2, c});
  r.heuristic_profit = stages[1].profit;
  r.ratio = safe_ratio(r.heuristic_profit, r.opt_c);
  r.passed = r.ratio >= r.bound - kRatioSlack;

  // Order the optimum as in the worst-case argument: shared with the first
  // stage, then items the second stage skipped, then items it added.
  std::vector<char> first(inst.items.size(), 0);
  std::vector<char> added(inst.items.size(), 0);
  for (auto i : stages[0].selected) first[i] = 1;
  for (auto i : stages[1].selected) {
    if (!first[i]) added[i] = 1;
  }
  std::vector<std::size_t> order;
  for (auto i : opt_c.selected) if (first[i]) order.push_back(i);
  for (auto i : opt_c.selected) if (!first[i] && !added[i]) order.push_back(i);
  for (auto i : opt_c.selected) if (!first[i] && added[i]) order.push_back(i);
  const auto split = find_split_item(inst.items, order, c / 2);
  r.no_split_item = !split.split_index.has_value();
  if (r.no_split_item) {
    r.no_split_matches =
        std::fabs(r.heuristic_profit - r.opt_c) <= 1e-9 * std::max(1.0, r.opt_c);
  }
  return r;
}

BoundReport top_down_report(const BoundInstance& inst) {
  const std::uint64_t c = inst.capacity;
  BoundReport r;
  r.instance = inst.name;
  r.heuristic = "td";
  r.bound = 0.5;
  r.opt_c = brute_opt(inst.items, c).profit;
  r.opt_half = brute_opt(inst.items, c / 2).profit;
  const auto stages = iterate_top_down(inst.items, {c, c / 2});
  r.heuristic_profit = stages[1].profit;
  r.ratio = safe_ratio(r.heuristic_profit, r.opt_half);
  r.passed = r.ratio >= r.bound - kRatioSlack;
  return r;
}

BoundInstance random_bound_instance(std::uint64_t seed, std::size_t max_items,
                                    bool restrict_weights) {
  if (max_items < 2 || max_items > 20) {
    fail(ErrorKind::Config, "max_items must lie in 2..20");
  }
  std::mt19937_64 rng(seed);
  BoundInstance inst;
  inst.name = "random seed " + std::to_string(seed);
  inst.capacity = 2 * std::uniform_int_distribution<std::uint64_t>(10, 100)(rng);
  const std::size_t n = std::uniform_int_distribution<std::size_t>(2, max_items)(rng);
  const std::uint64_t wmax = restrict_weights ? inst.capacity / 2 : inst.capacity;
  std::uniform_int_distribution<std::uint64_t> weight(1, wmax);
  std::uniform_real_distribution<double> profit(1.0, 100.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto w = weight(rng);
    inst.items.push_back(KnapsackItem{profit(rng), w});
  }
  return inst;
}

std::vector<BoundReport> verify_bounds(const VerifyOptions& o) {
  std::vector<BoundReport> out;
  for (std::size_t i = 0; i < o.instances; ++i) {
    const auto inst = random_bound_instance(mix_seed(o.seed, i), o.max_items,
                                            o.restrict_weights);
    out.push_back(bottom_up_report(inst));
    out.push_back(top_down_report(inst));
  }
  const double P = 10.0;
  const double eps = P * o.tight_eps_fraction;
  out.push_back(bottom_up_report(bottom_up_tight_instance(P, eps, 6.0)));
  out.push_back(top_down_report(top_down_tight_instance(P, eps, 6.0)));
  return out;
}

std::string reports_to_json(const std::vector<BoundReport>& reports) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : reports) {
    arr.push_back({{"instance", r.instance},
                   {"heuristic", r.heuristic},
                   {"opt_c", r.opt_c},
                   {"opt_half", r.opt_half},
                   {"heuristic_profit", r.heuristic_profit},
                   {"ratio", r.ratio},
                   {"bound", r.bound},
                   {"passed", r.passed},
                   {"no_split_item", r.no_split_item},
                   {"no_split_matches", r.no_split_matches}});
  }
  return arr.dump(2) + "\n";
}

}  // namespace reds
