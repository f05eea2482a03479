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

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "reds/planner.hpp"

namespace reds {
namespace {

constexpr double kTieTolerance = 1e-12;
constexpr std::uint64_t kMaxDpCapacity = std::uint64_t{1} << 28;

struct Reduced {
  std::vector<std::size_t> free;  // original indices, ascending
  std::vector<std::size_t> forced;
  std::uint64_t capacity = 0;     // left after forced items
  std::uint64_t forced_weight = 0;
};

Reduced reduce(const KnapsackInstance& inst) {
  inst.validate();
  Reduced r;
  std::vector<char> state(inst.items.size(), 0);
  for (auto i : inst.forced_in) state[i] = 1;
  for (auto i : inst.excluded) state[i] = 2;
  for (std::size_t i = 0; i < inst.items.size(); ++i) {
    if (state[i] == 1) {
      r.forced.push_back(i);
      r.forced_weight += inst.items[i].weight;
    }
  }
  if (r.forced_weight > inst.capacity) {
    fail(ErrorKind::Infeasible,
         "forced items weigh " + std::to_string(r.forced_weight) +
             " > capacity " + std::to_string(inst.capacity));
  }
  r.capacity = inst.capacity - r.forced_weight;
  for (std::size_t i = 0; i < inst.items.size(); ++i) {
    if (state[i] == 0 && inst.items[i].weight <= r.capacity) r.free.push_back(i);
  }
  return r;
}

KnapsackSolution finish(const KnapsackInstance& inst, std::vector<std::size_t> sel) {
  std::sort(sel.begin(), sel.end());
  KnapsackSolution s;
  s.selected = std::move(sel);
  s.profit = subset_profit(inst.items, s.selected);
  for (auto i : s.selected) s.weight += inst.items[i].weight;
  return s;
}

class BranchAndBound {
 public:
  BranchAndBound(const std::vector<KnapsackItem>& items,
                 std::vector<std::size_t> order, std::uint64_t capacity)
      : items_(items), order_(std::move(order)), capacity_(capacity) {
    current_.reserve(order_.size());
  }

  std::vector<std::size_t> run() {
    best_value_ = 0.0;
    best_.clear();
    dfs(0, 0, 0.0);
    return best_;
  }

 private:
  double bound(std::size_t k, std::uint64_t weight, double value) const {
    std::uint64_t room = capacity_ - weight;
    for (; k < order_.size(); ++k) {
      const auto& it = items_[order_[k]];
      if (it.profit <= 0.0) break;
      if (it.weight <= room) {
        room -= it.weight;
        value += it.profit;
      } else {
        value += it.profit * static_cast<double>(room) / it.weight;
        break;
      }
    }
    return value;
  }

  void dfs(std::size_t k, std::uint64_t weight, double value) {
    if (value > best_value_ + kTieTolerance * std::max(1.0, best_value_)) {
      best_value_ = value;
      best_ = current_;
    }
    if (k == order_.size()) return;
    if (bound(k, weight, value) <=
        best_value_ + kTieTolerance * std::max(1.0, best_value_)) {
      return;
    }
    const auto& it = items_[order_[k]];
    if (it.profit > 0.0 && weight + it.weight <= capacity_) {
      current_.push_back(order_[k]);
      dfs(k + 1, weight + it.weight, value + it.profit);
      current_.pop_back();
    }
    dfs(k + 1, weight, value);
  }

  const std::vector<KnapsackItem>& items_;
  std::vector<std::size_t> order_;
  std::uint64_t capacity_;
  std::vector<std::size_t> current_;
  std::vector<std::size_t> best_;
  double best_value_ = 0.0;
};

}  // namespace

void KnapsackInstance::validate() const {
  std::vector<char> state(items.size(), 0);
  for (const auto& it : items) {
    if (it.weight == 0) fail(ErrorKind::Config, "item weights must be positive");
    if (!std::isfinite(it.profit)) fail(ErrorKind::Config, "non-finite profit");
  }
  for (auto i : forced_in) {
    if (i >= items.size()) fail(ErrorKind::Bounds, "forced item out of range");
    state[i] = 1;
  }
  for (auto i : excluded) {
    if (i >= items.size()) fail(ErrorKind::Bounds, "excluded item out of range");
    if (state[i] == 1) {
      fail(ErrorKind::Config, "item " + std::to_string(i) +
                                  " is both forced and excluded");
    }
  }
}

double subset_profit(const std::vector<KnapsackItem>& items,
                     const std::vector<std::size_t>& subset) {
  std::vector<std::size_t> s = subset;
  std::sort(s.begin(), s.end());
  double p = 0.0;
  for (auto i : s) p += items.at(i).profit;
  return p;
}

KnapsackSolution solve_exact(const KnapsackInstance& inst,
                             const SolverLimits& limits) {
  const Reduced r = reduce(inst);
  std::vector<std::size_t> sel = r.forced;
  if (r.free.empty() || r.capacity == 0) return finish(inst, std::move(sel));

  std::uint64_t gcd = 0;
  for (auto i : r.free) gcd = std::gcd(gcd, inst.items[i].weight);
  const std::uint64_t cap = r.capacity / gcd;
  const std::size_t n = r.free.size();
  const bool dp_ok = cap < kMaxDpCapacity &&
                     static_cast<double>(n) * static_cast<double>(cap + 1) <=
                         static_cast<double>(limits.max_table_bits);
  if (!dp_ok) {
    return solve_branch_and_bound(inst);
  }

  const std::size_t width = static_cast<std::size_t>(cap) + 1;
  const std::size_t words = (width + 63) / 64;
  std::vector<double> best(width, 0.0);
  std::vector<std::uint64_t> keep(n * words, 0);
  for (std::size_t k = n; k-- > 0;) {
    const auto& it = inst.items[r.free[k]];
    const std::size_t w = static_cast<std::size_t>(it.weight / gcd);
    std::uint64_t* row = keep.data() + k * words;
    for (std::size_t c = width; c-- > w;) {
      const double incl = best[c - w] + it.profit;
      const double excl = best[c];
      if (incl >= excl - kTieTolerance * std::max(1.0, std::fabs(excl))) {
        row[c / 64] |= std::uint64_t{1} << (c % 64);
        best[c] = std::max(incl, excl);
      }
    }
  }
  std::size_t c = width - 1;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t w =
        static_cast<std::size_t>(inst.items[r.free[k]].weight / gcd);
    if (c >= w && (keep[k * words + c / 64] >> (c % 64) & 1U)) {
      sel.push_back(r.free[k]);
      c -= w;
    }
  }
  return finish(inst, std::move(sel));
}

KnapsackSolution solve_branch_and_bound(const KnapsackInstance& inst) {
  const Reduced r = reduce(inst);
  std::vector<std::size_t> order = r.free;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& x = inst.items[a];
    const auto& y = inst.items[b];
    return x.profit * static_cast<double>(y.weight) >
           y.profit * static_cast<double>(x.weight);
  });
  BranchAndBound bb(inst.items, std::move(order), r.capacity);
  std::vector<std::size_t> sel = bb.run();
  sel.insert(sel.end(), r.forced.begin(), r.forced.end());
  return finish(inst, std::move(sel));
}

namespace {

std::vector<std::size_t> order_by_capacity(const std::vector<std::uint64_t>& caps,
                                           bool ascending) {
  std::vector<std::size_t> idx(caps.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return ascending ? caps[a] < caps[b] : caps[a] > caps[b];
  });
  return idx;
}

KnapsackSolution solve_stage(const KnapsackInstance& inst, std::size_t stage) {
  try {
    return solve_exact(inst);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::Infeasible) throw;
    fail(ErrorKind::Infeasible, "stage " + std::to_string(stage) +
                                    " (capacity " +
                                    std::to_string(inst.capacity) +
                                    "): " + e.what());
  }
}

}  // namespace

std::vector<KnapsackSolution> iterate_bottom_up(
    const std::vector<KnapsackItem>& items,
    const std::vector<std::uint64_t>& capacities,
    const std::vector<std::size_t>& forced_in) {
  std::vector<KnapsackSolution> out(capacities.size());
  std::vector<std::size_t> frozen = forced_in;
  std::size_t stage = 0;
  for (const auto k : order_by_capacity(capacities, true)) {
    KnapsackInstance inst{items, capacities[k], frozen, {}};
    out[k] = solve_stage(inst, stage++);
    frozen = out[k].selected;
  }
  return out;
}

std::vector<KnapsackSolution> iterate_top_down(
    const std::vector<KnapsackItem>& items,
    const std::vector<std::uint64_t>& capacities,
    const std::vector<std::size_t>& forced_in) {
  std::vector<KnapsackSolution> out(capacities.size());
  std::vector<std::size_t> excluded;
  std::size_t stage = 0;
  for (const auto k : order_by_capacity(capacities, false)) {
    KnapsackInstance inst{items, capacities[k], forced_in, excluded};
    out[k] = solve_stage(inst, stage++);
    std::vector<char> in(items.size(), 0);
    for (auto i : out[k].selected) in[i] = 1;
    excluded.clear();
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (!in[i]) excluded.push_back(i);
    }
  }
  return out;
}

}  // namespace reds
