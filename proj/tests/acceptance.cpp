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

// Release gate: one PASS/FAIL line per acceptance criterion. Exit status is
// nonzero when any criterion fails. Every tolerance lives in `tol` below.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "reds/boundslab.hpp"
#include "reds/cachesim.hpp"
#include "reds/finetune.hpp"
#include "reds/importance.hpp"
#include "reds/nest.hpp"
#include "reds/pipeline.hpp"
#include "reds/planner.hpp"
#include "reds/tensor.hpp"

namespace {

using namespace reds;
using Clock = std::chrono::steady_clock;

namespace tol {
constexpr std::size_t kKnapsackInstances = 500;
constexpr std::size_t kKnapsackMaxItems = 15;
constexpr double kKnapsackSeconds = 10.0;
constexpr std::size_t kBoundInstances = 1000;
constexpr double kBuTightLo = 0.666, kBuTightHi = 0.68;
constexpr double kTdTightLo = 0.5, kTdTightHi = 0.51;
constexpr std::size_t kDwInstances = 200;
constexpr std::size_t kDwMaxDepth = 3;
constexpr std::size_t kDwMaxWidth = 6;
constexpr double kDwSeconds = 30.0;
constexpr std::size_t kPermutationInputs = 100;
constexpr double kLogitMaxAbs = 1e-5;
constexpr std::size_t kSwitchCalls = 200;
constexpr double kGradRelError = 1e-4;
constexpr std::size_t kGradPicksPerKind = 5;
constexpr double kOptimizedFloor = 0.97;
constexpr double kLearnableFloor = 0.95;
constexpr double kInversionPoints = 0.01;
constexpr double kMonotoneSeconds = 600.0;
constexpr double kPlannerSeconds = 60.0;
}  // namespace tol

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// Random weights at He scale with random biases and batchnorm state, so
// logits stay O(1) and float rounding stays far below the logit tolerance.
ModelGraph random_model(Arch arch, ModelSize size, Shape3 shape, std::size_t classes,
                        oracle::Gen& gen) {
  ModelGraph g = build_reference(arch, size, shape, classes);
  oracle::randomize(g, gen, 0.1);
  ModelGraph he = g;
  initialize_weights(he, gen.index(0, 1U << 30));
  for (std::size_t l = 0; l < g.num_layers(); ++l) g.params(l).weight = he.params(l).weight;
  return g;
}

GradStore random_grads(const ModelGraph& g, oracle::Gen& gen) {
  GradStore s(g);
  for (auto& lg : s.layers)
    for (Tensor* t : {&lg.weight, &lg.bias, &lg.gamma, &lg.beta})
      for (auto& v : t->mutable_data()) v = static_cast<float>(gen.normal());
  s.minibatch_count = 1;
  return s;
}

struct Permuted {
  ModelGraph graph;
  std::vector<UnitScore> scores;
};

Permuted permute_by_random_scores(const ModelGraph& g, oracle::Gen& gen) {
  const auto scores = score_units(g, random_grads(g, gen));
  auto res = permute_descending(g, scores);
  return {std::move(res.graph), permute_scores(scores, res.permutation)};
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::fabs(double(a.data()[i]) - double(b.data()[i])));
  }
  return m;
}

std::vector<std::size_t> argmax_rows(const Tensor& t) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < t.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < t.cols(); ++j)
      if (t(i, j) > t(i, best)) best = j;
    out.push_back(best);
  }
  return out;
}

// ---------------------------------------------------------------------------

Outcome knapsack_exactness() {
  const auto t0 = Clock::now();
  oracle::Gen gen(101);
  std::size_t mismatches = 0;
  for (std::size_t i = 0; i < tol::kKnapsackInstances; ++i) {
    KnapsackInstance inst;
    inst.items = oracle::random_items(gen, gen.index(1, tol::kKnapsackMaxItems), 40);
    inst.capacity = gen.index(0, 150);
    const auto sol = solve_exact(inst);
    const auto want = oracle::brute_knapsack(inst.items, inst.capacity);
    std::uint64_t w = 0;
    for (auto s : sol.selected) w += inst.items[s].weight;
    if (subset_profit(inst.items, sol.selected) != want.profit || w > inst.capacity) ++mismatches;
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && secs < tol::kKnapsackSeconds,
          std::to_string(mismatches) + " mismatches in " +
              std::to_string(tol::kKnapsackInstances) + " instances, " + fmt("%.2f s", secs)};
}

struct BoundTally {
  std::size_t bu_violations = 0;
  std::size_t td_violations = 0;
};

const BoundTally& bound_tally() {
  static const BoundTally tally = [] {
    VerifyOptions o;
    o.instances = tol::kBoundInstances;
    o.seed = 202;
    o.restrict_weights = true;
    BoundTally t;
    const auto reports = verify_bounds(o);
    for (std::size_t i = 0; i < 2 * tol::kBoundInstances; ++i) {
      const auto& r = reports[i];
      if (r.passed) continue;
      (r.heuristic == "bu" ? t.bu_violations : t.td_violations) += 1;
    }
    return t;
  }();
  return tally;
}

Outcome bottom_up_bound() {
  const auto tight = bottom_up_report(bottom_up_tight_instance(10.0, 0.1, 6.0));
  const auto v = bound_tally().bu_violations;
  return {v == 0 && tight.ratio > tol::kBuTightLo && tight.ratio < tol::kBuTightHi,
          std::to_string(v) + " violations of 2/3 in " + std::to_string(tol::kBoundInstances) +
              " instances; tight ratio " + fmt("%.5f", tight.ratio)};
}

Outcome top_down_bound() {
  const auto tight = top_down_report(top_down_tight_instance(10.0, 0.1, 6.0));
  const auto v = bound_tally().td_violations;
  return {v == 0 && tight.ratio > tol::kTdTightLo && tight.ratio < tol::kTdTightHi,
          std::to_string(v) + " violations of 1/2 in " + std::to_string(tol::kBoundInstances) +
              " instances; tight ratio " + fmt("%.5f", tight.ratio)};
}

Outcome depthwise_solver() {
  const auto t0 = Clock::now();
  oracle::Gen gen(303);
  std::size_t mismatches = 0;
  for (std::size_t i = 0; i < tol::kDwInstances; ++i) {
    const auto inst = oracle::random_dw_instance(gen, gen.index(1, tol::kDwMaxDepth), tol::kDwMaxWidth);
    const auto sol = solve_depthwise(inst);
    const auto want = oracle::enumerate_tuples(inst);
    if (sol.profit != want.profit || oracle::tuple_profit(inst, sol.counts) != want.profit ||
        oracle::tuple_macs(inst, sol.counts) > inst.capacity) {
      ++mismatches;
    }
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && secs < tol::kDwSeconds,
          std::to_string(mismatches) + " mismatches in " + std::to_string(tol::kDwInstances) +
              " instances, " + fmt("%.2f s", secs)};
}

Outcome permutation_invariance() {
  oracle::Gen gen(404);
  double worst = 0.0;
  std::size_t argmax_changes = 0;
  bool moved = true;
  for (Arch a : {Arch::DNN, Arch::CNN, Arch::DSCNN}) {
    const ModelGraph g = random_model(a, ModelSize::S, Shape3{12, 10, 1}, 10, gen);
    const auto p = permute_by_random_scores(g, gen);
    moved &= !descending_permutation(g, score_units(g, random_grads(g, gen))).is_identity();
    const Tensor x = oracle::random_inputs(g, tol::kPermutationInputs, gen);
    const Tensor before = forward(g, x);
    const Tensor after = forward(p.graph, x);
    worst = std::max(worst, max_abs_diff(before, after));
    const auto ab = argmax_rows(before), aa = argmax_rows(after);
    for (std::size_t i = 0; i < ab.size(); ++i) argmax_changes += ab[i] != aa[i];
  }
  return {moved && worst <= tol::kLogitMaxAbs && argmax_changes == 0,
          "max |logit diff| " + fmt("%.2e", worst) + ", argmax changes " +
              std::to_string(argmax_changes)};
}

RedsModel planned_model(Arch a, oracle::Gen& gen) {
  const ModelGraph g = random_model(a, ModelSize::S, Shape3{12, 10, 1}, 10, gen);
  auto p = permute_by_random_scores(g, gen);
  const auto caps = capacities_from_fractions(p.graph, {1.0, 0.75, 0.5, 0.25});
  SlicingPlan plan = plan_bottom_up(build_catalog(p.graph, p.scores), caps);
  return RedsModel(std::move(p.graph), std::move(plan));
}

Outcome slicing_equivalence() {
  oracle::Gen gen(505);
  double worst = 0.0;
  std::size_t budget_breaks = 0, masked_breaks = 0, rows = 0;
  for (Arch a : {Arch::DNN, Arch::CNN, Arch::DSCNN}) {
    RedsModel m = planned_model(a, gen);
    const std::size_t b = 8;
    const Tensor x = oracle::random_inputs(m.graph(), b, gen);
    for (std::size_t r = 0; r < m.rows(); ++r, ++rows) {
      m.activate(r);
      std::uint64_t sliced_macs = 0, masked_macs = 0;
      const Tensor sliced = m.infer(x, &sliced_macs);
      const Tensor masked = m.masked_infer(r, x, &masked_macs);
      const Tensor cut =
          forward(oracle::truncate_model(m.graph(), m.plan().points[r], &m.row_stats(r)), x);
      worst = std::max({worst, max_abs_diff(sliced, masked), max_abs_diff(sliced, cut),
                        max_abs_diff(masked, cut)});
      if (sliced_macs > b * m.plan().capacities[r]) ++budget_breaks;
      if (masked_macs != b * total_macs(m.graph())) ++masked_breaks;
    }
  }
  return {worst <= tol::kLogitMaxAbs && budget_breaks == 0 && masked_breaks == 0,
          std::to_string(rows) + " rows, max |diff| " + fmt("%.2e", worst) + ", over budget " +
              std::to_string(budget_breaks) + ", masked count off " + std::to_string(masked_breaks)};
}

Outcome adaptation_cost() {
  oracle::Gen gen(606);
  std::size_t bad = 0, calls = 0;
  for (Arch a : {Arch::DNN, Arch::CNN, Arch::DSCNN}) {
    for (Layout layout : {Layout::Standard, Layout::CacheOptimized}) {
      RedsModel m = planned_model(a, gen);
      m.set_layout(layout);
      std::uint64_t dense = 0;
      for (const auto& s : m.graph().layers()) dense += s.kind == LayerKind::Dense;
      const std::uint64_t flags = layout == Layout::CacheOptimized ? dense : 0;
      for (std::size_t i = 0; i < tol::kSwitchCalls; ++i, ++calls) {
        const auto s = m.activate(gen.index(0, m.rows() - 1));
        bad += s.weights_copied != 0 ||
               s.integers_updated != m.graph().sliceable_layers().size() || s.flag_bits != flags;
      }
    }
  }
  return {bad == 0, std::to_string(calls) + " switches, " + std::to_string(bad) +
                        " copied weights or touched other than one integer per sliceable layer"};
}

Outcome gradient_correctness() {
  oracle::Gen gen(707);
  struct KindTally {
    std::size_t checked = 0;
    double worst = 0.0;
  };
  std::map<LayerKind, KindTally> kinds;
  for (Arch a : {Arch::DNN, Arch::CNN, Arch::DSCNN}) {
    const ModelGraph g = random_model(a, ModelSize::S, Shape3{6, 5, 2}, 4, gen);
    Minibatch mb{oracle::random_inputs(g, 3, gen), {}};
    for (std::size_t i = 0; i < 3; ++i) mb.labels.push_back(int(gen.index(0, g.classes() - 1)));
    const auto res = backward(g, mb);
    std::map<LayerKind, std::size_t> taken;
    for (int attempt = 0; attempt < 4000; ++attempt) {
      const std::size_t l = gen.index(0, g.num_layers() - 1);
      const LayerKind k = g.layer(l).kind;
      const bool trainable = has_weights(k) || k == LayerKind::BatchNorm;
      if (!trainable || taken[k] >= tol::kGradPicksPerKind) continue;
      oracle::ParamRef r{l, k == LayerKind::BatchNorm ? oracle::Which::Gamma : oracle::Which::Weight, 0};
      const Tensor& gt = oracle::grad_tensor(res.grads, r);
      r.index = gen.index(0, gt.size() - 1);
      const double bp = gt.data()[r.index];
      if (std::fabs(bp) < 1e-3) continue;
      const double fd = oracle::central_difference(g, mb, r, nullptr, BnMode::Inference);
      const double fd_half = oracle::central_difference(g, mb, r, nullptr, BnMode::Inference, 3e-5);
      if (oracle::relative_error(fd, fd_half) > 1e-6) continue;  // ReLU kink inside the stencil
      ++taken[k];
      auto& t = kinds[k];
      ++t.checked;
      t.worst = std::max(t.worst, oracle::relative_error(bp, fd));
    }
  }
  bool pass = !kinds.empty();
  std::string detail;
  for (const auto& [k, t] : kinds) {
    pass &= t.checked >= tol::kGradPicksPerKind && t.worst < tol::kGradRelError;
    detail += to_string(k) + " " + std::to_string(t.checked) + " @" + fmt("%.1e", t.worst) + "; ";
  }
  for (LayerKind k : {LayerKind::Dense, LayerKind::Conv2D, LayerKind::DepthwiseConv2D,
                      LayerKind::PointwiseConv2D, LayerKind::BatchNorm}) {
    if (!kinds.count(k)) {
      pass = false;
      detail += to_string(k) + " unchecked; ";
    }
  }
  return {pass, detail + "max relative error " + fmt("%.0e", tol::kGradRelError)};
}

Outcome cache_direction() {
  BenchSweep sweep;
  const CacheConfig cfg;
  const auto rows = bench_report(sweep, cfg);
  std::size_t losses = 0, below_floor = 0, points = 0;
  double lowest = 1.0;
  for (const auto& basic : rows) {
    if (basic.mode != MatmulMode::Basic) continue;
    for (const auto& opt : rows) {
      if (opt.mode != MatmulMode::Optimized || opt.m != basic.m || opt.n != basic.n ||
          opt.elem_bytes != basic.elem_bytes || opt.slice != basic.slice)
        continue;
      ++points;
      losses += opt.stats.hit_rate() < basic.stats.hit_rate();
      below_floor += opt.stats.hit_rate() < tol::kOptimizedFloor;
      lowest = std::min(lowest, opt.stats.hit_rate());
    }
  }
  // The two-by-three example: X is 2x2, W is 2x3.
  const std::vector<std::size_t> basic_order{0, 3, 1, 4, 2, 5, 0, 3};
  const std::vector<std::size_t> opt_order{0, 1, 0, 1, 0, 1, 2, 3};
  AccessRecorder rb, ro;
  matmul_basic(Tensor({2, 2}), Tensor({2, 3}), rb);
  matmul_optimized(Tensor({2, 2}), transpose(Tensor({2, 3})), ro);
  const bool basic_ok = std::equal(basic_order.begin(), basic_order.end(), rb.reads.begin());
  const bool opt_ok = std::equal(opt_order.begin(), opt_order.end(), ro.reads.begin());
  std::ostringstream seen;
  for (std::size_t i = 0; i < 8; ++i) seen << (i ? "," : "") << ro.reads[i];
  return {points > 0 && losses == 0 && below_floor == 0 && basic_ok && opt_ok,
          std::to_string(points) + " points, optimized below basic " + std::to_string(losses) +
              ", below floor " + std::to_string(below_floor) + " (lowest " +
              fmt("%.5f", lowest) + "), basic order " + (basic_ok ? "ok" : "differs") +
              ", optimized order " + (opt_ok ? "ok" : "differs: " + seen.str())};
}

struct TrainedRun {
  RunConfig cfg;
  Dataset data;
  ScoreResult scored;
  double seconds = 0.0;
  double learnable = 0.0;
};

RunConfig monotone_config() {
  RunConfig c;
  c.seed = 808;
  c.arch = Arch::DNN;
  c.capacities = {100, 75, 50, 25};
  c.data.blobs.classes = 10;
  c.data.blobs.per_class = 150;
  c.data.blobs.shape = Shape3{8, 8, 1};
  c.data.blobs.separation = 5.0;
  c.train.use_adam = false;
  c.train.batch_size = 32;
  c.train.epochs = 20;
  c.train.schedule = {{~std::uint64_t{0}, 0.05f}};
  c.finetune = c.train;
  c.finetune.epochs = 10;
  c.finetune.schedule = {{~std::uint64_t{0}, 0.02f}};
  c.importance_batches = 20;
  return c;
}

// Nearest class mean over the training split: a linear classifier.
double nearest_mean_accuracy(const Dataset& d) {
  const std::size_t dim = d.sample_shape.size();
  std::vector<std::vector<double>> mean(d.classes, std::vector<double>(dim));
  std::vector<std::size_t> count(d.classes);
  for (auto i : d.train) {
    ++count[d.labels[i]];
    for (std::size_t k = 0; k < dim; ++k) mean[d.labels[i]][k] += d.samples(i, k);
  }
  for (std::size_t c = 0; c < d.classes; ++c)
    for (auto& v : mean[c]) v /= std::max<std::size_t>(1, count[c]);
  std::size_t right = 0;
  for (auto i : d.test) {
    std::size_t best = 0;
    double best_d = INFINITY;
    for (std::size_t c = 0; c < d.classes; ++c) {
      double s = 0.0;
      for (std::size_t k = 0; k < dim; ++k) s += std::pow(d.samples(i, k) - mean[c][k], 2);
      if (s < best_d) {
        best_d = s;
        best = c;
      }
    }
    right += int(best) == d.labels[i];
  }
  return double(right) / double(d.test.size());
}

Outcome nested_monotone(TrainedRun& run) {
  const auto t0 = Clock::now();
  run.cfg = monotone_config();
  run.data = load_dataset(run.cfg);
  run.learnable = nearest_mean_accuracy(run.data);
  const auto trained = cmd_train(run.cfg, run.data);
  run.scored = cmd_score(run.cfg, trained.graph, run.data);
  PlanResult planned = cmd_plan(run.cfg, run.scored);
  bool nested = true;
  const auto& pts = planned.plan.points;
  for (std::size_t r = 1; r < pts.size(); ++r)
    for (std::size_t k = 0; k < pts[r].size(); ++k) nested &= pts[r][k] <= pts[r - 1][k];
  auto tuned = cmd_finetune(run.cfg, run.data, std::move(planned.model), std::move(planned.plan));
  auto rows = cmd_eval(tuned.model, run.data);
  run.seconds = seconds_since(t0);
  std::sort(rows.begin(), rows.end(),
            [](const EvalRow& a, const EvalRow& b) { return a.capacity_macs < b.capacity_macs; });
  std::size_t inversions = 0;
  bool small_drops = true;
  std::string accs;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    accs += (i ? " " : "") + fmt("%.3f", rows[i].accuracy);
    if (i && rows[i].accuracy < rows[i - 1].accuracy) {
      ++inversions;
      small_drops &= rows[i - 1].accuracy - rows[i].accuracy <= tol::kInversionPoints;
    }
  }
  const bool pass = nested && run.learnable >= tol::kLearnableFloor && !tuned.log.diverged &&
                    inversions <= 1 && small_drops && run.seconds < tol::kMonotoneSeconds;
  return {pass, std::string(nested ? "nested" : "NOT nested") + ", linear probe " +
                    fmt("%.3f", run.learnable) + ", accuracy by capacity [" + accs + "], " +
                    std::to_string(inversions) + " inversions, " + fmt("%.1f s", run.seconds)};
}

Outcome planner_speed() {
  oracle::Gen gen(909);
  const ModelGraph g = build_reference(Arch::DSCNN, ModelSize::L, Shape3{49, 10, 1}, 12);
  const auto p = permute_by_random_scores(g, gen);
  const auto caps = capacities_from_fractions(p.graph, {1.0, 0.75, 0.5, 0.25});
  const auto t0 = Clock::now();
  const auto catalog = build_catalog(p.graph, p.scores);
  const auto plan = plan_bottom_up(catalog, caps);
  const double secs = seconds_since(t0);
  std::size_t items = 0;
  for (const auto& l : catalog.profits) items += l.size();
  bool ok = plan.rows() == caps.size();
  for (std::size_t r = 0; ok && r < plan.rows(); ++r) ok &= config_macs(p.graph, &plan.points[r]) <= caps[r];
  return {ok && secs < tol::kPlannerSeconds,
          std::to_string(items) + " units, " + std::to_string(plan.rows()) + " rows in " +
              fmt("%.2f s", secs)};
}

Outcome fewshot_harness() {
  TrainedRun run;
  run.cfg = monotone_config();
  run.cfg.arch = Arch::CNN;
  run.cfg.train.epochs = 5;
  run.data = load_dataset(run.cfg);
  run.scored = cmd_score(run.cfg, cmd_train(run.cfg, run.data).graph, run.data);
  const auto caps = capacities_from_fractions(run.scored.permuted, {1.0, 0.75, 0.5, 0.25});
  TrainConfig cfg = run.cfg.finetune;
  cfg.seed = 1212;
  const std::vector<std::size_t> shots{10};
  const auto a = compare_bu_td(run.scored.permuted, run.scored.scores, caps, run.data, shots, cfg);
  const auto b = compare_bu_td(run.scored.permuted, run.scored.scores, caps, run.data, shots, cfg);
  std::ostringstream sa, sb;
  a.write_csv(sa);
  b.write_csv(sb);
  bool paired = a.shots.size() == shots.size();
  std::string deltas;
  for (const auto& s : a.shots) {
    paired &= !s.bu_curve.empty() && s.bu_curve.size() == s.td_curve.size();
    deltas += std::to_string(s.shots) + " shots: mean BU-TD " + fmt("%+.4f", s.mean_delta) + "; ";
  }
  const auto cat = build_catalog(run.scored.permuted, run.scored.scores);
  const bool distinct = plan_bottom_up(cat, caps).points != plan_top_down(cat, caps).points;
  deltas += distinct ? "plans differ; " : "plans coincide; ";
  const bool same = sa.str() == sb.str();
  return {paired && same, deltas + (same ? "repeat identical" : "repeat differs")};
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int id, const char* name, const std::function<Outcome()>& fn) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s %2d %s: %s\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str());
    std::fflush(stdout);
  };
  report(1, "knapsack exactness", knapsack_exactness);
  report(2, "bottom-up two-thirds bound", bottom_up_bound);
  report(3, "top-down one-half bound", top_down_bound);
  report(4, "depthwise solver exactness", depthwise_solver);
  report(5, "permutation invariance", permutation_invariance);
  report(6, "slicing equivalence", slicing_equivalence);
  report(7, "adaptation cost", adaptation_cost);
  report(8, "gradient correctness", gradient_correctness);
  report(9, "cache direction", cache_direction);
  report(10, "nestedness and monotone quality", [] {
    TrainedRun run;
    return nested_monotone(run);
  });
  report(11, "planner speed", planner_speed);
  report(12, "few-shot bottom-up vs top-down harness", fewshot_harness);
  std::printf("%d of 12 criteria failed\n", failures);
  return failures ? 1 : 0;
}
