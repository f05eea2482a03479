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

#include "reds/finetune.hpp"

#include <cmath>
#include <memory>
#include <ostream>

namespace reds {
namespace {

bool grads_finite(const GradStore& g) {
  for (const auto& l : g.layers) {
    for (const Tensor* t : {&l.weight, &l.bias, &l.gamma, &l.beta}) {
      for (const float v : t->data()) {
        if (!std::isfinite(v)) return false;
      }
    }
  }
  return true;
}

struct Checkpoint {
  std::vector<LayerParams> params;
  std::vector<BnStatsSet> bn;
};

Checkpoint snapshot(const RedsModel& m) {
  return Checkpoint{m.graph().all_params(), m.all_row_stats()};
}

void restore(RedsModel& m, const Checkpoint& c) {
  m.mutable_graph().all_params() = c.params;
  m.all_row_stats() = c.bn;
}

double validation_loss(const RedsModel& m, std::size_t row, const Dataset& data,
                       const std::vector<std::size_t>& idx) {
  if (idx.empty()) return 0.0;
  BackwardOptions o;
  o.points = &m.plan().points[row];
  BnStatsSet stats = m.row_stats(row);
  o.bn_stats = &stats;
  return evaluate_loss(m.graph(), gather(data, idx), o);
}

FinetuneLog run_joint(RedsModel& m, const Dataset& data,
                      const std::vector<std::size_t>& train,
                      const TrainConfig& cfg, const FinetuneOptions& options) {
  cfg.validate();
  if (train.empty()) fail(ErrorKind::Data, "no training samples");
  const bool optimized = m.layout() == Layout::CacheOptimized;
  if (optimized) m.set_layout(Layout::Standard);

  const PiWeights pi = compute_pi(m);
  const std::size_t rows = m.rows();
  FinetuneLog log;
  if (options.log_initial) {
    const auto acc = row_accuracy(m, data, data.val);
    for (std::size_t r = 0; r < rows; ++r) {
      log.epochs.push_back(EpochRecord{0, r, m.plan().capacities[r], pi.pi[r],
                                       validation_loss(m, r, data, data.val),
                                       acc[r]});
    }
  }

  std::unique_ptr<AdamOptimizer> adam;
  if (cfg.use_adam) adam = std::make_unique<AdamOptimizer>(m.graph());
  GradStore grads(m.graph());
  Checkpoint good = snapshot(m);

  for (std::size_t epoch = 1; epoch <= cfg.epochs && !log.diverged; ++epoch) {
    auto next = batch_stream(data, train, cfg.batch_size, cfg.seed + epoch, false);
    std::vector<double> loss_sum(rows, 0.0);
    std::size_t batches = 0;
    while (auto batch = next()) {
      grads.reset();
      BatchRecord rec;
      try {
        rec = joint_gradient(m, *batch, pi, grads);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::Numeric) throw;
        log.diverged = true;
        log.divergence = e.what();
      }
      if (!log.diverged && (!std::isfinite(rec.total_loss) || !grads_finite(grads))) {
        log.diverged = true;
        log.divergence = "non-finite gradient at step " + std::to_string(log.steps);
      }
      if (log.diverged) {
        restore(m, good);
        break;
      }
      const float lr = cfg.rate_at(log.steps);
      if (adam) {
        adam->step(m.mutable_graph(), grads, lr);
      } else {
        sgd_step(m.mutable_graph(), grads, lr);
      }
      ++log.steps;
      ++batches;
      for (std::size_t r = 0; r < rows; ++r) loss_sum[r] += rec.row_loss[r];
      if (options.record_batches) log.batches.push_back(std::move(rec));
    }
    if (log.diverged) break;
    good = snapshot(m);
    const auto acc = row_accuracy(m, data, data.val);
    for (std::size_t r = 0; r < rows; ++r) {
      log.epochs.push_back(EpochRecord{epoch, r, m.plan().capacities[r], pi.pi[r],
                                       batches ? loss_sum[r] / batches : 0.0,
                                       acc[r]});
    }
  }
  if (optimized) m.set_layout(Layout::CacheOptimized);
  return log;
}

}  // namespace

PiWeights compute_pi(const RedsModel& m) {
  const auto& g = m.graph();
  const double total = static_cast<double>(active_parameters(g, nullptr, true));
  if (total == 0.0) fail(ErrorKind::Config, "model has no encoder parameters");
  PiWeights w;
  for (const auto& pts : m.plan().points) {
    w.pi.push_back(static_cast<double>(active_parameters(g, &pts, true)) / total);
  }
  return w;
}

BatchRecord joint_gradient(RedsModel& m, const Minibatch& batch,
                           const PiWeights& pi, GradStore& out) {
  if (pi.pi.size() != m.rows()) fail(ErrorKind::Shape, "one weight per plan row needed");
  BatchRecord rec;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    BackwardOptions o;
    o.points = &m.plan().points[r];
    o.bn_mode = BnMode::Training;
    o.bn_stats = &m.row_stats(r);
    const auto res = backward(m.graph(), batch, o);
    out.add(res.grads, static_cast<float>(pi.pi[r]));
    rec.row_loss.push_back(res.loss);
    rec.total_loss += pi.pi[r] * res.loss;
  }
  return rec;
}

FinetuneLog finetune_joint(RedsModel& m, const Dataset& data, const TrainConfig& cfg,
                           const FinetuneOptions& options) {
  return run_joint(m, data, data.train, cfg, options);
}

FinetuneLog finetune_fewshot(RedsModel& m, const Dataset& data,
                             std::size_t samples_per_class, const TrainConfig& cfg,
                             const FinetuneOptions& options) {
  if (samples_per_class == 0) fail(ErrorKind::Config, "samples per class must be positive");
  const auto idx = fewshot_subsample(data, data.train, samples_per_class, cfg.seed);
  return run_joint(m, data, idx, cfg, options);
}

std::vector<double> row_accuracy(RedsModel& m, const Dataset& data,
                                 const std::vector<std::size_t>& indices) {
  std::vector<double> acc;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    ForwardOptions o;
    o.points = &m.plan().points[r];
    o.bn_stats = &m.row_stats(r);
    acc.push_back(accuracy(m.graph(), data, indices, o));
  }
  return acc;
}

void FinetuneLog::write_csv(std::ostream& out) const {
  out << "epoch,row,capacity_macs,pi,loss,val_accuracy\n";
  const auto old = out.precision(10);
  for (const auto& e : epochs) {
    out << e.epoch << ',' << e.row << ',' << e.capacity_macs << ',' << e.pi << ','
        << e.loss << ',' << e.val_accuracy << '\n';
  }
  out.precision(old);
}

std::vector<double> FinetuneLog::final_accuracy() const {
  std::vector<double> acc;
  if (epochs.empty()) return acc;
  const std::size_t last = epochs.back().epoch;
  for (const auto& e : epochs) {
    if (e.epoch == last) acc.push_back(e.val_accuracy);
  }
  return acc;
}

void FewShotReport::write_csv(std::ostream& out) const {
  out << "shots,epoch,row,bu_accuracy,td_accuracy,delta\n";
  const auto old = out.precision(10);
  for (const auto& s : shots) {
    for (std::size_t e = 0; e < s.bu_curve.size(); ++e) {
      for (std::size_t r = 0; r < s.bu_curve[e].size(); ++r) {
        const double b = s.bu_curve[e][r];
        const double t = s.td_curve[e][r];
        out << s.shots << ',' << e << ',' << r << ',' << b << ',' << t << ','
            << b - t << '\n';
      }
    }
  }
  out.precision(old);
}

namespace {

std::vector<std::vector<double>> curve_of(const FinetuneLog& log, std::size_t rows) {
  std::vector<std::vector<double>> c;
  for (const auto& e : log.epochs) {
    if (e.epoch >= c.size()) c.resize(e.epoch + 1, std::vector<double>(rows, 0.0));
    c[e.epoch][e.row] = e.val_accuracy;
  }
  return c;
}

}  // namespace

FewShotReport compare_bu_td(const ModelGraph& permuted,
                            const std::vector<UnitScore>& scores,
                            const std::vector<std::uint64_t>& capacities,
                            const Dataset& data,
                            const std::vector<std::size_t>& shot_counts,
                            const TrainConfig& cfg) {
  const UnitCatalog cat = build_catalog(permuted, scores);
  const SlicingPlan bu = plan_bottom_up(cat, capacities);
  const SlicingPlan td = plan_top_down(cat, capacities);
  FinetuneOptions opts;
  opts.record_batches = false;
  FewShotReport report;
  for (const std::size_t shots : shot_counts) {
    RedsModel mb(permuted, bu);
    RedsModel mt(permuted, td);
    const auto lb = finetune_fewshot(mb, data, shots, cfg, opts);
    const auto lt = finetune_fewshot(mt, data, shots, cfg, opts);
    ShotComparison sc;
    sc.shots = shots;
    sc.bu_curve = curve_of(lb, bu.rows());
    sc.td_curve = curve_of(lt, td.rows());
    double sum = 0.0;
    std::size_t n = 0;
    const std::size_t epochs = std::min(sc.bu_curve.size(), sc.td_curve.size());
    for (std::size_t e = 1; e < epochs; ++e) {
      for (std::size_t r = 0; r < sc.bu_curve[e].size(); ++r) {
        sum += sc.bu_curve[e][r] - sc.td_curve[e][r];
        ++n;
      }
    }
    sc.mean_delta = n ? sum / static_cast<double>(n) : 0.0;
    report.shots.push_back(std::move(sc));
  }
  return report;
}

}  // namespace reds
