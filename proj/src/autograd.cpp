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

#include "reds/autograd.hpp"

#include <algorithm>
#include <cmath>

#include "engine.hpp"

namespace reds {
namespace {

Tensor zeros_like(const Tensor& t) {
  if (t.empty()) return Tensor{};
  return Tensor(t.shape(), t.order());
}

template <typename Fn>
void for_each_tensor(GradStore& a, Fn&& fn) {
  for (auto& l : a.layers) {
    fn(l.weight);
    fn(l.bias);
    fn(l.gamma);
    fn(l.beta);
  }
}

// Loss and d(loss)/d(logits) for the mean over the batch.
double loss_and_grad(const detail::Activations& out, const Minibatch& batch,
                     LossKind kind, detail::Activations& grad) {
  const std::size_t b = out.count;
  const std::size_t k = out.stride();
  grad.shape = out.shape;
  grad.count = b;
  grad.data.assign(out.data.size(), 0.0f);
  double total = 0.0;
  const double inv_b = 1.0 / static_cast<double>(b);
  for (std::size_t s = 0; s < b; ++s) {
    const float* z = out.data.data() + s * k;
    float* gz = grad.data.data() + s * k;
    if (kind == LossKind::HalfSquaredNorm) {
      for (std::size_t j = 0; j < k; ++j) {
        total += 0.5 * static_cast<double>(z[j]) * z[j];
        gz[j] = static_cast<float>(z[j] * inv_b);
      }
      continue;
    }
    const int label = batch.labels[s];
    if (label < 0 || static_cast<std::size_t>(label) >= k) {
      fail(ErrorKind::Data, "label " + std::to_string(label) +
                                " outside [0, " + std::to_string(k) + ")");
    }
    const float zmax = *std::max_element(z, z + k);
    double denom = 0.0;
    for (std::size_t j = 0; j < k; ++j) denom += std::exp(double(z[j]) - zmax);
    const double log_denom = std::log(denom);
    total += log_denom - (double(z[label]) - zmax);
    for (std::size_t j = 0; j < k; ++j) {
      const double p = std::exp(double(z[j]) - zmax - log_denom);
      gz[j] = static_cast<float>((p - (j == std::size_t(label) ? 1.0 : 0.0)) *
                                 inv_b);
    }
  }
  const double loss = total * inv_b;
  if (!std::isfinite(loss)) fail(ErrorKind::Numeric, "loss is not finite");
  return loss;
}

detail::EngineOptions engine_options(const BackwardOptions& o, bool record) {
  detail::EngineOptions eo;
  eo.points = o.points;
  eo.bn_mode = o.bn_mode;
  eo.bn_stats = o.bn_stats;
  eo.bn_momentum = o.bn_momentum;
  eo.record = record;
  return eo;
}

void check_batch(const Minibatch& batch, LossKind kind) {
  if (batch.size() == 0) fail(ErrorKind::Data, "empty minibatch");
  if (kind == LossKind::CrossEntropy && batch.labels.size() != batch.size()) {
    fail(ErrorKind::Data, "label count does not match minibatch size");
  }
}

}  // namespace

GradStore::GradStore(const ModelGraph& g) {
  layers.reserve(g.num_layers());
  for (const auto& p : g.all_params()) {
    LayerGrads lg;
    lg.weight = zeros_like(p.weight);
    lg.bias = zeros_like(p.bias);
    lg.gamma = zeros_like(p.gamma);
    lg.beta = zeros_like(p.beta);
    layers.push_back(std::move(lg));
  }
}

void GradStore::reset() {
  for_each_tensor(*this, [](Tensor& t) {
    auto d = t.mutable_data();
    std::fill(d.begin(), d.end(), 0.0f);
  });
  minibatch_count = 0;
}

void GradStore::add(const GradStore& other, float scale) {
  if (other.layers.size() != layers.size()) {
    fail(ErrorKind::Shape, "gradient stores differ in layer count");
  }
  auto acc = [scale](Tensor& dst, const Tensor& src) {
    if (dst.shape() != src.shape()) {
      fail(ErrorKind::Shape, "gradient tensors differ in shape");
    }
    auto d = dst.mutable_data();
    auto s = src.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += scale * s[i];
  };
  for (std::size_t l = 0; l < layers.size(); ++l) {
    acc(layers[l].weight, other.layers[l].weight);
    acc(layers[l].bias, other.layers[l].bias);
    acc(layers[l].gamma, other.layers[l].gamma);
    acc(layers[l].beta, other.layers[l].beta);
  }
  minibatch_count += other.minibatch_count;
}

void GradStore::check_matches(const ModelGraph& g) const {
  if (layers.size() != g.num_layers()) {
    fail(ErrorKind::Integrity, "gradient store has wrong layer count");
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& p = g.params(l);
    const auto& q = layers[l];
    if (q.weight.shape() != p.weight.shape() ||
        q.bias.shape() != p.bias.shape() ||
        q.gamma.shape() != p.gamma.shape() ||
        q.beta.shape() != p.beta.shape()) {
      fail(ErrorKind::Integrity,
           "gradient shapes do not mirror layer " + std::to_string(l));
    }
  }
}

BackwardResult backward(const ModelGraph& g, const Minibatch& batch,
                        const BackwardOptions& options) {
  check_batch(batch, options.loss);
  detail::Engine engine(g, engine_options(options, true));
  const auto out = engine.run(batch.inputs);
  detail::Activations grad;
  BackwardResult r;
  r.loss = loss_and_grad(out, batch, options.loss, grad);
  r.grads = GradStore(g);
  engine.backward(std::move(grad), r.grads);
  r.grads.minibatch_count = 1;
  return r;
}

double evaluate_loss(const ModelGraph& g, const Minibatch& batch,
                     const BackwardOptions& options) {
  check_batch(batch, options.loss);
  detail::Engine engine(g, engine_options(options, false));
  const auto out = engine.run(batch.inputs);
  detail::Activations grad;
  return loss_and_grad(out, batch, options.loss, grad);
}

GradStore accumulate_importance_grads(const ModelGraph& g,
                                      const MinibatchSource& next,
                                      std::size_t n_batches) {
  if (n_batches == 0) fail(ErrorKind::Config, "need at least one batch");
  GradStore sum(g);
  for (std::size_t i = 0; i < n_batches; ++i) {
    auto batch = next();
    if (!batch) {
      fail(ErrorKind::Data, "data source ran dry after " + std::to_string(i) +
                                " of " + std::to_string(n_batches) +
                                " batches");
    }
    const auto r = backward(g, *batch);
    sum.add(r.grads);
  }
  return sum;
}

namespace {

// Calls fn(param, grad, index) for every element in the active region.
template <typename Fn>
void for_each_active(ModelGraph& g, const GradStore& grads,
                     const Points* points, Fn&& fn) {
  grads.check_matches(g);
  const ActiveWidths w = resolve_widths(g, points);
  for (std::size_t l = 0; l < g.num_layers(); ++l) {
    auto& p = g.params(l);
    const auto& q = grads.layers[l];
    const auto kind = g.layer(l).kind;
    const std::size_t in_a = w.in[l];
    const std::size_t out_a = w.out[l];
    auto each = [&](Tensor& t, const Tensor& gt, auto&& active) {
      auto d = t.mutable_data();
      auto gd = gt.data();
      for (std::size_t i = 0; i < d.size(); ++i) {
        if (active(i)) fn(l, d[i], gd[i], i, &t);
      }
    };
    auto vec_active = [&](std::size_t i) { return i < out_a; };
    switch (kind) {
      case LayerKind::Dense: {
        const std::size_t cols = p.weight.cols();
        if (p.transposed) {
          each(p.weight, q.weight, [&](std::size_t i) {
            return i / cols < out_a && i % cols < in_a;
          });
        } else {
          each(p.weight, q.weight, [&](std::size_t i) {
            return i / cols < in_a && i % cols < out_a;
          });
        }
        each(p.bias, q.bias, vec_active);
        break;
      }
      case LayerKind::Conv2D:
      case LayerKind::PointwiseConv2D: {
        const std::size_t cin = p.weight.extent(3);
        const std::size_t per_filter = p.weight.size() / p.weight.extent(0);
        each(p.weight, q.weight, [&](std::size_t i) {
          return i / per_filter < out_a && i % cin < in_a;
        });
        each(p.bias, q.bias, vec_active);
        break;
      }
      case LayerKind::DepthwiseConv2D: {
        const std::size_t per = p.weight.size() / p.weight.extent(0);
        each(p.weight, q.weight,
             [&](std::size_t i) { return i / per < out_a; });
        each(p.bias, q.bias, vec_active);
        break;
      }
      case LayerKind::BatchNorm:
        each(p.gamma, q.gamma, vec_active);
        each(p.beta, q.beta, vec_active);
        break;
      case LayerKind::Flatten:
        break;
    }
  }
}

}  // namespace

void sgd_step(ModelGraph& g, const GradStore& grads, float lr,
              const Points* points) {
  for_each_active(g, grads, points,
                  [lr](std::size_t, float& w, float gv, std::size_t,
                       const Tensor*) { w -= lr * gv; });
}

float TrainConfig::rate_at(std::uint64_t step) const {
  for (const auto& s : schedule) {
    if (step < s.until_step) return s.rate;
  }
  return schedule.back().rate;
}

void TrainConfig::validate() const {
  if (batch_size == 0) fail(ErrorKind::Config, "batch_size must be positive");
  if (schedule.empty()) fail(ErrorKind::Config, "empty learning-rate schedule");
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    if (!(schedule[i].rate > 0.0f) || !std::isfinite(schedule[i].rate)) {
      fail(ErrorKind::Config, "learning rates must be positive");
    }
    if (i > 0 && schedule[i].until_step <= schedule[i - 1].until_step) {
      fail(ErrorKind::Config, "schedule boundaries must increase");
    }
  }
}

AdamOptimizer::AdamOptimizer(const ModelGraph& g) : m_(g), v_(g) {}

void AdamOptimizer::step(ModelGraph& g, const GradStore& grads, float lr,
                         const Points* points) {
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-7;
  ++t_;
  const double c1 = 1.0 - std::pow(kBeta1, double(t_));
  const double c2 = 1.0 - std::pow(kBeta2, double(t_));
  for_each_active(g, grads, points,
                  [&](std::size_t l, float& w, float gv, std::size_t i,
                      const Tensor* owner) {
                    const auto& p = g.params(l);
                    auto pick = [&](GradStore& s) -> float& {
                      auto& lg = s.layers[l];
                      if (owner == &p.weight) return lg.weight.mutable_data()[i];
                      if (owner == &p.bias) return lg.bias.mutable_data()[i];
                      if (owner == &p.gamma) return lg.gamma.mutable_data()[i];
                      return lg.beta.mutable_data()[i];
                    };
                    float& m = pick(m_);
                    float& v = pick(v_);
                    m = float(kBeta1 * m + (1.0 - kBeta1) * gv);
                    v = float(kBeta2 * v + (1.0 - kBeta2) * double(gv) * gv);
                    const double mh = m / c1;
                    const double vh = v / c2;
                    w -= float(lr * mh / (std::sqrt(vh) + kEps));
                  });
}

}  // namespace reds
