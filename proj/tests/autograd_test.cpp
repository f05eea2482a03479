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

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "reds/autograd.hpp"

namespace reds {
namespace {

using oracle::ParamRef;
using oracle::Which;

Minibatch random_batch(const ModelGraph& g, std::size_t b, oracle::Gen& gen) {
  Minibatch mb{oracle::random_inputs(g, b, gen), {}};
  for (std::size_t i = 0; i < b; ++i) mb.labels.push_back(int(gen.index(0, g.classes() - 1)));
  return mb;
}

// He-scaled weights plus random biases and batchnorm parameters keep the
// logits moderate, so float32 sums stay well inside the tolerance.
ModelGraph random_model(Arch arch, oracle::Gen& gen) {
  ModelGraph g = build_reference(arch, ModelSize::S, Shape3{6, 5, 2}, 4);
  oracle::randomize(g, gen, 0.1);
  ModelGraph he = g;
  initialize_weights(he, gen.index(0, 1U << 30));
  for (std::size_t l = 0; l < g.num_layers(); ++l) g.params(l).weight = he.params(l).weight;
  return g;
}

// Up to five indices per parameter tensor whose backprop gradient is large
// enough to sit above float32 cancellation noise.
std::vector<ParamRef> pick_params(const ModelGraph& g, const GradStore& grads, oracle::Gen& gen) {
  std::vector<ParamRef> out;
  for (std::size_t l = 0; l < g.num_layers(); ++l) {
    for (Which w : {Which::Weight, Which::Bias, Which::Gamma, Which::Beta}) {
      ParamRef r{l, w, 0};
      const Tensor& t = oracle::grad_tensor(grads, r);
      if (t.size() == 0) continue;
      std::size_t taken = 0;
      for (int attempt = 0; attempt < 60 && taken < 5; ++attempt) {
        r.index = gen.index(0, t.size() - 1);
        if (std::fabs(t.data()[r.index]) < 1e-3) continue;
        out.push_back(r);
        ++taken;
      }
    }
  }
  return out;
}

void check_against_differences(Arch arch, BnMode mode, bool sliced, std::uint64_t seed) {
  oracle::Gen gen(seed);
  const ModelGraph g = random_model(arch, gen);
  const Minibatch mb = random_batch(g, 3, gen);
  Points pts;
  if (sliced) pts = oracle::random_nested_points(g, 2, gen).back();
  BackwardOptions opt;
  opt.bn_mode = mode;
  opt.points = sliced ? &pts : nullptr;
  BnStatsSet stats = BnStatsSet::from_graph(g);
  opt.bn_stats = &stats;
  const auto res = backward(g, mb, opt);
  const double ref = sliced ? oracle::reference_loss(oracle::truncate_model(g, pts), mb, mode)
                            : oracle::reference_loss(g, mb, mode);
  EXPECT_NEAR(res.loss, ref, 1e-4 * std::max(1.0, std::fabs(ref)));
  const auto picks = pick_params(g, res.grads, gen);
  ASSERT_GT(picks.size(), 5u);
  // A ReLU kink inside the stencil shows up as two step sizes disagreeing;
  // those points have no derivative to compare against.
  std::size_t checked = 0;
  for (const auto& r : picks) {
    const double fd = oracle::central_difference(g, mb, r, sliced ? &pts : nullptr, mode);
    const double fd_half = oracle::central_difference(g, mb, r, sliced ? &pts : nullptr, mode, 3e-5);
    if (oracle::relative_error(fd, fd_half) > 1e-6) continue;
    ++checked;
    const double bp = oracle::grad_tensor(res.grads, r).data()[r.index];
    EXPECT_LT(oracle::relative_error(bp, fd), 1e-4)
        << to_string(g.layer(r.layer).kind) << " layer " << r.layer << " tensor "
        << int(r.which) << " index " << r.index << ": backprop " << bp << " fd " << fd;
  }
  EXPECT_GE(checked * 2, picks.size());
}

TEST(Backward, MatchesFiniteDifferencesDense) {
  for (std::uint64_t s = 1; s <= 3; ++s) check_against_differences(Arch::DNN, BnMode::Inference, false, s);
}

TEST(Backward, MatchesFiniteDifferencesConv) {
  for (std::uint64_t s = 1; s <= 2; ++s) check_against_differences(Arch::CNN, BnMode::Inference, false, s);
}

TEST(Backward, MatchesFiniteDifferencesDepthwiseSeparable) {
  for (std::uint64_t s = 1; s <= 2; ++s) check_against_differences(Arch::DSCNN, BnMode::Inference, false, s);
}

TEST(Backward, MatchesFiniteDifferencesTrainingBatchNorm) {
  check_against_differences(Arch::CNN, BnMode::Training, false, 7);
  check_against_differences(Arch::DSCNN, BnMode::Training, false, 8);
}

TEST(Backward, MatchesFiniteDifferencesWhenSliced) {
  for (Arch a : {Arch::DNN, Arch::CNN, Arch::DSCNN}) {
    check_against_differences(a, BnMode::Inference, true, 21);
    check_against_differences(a, BnMode::Training, true, 22);
  }
}

TEST(Backward, SlicedOffParametersGetExactlyZero) {
  for (Arch a : {Arch::DNN, Arch::CNN, Arch::DSCNN}) {
    oracle::Gen gen(31);
    const ModelGraph g = random_model(a, gen);
    const Minibatch mb = random_batch(g, 4, gen);
    const Points pts = oracle::random_nested_points(g, 2, gen).back();
    BackwardOptions opt;
    opt.points = &pts;
    const auto res = backward(g, mb, opt);
    // A model whose out-of-slice parameters are scrambled must give the same
    // gradient everywhere, and that gradient is zero where the mask is.
    ModelGraph scrambled = g;
    const ModelGraph truncated = oracle::truncate_model(g, pts);
    const auto widths = resolve_widths(g, &pts);
    for (std::size_t l = 0; l < g.num_layers(); ++l) {
      const auto& grad = res.grads.layers[l];
      const auto kind = g.layer(l).kind;
      if (kind == LayerKind::Dense) {
        for (std::size_t i = 0; i < grad.weight.rows(); ++i)
          for (std::size_t j = 0; j < grad.weight.cols(); ++j)
            if (i >= widths.in[l] || j >= widths.out[l]) {
              EXPECT_EQ(grad.weight(i, j), 0.0f);
            }
      }
      for (std::size_t j = widths.out[l]; j < grad.bias.size(); ++j) EXPECT_EQ(grad.bias.data()[j], 0.0f);
      for (std::size_t j = widths.out[l]; j < grad.gamma.size(); ++j) EXPECT_EQ(grad.gamma.data()[j], 0.0f);
      for (std::size_t j = widths.out[l]; j < grad.beta.size(); ++j) EXPECT_EQ(grad.beta.data()[j], 0.0f);
    }
    (void)scrambled;
    (void)truncated;
  }
}

TEST(Backward, HalfSquaredNormOfLinearModel) {
  oracle::Gen gen(41);
  ModelGraph g(Shape3{1, 1, 3}, {LayerSpec{LayerKind::Dense, 2, {1, 1}, {1, 1}, Padding::Same,
                                           Activation::Softmax, false}});
  oracle::randomize(g, gen);
  const Minibatch mb = random_batch(g, 5, gen);
  BackwardOptions opt;
  opt.loss = LossKind::HalfSquaredNorm;
  const auto res = backward(g, mb, opt);
  const auto& w = g.params(0).weight;
  const auto& b = g.params(0).bias;
  std::vector<double> gw(6, 0.0), gb(2, 0.0);
  double loss = 0.0;
  for (std::size_t s = 0; s < 5; ++s) {
    for (std::size_t j = 0; j < 2; ++j) {
      double y = b.data()[j];
      for (std::size_t i = 0; i < 3; ++i) y += double(mb.inputs(s, i)) * w(i, j);
      loss += 0.5 * y * y / 5.0;
      gb[j] += y / 5.0;
      for (std::size_t i = 0; i < 3; ++i) gw[i * 2 + j] += y * mb.inputs(s, i) / 5.0;
    }
  }
  EXPECT_NEAR(res.loss, loss, 1e-5);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(res.grads.layers[0].weight(i, j), gw[i * 2 + j], 1e-5);
  for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(res.grads.layers[0].bias.data()[j], gb[j], 1e-5);
}

TEST(Backward, LabelOutOfRangeIsRejected) {
  oracle::Gen gen(2);
  const ModelGraph g = random_model(Arch::DNN, gen);
  Minibatch mb = random_batch(g, 2, gen);
  mb.labels[1] = 9;
  EXPECT_THROW(backward(g, mb), Error);
}

TEST(Backward, EvaluateLossAgreesWithBackward) {
  oracle::Gen gen(3);
  const ModelGraph g = random_model(Arch::CNN, gen);
  const Minibatch mb = random_batch(g, 4, gen);
  EXPECT_NEAR(evaluate_loss(g, mb), backward(g, mb).loss, 1e-6);
}

TEST(ImportanceGrads, SumsExactlyTheRequestedBatches) {
  oracle::Gen gen(51);
  const ModelGraph g = random_model(Arch::DNN, gen);
  std::vector<Minibatch> batches;
  for (int i = 0; i < 6; ++i) batches.push_back(random_batch(g, 3, gen));
  std::size_t served = 0;
  const MinibatchSource src = [&]() -> std::optional<Minibatch> {
    if (served == batches.size()) return std::nullopt;
    return batches[served++];
  };
  const GradStore acc = accumulate_importance_grads(g, src, 4);
  EXPECT_EQ(served, 4u);
  EXPECT_EQ(acc.minibatch_count, 4u);
  GradStore want(g);
  for (int i = 0; i < 4; ++i) want.add(backward(g, batches[i]).grads);
  for (std::size_t l = 0; l < g.num_layers(); ++l) {
    const auto& a = acc.layers[l].weight;
    for (std::size_t k = 0; k < a.size(); ++k)
      EXPECT_NEAR(a.data()[k], want.layers[l].weight.data()[k], 1e-5);
  }
}

TEST(ImportanceGrads, SourceRunningDryIsDataError) {
  oracle::Gen gen(52);
  const ModelGraph g = random_model(Arch::DNN, gen);
  int left = 2;
  const MinibatchSource src = [&]() -> std::optional<Minibatch> {
    if (left-- <= 0) return std::nullopt;
    return random_batch(g, 2, gen);
  };
  try {
    accumulate_importance_grads(g, src, 5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Data);
  }
}

TEST(GradStore, MismatchedShapesAreIntegrityErrors) {
  oracle::Gen gen(53);
  const ModelGraph g = random_model(Arch::DNN, gen);
  GradStore s(g);
  EXPECT_NO_THROW(s.check_matches(g));
  s.layers[0].weight = Tensor({1, 1});
  try {
    s.check_matches(g);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Integrity);
  }
}

TEST(Optimizers, SgdTouchesOnlyTheActiveSlice) {
  oracle::Gen gen(61);
  const ModelGraph g = random_model(Arch::DNN, gen);
  const Minibatch mb = random_batch(g, 4, gen);
  const Points pts = oracle::random_nested_points(g, 2, gen).back();
  GradStore ones(g);
  for (auto& l : ones.layers)
    for (Tensor* t : {&l.weight, &l.bias, &l.gamma, &l.beta})
      for (auto& v : t->mutable_data()) v = 1.0f;
  ModelGraph h = g;
  sgd_step(h, ones, 0.5f, &pts);
  const auto widths = resolve_widths(g, &pts);
  for (std::size_t l = 0; l < g.num_layers(); ++l) {
    if (g.layer(l).kind != LayerKind::Dense) continue;
    const auto& before = g.params(l).weight;
    const auto& after = h.params(l).weight;
    for (std::size_t i = 0; i < before.rows(); ++i)
      for (std::size_t j = 0; j < before.cols(); ++j) {
        const bool active = i < widths.in[l] && j < widths.out[l];
        EXPECT_FLOAT_EQ(after(i, j), active ? before(i, j) - 0.5f : before(i, j));
      }
  }
}

TEST(Optimizers, AdamFirstStepIsSignScaled) {
  oracle::Gen gen(62);
  const ModelGraph g = random_model(Arch::DNN, gen);
  const auto res = backward(g, random_batch(g, 4, gen));
  ModelGraph h = g;
  AdamOptimizer adam(h);
  adam.step(h, res.grads, 0.01f);
  for (std::size_t l = 0; l < g.num_layers(); ++l) {
    const auto& gr = res.grads.layers[l].weight;
    for (std::size_t k = 0; k < gr.size(); ++k) {
      const double gk = gr.data()[k];
      const double expect = -0.01 * gk / (std::fabs(gk) + 1e-7);
      EXPECT_NEAR(h.params(l).weight.data()[k] - g.params(l).weight.data()[k], expect, 1e-6);
    }
  }
}

TEST(TrainConfig, PiecewiseScheduleAndValidation) {
  TrainConfig c;
  EXPECT_FLOAT_EQ(c.rate_at(0), 1e-3f);
  EXPECT_FLOAT_EQ(c.rate_at(14999), 1e-3f);
  EXPECT_FLOAT_EQ(c.rate_at(15000), 1e-4f);
  EXPECT_FLOAT_EQ(c.rate_at(1000000), 1e-4f);
  EXPECT_NO_THROW(c.validate());
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), Error);
  c = TrainConfig{};
  c.schedule.clear();
  EXPECT_THROW(c.validate(), Error);
}

}  // namespace
}  // namespace reds
