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
#include "reds/nest.hpp"

namespace reds {
namespace {

RedsModel random_nest(Arch arch, std::size_t rows, std::uint64_t seed) {
  ModelGraph g = build_reference(arch, ModelSize::S, Shape3{6, 5, 2}, 4);
  oracle::Gen gen(seed);
  oracle::randomize(g, gen);
  SlicingPlan plan;
  plan.points = oracle::random_nested_points(g, rows, gen);
  for (const auto& p : plan.points) plan.capacities.push_back(config_macs(g, &p));
  RedsModel m(g, plan);
  // Give every row its own statistics.
  for (std::size_t r = 0; r < rows; ++r) {
    auto& st = m.row_stats(r);
    for (auto& t : st.mean)
      for (auto& v : t.mutable_data()) v = float(0.3 * gen.normal());
    for (auto& t : st.var)
      for (auto& v : t.mutable_data()) v = float(gen.uniform(0.5, 1.5));
  }
  return m;
}

TEST(Nest, SwitchingRewritesOnlyWidthRegisters) {
  for (Arch a : {Arch::DNN, Arch::CNN, Arch::DSCNN}) {
    RedsModel m = random_nest(a, 4, 1);
    const auto before = m.graph().all_params();
    for (std::size_t r : {3u, 0u, 2u, 1u, 3u}) {
      const auto s = m.activate(r);
      EXPECT_EQ(s.weights_copied, 0u);
      EXPECT_EQ(s.integers_updated, m.graph().sliceable_layers().size());
      EXPECT_EQ(s.flag_bits, 0u);
      EXPECT_EQ(m.widths(), m.plan().points[r]);
      EXPECT_EQ(m.active(), r);
    }
    const auto& after = m.graph().all_params();
    for (std::size_t l = 0; l < before.size(); ++l) {
      ASSERT_EQ(before[l].weight.size(), after[l].weight.size());
      for (std::size_t i = 0; i < before[l].weight.size(); ++i)
        EXPECT_EQ(before[l].weight.data()[i], after[l].weight.data()[i]);
    }
  }
}

TEST(Nest, CacheOptimizedLayoutConsultsOneFlagPerDenseLayer) {
  RedsModel m = random_nest(Arch::DNN, 3, 2);
  m.set_layout(Layout::CacheOptimized);
  std::uint64_t dense = 0;
  for (const auto& s : m.graph().layers()) dense += s.kind == LayerKind::Dense;
  const auto s = m.activate(1);
  EXPECT_EQ(s.flag_bits, dense);
  EXPECT_EQ(s.weights_copied, 0u);
}

TEST(Nest, ActivatingAMissingRowIsBoundsError) {
  RedsModel m = random_nest(Arch::DNN, 2, 3);
  try {
    m.activate(2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Bounds);
  }
  EXPECT_THROW(m.masked_infer(5, Tensor({1, m.graph().input_shape().size()})), Error);
}

TEST(Nest, SlicedMaskedAndTruncatedAgree) {
  for (Arch a : {Arch::DNN, Arch::CNN, Arch::DSCNN}) {
    for (Layout layout : {Layout::Standard, Layout::CacheOptimized}) {
      RedsModel m = random_nest(a, 4, 4);
      m.set_layout(layout);
      oracle::Gen gen(5);
      const Tensor x = oracle::random_inputs(m.graph(), 3, gen);
      for (std::size_t r = 0; r < m.rows(); ++r) {
        m.activate(r);
        std::uint64_t macs = 0;
        const Tensor sliced = m.infer(x, &macs);
        const Tensor masked = m.masked_infer(r, x);
        const auto want = oracle::reference_forward(
            oracle::truncate_model(m.graph(), m.plan().points[r], &m.row_stats(r)), x);
        for (std::size_t s = 0; s < 3; ++s)
          for (std::size_t j = 0; j < m.graph().classes(); ++j) {
            const double tol = 1e-4 * std::max(1.0, std::fabs(want[s][j]));
            EXPECT_NEAR(sliced(s, j), want[s][j], tol);
            EXPECT_NEAR(masked(s, j), want[s][j], tol);
          }
        EXPECT_EQ(macs, 3 * config_macs(m.graph(), &m.plan().points[r]));
        EXPECT_LE(macs / 3, m.plan().capacities[r]);
      }
    }
  }
}

TEST(Nest, RowStatisticsAreIndependent) {
  RedsModel m = random_nest(Arch::CNN, 2, 6);
  oracle::Gen gen(7);
  const Tensor x = oracle::random_inputs(m.graph(), 2, gen);
  m.activate(0);
  const Tensor before = m.infer(x);
  for (auto& t : m.row_stats(1).mean)
    for (auto& v : t.mutable_data()) v += 5.0f;
  const Tensor after = m.infer(x);
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_EQ(before.data()[i], after.data()[i]);
}

TEST(Nest, InvalidPlanIsRejectedAtConstruction) {
  const ModelGraph g = build_reference(Arch::DNN, ModelSize::S, Shape3{6, 5, 2}, 4);
  SlicingPlan plan;
  plan.points = {full_points(g)};
  plan.capacities = {total_macs(g) - 1};
  EXPECT_THROW(RedsModel(g, plan), Error);
}

}  // namespace
}  // namespace reds
