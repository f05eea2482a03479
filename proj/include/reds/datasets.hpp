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

#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "reds/autograd.hpp"
#include "reds/batch.hpp"
#include "reds/netgraph.hpp"

namespace reds {

struct Dataset {
  /// [count x features], sample-major.
  Tensor samples;
  Shape3 sample_shape;
  std::vector<int> labels;
  std::size_t classes = 0;
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;

  std::size_t size() const { return labels.size(); }
};

/// IDX image/label pair (magic 0x803 / 0x801, big-endian). Pixels become
/// floats, divided by 255 when `normalize` is set.
Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 bool normalize = true);

/// Writes samples as unsigned bytes (values scaled by 255 when `normalized`).
void write_idx(const std::string& images_path, const std::string& labels_path,
               const Dataset& data, bool normalized = true);

struct BlobOptions {
  std::size_t classes = 10;
  std::size_t per_class = 200;
  Shape3 shape{10, 10, 1};
  /// Distance of each class center from the origin, in noise units.
  double separation = 3.0;
  std::uint64_t seed = 0;
};

/// Gaussian clusters around random class centers; unit noise per feature.
Dataset synth_blobs(const BlobOptions& options);

/// Seeded shuffle, then consecutive train/val/test shares (default 80:10:10).
void split_dataset(Dataset& data, std::uint64_t seed,
                   std::array<unsigned, 3> ratio = {80, 10, 10});

/// Parses "80:10:10".
std::array<unsigned, 3> parse_split(const std::string& text);

Minibatch gather(const Dataset& data, const std::vector<std::size_t>& indices);

/// Batches over `indices`, reshuffled every pass when a seed is given.
/// With `cycle` the stream never ends; otherwise it ends after one pass.
MinibatchSource batch_stream(const Dataset& data,
                             std::vector<std::size_t> indices,
                             std::size_t batch_size, std::uint64_t seed,
                             bool cycle);

/// The first `per_class` samples of each class after a seeded shuffle of
/// `pool`. Throws a data error when a class is short.
std::vector<std::size_t> fewshot_subsample(const Dataset& data,
                                           const std::vector<std::size_t>& pool,
                                           std::size_t per_class,
                                           std::uint64_t seed);

/// Fraction of correctly classified samples among `indices`.
double accuracy(const ModelGraph& g, const Dataset& data,
                const std::vector<std::size_t>& indices,
                const ForwardOptions& options = {});

}  // namespace reds
