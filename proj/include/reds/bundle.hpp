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

// On-disk artifacts. A bundle directory holds:
//   model.json    layer list, input shape, classes, weights_file
//   weights.bin   every parameter tensor, layer by layer
//   plan.json     slicing plan
//   bn_stats.bin  batchnorm running statistics of every plan row
//   manifest.json command, seed, config and its hash

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "reds/autograd.hpp"
#include "reds/nest.hpp"
#include "reds/netgraph.hpp"

namespace reds {

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes);
std::string hex64(std::uint64_t v);

nlohmann::json model_manifest(const ModelGraph& g, const std::string& weights_file);
/// Rebuilds the layer graph from a manifest; parameters stay zero.
ModelGraph graph_from_manifest(const nlohmann::json& manifest);

/// model.json plus the weight blob named in it.
void save_model(const std::string& dir, const ModelGraph& g);
ModelGraph load_model(const std::string& dir);

void save_grads(const std::string& path, const GradStore& grads);
/// Reads gradients shaped like the model's parameters.
GradStore load_grads(const std::string& path, const ModelGraph& g);

struct RunManifest {
  std::string command;
  std::uint64_t seed = 0;
  nlohmann::json config = nlohmann::json::object();
  /// Relative paths of the files the command produced.
  std::vector<std::string> artifacts;
};

void write_manifest(const std::string& dir, const RunManifest& m);
RunManifest read_manifest(const std::string& dir);

struct Bundle {
  RedsModel model;
  RunManifest manifest;
};

void save_bundle(const std::string& dir, const RedsModel& model,
                 const RunManifest& manifest);
/// Throws a data error naming the first missing or malformed part.
Bundle load_bundle(const std::string& dir);

/// Whole file as a string; data error when unreadable.
std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

}  // namespace reds
