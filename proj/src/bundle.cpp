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

#include "reds/bundle.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "reds/planner.hpp"

namespace reds {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kModelFile = "model.json";
constexpr const char* kWeightsFile = "weights.bin";
constexpr const char* kPlanFile = "plan.json";
constexpr const char* kStatsFile = "bn_stats.bin";
constexpr const char* kManifestFile = "manifest.json";

std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

json parse_json(const std::string& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    fail(ErrorKind::Data, path + ": " + e.what());
  }
}

// Replaces `slot` with a tensor read from `in`, which must match its shape.
void read_into(std::istream& in, Tensor& slot, const std::string& what) {
  Tensor t = read_tensor(in);
  if (t.shape() != slot.shape()) {
    fail(ErrorKind::Data, what + " has the wrong shape");
  }
  slot = std::move(t);
}

template <typename Params, typename Fn>
void for_each_param(Params& p, Fn&& fn) {
  fn(p.weight, "weight");
  fn(p.bias, "bias");
  fn(p.gamma, "gamma");
  fn(p.beta, "beta");
  fn(p.running_mean, "running_mean");
  fn(p.running_var, "running_var");
}

void ensure_stream_end(std::istream& in, const std::string& path) {
  if (in.peek() != std::char_traits<char>::eof()) {
    fail(ErrorKind::Data, path + " has trailing bytes");
  }
}

}  // namespace

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Data, "cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Data, "cannot write " + path);
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) fail(ErrorKind::Data, "short write to " + path);
}

json model_manifest(const ModelGraph& g, const std::string& weights_file) {
  json layers = json::array();
  for (std::size_t l = 0; l < g.num_layers(); ++l) {
    const LayerSpec& s = g.layer(l);
    layers.push_back({{"kind", to_string(s.kind)},
                      {"units", s.units},
                      {"kernel", s.kernel},
                      {"stride", s.stride},
                      {"padding", to_string(s.padding)},
                      {"activation", to_string(s.activation)},
                      {"sliceable", s.sliceable},
                      {"transposed", g.params(l).transposed}});
  }
  const Shape3 in = g.input_shape();
  return json{{"layers", layers},
              {"input_shape", {in.h, in.w, in.c}},
              {"classes", g.classes()},
              {"weights_file", weights_file}};
}

ModelGraph graph_from_manifest(const json& m) {
  try {
    const auto shape = m.at("input_shape").get<std::vector<std::size_t>>();
    if (shape.size() != 3) fail(ErrorKind::Data, "input_shape needs three extents");
    std::vector<LayerSpec> specs;
    for (const auto& j : m.at("layers")) {
      LayerSpec s;
      s.kind = parse_layer_kind(j.at("kind").get<std::string>());
      s.units = j.at("units").get<std::size_t>();
      s.kernel = j.at("kernel").get<std::array<std::size_t, 2>>();
      s.stride = j.at("stride").get<std::array<std::size_t, 2>>();
      if (j.contains("padding")) s.padding = parse_padding(j["padding"].get<std::string>());
      s.activation = parse_activation(j.at("activation").get<std::string>());
      s.sliceable = j.at("sliceable").get<bool>();
      specs.push_back(s);
    }
    ModelGraph g(Shape3{shape[0], shape[1], shape[2]}, std::move(specs));
    if (m.contains("classes") && m["classes"].get<std::size_t>() != g.classes()) {
      fail(ErrorKind::Data, "classes field disagrees with the classifier");
    }
    const auto& layers = m.at("layers");
    bool any_transposed = false;
    for (const auto& j : layers) any_transposed |= j.value("transposed", false);
    if (any_transposed) set_cache_layout(g, true);
    return g;
  } catch (const json::exception& e) {
    fail(ErrorKind::Data, std::string("model manifest: ") + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Data) throw;
    throw Error(ErrorKind::Data, std::string("model manifest: ") + e.what());
  }
}

void save_model(const std::string& dir, const ModelGraph& g) {
  fs::create_directories(dir);
  write_file(join(dir, kModelFile), model_manifest(g, kWeightsFile).dump(2) + "\n");
  std::ostringstream blob;
  for (std::size_t l = 0; l < g.num_layers(); ++l) {
    for_each_param(g.params(l), [&](const Tensor& t, const char*) {
      if (!t.empty()) write_tensor(blob, t);
    });
  }
  write_file(join(dir, kWeightsFile), blob.str());
}

ModelGraph load_model(const std::string& dir) {
  const std::string path = join(dir, kModelFile);
  if (!fs::exists(path)) fail(ErrorKind::Data, "missing " + path);
  const json m = parse_json(path);
  ModelGraph g = graph_from_manifest(m);
  const std::string weights = join(dir, m.value("weights_file", std::string(kWeightsFile)));
  std::ifstream in(weights, std::ios::binary);
  if (!in) fail(ErrorKind::Data, "missing " + weights);
  for (std::size_t l = 0; l < g.num_layers(); ++l) {
    for_each_param(g.params(l), [&](Tensor& t, const char* name) {
      if (!t.empty()) read_into(in, t, "layer " + std::to_string(l) + " " + name);
    });
  }
  ensure_stream_end(in, weights);
  return g;
}

void save_grads(const std::string& path, const GradStore& grads) {
  std::ostringstream blob;
  for (const auto& l : grads.layers) {
    for (const Tensor* t : {&l.weight, &l.bias, &l.gamma, &l.beta}) {
      if (!t->empty()) write_tensor(blob, *t);
    }
  }
  write_file(path, blob.str());
}

GradStore load_grads(const std::string& path, const ModelGraph& g) {
  GradStore grads(g);
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Data, "missing " + path);
  for (std::size_t l = 0; l < grads.layers.size(); ++l) {
    auto& lg = grads.layers[l];
    for (Tensor* t : {&lg.weight, &lg.bias, &lg.gamma, &lg.beta}) {
      if (!t->empty()) read_into(in, *t, "gradient of layer " + std::to_string(l));
    }
  }
  ensure_stream_end(in, path);
  return grads;
}

void write_manifest(const std::string& dir, const RunManifest& m) {
  fs::create_directories(dir);
  const std::string config = m.config.dump();
  const json j{{"command", m.command},
               {"seed", m.seed},
               {"config", m.config},
               {"config_hash", hex64(fnv1a(config))},
               {"artifacts", m.artifacts}};
  write_file(join(dir, kManifestFile), j.dump(2) + "\n");
}

RunManifest read_manifest(const std::string& dir) {
  const std::string path = join(dir, kManifestFile);
  if (!fs::exists(path)) fail(ErrorKind::Data, "missing " + path);
  const json j = parse_json(path);
  try {
    RunManifest m;
    m.command = j.at("command").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.config = j.at("config");
    m.artifacts = j.at("artifacts").get<std::vector<std::string>>();
    if (j.at("config_hash").get<std::string>() != hex64(fnv1a(m.config.dump()))) {
      fail(ErrorKind::Data, path + ": config hash mismatch");
    }
    return m;
  } catch (const json::exception& e) {
    fail(ErrorKind::Data, path + ": " + e.what());
  }
}

void save_bundle(const std::string& dir, const RedsModel& model,
                 const RunManifest& manifest) {
  save_model(dir, model.graph());
  save_plan(join(dir, kPlanFile), model.plan());
  std::ostringstream blob;
  for (const auto& set : model.all_row_stats()) {
    for (std::size_t l = 0; l < set.mean.size(); ++l) {
      if (set.mean[l].empty()) continue;
      write_tensor(blob, set.mean[l]);
      write_tensor(blob, set.var[l]);
    }
  }
  write_file(join(dir, kStatsFile), blob.str());
  RunManifest m = manifest;
  m.artifacts = {kModelFile, kWeightsFile, kPlanFile, kStatsFile};
  for (const auto& a : manifest.artifacts) {
    if (std::find(m.artifacts.begin(), m.artifacts.end(), a) == m.artifacts.end()) {
      m.artifacts.push_back(a);
    }
  }
  write_manifest(dir, m);
}

Bundle load_bundle(const std::string& dir) {
  if (!fs::is_directory(dir)) fail(ErrorKind::Data, "no bundle directory " + dir);
  for (const char* part : {kModelFile, kPlanFile, kStatsFile, kManifestFile}) {
    if (!fs::exists(join(dir, part))) {
      fail(ErrorKind::Data, "bundle " + dir + " lacks " + part);
    }
  }
  ModelGraph g = load_model(dir);
  SlicingPlan plan = load_plan(join(dir, kPlanFile));
  RunManifest manifest = read_manifest(dir);
  RedsModel model(std::move(g), std::move(plan));
  const std::string stats = join(dir, kStatsFile);
  std::ifstream in(stats, std::ios::binary);
  for (auto& set : model.all_row_stats()) {
    for (std::size_t l = 0; l < set.mean.size(); ++l) {
      if (set.mean[l].empty()) continue;
      read_into(in, set.mean[l], "batchnorm mean of layer " + std::to_string(l));
      read_into(in, set.var[l], "batchnorm variance of layer " + std::to_string(l));
    }
  }
  ensure_stream_end(in, stats);
  return Bundle{std::move(model), std::move(manifest)};
}

}  // namespace reds
