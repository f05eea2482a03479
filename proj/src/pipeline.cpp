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

#include "reds/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace reds {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Offsets that keep the per-stage random streams apart.
enum SeedOffset : std::uint64_t {
  kSplitSeed = 1,
  kInitSeed = 2,
  kTrainSeed = 3,
  kFinetuneSeed = 4,
  kImportanceSeed = 5,
};

void reject_unknown(const json& j, const std::set<std::string>& known,
                    const std::string& where) {
  if (!j.is_object()) fail(ErrorKind::Config, where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) fail(ErrorKind::Config, "unknown key '" + key + "' in " + where);
  }
}

TrainConfig train_from_json(const json& j, TrainConfig t, const std::string& where) {
  reject_unknown(j, {"batch_size", "epochs", "optimizer", "learning_rate", "schedule"}, where);
  if (j.contains("batch_size")) t.batch_size = j["batch_size"].get<std::size_t>();
  if (j.contains("epochs")) t.epochs = j["epochs"].get<std::size_t>();
  if (j.contains("optimizer")) {
    const auto opt = j["optimizer"].get<std::string>();
    if (opt != "sgd" && opt != "adam") fail(ErrorKind::Config, "optimizer must be sgd or adam");
    t.use_adam = opt == "adam";
  }
  if (j.contains("learning_rate") && j.contains("schedule")) {
    fail(ErrorKind::Config, where + ": give learning_rate or schedule, not both");
  }
  if (j.contains("learning_rate")) {
    t.schedule = {{std::numeric_limits<std::uint64_t>::max(), j["learning_rate"].get<float>()}};
  }
  if (j.contains("schedule")) {
    t.schedule.clear();
    for (const auto& s : j["schedule"]) {
      t.schedule.push_back({s.at(0).get<std::uint64_t>(), s.at(1).get<float>()});
    }
  }
  return t;
}

json train_to_json(const TrainConfig& t) {
  json schedule = json::array();
  for (const auto& s : t.schedule) schedule.push_back({s.until_step, s.rate});
  return {{"batch_size", t.batch_size},
          {"epochs", t.epochs},
          {"optimizer", t.use_adam ? "adam" : "sgd"},
          {"schedule", schedule}};
}

std::string split_text(const std::array<unsigned, 3>& s) {
  return std::to_string(s[0]) + ":" + std::to_string(s[1]) + ":" + std::to_string(s[2]);
}

std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

template <typename Writer>
void write_csv_file(const std::string& path, Writer&& w) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Data, "cannot write " + path);
  w(out);
}

SlicingPlan full_plan(const ModelGraph& g) {
  SlicingPlan p;
  p.capacities = {total_macs(g)};
  p.points = {full_points(g)};
  return p;
}

// Reindexes gradients by carrying them through the model's permutation.
GradStore permute_grads(const ModelGraph& g, const GradStore& grads,
                        const Permutation& perm) {
  ModelGraph carrier = g;
  for (std::size_t l = 0; l < g.num_layers(); ++l) {
    auto& p = carrier.params(l);
    const auto& gl = grads.layers.at(l);
    p.weight = gl.weight;
    p.bias = gl.bias;
    p.gamma = gl.gamma;
    p.beta = gl.beta;
  }
  apply_permutation(carrier, perm);
  GradStore out = grads;
  for (std::size_t l = 0; l < g.num_layers(); ++l) {
    auto& p = carrier.params(l);
    auto& gl = out.layers[l];
    gl.weight = std::move(p.weight);
    gl.bias = std::move(p.bias);
    gl.gamma = std::move(p.gamma);
    gl.beta = std::move(p.beta);
  }
  return out;
}

void copy_row_stats_into(ModelGraph& g, const BnStatsSet& stats) {
  for (std::size_t l = 0; l < g.num_layers(); ++l) {
    if (stats.mean.at(l).empty()) continue;
    g.params(l).running_mean = stats.mean[l];
    g.params(l).running_var = stats.var[l];
  }
}

}  // namespace

RunConfig::RunConfig() {
  train.batch_size = 50;
  train.epochs = 10;
  train.use_adam = true;
  train.schedule = {{std::numeric_limits<std::uint64_t>::max(), 1e-3f}};
  finetune = train;
  finetune.epochs = 5;
  finetune.schedule = {{std::numeric_limits<std::uint64_t>::max(), 5e-4f}};
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  try {
    reject_unknown(j, {"seed", "arch", "size", "capacities", "heuristic", "data", "train",
                       "finetune", "importance_batches", "depthwise_work_limit",
                       "cache_layout", "cache", "bench", "bounds", "out"},
                   "config");
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("arch")) c.arch = parse_arch(j["arch"].get<std::string>());
    if (j.contains("size")) c.size = parse_size(j["size"].get<std::string>());
    if (j.contains("capacities")) c.capacities = j["capacities"].get<std::vector<double>>();
    if (j.contains("heuristic")) c.heuristic = j["heuristic"].get<std::string>();
    if (j.contains("data")) {
      const auto& d = j["data"];
      reject_unknown(d, {"source", "images", "labels", "split", "classes", "per_class",
                         "shape", "separation"},
                     "data");
      if (d.contains("source")) c.data.kind = d["source"].get<std::string>();
      if (d.contains("images")) c.data.images = d["images"].get<std::string>();
      if (d.contains("labels")) c.data.labels = d["labels"].get<std::string>();
      if (d.contains("split")) c.data.split = parse_split(d["split"].get<std::string>());
      if (d.contains("classes")) c.data.blobs.classes = d["classes"].get<std::size_t>();
      if (d.contains("per_class")) c.data.blobs.per_class = d["per_class"].get<std::size_t>();
      if (d.contains("shape")) {
        const auto s = d["shape"].get<std::vector<std::size_t>>();
        if (s.size() != 3) fail(ErrorKind::Config, "data.shape needs three extents");
        c.data.blobs.shape = Shape3{s[0], s[1], s[2]};
      }
      if (d.contains("separation")) c.data.blobs.separation = d["separation"].get<double>();
    }
    if (j.contains("train")) c.train = train_from_json(j["train"], c.train, "train");
    if (j.contains("finetune")) {
      c.finetune = train_from_json(j["finetune"], c.finetune, "finetune");
    }
    if (j.contains("importance_batches")) {
      c.importance_batches = j["importance_batches"].get<std::size_t>();
    }
    if (j.contains("depthwise_work_limit")) {
      c.depthwise_work_limit = j["depthwise_work_limit"].get<double>();
    }
    if (j.contains("cache_layout")) c.cache_layout = j["cache_layout"].get<bool>();
    if (j.contains("cache")) {
      const auto& k = j["cache"];
      reject_unknown(k, {"total_bytes", "ways", "line_bytes"}, "cache");
      if (k.contains("total_bytes")) c.cache.total_bytes = k["total_bytes"].get<std::uint64_t>();
      if (k.contains("ways")) c.cache.ways = k["ways"].get<std::uint64_t>();
      if (k.contains("line_bytes")) c.cache.line_bytes = k["line_bytes"].get<std::uint64_t>();
    }
    if (j.contains("bench")) {
      const auto& b = j["bench"];
      reject_unknown(b, {"shapes", "batch", "elem_bytes", "slices", "miss_penalty",
                         "include_inputs"},
                     "bench");
      if (b.contains("shapes")) {
        c.bench.shapes = b["shapes"].get<std::vector<std::pair<std::size_t, std::size_t>>>();
      }
      if (b.contains("batch")) c.bench.batch = b["batch"].get<std::size_t>();
      if (b.contains("elem_bytes")) {
        c.bench.elem_bytes = b["elem_bytes"].get<std::vector<std::size_t>>();
      }
      if (b.contains("slices")) c.bench.slices = b["slices"].get<std::vector<double>>();
      if (b.contains("miss_penalty")) {
        c.bench.miss_penalty = b["miss_penalty"].get<std::uint64_t>();
      }
      if (b.contains("include_inputs")) {
        c.bench.trace.include_inputs = b["include_inputs"].get<bool>();
      }
    }
    if (j.contains("bounds")) {
      const auto& b = j["bounds"];
      reject_unknown(b, {"instances", "max_items", "restrict_weights", "tight_eps_fraction"},
                     "bounds");
      if (b.contains("instances")) c.bounds.instances = b["instances"].get<std::size_t>();
      if (b.contains("max_items")) c.bounds.max_items = b["max_items"].get<std::size_t>();
      if (b.contains("restrict_weights")) {
        c.bounds.restrict_weights = b["restrict_weights"].get<bool>();
      }
      if (b.contains("tight_eps_fraction")) {
        c.bounds.tight_eps_fraction = b["tight_eps_fraction"].get<double>();
      }
    }
    if (j.contains("out")) c.out = j["out"].get<std::string>();
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, e.what());
  }
  return c;
}

json RunConfig::to_json() const {
  const Shape3 s = data.blobs.shape;
  json shapes = json::array();
  for (const auto& [m, n] : bench.shapes) shapes.push_back({m, n});
  return {{"seed", seed},
          {"arch", to_string(arch)},
          {"size", to_string(size)},
          {"capacities", capacities},
          {"heuristic", heuristic},
          {"data",
           {{"source", data.kind},
            {"images", data.images},
            {"labels", data.labels},
            {"split", split_text(data.split)},
            {"classes", data.blobs.classes},
            {"per_class", data.blobs.per_class},
            {"shape", {s.h, s.w, s.c}},
            {"separation", data.blobs.separation}}},
          {"train", train_to_json(train)},
          {"finetune", train_to_json(finetune)},
          {"importance_batches", importance_batches},
          {"depthwise_work_limit", depthwise_work_limit},
          {"cache_layout", cache_layout},
          {"cache",
           {{"total_bytes", cache.total_bytes},
            {"ways", cache.ways},
            {"line_bytes", cache.line_bytes}}},
          {"bench",
           {{"shapes", shapes},
            {"batch", bench.batch},
            {"elem_bytes", bench.elem_bytes},
            {"slices", bench.slices},
            {"miss_penalty", bench.miss_penalty},
            {"include_inputs", bench.trace.include_inputs}}},
          {"bounds",
           {{"instances", bounds.instances},
            {"max_items", bounds.max_items},
            {"restrict_weights", bounds.restrict_weights},
            {"tight_eps_fraction", bounds.tight_eps_fraction}}},
          {"out", out}};
}

void RunConfig::validate() const {
  if (capacities.empty()) fail(ErrorKind::Config, "capacities must not be empty");
  for (std::size_t i = 0; i < capacities.size(); ++i) {
    const double p = capacities[i];
    if (!(p > 0.0) || p > 100.0) fail(ErrorKind::Config, "capacities must lie in (0, 100]");
    if (i > 0 && !(p < capacities[i - 1])) {
      fail(ErrorKind::Config, "capacities must be strictly descending");
    }
  }
  static const std::set<std::string> heuristics{"bu", "td", "l1", "random"};
  if (!heuristics.count(heuristic)) {
    fail(ErrorKind::Config, "heuristic must be bu, td, l1 or random");
  }
  if (data.kind != "blobs" && data.kind != "idx") {
    fail(ErrorKind::Config, "data.source must be blobs or idx");
  }
  if (data.kind == "idx" && (data.images.empty() || data.labels.empty())) {
    fail(ErrorKind::Config, "idx data needs images and labels paths");
  }
  if (data.kind == "blobs" && (data.blobs.classes < 2 || data.blobs.per_class == 0)) {
    fail(ErrorKind::Config, "blobs need at least two classes and one sample each");
  }
  train.validate();
  finetune.validate();
  if (importance_batches == 0) fail(ErrorKind::Config, "importance_batches must be positive");
  cache.validate();
  if (bench.batch == 0) fail(ErrorKind::Config, "bench.batch must be positive");
  if (bounds.max_items < 2 || bounds.max_items > 20) {
    fail(ErrorKind::Config, "bounds.max_items must lie in 2..20");
  }
}

Dataset load_dataset(const RunConfig& cfg) {
  Dataset d;
  if (cfg.data.kind == "idx") {
    d = load_idx(cfg.data.images, cfg.data.labels);
  } else {
    BlobOptions o = cfg.data.blobs;
    o.seed = cfg.seed;
    d = synth_blobs(o);
  }
  split_dataset(d, cfg.seed + kSplitSeed, cfg.data.split);
  if (d.train.empty()) fail(ErrorKind::Data, "training split is empty");
  return d;
}

TrainResult cmd_train(const RunConfig& cfg, const Dataset& data) {
  ModelGraph g = build_reference(cfg.arch, cfg.size, data.sample_shape, data.classes);
  initialize_weights(g, cfg.seed + kInitSeed);
  SlicingPlan plan = full_plan(g);
  RedsModel m(std::move(g), std::move(plan));
  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed + kTrainSeed;
  FinetuneOptions opts;
  opts.record_batches = false;
  FinetuneLog log = finetune_joint(m, data, tc, opts);
  if (log.diverged) fail(ErrorKind::Numeric, "training diverged: " + log.divergence);
  ModelGraph trained = m.graph();
  copy_row_stats_into(trained, m.row_stats(0));
  return TrainResult{std::move(trained), std::move(log)};
}

ScoreResult cmd_score(const RunConfig& cfg, const ModelGraph& trained,
                      const Dataset& data) {
  auto stream = batch_stream(data, data.train, cfg.train.batch_size,
                             cfg.seed + kImportanceSeed, true);
  const GradStore grads = accumulate_importance_grads(trained, stream, cfg.importance_batches);
  const auto scores = score_units(trained, grads);
  PermuteResult pr = permute_descending(trained, scores);
  ScoreResult r;
  r.scores = permute_scores(scores, pr.permutation);
  r.grads = permute_grads(trained, grads, pr.permutation);
  r.permuted = std::move(pr.graph);
  return r;
}

PlanResult cmd_plan(const RunConfig& cfg, const ScoreResult& scored) {
  cfg.validate();
  std::vector<double> fractions;
  for (const double p : cfg.capacities) fractions.push_back(p / 100.0);
  const auto caps = capacities_from_fractions(scored.permuted, fractions);
  PlanResult r{scored.permuted, {}, {}, false};
  if (cfg.heuristic == "l1" || cfg.heuristic == "random") {
    const auto strategy = cfg.heuristic == "l1" ? BaselineStrategy::L1EqualShare
                                                : BaselineStrategy::RandomEqualShare;
    BaselineResult b = plan_baseline(scored.permuted, strategy, caps, cfg.seed);
    apply_permutation(r.model, b.order);
    r.plan = std::move(b.plan);
    r.warnings = std::move(b.warnings);
  } else {
    const bool bu = cfg.heuristic == "bu";
    bool done = false;
    if (has_depthwise_structure(scored.permuted)) {
      DwInstance inst = build_dw_instance(scored.permuted, scored.grads);
      inst.capacity = caps.front();
      if (dw_work(inst) <= cfg.depthwise_work_limit) {
        r.plan = bu ? plan_depthwise_bottom_up(inst, caps) : plan_depthwise_top_down(inst, caps);
        r.used_depthwise_solver = true;
        done = true;
      } else {
        r.warnings.push_back("depthwise count solver too large; planning units individually");
      }
    }
    if (!done) {
      const UnitCatalog cat = build_catalog(scored.permuted, scored.scores);
      r.plan = bu ? plan_bottom_up(cat, caps) : plan_top_down(cat, caps);
    }
  }
  r.plan.heuristic = cfg.heuristic;
  r.plan.seed = cfg.seed;
  r.plan.validate(&r.model);
  return r;
}

FinetuneResult cmd_finetune(const RunConfig& cfg, const Dataset& data,
                            ModelGraph model, SlicingPlan plan) {
  RedsModel m(std::move(model), std::move(plan));
  TrainConfig tc = cfg.finetune;
  tc.seed = cfg.seed + kFinetuneSeed;
  FinetuneOptions opts;
  opts.record_batches = false;
  FinetuneLog log = finetune_joint(m, data, tc, opts);
  if (cfg.cache_layout) m.set_layout(Layout::CacheOptimized);
  return FinetuneResult{std::move(m), std::move(log)};
}

std::vector<EvalRow> cmd_eval(RedsModel& model, const Dataset& data) {
  if (data.test.empty()) fail(ErrorKind::Data, "test split is empty");
  const ModelGraph& g = model.graph();
  if (data.sample_shape != g.input_shape() || data.classes != g.classes()) {
    fail(ErrorKind::Data, "dataset does not match the model's input shape or classes");
  }
  const auto acc = row_accuracy(model, data, data.test);
  const double full = static_cast<double>(total_macs(g));
  std::vector<EvalRow> rows;
  for (std::size_t r = 0; r < model.rows(); ++r) {
    const Points& pts = model.plan().points[r];
    EvalRow e;
    e.row = r;
    e.capacity_macs = model.plan().capacities[r];
    e.capacity_pct = 100.0 * static_cast<double>(e.capacity_macs) / full;
    e.macs = config_macs(g, &pts);
    e.params = active_parameters(g, &pts, false);
    e.accuracy = acc[r];
    rows.push_back(e);
  }
  return rows;
}

void write_eval_csv(std::ostream& out, const std::vector<EvalRow>& rows) {
  out << "row,capacity_pct,capacity_macs,macs,params,accuracy\n";
  const auto old = out.precision(10);
  for (const auto& r : rows) {
    out << r.row << ',' << r.capacity_pct << ',' << r.capacity_macs << ',' << r.macs
        << ',' << r.params << ',' << r.accuracy << '\n';
  }
  out.precision(old);
}

std::vector<ScheduleEntry> parse_schedule(const std::string& text) {
  std::string compact;
  for (const char c : text) {
    if (!std::isspace(static_cast<unsigned char>(c))) compact.push_back(c);
  }
  std::vector<ScheduleEntry> out;
  if (compact.empty()) return out;
  std::stringstream ss(compact);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == item.size()) {
      fail(ErrorKind::Config, "schedule entries look like time:row, got '" + item + "'");
    }
    try {
      std::size_t used = 0;
      const std::string t = item.substr(0, colon);
      const std::string r = item.substr(colon + 1);
      ScheduleEntry e;
      e.time = std::stoull(t, &used);
      if (used != t.size()) throw std::invalid_argument(t);
      e.row = std::stoul(r, &used);
      if (used != r.size()) throw std::invalid_argument(r);
      if (!out.empty() && e.time < out.back().time) {
        fail(ErrorKind::Config, "schedule times must not decrease");
      }
      out.push_back(e);
    } catch (const std::logic_error&) {
      fail(ErrorKind::Config, "bad schedule entry '" + item + "'");
    }
  }
  return out;
}

std::vector<ScheduleEntry> alternating_schedule(const SlicingPlan& plan,
                                                std::size_t count) {
  std::vector<ScheduleEntry> out;
  const std::size_t small = plan.rows() - 1;
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(ScheduleEntry{i, i % 2 == 0 ? small : 0});
  }
  return out;
}

std::vector<SwitchLogEntry> cmd_switch_sim(RedsModel& model,
                                           const std::vector<ScheduleEntry>& schedule) {
  for (const auto& e : schedule) {
    if (e.row >= model.rows()) {
      fail(ErrorKind::Config, "schedule names row " + std::to_string(e.row) + " but the plan has " +
                                  std::to_string(model.rows()));
    }
  }
  const Tensor probe({1, model.graph().input_shape().size()});
  std::vector<SwitchLogEntry> log;
  for (const auto& e : schedule) {
    SwitchLogEntry s;
    s.entry = e;
    s.stats = model.activate(e.row);
    model.infer(probe, &s.inference_macs);
    log.push_back(s);
  }
  return log;
}

void write_switch_csv(std::ostream& out, const std::vector<SwitchLogEntry>& log) {
  out << "time,row,integers_updated,flag_bits,weights_copied,elapsed_ns,inference_macs\n";
  for (const auto& s : log) {
    out << s.entry.time << ',' << s.entry.row << ',' << s.stats.integers_updated << ','
        << s.stats.flag_bits << ',' << s.stats.weights_copied << ','
        << s.stats.elapsed.count() << ',' << s.inference_macs << '\n';
  }
}

std::vector<UnitScore> read_scores_csv(const std::string& path) {
  const std::string text = read_file(path);
  std::stringstream ss(text);
  std::string line;
  if (!std::getline(ss, line) || line != "layer,unit,importance,macs") {
    fail(ErrorKind::Data, path + ": unexpected header");
  }
  std::vector<UnitScore> out;
  std::size_t lineno = 1;
  while (std::getline(ss, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ls(line);
    UnitScore s;
    char c1 = 0, c2 = 0, c3 = 0;
    if (!(ls >> s.layer >> c1 >> s.unit >> c2 >> s.importance >> c3 >> s.macs) ||
        c1 != ',' || c2 != ',' || c3 != ',') {
      fail(ErrorKind::Data, path + ": malformed line " + std::to_string(lineno));
    }
    out.push_back(s);
  }
  return out;
}

RunManifest make_manifest(const std::string& command, const RunConfig& cfg,
                          std::vector<std::string> artifacts) {
  RunManifest m;
  m.command = command;
  m.seed = cfg.seed;
  m.config = cfg.to_json();
  m.artifacts = std::move(artifacts);
  return m;
}

RedsModel cmd_pipeline(const RunConfig& cfg) {
  cfg.validate();
  const std::string root = cfg.out;
  fs::create_directories(root);
  std::vector<std::string> artifacts;
  auto stage = [&](const std::string& name, auto&& fn) {
    try {
      return fn();
    } catch (const Error& e) {
      throw Error(e.kind(), "stage " + name + ": " + e.what() +
                                " (earlier artifacts kept under " + root + ")");
    } catch (const fs::filesystem_error& e) {
      throw Error(ErrorKind::Data, "stage " + name + ": " + e.what());
    }
  };

  const Dataset data = stage("data", [&] { return load_dataset(cfg); });

  const ModelGraph trained = stage("train", [&] {
    TrainResult t = cmd_train(cfg, data);
    const std::string dir = join(root, "train");
    save_model(dir, t.graph);
    write_csv_file(join(dir, "train_log.csv"), [&](std::ostream& o) { t.log.write_csv(o); });
    write_manifest(dir, make_manifest("train", cfg, {"model.json", "weights.bin", "train_log.csv"}));
    artifacts.push_back("train/manifest.json");
    return std::move(t.graph);
  });

  const ScoreResult scored = stage("score", [&] {
    ScoreResult s = cmd_score(cfg, trained, data);
    const std::string dir = join(root, "score");
    save_model(dir, s.permuted);
    write_csv_file(join(dir, "scores.csv"), [&](std::ostream& o) { write_scores_csv(o, s.scores); });
    save_grads(join(dir, "grads.bin"), s.grads);
    write_manifest(dir, make_manifest("score", cfg,
                                      {"model.json", "weights.bin", "scores.csv", "grads.bin"}));
    artifacts.push_back("score/manifest.json");
    return s;
  });

  PlanResult planned = stage("plan", [&] {
    PlanResult p = cmd_plan(cfg, scored);
    const std::string dir = join(root, "plan");
    save_model(dir, p.model);
    save_plan(join(dir, "plan.json"), p.plan);
    write_manifest(dir, make_manifest("plan", cfg, {"model.json", "weights.bin", "plan.json"}));
    artifacts.push_back("plan/manifest.json");
    return p;
  });

  FinetuneResult tuned = stage("finetune", [&] {
    FinetuneResult f = cmd_finetune(cfg, data, std::move(planned.model), std::move(planned.plan));
    const std::string dir = join(root, "bundle");
    fs::create_directories(dir);
    write_csv_file(join(dir, "finetune_log.csv"), [&](std::ostream& o) { f.log.write_csv(o); });
    save_bundle(dir, f.model, make_manifest("pipeline", cfg, {"finetune_log.csv"}));
    artifacts.push_back("bundle/manifest.json");
    if (f.log.diverged) fail(ErrorKind::Numeric, "fine-tuning diverged: " + f.log.divergence);
    return f;
  });

  stage("eval", [&] {
    const auto rows = cmd_eval(tuned.model, data);
    write_csv_file(join(root, "eval.csv"), [&](std::ostream& o) { write_eval_csv(o, rows); });
    artifacts.push_back("eval.csv");
    return 0;
  });

  write_manifest(root, make_manifest("pipeline", cfg, artifacts));
  return std::move(tuned.model);
}

}  // namespace reds
