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

// reds: command-line driver.
//
//   reds [--seed N] [--config FILE] [--out DIR] <command> [options]
//
// Exit codes: 0 ok, 2 config, 3 infeasible plan, 4 data, 5 numeric.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "reds/pipeline.hpp"

namespace {

namespace fs = std::filesystem;
using namespace reds;

enum ExitCode { kOk = 0, kFailure = 1, kConfig = 2, kInfeasible = 3, kData = 4, kNumeric = 5 };

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config:
    case ErrorKind::Shape:
    case ErrorKind::Bounds:
    case ErrorKind::Size:
      return kConfig;
    case ErrorKind::Infeasible:
      return kInfeasible;
    case ErrorKind::Data:
    case ErrorKind::Integrity:
      return kData;
    case ErrorKind::Numeric:
      return kNumeric;
  }
  return kFailure;
}

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string config_path;
  std::string out;
  std::string images;
  std::string labels;
  std::string split;
};

nlohmann::json read_json(const std::string& path) {
  try {
    return nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Config, path + ": " + e.what());
  }
}

// Config file (or a fallback document), then command-line overrides.
RunConfig resolve(const Globals& g, const nlohmann::json* fallback = nullptr) {
  RunConfig cfg;
  if (!g.config_path.empty()) {
    cfg = RunConfig::from_json(read_json(g.config_path));
  } else if (fallback) {
    cfg = RunConfig::from_json(*fallback);
  }
  if (g.seed) cfg.seed = *g.seed;
  if (!g.out.empty()) cfg.out = g.out;
  if (!g.images.empty() || !g.labels.empty()) {
    cfg.data.kind = "idx";
    cfg.data.images = g.images;
    cfg.data.labels = g.labels;
  }
  if (!g.split.empty()) cfg.data.split = parse_split(g.split);
  cfg.validate();
  fs::create_directories(cfg.out);
  return cfg;
}

std::string in_out(const RunConfig& cfg, const std::string& name) {
  return (fs::path(cfg.out) / name).string();
}

template <typename Writer>
void write_to(const std::string& path, Writer&& w) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Data, "cannot write " + path);
  w(out);
}

void add_data_flags(CLI::App* cmd, Globals& g) {
  cmd->add_option("--images", g.images, "IDX image file");
  cmd->add_option("--labels", g.labels, "IDX label file");
  cmd->add_option("--split", g.split, "train:val:test shares, e.g. 80:10:10");
}

int run_train(const Globals& g) {
  const RunConfig cfg = resolve(g);
  const Dataset data = load_dataset(cfg);
  const TrainResult t = cmd_train(cfg, data);
  save_model(cfg.out, t.graph);
  write_to(in_out(cfg, "train_log.csv"), [&](std::ostream& o) { t.log.write_csv(o); });
  write_manifest(cfg.out, make_manifest("train", cfg, {"model.json", "weights.bin", "train_log.csv"}));
  const auto acc = t.log.final_accuracy();
  if (!acc.empty()) std::cout << "validation accuracy " << acc.front() << "\n";
  return kOk;
}

int run_score(const Globals& g, const std::string& model_dir) {
  const RunConfig cfg = resolve(g);
  const Dataset data = load_dataset(cfg);
  const ModelGraph trained = load_model(model_dir);
  const ScoreResult s = cmd_score(cfg, trained, data);
  save_model(cfg.out, s.permuted);
  write_to(in_out(cfg, "scores.csv"), [&](std::ostream& o) { write_scores_csv(o, s.scores); });
  save_grads(in_out(cfg, "grads.bin"), s.grads);
  write_manifest(cfg.out, make_manifest("score", cfg,
                                        {"model.json", "weights.bin", "scores.csv", "grads.bin"}));
  std::cout << s.scores.size() << " units scored\n";
  return kOk;
}

int run_plan(Globals g, const std::string& scored_dir, const std::string& heuristic) {
  RunConfig cfg = resolve(g);
  if (!heuristic.empty()) {
    cfg.heuristic = heuristic;
    cfg.validate();
  }
  ScoreResult s;
  s.permuted = load_model(scored_dir);
  if (cfg.heuristic == "bu" || cfg.heuristic == "td") {
    s.scores = read_scores_csv((fs::path(scored_dir) / "scores.csv").string());
    s.grads = load_grads((fs::path(scored_dir) / "grads.bin").string(), s.permuted);
  }
  const PlanResult p = cmd_plan(cfg, s);
  for (const auto& w : p.warnings) std::cerr << "warning: " << w << "\n";
  save_model(cfg.out, p.model);
  save_plan(in_out(cfg, "plan.json"), p.plan);
  write_manifest(cfg.out, make_manifest("plan", cfg, {"model.json", "weights.bin", "plan.json"}));
  std::cout << p.plan.rows() << " rows planned"
            << (p.used_depthwise_solver ? " with the depthwise count solver" : "") << "\n";
  return kOk;
}

int run_finetune(const Globals& g, const std::string& model_dir, const std::string& plan_path) {
  const RunConfig cfg = resolve(g);
  const Dataset data = load_dataset(cfg);
  ModelGraph model = load_model(model_dir);
  SlicingPlan plan = load_plan(plan_path);
  FinetuneResult f = cmd_finetune(cfg, data, std::move(model), std::move(plan));
  write_to(in_out(cfg, "finetune_log.csv"), [&](std::ostream& o) { f.log.write_csv(o); });
  save_bundle(cfg.out, f.model, make_manifest("finetune", cfg, {"finetune_log.csv"}));
  if (f.log.diverged) fail(ErrorKind::Numeric, "fine-tuning diverged: " + f.log.divergence);
  return kOk;
}

int run_eval(const Globals& g, const std::string& bundle_dir) {
  Bundle b = load_bundle(bundle_dir);
  const RunConfig cfg = resolve(g, &b.manifest.config);
  const Dataset data = load_dataset(cfg);
  const auto rows = cmd_eval(b.model, data);
  write_to(in_out(cfg, "eval.csv"), [&](std::ostream& o) { write_eval_csv(o, rows); });
  write_manifest(cfg.out, make_manifest("eval", cfg, {"eval.csv"}));
  write_eval_csv(std::cout, rows);
  return kOk;
}

int run_switch_sim(const Globals& g, const std::string& bundle_dir,
                   const std::string& schedule, std::size_t alternate) {
  Bundle b = load_bundle(bundle_dir);
  const RunConfig cfg = resolve(g, &b.manifest.config);
  if (!schedule.empty() && alternate) {
    fail(ErrorKind::Config, "give --schedule or --alternate, not both");
  }
  const auto entries = alternate ? alternating_schedule(b.model.plan(), alternate)
                                 : parse_schedule(schedule);
  const auto log = cmd_switch_sim(b.model, entries);
  write_to(in_out(cfg, "switch_log.csv"), [&](std::ostream& o) { write_switch_csv(o, log); });
  write_manifest(cfg.out, make_manifest("switch-sim", cfg, {"switch_log.csv"}));
  std::uint64_t copied = 0;
  for (const auto& s : log) copied += s.stats.weights_copied;
  std::cout << log.size() << " switches, " << copied << " weight elements copied\n";
  return kOk;
}

int run_bench_cache(const Globals& g) {
  const RunConfig cfg = resolve(g);
  const auto rows = bench_report(cfg.bench, cfg.cache);
  write_to(in_out(cfg, "bench_cache.csv"), [&](std::ostream& o) { write_bench_csv(o, rows); });
  write_manifest(cfg.out, make_manifest("bench-cache", cfg, {"bench_cache.csv"}));
  std::cout << rows.size() << " sweep points\n";
  return kOk;
}

int run_verify_bounds(const Globals& g) {
  const RunConfig cfg = resolve(g);
  VerifyOptions o = cfg.bounds;
  o.seed = cfg.seed;
  const auto reports = verify_bounds(o);
  write_file(in_out(cfg, "bounds.json"), reports_to_json(reports));
  write_manifest(cfg.out, make_manifest("verify-bounds", cfg, {"bounds.json"}));
  std::size_t violations = 0;
  for (const auto& r : reports) violations += r.passed && r.no_split_matches ? 0 : 1;
  std::cout << reports.size() << " reports, " << violations << " violations\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"REDS: nested subnetworks sliced under MAC budgets"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  std::uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "Random seed (overrides the config)");
  app.add_option("--config", g.config_path, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--out", g.out, "Output directory");

  auto* pipeline = app.add_subcommand("pipeline", "train, score, plan, fine-tune and bundle");
  add_data_flags(pipeline, g);
  auto* train = app.add_subcommand("train", "train a reference model");
  add_data_flags(train, g);

  std::string model_dir;
  auto* score = app.add_subcommand("score", "accumulate gradients, score and reorder units");
  score->add_option("--model", model_dir, "trained model directory")->required();
  add_data_flags(score, g);

  std::string heuristic;
  auto* plan = app.add_subcommand("plan", "solve slicing points for every capacity");
  plan->add_option("--model", model_dir, "output directory of score")->required();
  plan->add_option("--heuristic", heuristic, "bu, td, l1 or random");

  std::string plan_path;
  auto* finetune = app.add_subcommand("finetune", "jointly fine-tune all subnetworks");
  finetune->add_option("--model", model_dir, "output directory of plan")->required();
  finetune->add_option("--plan", plan_path, "plan JSON")->required();
  add_data_flags(finetune, g);

  std::string bundle_dir;
  auto* eval = app.add_subcommand("eval", "test accuracy of every subnetwork");
  eval->add_option("--bundle", bundle_dir, "bundle directory")->required();
  add_data_flags(eval, g);

  std::string schedule;
  std::size_t alternate = 0;
  auto* sim = app.add_subcommand("switch-sim", "replay a subnetwork switching schedule");
  sim->add_option("--bundle", bundle_dir, "bundle directory")->required();
  sim->add_option("--schedule", schedule, "time:row pairs, comma separated");
  sim->add_option("--alternate", alternate, "switch N times between smallest and largest rows");

  auto* bench = app.add_subcommand("bench-cache", "simulate cache behaviour of sliced products");
  auto* bounds = app.add_subcommand("verify-bounds", "check heuristic bounds against brute force");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }
  if (*seed_opt) g.seed = seed;

  try {
    if (*pipeline) {
      const RunConfig cfg = resolve(g);
      RedsModel m = cmd_pipeline(cfg);
      std::cout << "bundle with " << m.rows() << " rows written to "
                << (fs::path(cfg.out) / "bundle").string() << "\n";
      return kOk;
    }
    if (*train) return run_train(g);
    if (*score) return run_score(g, model_dir);
    if (*plan) return run_plan(g, model_dir, heuristic);
    if (*finetune) return run_finetune(g, model_dir, plan_path);
    if (*eval) return run_eval(g, bundle_dir);
    if (*sim) return run_switch_sim(g, bundle_dir, schedule, alternate);
    if (*bench) return run_bench_cache(g);
    if (*bounds) return run_verify_bounds(g);
  } catch (const Error& e) {
    std::cerr << "reds: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "reds: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "reds: " << e.what() << "\n";
    return kFailure;
  }
  return kFailure;
}
