// Copyright 2026 The affsim Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// affsim command line: ingest, generate-dataset, train, eval, drive, sweep,
// serve.

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "affsim/affsim.hpp"

namespace fs = std::filesystem;
using namespace affsim;

namespace {

// "builtin:highway", "builtin:straight" or a world file path.
std::shared_ptr<const WorldMap> open_world(const std::string& spec) {
  if (spec == "builtin:highway") return std::make_shared<WorldMap>(builtin_highway_world());
  if (spec == "builtin:straight") return std::make_shared<WorldMap>(straight_road_world());
  return std::make_shared<WorldMap>(load_world(spec));
}

GeoBBox parse_bbox(const std::string& text) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) v.push_back(std::stod(item));
  if (v.size() != 4) throw ConfigError("--bbox expects lat,lon,lat,lon");
  GeoBBox b{std::min(v[0], v[2]), std::max(v[0], v[2]), std::min(v[1], v[3]), std::max(v[1], v[3])};
  b.validate();
  return b;
}

Scenario open_scenario(const std::string& spec) {
  for (const Scenario& s : builtin_scenarios()) {
    if (s.id == spec) return s;
  }
  return parse_scenario(std::string_view(read_file(spec)));
}

ParamValues parse_assignments(const std::vector<std::string>& items) {
  ParamValues out;
  for (const std::string& s : items) {
    const GridAxis a = parse_grid_axis(s);
    if (a.min != a.max) throw ConfigError("--set takes name=value, got " + s);
    out[a.name] = a.min;
  }
  return out;
}

int cmd_ingest(const std::string& map, const std::string& bbox, std::uint64_t seed, double lane_width,
               const std::string& out) {
  const WorldMap w = ingest(read_file(map), parse_bbox(bbox), seed, lane_width);
  save_world(w, out);
  std::printf("roads %zu  buildings %zu  diagnostics %zu\n", w.roads.segments().size(), w.buildings.size(),
              w.diagnostics.size());
  for (const Diagnostic& d : w.diagnostics) std::printf("  feature %zu: %s\n", d.feature, d.reason.c_str());
  return 0;
}

int cmd_generate(const std::string& world, GenerateConfig cfg) {
  std::size_t written = 0;
  const DatasetManifest m = generate_dataset(open_world(world), cfg, [&](const LabeledFrame&, const Frame&) {
    if (++written % 500 == 0) std::fprintf(stderr, "%zu frames\n", written);
  });
  std::printf("kept %zu  train %zu  val %zu  test %zu\n", m.total(), m.records[0].size(), m.records[1].size(),
              m.records[2].size());
  for (const auto& [why, n] : m.rejected) std::printf("  rejected %d: %s\n", n, why.c_str());
  return 0;
}

int cmd_train(const fs::path& data, const std::string& config, TrainConfig tc, const fs::path& out,
              const std::string& split_name) {
  if (!config.empty()) tc = nlohmann::json::parse(read_file(config)).get<TrainConfig>();
  const DatasetManifest m = load_manifest(data);
  const RegressorSpec spec;
  const auto train_set = load_samples(m, "train", data, spec);
  std::vector<Sample> held;
  if (!split_name.empty()) held = load_samples(m, split_name, data, spec);
  Regressor net(spec);
  net.initialize(tc.seed);
  std::vector<std::pair<int, EvalReport>> rows;
  const TrainResult r = train(net, train_set, tc, [&](int epoch, const Regressor& n) {
    if (!held.empty()) rows.emplace_back(epoch, evaluate(n, held, m.ranges));
    std::fprintf(stderr, "epoch %d done\n", epoch);
  });
  write_file(out.string(), encode_checkpoint({net, m.channel_means, m.ranges, tc.epochs}));
  nlohmann::json curve = r.loss_curve;
  std::printf("%s\n", nlohmann::json{{"loss_curve", curve}}.dump().c_str());
  if (!rows.empty()) std::printf("%s mse (normalized)\n%s", split_name.c_str(), format_mse_table(rows).c_str());
  return 0;
}

int cmd_eval(const fs::path& data, const std::string& ckpt, const std::string& split_name, const std::string& out) {
  const Checkpoint c = decode_checkpoint(read_file(ckpt));
  const DatasetManifest m = load_manifest(data);
  const auto samples = load_samples(m, split_name, data, c.model.spec());
  const EvalReport r = evaluate(c.model, samples, c.ranges);
  if (!out.empty()) write_file(out, report_to_json(r).dump(2) + "\n");
  std::printf("%s", format_mse_table({{c.epoch, r}}).c_str());
  std::printf("%s", format_mse_table({{c.epoch, r}}, true).c_str());
  std::printf("inactive precision %.3f recall %.3f accuracy %.3f\n", r.inactive_precision(), r.inactive_recall(),
              r.inactive_accuracy());
  return 0;
}

int cmd_drive(const std::string& world, EpisodeConfig ec, const std::string& gains, const std::string& ckpt,
              const std::string& out) {
  if (!gains.empty()) ec.ego.gains = nlohmann::json::parse(read_file(gains)).get<ControllerGains>();
  std::optional<Checkpoint> model;
  if (!ckpt.empty()) model = decode_checkpoint(read_file(ckpt));
  const auto map = open_world(world);
  Perception learned = [&](const World& w, const Actor& ego) -> std::optional<AffordanceVector> {
    const Snapshot s = make_snapshot(w, 0, w.clock.sim_time());
    const Frame f = render(*map, s.actors, {ego.id, ego.kind, ego.position, ego.heading, ego.speed, ego.extents,
                                            ego.color},
                           s.time_of_day);
    const auto y = model->model.forward(preprocess(f, model->channel_means, model->model.spec()));
    return decode(std::span<const double, kNumAffordances>(y), model->ranges);
  };
  const EpisodeTrace t = run_episode(map, ec, model ? &learned : nullptr);
  std::string lines;
  for (const Snapshot& s : t.snapshots) lines += snapshot_to_json(s).dump() + "\n";
  write_file(out, lines);
  std::printf("snapshots %zu  collisions %zu  respawns %d\n", t.snapshots.size(), t.collisions.size(), t.respawns);
  return 0;
}

int cmd_sweep(const std::string& scenario, const std::vector<std::string>& axes, const std::vector<std::string>& set,
              const std::string& out) {
  const Scenario sc = open_scenario(scenario);
  std::vector<GridAxis> grid;
  for (const std::string& a : axes) grid.push_back(parse_grid_axis(a));
  const SweepReport r = run_sweep(sc, grid, parse_assignments(set));
  const std::string csv = sweep_to_csv(r);
  if (out.empty()) {
    std::printf("%s", csv.c_str());
  } else {
    write_file(out + ".json", sweep_to_json(r).dump(2) + "\n");
    write_file(out + ".csv", csv);
    std::printf("%zu rows -> %s.json, %s.csv\n", r.rows.size(), out.c_str(), out.c_str());
  }
  return 0;
}

HttpServer* g_server = nullptr;

int cmd_serve(const std::string& host, int port, const std::vector<std::string>& files, const std::string& web,
              int workers) {
  RunService service(workers);
  for (const std::string& f : files) service.add_scenario(parse_scenario(std::string_view(read_file(f))), f);
  HttpServer server(service, web);
  g_server = &server;
  std::signal(SIGINT, [](int) {
    if (g_server) g_server->stop();
  });
  std::fprintf(stderr, "listening on http://%s:%d\n", host.c_str(), port);
  if (!server.listen(host, port)) {
    std::fprintf(stderr, "cannot bind %s:%d\n", host.c_str(), port);
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"affsim: affordance driving simulator"};
  app.require_subcommand(1);

  auto* ingest_cmd = app.add_subcommand("ingest", "convert a GeoJSON map to a world file");
  std::string map_path, bbox, world_out;
  std::uint64_t ingest_seed = 0;
  double lane_width = RoadSegment::kDefaultLaneWidth;
  ingest_cmd->add_option("--map", map_path, "GeoJSON feature collection")->required()->check(CLI::ExistingFile);
  ingest_cmd->add_option("--bbox", bbox, "lat,lon,lat,lon")->required();
  ingest_cmd->add_option("--seed", ingest_seed, "building height seed")->required();
  ingest_cmd->add_option("--lane-width", lane_width, "metres");
  ingest_cmd->add_option("--out", world_out, "world file")->required();

  auto* gen_cmd = app.add_subcommand("generate-dataset", "drive episodes and write labelled frames");
  std::string gen_world = "builtin:highway", gen_out;
  GenerateConfig gen;
  gen_cmd->add_option("--world", gen_world, "world file or builtin:highway|builtin:straight");
  gen_cmd->add_option("--episodes", gen.episodes)->check(CLI::PositiveNumber);
  gen_cmd->add_option("--frames-per-episode", gen.frames_per_episode)->check(CLI::PositiveNumber);
  gen_cmd->add_option("--seed", gen.seed);
  gen_cmd->add_option("--density", gen.episode.traffic_density, "vehicles per km per lane");
  gen_cmd->add_option("--out", gen_out, "output directory")->required();

  auto* train_cmd = app.add_subcommand("train", "fit the regressor on a dataset's train split");
  fs::path train_data, train_out = "model.ckpt";
  std::string train_config, train_watch;
  TrainConfig tc;
  train_cmd->add_option("--data", train_data, "dataset directory")->required();
  train_cmd->add_option("--config", train_config, "training config JSON (overrides flags)");
  train_cmd->add_option("--epochs", tc.epochs);
  train_cmd->add_option("--seed", tc.seed);
  train_cmd->add_option("--lr", tc.lr);
  train_cmd->add_option("--batch", tc.batch);
  train_cmd->add_option("--watch", train_watch, "split scored after every epoch (val or test)");
  train_cmd->add_option("--out", train_out, "checkpoint path");

  auto* eval_cmd = app.add_subcommand("eval", "score a checkpoint on a split");
  fs::path eval_data;
  std::string eval_ckpt, eval_split = "test", eval_out;
  eval_cmd->add_option("--data", eval_data, "dataset directory")->required();
  eval_cmd->add_option("--checkpoint", eval_ckpt)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--split", eval_split)->check(CLI::IsMember({"train", "val", "test"}));
  eval_cmd->add_option("--out", eval_out, "report JSON");

  auto* drive_cmd = app.add_subcommand("drive", "run the closed-loop controller and write a trace");
  std::string drive_world = "builtin:highway", drive_gains, drive_ckpt, drive_out = "trace.jsonl";
  EpisodeConfig ec;
  ec.duration_s = 60.0;
  drive_cmd->add_option("--world", drive_world);
  drive_cmd->add_option("--seed", ec.seed);
  drive_cmd->add_option("--duration", ec.duration_s, "seconds");
  drive_cmd->add_option("--density", ec.traffic_density);
  drive_cmd->add_option("--gains", drive_gains, "controller gains JSON");
  drive_cmd->add_option("--checkpoint", drive_ckpt, "perceive with a trained model instead of ground truth");
  drive_cmd->add_option("--out", drive_out, "trace JSONL");

  auto* sweep_cmd = app.add_subcommand("sweep", "run a scenario over a parameter grid");
  std::string sweep_scenario, sweep_out;
  std::vector<std::string> sweep_axes, sweep_set;
  sweep_cmd->add_option("--scenario", sweep_scenario, "scenario file or built-in id")->required();
  sweep_cmd->add_option("--param", sweep_axes, "name=min:max:step (repeatable)");
  sweep_cmd->add_option("--set", sweep_set, "name=value held fixed (repeatable)");
  sweep_cmd->add_option("--out", sweep_out, "output prefix for .json and .csv; stdout CSV if omitted");

  auto* serve_cmd = app.add_subcommand("serve", "HTTP API for scenario runs");
  std::string host = "127.0.0.1", web;
  int port = 8080, workers = 1;
  std::vector<std::string> scenario_files;
  serve_cmd->add_option("--host", host);
  serve_cmd->add_option("--port", port)->check(CLI::Range(1, 65535));
  serve_cmd->add_option("--scenario", scenario_files, "extra scenario files (repeatable)");
  serve_cmd->add_option("--static", web, "directory served at /")->check(CLI::ExistingDirectory);
  serve_cmd->add_option("--workers", workers)->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*ingest_cmd) return cmd_ingest(map_path, bbox, ingest_seed, lane_width, world_out);
    if (*gen_cmd) {
      gen.out_dir = gen_out;
      return cmd_generate(gen_world, gen);
    }
    if (*train_cmd) return cmd_train(train_data, train_config, tc, train_out, train_watch);
    if (*eval_cmd) return cmd_eval(eval_data, eval_ckpt, eval_split, eval_out);
    if (*drive_cmd) return cmd_drive(drive_world, ec, drive_gains, drive_ckpt, drive_out);
    if (*sweep_cmd) return cmd_sweep(sweep_scenario, sweep_axes, sweep_set, sweep_out);
    if (*serve_cmd) return cmd_serve(host, port, scenario_files, web, workers);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
