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

// HTTP/JSON facade over scenario runs and sweeps.
//
// RunService holds the state and answers requests as plain Response values;
// HttpServer only routes. Runs execute on a fixed pool of worker threads
// (one by default) in submission order. A finished run is immutable, so
// reads never block on execution.

#pragma once

#include <condition_variable>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "affsim/common.hpp"
#include "affsim/raster.hpp"
#include "affsim/scenario.hpp"

namespace affsim {

enum class RunStatus { Pending, Running, Done, Failed };

inline const char* to_string(RunStatus s) {
  switch (s) {
    case RunStatus::Pending: return "pending";
    case RunStatus::Running: return "running";
    case RunStatus::Done: return "done";
    case RunStatus::Failed: return "failed";
  }
  return "failed";
}

struct RunRequest {
  std::string scenario_id;
  ParamValues params;
  std::vector<GridAxis> grid;
};

// Accepts {"scenario_id": s, "params": {name: number}, "grid": [...]} where
// each grid entry is "name=a:b:s" or {"name", "min", "max", "step"}.
inline RunRequest parse_run_request(const nlohmann::json& body) {
  if (!body.is_object()) throw ConfigError("request body must be a JSON object");
  RunRequest r;
  const auto id = body.find("scenario_id");
  if (id == body.end() || !id->is_string()) throw ConfigError("scenario_id must be a string");
  r.scenario_id = id->get<std::string>();
  if (const auto p = body.find("params"); p != body.end() && !p->is_null()) {
    if (!p->is_object()) throw ConfigError("params must be an object");
    for (const auto& [k, v] : p->items()) {
      if (!v.is_number()) throw ConfigError("parameter " + k + " must be a number");
      r.params[k] = v.get<double>();
    }
  }
  if (const auto g = body.find("grid"); g != body.end() && !g->is_null()) {
    if (!g->is_array()) throw ConfigError("grid must be an array");
    for (const auto& axis : *g) {
      if (axis.is_string()) {
        r.grid.push_back(parse_grid_axis(axis.get<std::string>()));
        continue;
      }
      if (!axis.is_object()) throw ConfigError("grid entries must be strings or objects");
      GridAxis a;
      try {
        a.name = axis.at("name").get<std::string>();
        a.min = axis.at("min").get<double>();
        a.max = axis.value("max", a.min);
        a.step = axis.value("step", 1.0);
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad grid entry: ") + e.what());
      }
      if (!(a.step > 0.0) || !(a.min <= a.max)) throw ConfigError("grid axis " + a.name + " is empty");
      r.grid.push_back(a);
    }
  }
  return r;
}

struct Response {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

inline Response json_response(int status, const nlohmann::json& j) { return {status, j.dump(), "application/json"}; }

inline Response error_response(int status, const std::string& message) {
  return json_response(status, {{"error", message}});
}

class RunService {
 public:
  struct Entry {
    Scenario scenario;
    std::string source;  // "builtin" or a file path
  };

  explicit RunService(int workers = 1) {
    for (const Scenario& s : builtin_scenarios()) scenarios_.push_back({s, "builtin"});
    for (int i = 0; i < std::max(1, workers); ++i) threads_.emplace_back([this] { work(); });
  }

  ~RunService() {
    {
      std::lock_guard lock(mu_);
      stopping_ = true;
    }
    cv_.notify_all();
    for (auto& t : threads_) t.join();
  }

  RunService(const RunService&) = delete;
  RunService& operator=(const RunService&) = delete;

  // A later scenario with the same id replaces the earlier one.
  void add_scenario(Scenario s, std::string source) {
    std::lock_guard lock(mu_);
    for (Entry& e : scenarios_) {
      if (e.scenario.id == s.id) {
        e = {std::move(s), std::move(source)};
        return;
      }
    }
    scenarios_.push_back({std::move(s), std::move(source)});
  }

  Response list_scenarios() const {
    std::lock_guard lock(mu_);
    nlohmann::json out = nlohmann::json::array();
    for (const Entry& e : scenarios_) {
      nlohmann::json params = nlohmann::json::array();
      for (const auto& [name, d] : e.scenario.params) {
        params.push_back({{"name", name}, {"min", d.min}, {"max", d.max}, {"step", d.step}, {"default", d.def}});
      }
      nlohmann::json viewpoints = nlohmann::json::array();
      for (const auto& v : e.scenario.doc.value("viewpoints", nlohmann::json::array())) {
        viewpoints.push_back(v.value("name", ""));
      }
      out.push_back({{"id", e.scenario.id},
                     {"description", e.scenario.description},
                     {"source", e.source},
                     {"params", params},
                     {"viewpoints", viewpoints}});
    }
    return json_response(200, {{"scenarios", out}});
  }

  Response submit(std::string_view body_text) {
    nlohmann::json body;
    try {
      body = nlohmann::json::parse(body_text);
    } catch (const nlohmann::json::parse_error& e) {
      return error_response(400, std::string("malformed JSON: ") + e.what());
    }
    auto run = std::make_shared<Run>();
    try {
      run->request = parse_run_request(body);
      const auto sc = find_scenario(run->request.scenario_id);
      if (!sc) throw ConfigError("unknown scenario '" + run->request.scenario_id + "'");
      run->scenario = *sc;
      run->resolved = sc->resolve(run->request.params);
      for (const GridAxis& g : run->request.grid) {
        if (run->request.params.count(g.name)) throw ConfigError("parameter " + g.name + " is both fixed and swept");
        sc->resolve({{g.name, g.min}});
        sc->resolve({{g.name, g.values().back()}});
      }
    } catch (const Error& e) {
      return error_response(400, e.what());
    }
    std::lock_guard lock(mu_);
    char id[32];
    std::snprintf(id, sizeof id, "run-%06llu", static_cast<unsigned long long>(++counter_));
    run->id = id;
    runs_[run->id] = run;
    queue_.push_back(run);
    cv_.notify_one();
    return json_response(200, handle_json(*run));
  }

  Response status(const std::string& id) const {
    auto run = find(id);
    if (!run) return error_response(404, "unknown run '" + id + "'");
    std::lock_guard lock(mu_);
    nlohmann::json j = handle_json(*run);
    if (run->status == RunStatus::Failed) j["error"] = run->error;
    if (run->status == RunStatus::Done) {
      if (run->sweep) {
        j["report"] = sweep_to_json(*run->sweep);
      } else {
        const ScenarioRun& r = *run->single;
        nlohmann::json actors = nlohmann::json::array();
        for (const auto& [name, aid] : r.instance.actor_ids) {
          actors.push_back({{"name", name}, {"id", aid}, {"kind", to_string(r.instance.world.actors[aid].kind)}});
        }
        nlohmann::json views = nlohmann::json::array();
        for (const Viewpoint& v : r.instance.viewpoints) views.push_back(v.name);
        j["analysis"] = analysis_to_json(r.analysis);
        j["trace_summary"] = {{"samples", r.trace.size()},
                              {"sample_interval_s", kSampleInterval},
                              {"duration_s", r.instance.duration_s},
                              {"actors", actors},
                              {"viewpoints", views}};
      }
    }
    return json_response(200, j);
  }

  Response trace(const std::string& id) const {
    const ScenarioRun* r = nullptr;
    if (auto err = single_run(id, r)) return *err;
    std::string out;
    for (const Snapshot& s : r->trace) out += snapshot_to_json(s).dump() + "\n";
    return {200, std::move(out), "application/x-ndjson"};
  }

  Response frame(const std::string& id, const std::string& index) const {
    const ScenarioRun* r = nullptr;
    if (auto err = single_run(id, r)) return *err;
    std::size_t n = 0;
    try {
      std::size_t used = 0;
      const long v = std::stol(index, &used);
      if (used != index.size() || v < 0) throw std::invalid_argument(index);
      n = static_cast<std::size_t>(v);
    } catch (const std::exception&) {
      return error_response(400, "frame index must be a nonnegative integer");
    }
    if (n >= r->trace.size()) return error_response(404, "frame " + index + " out of range");
    return {200, encode_ppm(render_run_frame(*r, n)), "image/x-portable-pixmap"};
  }

  Response visibility(const std::string& id) const {
    const ScenarioRun* r = nullptr;
    if (auto err = single_run(id, r)) return *err;
    nlohmann::json times = nlohmann::json::array(), views = nlohmann::json::array();
    for (const Snapshot& s : r->trace) times.push_back(s.sim_time);
    for (std::size_t i = 0; i < r->instance.viewpoints.size(); ++i) {
      const Viewpoint& v = r->instance.viewpoints[i];
      views.push_back({{"name", v.name}, {"fractions", r->visibility[i]}});
    }
    return json_response(200, {{"times", times}, {"viewpoints", views}});
  }

  // Blocks until no run is pending or running.
  void wait_idle() {
    std::unique_lock lock(mu_);
    idle_cv_.wait(lock, [this] { return queue_.empty() && busy_ == 0; });
  }

 private:
  struct Run {
    std::string id;
    RunRequest request;
    Scenario scenario;
    ParamValues resolved;
    RunStatus status = RunStatus::Pending;
    std::string error;
    std::optional<ScenarioRun> single;
    std::optional<SweepReport> sweep;
  };

  std::optional<Scenario> find_scenario(const std::string& id) const {
    std::lock_guard lock(mu_);
    for (const Entry& e : scenarios_) {
      if (e.scenario.id == id) return e.scenario;
    }
    return std::nullopt;
  }

  std::shared_ptr<Run> find(const std::string& id) const {
    std::lock_guard lock(mu_);
    const auto it = runs_.find(id);
    return it == runs_.end() ? nullptr : it->second;
  }

  static nlohmann::json handle_json(const Run& r) {
    nlohmann::json grid = nlohmann::json::array();
    for (const GridAxis& g : r.request.grid) {
      grid.push_back({{"name", g.name}, {"min", g.min}, {"max", g.max}, {"step", g.step}});
    }
    return {{"id", r.id},
            {"status", to_string(r.status)},
            {"scenario_id", r.request.scenario_id},
            {"params", r.resolved},
            {"grid", grid}};
  }

  // Finished single runs only; sweeps keep no trace.
  std::optional<Response> single_run(const std::string& id, const ScenarioRun*& out) const {
    auto run = find(id);
    if (!run) return error_response(404, "unknown run '" + id + "'");
    std::lock_guard lock(mu_);
    if (run->status != RunStatus::Done) {
      return error_response(409, std::string("run is ") + to_string(run->status));
    }
    if (!run->single) return error_response(404, "sweep runs have no trace");
    out = &*run->single;
    return std::nullopt;
  }

  void work() {
    for (;;) {
      std::shared_ptr<Run> run;
      {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
        if (stopping_) return;
        run = queue_.front();
        queue_.pop_front();
        run->status = RunStatus::Running;
        ++busy_;
      }
      std::optional<ScenarioRun> single;
      std::optional<SweepReport> sweep;
      std::string error;
      try {
        if (run->request.grid.empty()) {
          single = run_scenario(instantiate(run->scenario, run->request.params));
        } else {
          sweep = run_sweep(run->scenario, run->request.grid, run->request.params);
        }
      } catch (const std::exception& e) {
        error = e.what();
      }
      {
        std::lock_guard lock(mu_);
        run->single = std::move(single);
        run->sweep = std::move(sweep);
        run->error = error;
        run->status = error.empty() ? RunStatus::Done : RunStatus::Failed;
        --busy_;
      }
      idle_cv_.notify_all();
    }
  }

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::condition_variable idle_cv_;
  std::vector<Entry> scenarios_;
  std::map<std::string, std::shared_ptr<Run>> runs_;
  std::deque<std::shared_ptr<Run>> queue_;
  std::uint64_t counter_ = 0;
  int busy_ = 0;
  bool stopping_ = false;
  std::vector<std::thread> threads_;
};

class HttpServer {
 public:
  explicit HttpServer(RunService& service, const std::filesystem::path& static_dir = {}) : service_(service) {
    auto send = [](httplib::Response& res, const Response& r) {
      res.status = r.status;
      res.set_content(r.body, r.content_type);
    };
    server_.Get("/scenarios", [this, send](const httplib::Request&, httplib::Response& res) {
      send(res, service_.list_scenarios());
    });
    server_.Post("/runs", [this, send](const httplib::Request& req, httplib::Response& res) {
      send(res, service_.submit(req.body));
    });
    server_.Get(R"(/runs/([^/]+))", [this, send](const httplib::Request& req, httplib::Response& res) {
      send(res, service_.status(req.matches[1]));
    });
    server_.Get(R"(/runs/([^/]+)/trace)", [this, send](const httplib::Request& req, httplib::Response& res) {
      send(res, service_.trace(req.matches[1]));
    });
    server_.Get(R"(/runs/([^/]+)/frames/([^/]+))",
                [this, send](const httplib::Request& req, httplib::Response& res) {
                  send(res, service_.frame(req.matches[1], req.matches[2]));
                });
    server_.Get(R"(/runs/([^/]+)/visibility)", [this, send](const httplib::Request& req, httplib::Response& res) {
      send(res, service_.visibility(req.matches[1]));
    });
    if (!static_dir.empty()) server_.set_mount_point("/", static_dir.string());
  }

  // Binds and serves on the calling thread until stop().
  bool listen(const std::string& host, int port) { return server_.listen(host, port); }

  // Binds to an ephemeral port; returns it, or -1.
  int bind_any(const std::string& host) { return server_.bind_to_any_port(host); }
  bool listen_after_bind() { return server_.listen_after_bind(); }

  void stop() { server_.stop(); }
  void wait_until_ready() const { server_.wait_until_ready(); }

 private:
  RunService& service_;
  httplib::Server server_;
};

}  // namespace affsim
