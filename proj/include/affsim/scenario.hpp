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

// Declarative corner-case scenarios, parameter sweeps, occlusion queries.
//
// A scenario file is JSON. Any numeric field may instead hold "$name", which
// is replaced by the value of a declared parameter when the scenario is
// instantiated. Each run steps the world at 20 Hz and records every actor
// pose; first visibility and first contact are then refined between steps by
// bisection on interpolated poses, so reported times are not quantized to
// the step.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "affsim/collision.hpp"
#include "affsim/common.hpp"
#include "affsim/controller.hpp"
#include "affsim/raster.hpp"
#include "affsim/sim.hpp"
#include "affsim/world.hpp"

namespace affsim {

inline constexpr int kScenarioVersion = 1;

// ---------------------------------------------------------------------------
// Occlusion
// ---------------------------------------------------------------------------

// Box with a vertical yaw axis. `half.x` runs along the yaw direction.
struct OrientedBox {
  Vec3 center;
  Vec3 half;
  double yaw = 0.0;
};

// True when the open segment (p, q) passes through the box interior.
inline bool segment_hits_box(Vec3 p, Vec3 q, const OrientedBox& b) {
  const Vec2 ax = heading_vector(b.yaw);
  const Vec2 ay{-ax.y, ax.x};
  const Vec2 dp{p.x - b.center.x, p.y - b.center.y};
  const Vec2 dq{q.x - p.x, q.y - p.y};
  const std::array<double, 3> o = {dot(dp, ax), dot(dp, ay), p.z - b.center.z};
  const std::array<double, 3> d = {dot(dq, ax), dot(dq, ay), q.z - p.z};
  const std::array<double, 3> h = {b.half.x, b.half.y, b.half.z};
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 3; ++i) {
    if (d[i] == 0.0) {
      if (std::abs(o[i]) >= h[i]) return false;
      continue;
    }
    double t0 = (-h[i] - o[i]) / d[i], t1 = (h[i] - o[i]) / d[i];
    if (t0 > t1) std::swap(t0, t1);
    lo = std::max(lo, t0);
    hi = std::min(hi, t1);
  }
  return lo < hi && lo < 1.0 && hi > 0.0;
}

inline constexpr int kVisibilitySamples = 64;

// Upright rectangle facing the eye through the target's centre, spanning the
// target's projected width and full height.
struct Silhouette {
  Vec3 base;    // bottom centre
  Vec2 across;  // unit, horizontal
  double half_width = 0.0;
  double height = 0.0;

  Vec3 point(double a, double b) const {
    const Vec2 p = Vec2{base.x, base.y} + across * ((2.0 * a - 1.0) * half_width);
    return {p.x, p.y, base.z + b * height};
  }
};

inline Silhouette silhouette(Vec3 eye, const Footprint& target, double height) {
  Vec2 d = target.center - Vec2{eye.x, eye.y};
  if (norm(d) < 1e-12) d = target.axis_long();
  const Vec2 across = normalized(Vec2{-d.y, d.x});
  const double hw = target.half_length * std::abs(dot(target.axis_long(), across)) +
                    target.half_width * std::abs(dot(target.axis_lat(), across));
  return {{target.center.x, target.center.y, 0.0}, across, hw, height};
}

inline double radical_inverse2(unsigned i) {
  double r = 0.0, f = 0.5;
  for (; i; i >>= 1, f *= 0.5) {
    if (i & 1u) r += f;
  }
  return r;
}

// Fixed stratified pattern on the unit square: columns are evenly spaced,
// rows follow the base-2 radical inverse shifted to cell centres.
inline std::array<Vec2, kVisibilitySamples> visibility_pattern() {
  std::array<Vec2, kVisibilitySamples> out;
  for (unsigned i = 0; i < kVisibilitySamples; ++i) {
    out[i] = {(i + 0.5) / kVisibilitySamples, radical_inverse2(i) + 0.5 / kVisibilitySamples};
  }
  return out;
}

// Fraction of silhouette sample rays from `eye` that no occluder blocks.
inline double visibility(Vec3 eye, const Footprint& target, double height,
                         std::span<const OrientedBox> occluders) {
  static const auto pattern = visibility_pattern();
  const Silhouette s = silhouette(eye, target, height);
  int clear = 0;
  for (const Vec2& ab : pattern) {
    const Vec3 q = s.point(ab.x, ab.y);
    const bool blocked =
        std::any_of(occluders.begin(), occluders.end(), [&](const OrientedBox& b) { return segment_hits_box(eye, q, b); });
    if (!blocked) ++clear;
  }
  return static_cast<double>(clear) / kVisibilitySamples;
}

// ---------------------------------------------------------------------------
// Scenario documents
// ---------------------------------------------------------------------------

struct ParamDecl {
  double min = 0.0;
  double max = 0.0;
  double step = 1.0;
  double def = 0.0;
};

using ParamValues = std::map<std::string, double>;

struct Scenario {
  std::string id;
  std::string description;
  std::map<std::string, ParamDecl> params;
  nlohmann::json doc;

  ParamValues defaults() const {
    ParamValues v;
    for (const auto& [k, d] : params) v[k] = d.def;
    return v;
  }

  // Defaults overlaid with `given`; rejects unknown names and out-of-range
  // values with the violated bound in the message.
  ParamValues resolve(const ParamValues& given) const {
    ParamValues v = defaults();
    for (const auto& [k, x] : given) {
      const auto it = params.find(k);
      if (it == params.end()) throw ConfigError("unknown parameter '" + k + "'");
      std::ostringstream msg;
      msg.precision(17);
      if (!std::isfinite(x)) throw RangeError("parameter " + k + " must be finite");
      if (x < it->second.min) {
        msg << "parameter " << k << "=" << x << " is below min " << it->second.min;
        throw RangeError(msg.str());
      }
      if (x > it->second.max) {
        msg << "parameter " << k << "=" << x << " is above max " << it->second.max;
        throw RangeError(msg.str());
      }
      v[k] = x;
    }
    return v;
  }
};

namespace detail {

inline nlohmann::json substitute(const nlohmann::json& node, const ParamValues& values) {
  if (node.is_string()) {
    const auto& s = node.get_ref<const std::string&>();
    if (!s.empty() && s[0] == '$') {
      const auto it = values.find(s.substr(1));
      if (it == values.end()) throw ConfigError("reference to undeclared parameter '" + s + "'");
      return it->second;
    }
    return node;
  }
  if (node.is_array()) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& x : node) out.push_back(substitute(x, values));
    return out;
  }
  if (node.is_object()) {
    nlohmann::json out = nlohmann::json::object();
    for (const auto& [k, x] : node.items()) out[k] = substitute(x, values);
    return out;
  }
  return node;
}

inline Vec2 vec2_of(const nlohmann::json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }
inline Vec3 vec3_of(const nlohmann::json& j) {
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

}  // namespace detail

// Two one-way carriageways separated by a median, plus a two-way side road
// leaving the eastbound carriageway southward at x = 0.
inline WorldMap divided_highway_world() {
  WorldMap w;
  w.frame = LocalFrame(29.4100, -82.5400);
  w.roads.add(RoadSegment(0, {{-600.0, -10.0}, {400.0, -10.0}}, 2, true));
  w.roads.add(RoadSegment(1, {{400.0, 10.0}, {-600.0, 10.0}}, 2, true));
  w.roads.add(RoadSegment(2, {{0.0, -13.7}, {0.0, -200.0}}, 2, false));
  return w;
}

inline std::shared_ptr<const WorldMap> scenario_world(const nlohmann::json& spec) {
  if (spec.contains("builtin")) {
    const auto name = spec.at("builtin").get<std::string>();
    if (name == "straight") {
      return std::make_shared<WorldMap>(
          straight_road_world(spec.value("lanes", 3), spec.value("length", 3000.0)));
    }
    if (name == "highway") return std::make_shared<WorldMap>(builtin_highway_world(spec.value("seed", 7)));
    if (name == "divided_highway") return std::make_shared<WorldMap>(divided_highway_world());
    throw ConfigError("unknown built-in world '" + name + "'");
  }
  if (spec.contains("file")) return std::make_shared<WorldMap>(load_world(spec.at("file").get<std::string>()));
  if (spec.contains("inline")) return std::make_shared<WorldMap>(world_from_json(spec.at("inline")));
  throw ConfigError("scenario world needs 'builtin', 'file' or 'inline'");
}

struct Viewpoint {
  std::string name;
  int actor = 0;
  Vec3 eye_local;  // forward, left, up
  int target = 0;
  std::vector<OrientedBox> attached;  // local centres, yaw relative to the actor
};

struct AnalysisConfig {
  double reaction_time = 1.5;
  double decel = 6.0;
  double contact_threshold = 0.1;
};

struct ScenarioInstance {
  std::string scenario_id;
  ParamValues params;
  std::uint64_t seed = 1;
  double duration_s = 10.0;
  World world;
  std::map<std::string, int> actor_ids;
  int hazard_id = -1;
  std::vector<OrientedBox> occluders;
  std::vector<Viewpoint> viewpoints;
  AnalysisConfig analysis;
};

inline Actor parse_actor(const nlohmann::json& a, int id) {
  Actor out;
  out.id = id;
  out.kind = actor_kind_from_string(a.value("kind", "car"));
  out.extents = default_extents(out.kind);
  if (a.contains("half_extents")) {
    const Vec3 e = detail::vec3_of(a["half_extents"]);
    out.extents = {e.x, e.y, e.z};
  }
  if (!(out.extents.half_length > 0.0 && out.extents.half_width > 0.0 && out.extents.half_height > 0.0)) {
    throw ConfigError("actor extents must be positive");
  }
  if (a.contains("color")) {
    const auto& c = a["color"];
    auto ch = [](double v) {
      if (!(v >= 0.0 && v <= 255.0)) throw RangeError("color channels must lie in [0, 255]");
      return static_cast<std::uint8_t>(std::lround(v));
    };
    out.color = {ch(c.at(0).get<double>()), ch(c.at(1).get<double>()), ch(c.at(2).get<double>())};
  }
  const auto& d = a.at("driver");
  const auto type = d.at("type").get<std::string>();
  if (type == "script") {
    out.driver = DriverKind::Script;
    for (const auto& p : d.at("waypoints")) out.script.waypoints.push_back(detail::vec2_of(p));
    if (out.script.waypoints.empty()) throw ConfigError("script needs at least one waypoint");
    out.script.speed = d.at("speed").get<double>();
    if (!(out.script.speed >= 0.0)) throw RangeError("script speed must be non-negative");
    if (d.contains("arrive")) {
      // Trigger chosen so the actor reaches waypoint `index` at `time`.
      const auto index = d["arrive"].at("waypoint").get<std::size_t>();
      const double when = d["arrive"].at("time").get<double>();
      if (index >= out.script.waypoints.size()) throw ConfigError("arrive waypoint out of range");
      if (!(out.script.speed > 0.0)) throw ConfigError("arrive timing needs a positive speed");
      if (d["arrive"].contains("lead_time")) {
        // Start on the path exactly lead_time of travel before the waypoint.
        const double lead = d["arrive"]["lead_time"].get<double>();
        double back = lead * out.script.speed;
        if (!(lead >= 0.0) || back > out.script.arc_to(index)) throw RangeError("lead_time exceeds the path");
        std::vector<Vec2> pts{out.script.waypoints[index]};
        std::size_t i = index;
        while (i > 0) {
          const Vec2 a = out.script.waypoints[i - 1], b = out.script.waypoints[i];
          const double len = norm(b - a);
          if (back <= len) {
            if (back > 0.0) pts.insert(pts.begin(), b + (a - b) * (back / len));
            break;
          }
          back -= len;
          pts.insert(pts.begin(), a);
          --i;
        }
        const std::size_t new_index = pts.size() - 1;
        pts.insert(pts.end(), out.script.waypoints.begin() + static_cast<long>(index) + 1, out.script.waypoints.end());
        out.script.waypoints = std::move(pts);
        out.script.trigger_time = when - out.script.arc_to(new_index) / out.script.speed;
      } else {
        out.script.trigger_time = when - out.script.arc_to(index) / out.script.speed;
      }
    } else {
      out.script.trigger_time = d.value("trigger_time", 0.0);
    }
    const auto s = out.script.at(0.0);
    out.position = s.position;
    out.heading = s.heading;
    out.speed = s.speed;
  } else if (type == "controller" || type == "static") {
    out.driver = type == "static" ? DriverKind::Static : DriverKind::Controller;
    out.position = detail::vec2_of(d.at("position"));
    out.heading = deg2rad(d.value("heading_deg", 0.0));
    out.speed = d.value("speed", 0.0);
    if (!(out.speed >= 0.0)) throw RangeError("initial speed must be non-negative");
    if (d.contains("gains")) out.control.gains = d["gains"].get<ControllerGains>();
    out.control.gains.vehicle_length = 2.0 * out.extents.half_length;
    out.control.gains.validate();
    auto flag = [&](const char* key) {
      if (!d.contains(key)) return false;
      return d[key].is_boolean() ? d[key].get<bool>() : d[key].get<double>() != 0.0;
    };
    out.control.hazard_braking = flag("hazard_braking");
    out.control.lane_changes = flag("lane_changes");
    out.control.wheelbase = d.value("wheelbase", out.kind == ActorKind::Truck ? 10.0 : 2.7);
  } else {
    throw ConfigError("unknown driver type '" + type + "'");
  }
  return out;
}

inline OrientedBox parse_box(const nlohmann::json& b) {
  OrientedBox o{detail::vec3_of(b.at("center")), detail::vec3_of(b.at("half_extents")),
                deg2rad(b.value("yaw_deg", 0.0))};
  if (!(o.half.x > 0.0 && o.half.y > 0.0 && o.half.z > 0.0)) throw ConfigError("occluder extents must be positive");
  return o;
}

inline Scenario parse_scenario(const nlohmann::json& doc) {
  if (doc.value("format", "") != "affsim-scenario") throw ConfigError("not a scenario document");
  if (doc.value("version", 0) != kScenarioVersion) throw ConfigError("unsupported scenario version");
  Scenario s;
  s.id = doc.at("id").get<std::string>();
  s.description = doc.value("description", "");
  const nlohmann::json params = doc.value("params", nlohmann::json::object());
  for (const auto& [name, p] : params.items()) {
    ParamDecl d{p.at("min").get<double>(), p.at("max").get<double>(), p.value("step", 1.0), 0.0};
    d.def = p.value("default", d.min);
    if (!(d.min <= d.max)) throw ConfigError("parameter " + name + " has an empty range");
    if (!(d.step > 0.0)) throw ConfigError("parameter " + name + " needs a positive step");
    if (d.def < d.min || d.def > d.max) throw ConfigError("default of " + name + " lies outside its range");
    s.params[name] = d;
  }
  s.doc = doc;
  return s;
}

inline Scenario parse_scenario(std::string_view text) {
  try {
    return parse_scenario(nlohmann::json::parse(text));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("bad scenario JSON: ") + e.what(), e.byte);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad scenario: ") + e.what());
  }
}

inline ScenarioInstance instantiate(const Scenario& sc, const ParamValues& given = {}) {
  ScenarioInstance inst;
  inst.scenario_id = sc.id;
  inst.params = sc.resolve(given);
  try {
    const nlohmann::json d = detail::substitute(sc.doc, inst.params);
    inst.seed = d.value("seed", std::uint64_t{1});
    inst.duration_s = d.value("duration_s", 10.0);
    if (!(inst.duration_s > 0.0)) throw ConfigError("duration must be positive");
    inst.world.map = scenario_world(d.at("world"));
    inst.world.clock.start_time_of_day = std::fmod(d.value("time_of_day_s", 43200.0), SimClock::kDaySeconds);
    int id = 0;
    for (const auto& a : d.at("actors")) {
      const auto name = a.at("name").get<std::string>();
      if (inst.actor_ids.count(name)) throw ConfigError("duplicate actor '" + name + "'");
      inst.actor_ids[name] = id;
      inst.world.actors.push_back(parse_actor(a, id));
      ++id;
    }
    auto lookup = [&](const std::string& name) {
      const auto it = inst.actor_ids.find(name);
      if (it == inst.actor_ids.end()) throw ConfigError("reference to undefined actor '" + name + "'");
      return it->second;
    };
    inst.world.ego_id = lookup(d.at("ego").get<std::string>());
    inst.hazard_id = lookup(d.at("hazard").get<std::string>());
    if (inst.hazard_id == inst.world.ego_id) throw ConfigError("hazard must differ from the ego");
    for (const auto& b : d.value("occluders", nlohmann::json::array())) inst.occluders.push_back(parse_box(b));
    for (const auto& v : d.value("viewpoints", nlohmann::json::array())) {
      Viewpoint vp;
      vp.name = v.at("name").get<std::string>();
      vp.actor = lookup(v.at("actor").get<std::string>());
      vp.target = lookup(v.at("target").get<std::string>());
      vp.eye_local = detail::vec3_of(v.at("eye"));
      for (const auto& b : v.value("occluders", nlohmann::json::array())) vp.attached.push_back(parse_box(b));
      inst.viewpoints.push_back(std::move(vp));
    }
    if (d.contains("analysis")) {
      const auto& a = d["analysis"];
      inst.analysis.reaction_time = a.value("reaction_time_s", inst.analysis.reaction_time);
      inst.analysis.decel = a.value("decel", inst.analysis.decel);
      inst.analysis.contact_threshold = a.value("contact_threshold_m", inst.analysis.contact_threshold);
      if (!(inst.analysis.decel > 0.0) || !(inst.analysis.reaction_time >= 0.0)) {
        throw ConfigError("analysis needs positive decel and non-negative reaction time");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad scenario '") + sc.id + "': " + e.what());
  }
  return inst;
}

// ---------------------------------------------------------------------------
// Runs
// ---------------------------------------------------------------------------

struct PoseRecord {
  Vec2 position;
  double heading = 0.0;
  double speed = 0.0;
};

struct RunAnalysis {
  std::optional<double> first_visibility_time;
  std::optional<double> ttc_at_first_visibility;
  std::optional<double> contact_time;
  std::optional<double> time_visible_to_contact;
  double min_distance = 0.0;
  bool collision = false;
  double closing_speed = 0.0;
  double ego_speed_at_visibility = 0.0;
  bool stoppable = true;
};

struct ScenarioRun {
  ScenarioInstance instance;
  std::vector<std::vector<PoseRecord>> poses;  // [step][actor index]
  std::vector<Snapshot> trace;                 // every 0.25 s
  std::vector<std::vector<double>> visibility; // [viewpoint][trace index]
  RunAnalysis analysis;
};

namespace detail {

inline PoseRecord pose_at(const ScenarioRun& run, std::size_t actor, double t) {
  const Actor& a = run.instance.world.actors[actor];
  if (a.driver == DriverKind::Script) {
    const auto s = a.script.at(t);
    return {s.position, s.heading, s.speed};
  }
  const double dt = run.instance.world.clock.dt;
  const double k = std::clamp(t / dt, 0.0, static_cast<double>(run.poses.size() - 1));
  const auto i = static_cast<std::size_t>(std::floor(k));
  if (i + 1 >= run.poses.size()) return run.poses.back()[actor];
  const double f = k - static_cast<double>(i);
  const PoseRecord& p = run.poses[i][actor];
  const PoseRecord& q = run.poses[i + 1][actor];
  return {p.position + (q.position - p.position) * f, p.heading + wrap_radians(q.heading - p.heading) * f,
          p.speed + (q.speed - p.speed) * f};
}

inline Footprint footprint_of(const Actor& a, const PoseRecord& p) {
  return {p.position, p.heading, a.extents.half_length, a.extents.half_width};
}

inline Vec3 local_to_world(const PoseRecord& p, Vec3 local) {
  const Vec2 f = heading_vector(p.heading);
  const Vec2 l{-f.y, f.x};
  const Vec2 g = p.position + f * local.x + l * local.y;
  return {g.x, g.y, local.z};
}

inline double viewpoint_visibility(const ScenarioRun& run, const Viewpoint& vp, double t) {
  const auto& actors = run.instance.world.actors;
  const PoseRecord from = pose_at(run, static_cast<std::size_t>(vp.actor), t);
  const PoseRecord to = pose_at(run, static_cast<std::size_t>(vp.target), t);
  std::vector<OrientedBox> boxes = run.instance.occluders;
  for (const OrientedBox& b : vp.attached) {
    boxes.push_back({local_to_world(from, b.center), b.half, from.heading + b.yaw});
  }
  for (std::size_t i = 0; i < actors.size(); ++i) {
    const Actor& a = actors[i];
    if (static_cast<int>(i) == vp.actor || static_cast<int>(i) == vp.target) continue;
    const PoseRecord p = pose_at(run, i, t);
    boxes.push_back({{p.position.x, p.position.y, a.extents.half_height},
                     {a.extents.half_length, a.extents.half_width, a.extents.half_height},
                     p.heading});
  }
  const Actor& target = actors[static_cast<std::size_t>(vp.target)];
  return visibility(local_to_world(from, vp.eye_local), footprint_of(target, to), 2.0 * target.extents.half_height,
                    boxes);
}

// Earliest time in (lo, hi] at which `pred` holds, given !pred(lo), pred(hi).
template <typename Pred>
double bisect(double lo, double hi, Pred pred) {
  for (int i = 0; i < 60 && hi - lo > 1e-12; ++i) {
    const double mid = 0.5 * (lo + hi);
    (pred(mid) ? hi : lo) = mid;
  }
  return hi;
}

}  // namespace detail

// The first viewpoint from the ego toward the hazard drives first-visibility
// analysis; with none, the hazard counts as visible from the start.
inline ScenarioRun run_scenario(ScenarioInstance inst) {
  ScenarioRun run;
  run.instance = std::move(inst);
  World& w = run.instance.world;
  const auto steps = static_cast<std::int64_t>(std::llround(run.instance.duration_s / w.clock.dt));
  const int decim = static_cast<int>(std::llround(kSampleInterval / w.clock.dt));
  auto record = [&] {
    std::vector<PoseRecord> row;
    for (const Actor& a : w.actors) row.push_back({a.position, a.heading, a.speed});
    run.poses.push_back(std::move(row));
    if (w.clock.step % decim == 0) {
      const int index = static_cast<int>(w.clock.step / decim);
      run.trace.push_back(make_snapshot(w, index, index * kSampleInterval));
    }
  };
  record();
  for (std::int64_t k = 0; k < steps; ++k) {
    step(w);
    record();
  }

  const std::size_t ego = static_cast<std::size_t>(w.ego_id);
  const std::size_t haz = static_cast<std::size_t>(run.instance.hazard_id);
  const Actor& ea = w.actors[ego];
  const Actor& ha = w.actors[haz];
  const double dt = w.clock.dt;

  for (const Viewpoint& vp : run.instance.viewpoints) {
    std::vector<double> series;
    for (const Snapshot& s : run.trace) series.push_back(detail::viewpoint_visibility(run, vp, s.sim_time));
    run.visibility.push_back(std::move(series));
  }

  RunAnalysis& an = run.analysis;
  auto colliding = [&](double t) {
    return detect_collision(detail::footprint_of(ea, detail::pose_at(run, ego, t)),
                            detail::footprint_of(ha, detail::pose_at(run, haz, t)))
        .colliding;
  };
  an.min_distance = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < run.poses.size(); ++k) {
    const double t = static_cast<double>(k) * dt;
    an.min_distance = std::min(an.min_distance, footprint_distance(detail::footprint_of(ea, run.poses[k][ego]),
                                                                   detail::footprint_of(ha, run.poses[k][haz])));
    if (!an.contact_time && colliding(t)) {
      an.contact_time = k == 0 ? 0.0 : detail::bisect(t - dt, t, colliding);
    }
  }
  an.collision = an.contact_time.has_value();
  if (an.collision) an.min_distance = 0.0;

  const Viewpoint* driver = nullptr;
  for (const Viewpoint& vp : run.instance.viewpoints) {
    if (vp.actor == w.ego_id && vp.target == run.instance.hazard_id) {
      driver = &vp;
      break;
    }
  }
  auto visible = [&](double t) { return !driver || detail::viewpoint_visibility(run, *driver, t) > 0.0; };
  for (std::size_t k = 0; k < run.poses.size(); ++k) {
    const double t = static_cast<double>(k) * dt;
    if (visible(t)) {
      an.first_visibility_time = k == 0 ? 0.0 : detail::bisect(t - dt, t, visible);
      break;
    }
  }

  const double v_ref_t = an.first_visibility_time.value_or(an.contact_time.value_or(0.0));
  const PoseRecord ev = detail::pose_at(run, ego, v_ref_t);
  const PoseRecord hv = detail::pose_at(run, haz, v_ref_t);
  an.ego_speed_at_visibility = ev.speed;
  if (an.first_visibility_time) {
    an.ttc_at_first_visibility = time_to_collision(
        {ev.position, heading_vector(ev.heading) * ev.speed, detail::footprint_of(ea, ev).radius()},
        {hv.position, heading_vector(hv.heading) * hv.speed, detail::footprint_of(ha, hv).radius()});
  }
  const double t_rel = an.contact_time.value_or(v_ref_t);
  const PoseRecord ec = detail::pose_at(run, ego, t_rel);
  const PoseRecord hc = detail::pose_at(run, haz, t_rel);
  an.closing_speed = norm(heading_vector(ec.heading) * ec.speed - heading_vector(hc.heading) * hc.speed);

  const double v = an.ego_speed_at_visibility;
  const double needed = v * v / (2.0 * run.instance.analysis.decel) + v * run.instance.analysis.reaction_time;
  if (an.collision) {
    if (an.first_visibility_time && *an.first_visibility_time <= *an.contact_time) {
      an.time_visible_to_contact = *an.contact_time - *an.first_visibility_time;
      an.stoppable = v * *an.time_visible_to_contact > needed;
    } else {
      an.stoppable = false;
    }
  } else if (an.ttc_at_first_visibility) {
    an.stoppable = v * *an.ttc_at_first_visibility > needed;
  } else {
    an.stoppable = true;
  }
  return run;
}

// Ego camera view of trace sample `n`, with the scenario occluders drawn as
// foliage.
inline Frame render_run_frame(const ScenarioRun& run, std::size_t n, const CameraRig& rig = {},
                              RenderOptions opt = {}) {
  if (n >= run.trace.size()) throw RangeError("frame index out of range");
  for (const OrientedBox& b : run.instance.occluders) {
    const Footprint fp{{b.center.x, b.center.y}, b.yaw, b.half.x, b.half.y};
    const auto c = fp.corners();
    opt.obstacles.push_back({{c[0], c[1], c[2], c[3]}, b.center.z - b.half.z, b.center.z + b.half.z,
                             opt.palette.foliage});
  }
  return render(*run.instance.world.map, run.trace[n], rig, opt);
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

struct GridAxis {
  std::string name;
  double min = 0.0;
  double max = 0.0;
  double step = 1.0;

  std::vector<double> values() const {
    const auto n = static_cast<long>(std::floor((max - min) / step + 1e-9)) + 1;
    std::vector<double> v;
    for (long i = 0; i < n; ++i) v.push_back(min + static_cast<double>(i) * step);
    return v;
  }
};

// "name=a:b:s" with an inclusive upper bound, or "name=v" for a single value.
inline GridAxis parse_grid_axis(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("grid axis must look like name=min:max:step");
  GridAxis g;
  g.name = text.substr(0, eq);
  std::vector<double> parts;
  std::stringstream ss(text.substr(eq + 1));
  std::string item;
  while (std::getline(ss, item, ':')) {
    try {
      std::size_t used = 0;
      parts.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("bad number '" + item + "' in grid axis " + g.name);
    }
  }
  if (parts.size() == 1) {
    g.min = g.max = parts[0];
  } else if (parts.size() == 3) {
    g.min = parts[0];
    g.max = parts[1];
    g.step = parts[2];
  } else {
    throw ConfigError("grid axis must look like name=min:max:step");
  }
  if (!(g.step > 0.0) || !(g.min <= g.max)) throw ConfigError("grid axis " + g.name + " is empty");
  return g;
}

struct SweepRow {
  ParamValues params;
  RunAnalysis result;
};

struct SweepReport {
  std::string scenario;
  std::uint64_t seed = 0;
  std::vector<GridAxis> grid;
  std::vector<SweepRow> rows;
};

// One deterministic run per grid point; the first axis varies slowest.
inline SweepReport run_sweep(const Scenario& sc, const std::vector<GridAxis>& grid, const ParamValues& fixed = {}) {
  SweepReport rep;
  rep.scenario = sc.id;
  rep.grid = grid;
  std::vector<std::vector<double>> axes;
  for (const GridAxis& g : grid) {
    axes.push_back(g.values());
    sc.resolve({{g.name, g.min}});
    sc.resolve({{g.name, axes.back().back()}});
  }
  std::vector<std::size_t> idx(grid.size(), 0);
  for (;;) {
    ParamValues p = fixed;
    for (std::size_t i = 0; i < grid.size(); ++i) p[grid[i].name] = axes[i][idx[i]];
    ScenarioInstance inst = instantiate(sc, p);
    rep.seed = inst.seed;
    rep.rows.push_back({inst.params, run_scenario(std::move(inst)).analysis});
    std::size_t k = grid.size();
    while (k > 0 && ++idx[k - 1] == axes[k - 1].size()) idx[--k] = 0;
    if (k == 0) break;
  }
  return rep;
}

inline nlohmann::json analysis_to_json(const RunAnalysis& a) {
  auto opt = [](const std::optional<double>& x) { return x ? nlohmann::json(*x) : nlohmann::json(nullptr); };
  return {{"first_visibility_time", opt(a.first_visibility_time)},
          {"ttc_at_first_visibility", opt(a.ttc_at_first_visibility)},
          {"time_visible_to_contact", opt(a.time_visible_to_contact)},
          {"contact_time", opt(a.contact_time)},
          {"min_distance", a.min_distance},
          {"collision", a.collision},
          {"closing_speed", a.closing_speed},
          {"ego_speed_at_visibility", a.ego_speed_at_visibility},
          {"stoppable", a.stoppable}};
}

inline nlohmann::json sweep_to_json(const SweepReport& r) {
  nlohmann::json grid = nlohmann::json::array(), rows = nlohmann::json::array();
  for (const GridAxis& g : r.grid) grid.push_back({{"name", g.name}, {"min", g.min}, {"max", g.max}, {"step", g.step}});
  for (const SweepRow& row : r.rows) {
    nlohmann::json j = analysis_to_json(row.result);
    j["params"] = row.params;
    rows.push_back(std::move(j));
  }
  return {{"scenario", r.scenario}, {"seed", r.seed}, {"grid", grid}, {"rows", rows}};
}

inline std::string sweep_to_csv(const SweepReport& r) {
  std::ostringstream out;
  std::vector<std::string> names;
  if (!r.rows.empty()) {
    for (const auto& [k, v] : r.rows.front().params) names.push_back(k);
  }
  for (const auto& n : names) out << n << ',';
  out << "first_visibility_time,ttc_at_first_visibility,time_visible_to_contact,contact_time,min_distance,"
         "collision,closing_speed,ego_speed_at_visibility,stoppable\n";
  auto num = [](double x) { return nlohmann::json(x).dump(); };
  auto opt = [&](const std::optional<double>& x) { return x ? num(*x) : std::string(); };
  for (const SweepRow& row : r.rows) {
    for (const auto& n : names) out << num(row.params.at(n)) << ',';
    const RunAnalysis& a = row.result;
    out << opt(a.first_visibility_time) << ',' << opt(a.ttc_at_first_visibility) << ','
        << opt(a.time_visible_to_contact) << ',' << opt(a.contact_time) << ',' << num(a.min_distance) << ','
        << (a.collision ? "true" : "false") << ',' << num(a.closing_speed) << ','
        << num(a.ego_speed_at_visibility) << ',' << (a.stoppable ? "true" : "false") << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Built-in scenarios
// ---------------------------------------------------------------------------

// Ego under its own controller at 12 m/s; a pedestrian steps off the kerb so
// that, without braking, both reach the same spot 2 s later.
inline nlohmann::json pedestrian_crossing_doc() {
  using nlohmann::json;
  const double lane_y = -3.7, ego_x0 = 100.0, v = 12.0;
  const double arrive = 4.0;
  const double cross_x = ego_x0 + 2.25 + 0.25 + v * arrive;
  return {
      {"format", "affsim-scenario"},
      {"version", kScenarioVersion},
      {"id", "pedestrian_crossing"},
      {"description", "Pedestrian crosses in front of the ego; it arrives in the ego lane together with the ego."},
      {"seed", 1},
      {"duration_s", 8.0},
      {"world", {{"builtin", "straight"}, {"lanes", 3}, {"length", 1000.0}}},
      {"params",
       {{"aeb", {{"min", 0}, {"max", 1}, {"step", 1}, {"default", 1}}},
        {"ped_speed", {{"min", 0.5}, {"max", 3.0}, {"step", 0.25}, {"default", 1.5}}},
        {"warning_time", {{"min", 0.5}, {"max", 3.5}, {"step", 0.25}, {"default", 2.0}}}}},
      {"actors",
       json::array({
           {{"name", "ego"},
            {"kind", "car"},
            {"color", {240, 240, 240}},
            {"driver",
             {{"type", "controller"},
              {"position", {ego_x0, lane_y}},
              {"heading_deg", 0.0},
              {"speed", v},
              {"gains", {{"v0", v}}},
              {"hazard_braking", "$aeb"}}}},
           {{"name", "pedestrian"},
            {"kind", "pedestrian"},
            {"color", {200, 40, 160}},
            {"driver",
             {{"type", "script"},
              {"waypoints", {{cross_x, lane_y - 30.0}, {cross_x, lane_y}, {cross_x, 12.0}}},
              {"speed", "$ped_speed"},
              {"arrive", {{"waypoint", 1}, {"time", arrive}, {"lead_time", "$warning_time"}}}}}},
       })},
      {"ego", "ego"},
      {"hazard", "pedestrian"},
      {"viewpoints",
       json::array({{{"name", "ego_driver"}, {"actor", "ego"}, {"target", "pedestrian"}, {"eye", {0.1, 0.35, 1.2}}}})},
      {"analysis", {{"reaction_time_s", 1.5}, {"decel", 6.0}, {"contact_threshold_m", 0.1}}}};
}

struct TruckTurnGeometry {
  double ego_lane_y = -11.85;  // eastbound lane the ego drives in
  double truck_lane_y = 8.15;  // westbound lane the truck leaves from
  double turn_radius = 6.0;
  double hedge_half_width = 6.0;
  double hedge_height = 4.5;
  double gap_half_width = 6.0;
  double ego_speed = 29.0;
};

// Divided highway with tall median hedges and a crossover gap. A westbound
// truck turns left through the gap onto a side road, crossing the eastbound
// lanes; the eastbound ego holds its speed. Both are timed so the truck front
// reaches the ego lane centre as the ego front reaches the truck's near side.
inline nlohmann::json truck_turn_crash_doc(const TruckTurnGeometry& g = {}) {
  using nlohmann::json;
  const double r = g.turn_radius;
  json truck_path = json::array({{400.0, g.truck_lane_y}});
  for (int i = 0; i <= 12; ++i) {
    const double phi = kPi / 2.0 + (kPi / 2.0) * i / 12.0;
    truck_path.push_back({r + r * std::cos(phi), (g.truck_lane_y - r) + r * std::sin(phi)});
  }
  truck_path.back() = {0.0, g.truck_lane_y - r};
  truck_path.push_back({0.0, g.ego_lane_y + 8.0});  // truck centre when its front is at the conflict point
  const std::size_t truck_arrive = truck_path.size() - 1;
  truck_path.push_back({0.0, -150.0});
  const double h = g.hedge_height, w = g.hedge_half_width, gap = g.gap_half_width;
  const double west = 0.5 * (-600.0 - gap), east = 0.5 * (400.0 + gap);
  return {
      {"format", "affsim-scenario"},
      {"version", kScenarioVersion},
      {"id", "truck_turn_crash"},
      {"description", "Truck turning left across a divided highway through a median gap lined by tall hedges."},
      {"seed", 1},
      {"duration_s", 10.0},
      {"world", {{"builtin", "divided_highway"}}},
      {"params",
       {{"truck_speed", {{"min", 5}, {"max", 25}, {"step", 1}, {"default", 10}}},
        {"ego_speed", {{"min", 15}, {"max", 35}, {"step", 1}, {"default", g.ego_speed}}},
        {"t_impact", {{"min", 4}, {"max", 9}, {"step", 0.5}, {"default", 8}}},
        {"truck_r", {{"min", 0}, {"max", 255}, {"step", 1}, {"default", 235}}},
        {"truck_g", {{"min", 0}, {"max", 255}, {"step", 1}, {"default", 235}}},
        {"truck_b", {{"min", 0}, {"max", 255}, {"step", 1}, {"default", 235}}}}},
      {"actors",
       json::array({
           {{"name", "ego"},
            {"kind", "car"},
            {"color", {30, 60, 190}},
            {"driver",
             {{"type", "script"},
              {"waypoints", {{-600.0, g.ego_lane_y}, {-1.3 - 2.25, g.ego_lane_y}, {400.0, g.ego_lane_y}}},
              {"speed", "$ego_speed"},
              {"arrive", {{"waypoint", 1}, {"time", "$t_impact"}}}}}},
           {{"name", "truck"},
            {"kind", "truck"},
            {"color", {"$truck_r", "$truck_g", "$truck_b"}},
            {"driver",
             {{"type", "script"},
              {"waypoints", truck_path},
              {"speed", "$truck_speed"},
              {"arrive", {{"waypoint", truck_arrive}, {"time", "$t_impact"}}}}}},
       })},
      {"ego", "ego"},
      {"hazard", "truck"},
      {"occluders",
       json::array({{{"center", {west, 0.0, h / 2}}, {"half_extents", {west - (-600.0), w, h / 2}}},
                    {{"center", {east, 0.0, h / 2}}, {"half_extents", {400.0 - east, w, h / 2}}}})},
      {"viewpoints",
       json::array({{{"name", "ego_driver"}, {"actor", "ego"}, {"target", "truck"}, {"eye", {0.1, 0.35, 1.2}}},
                    {{"name", "truck_driver"},
                     {"actor", "truck"},
                     {"target", "ego"},
                     {"eye", {6.6, 0.5, 2.4}},
                     {"occluders",
                      json::array({{{"center", {7.3, -1.1, 2.4}},
                                    {"half_extents", {0.06, 0.1, 0.7}},
                                    {"yaw_deg", 25.0}}})}}})},
      {"analysis", {{"reaction_time_s", 1.5}, {"decel", 6.0}, {"contact_threshold_m", 0.1}}}};
}

inline std::vector<Scenario> builtin_scenarios() {
  return {parse_scenario(pedestrian_crossing_doc()), parse_scenario(truck_turn_crash_doc())};
}

}  // namespace affsim
