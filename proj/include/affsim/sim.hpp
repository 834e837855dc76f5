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

// Fixed-step world simulation.
//
// The world advances at 20 Hz. Vehicles under controller use a kinematic
// bicycle; scripted actors follow waypoint polylines at constant speed after a
// trigger time. Collisions are detected and logged, never resolved. Given the
// same initial world and seed every trace is bit-identical.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "affsim/affordance.hpp"
#include "affsim/collision.hpp"
#include "affsim/common.hpp"
#include "affsim/controller.hpp"
#include "affsim/road.hpp"
#include "affsim/world.hpp"

namespace affsim {

inline constexpr double kStepDt = 0.05;
inline constexpr double kSampleInterval = 0.25;

enum class ActorKind { Car, Truck, Pedestrian };

inline const char* to_string(ActorKind k) {
  switch (k) {
    case ActorKind::Truck: return "truck";
    case ActorKind::Pedestrian: return "pedestrian";
    default: return "car";
  }
}

inline ActorKind actor_kind_from_string(const std::string& s) {
  if (s == "car") return ActorKind::Car;
  if (s == "truck") return ActorKind::Truck;
  if (s == "pedestrian") return ActorKind::Pedestrian;
  throw ConfigError("unknown actor kind '" + s + "'");
}

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

struct Extents {
  double half_length = 0.0;
  double half_width = 0.0;
  double half_height = 0.0;
  bool operator==(const Extents&) const = default;
};

// Car 4.5 x 1.8 x 1.5 m, truck with trailer 16.0 x 2.6 x 4.0 m, pedestrian
// 0.5 x 0.5 x 1.8 m.
inline Extents default_extents(ActorKind k) {
  switch (k) {
    case ActorKind::Truck: return {8.0, 1.3, 2.0};
    case ActorKind::Pedestrian: return {0.25, 0.25, 0.9};
    default: return {2.25, 0.9, 0.75};
  }
}

inline bool is_vehicle(ActorKind k) { return k != ActorKind::Pedestrian; }

// Constant-speed waypoint follower. Before `trigger_time` the actor waits at
// the first waypoint; after reaching the last one it stops there.
struct PathScript {
  std::vector<Vec2> waypoints;
  double speed = 0.0;
  double trigger_time = 0.0;

  struct State {
    Vec2 position;
    double heading = 0.0;
    double speed = 0.0;
  };

  double arc_to(std::size_t waypoint) const {
    double s = 0.0;
    for (std::size_t i = 1; i <= waypoint && i < waypoints.size(); ++i) {
      s += norm(waypoints[i] - waypoints[i - 1]);
    }
    return s;
  }
  double length() const { return waypoints.empty() ? 0.0 : arc_to(waypoints.size() - 1); }

  State at(double t) const {
    if (waypoints.empty()) return {};
    if (waypoints.size() == 1) return {waypoints[0], 0.0, 0.0};
    const double travelled = speed > 0.0 ? std::max(0.0, t - trigger_time) * speed : 0.0;
    double remaining = travelled;
    for (std::size_t i = 1; i < waypoints.size(); ++i) {
      const Vec2 leg = waypoints[i] - waypoints[i - 1];
      const double len = norm(leg);
      if (len <= 0.0) continue;
      const double heading = std::atan2(leg.y, leg.x);
      if (remaining < len) {
        const bool moving = speed > 0.0 && t > trigger_time;
        return {waypoints[i - 1] + leg * (remaining / len), heading, moving ? speed : 0.0};
      }
      remaining -= len;
    }
    const Vec2 last = waypoints.back() - waypoints[waypoints.size() - 2];
    return {waypoints.back(), std::atan2(last.y, last.x), 0.0};
  }
};

enum class DriverKind { Static, Script, Controller };

struct DriverOptions {
  ControllerGains gains;
  bool lane_changes = false;
  bool hazard_braking = false;
  double wheelbase = 2.7;
  double lane_change_cooldown = 6.0;
};

// Per-actor controller memory. Kept outside the pure controller functions.
struct DriverMemory {
  int target_lane = -1;
  double cooldown_until = 0.0;
  std::optional<double> prev_car_m;
  std::size_t home_segment = 0;
  Travel home_travel = Travel::Forward;
};

struct Actor {
  int id = 0;
  ActorKind kind = ActorKind::Car;
  Vec2 position;
  double heading = 0.0;
  double speed = 0.0;
  Extents extents = default_extents(ActorKind::Car);
  Rgb color{200, 30, 30};
  DriverKind driver = DriverKind::Static;
  PathScript script;
  DriverOptions control;
  DriverMemory memory;
  bool active = true;

  Footprint footprint() const {
    return {position, heading, extents.half_length, extents.half_width};
  }
  Vec2 velocity() const { return heading_vector(heading) * speed; }
};

struct SimClock {
  static constexpr double kTimeScale = 30.0;
  static constexpr double kDaySeconds = 86400.0;

  double dt = kStepDt;
  std::int64_t step = 0;
  double start_time_of_day = 0.0;

  double sim_time() const { return static_cast<double>(step) * dt; }
  static double time_of_day_at(double start, double t) {
    return std::fmod(start + kTimeScale * t, kDaySeconds);
  }
  double time_of_day() const { return time_of_day_at(start_time_of_day, sim_time()); }
};

struct CollisionEvent {
  double time = 0.0;
  int a = 0;
  int b = 0;
  double penetration = 0.0;
};

struct World;

// Replaces the ground-truth affordances an actor's controller sees (for
// example with a learned model). Returning nullopt falls back to ground truth.
using Perception = std::function<std::optional<AffordanceVector>(const World&, const Actor&)>;

struct World {
  std::shared_ptr<const WorldMap> map;
  std::vector<Actor> actors;
  int ego_id = 0;
  SimClock clock;
  std::vector<CollisionEvent> collisions;
  std::set<std::pair<int, int>> contacts;
  double max_car_distance = kDefaultMaxCarDistance;

  const RoadNetwork& roads() const { return map->roads; }

  Actor* find(int id) {
    for (auto& a : actors) {
      if (a.id == id) return &a;
    }
    return nullptr;
  }
  const Actor* find(int id) const {
    for (const auto& a : actors) {
      if (a.id == id) return &a;
    }
    return nullptr;
  }
  const Actor& ego() const {
    const Actor* e = find(ego_id);
    if (!e) throw ConfigError("world has no ego actor");
    return *e;
  }
};

namespace detail {

inline std::vector<Vec2> other_vehicle_positions(const World& w, const Actor& self) {
  std::vector<Vec2> out;
  for (const Actor& a : w.actors) {
    if (a.active && a.id != self.id && is_vehicle(a.kind)) out.push_back(a.position);
  }
  return out;
}

// Earliest rectangle contact with any other active actor under constant
// velocity, within the hazard horizon.
inline std::optional<double> perceived_hazard_ttc(const World& w, const Actor& self, double horizon) {
  std::optional<double> best;
  for (const Actor& o : w.actors) {
    if (!o.active || o.id == self.id) continue;
    const auto t = rect_time_to_contact(self.footprint(), self.velocity(), o.footprint(),
                                        o.velocity(), horizon, w.clock.dt);
    if (t && (!best || *t < *best)) best = t;
  }
  return best;
}

inline ControlOutput drive_controller(const World& w, Actor& self, const Perception* perception) {
  const ControllerGains& g = self.control.gains;
  ControlOutput out;
  LanePose pose;
  AffordanceVector truth;
  try {
    pose = w.roads().locate(self.position, self.heading);
    const auto others = other_vehicle_positions(w, self);
    truth = affordances_at(w.roads(), pose, self.heading, others, w.max_car_distance);
  } catch (const OffRoadError&) {
    self.memory.prev_car_m.reset();
    return {0.0, std::max(g.accel_min, -0.5 * g.hazard_decel)};
  }
  AffordanceVector seen = truth;
  if (perception && *perception) {
    if (auto p = (*perception)(w, self)) seen = *p;
  }
  const double t = w.clock.sim_time();

  double offset = lane_offset(seen);
  if (self.control.lane_changes) {
    DriverMemory& m = self.memory;
    if (m.target_lane < 0 && t >= m.cooldown_until) {
      const LaneChange c = lane_change_decision(seen, g);
      if (c != LaneChange::Keep) {
        m.target_lane = pose.lane_index + (c == LaneChange::ShiftLeft ? -1 : 1);
        m.cooldown_until = t + self.control.lane_change_cooldown;
      }
    }
    if (m.target_lane >= 0) {
      const double width = w.roads().segment(pose.segment).lane_width();
      offset += (pose.lane_index - m.target_lane) * width;
      if (pose.lane_index == m.target_lane && std::abs(pose.lateral) < 0.5) m.target_lane = -1;
    }
  }
  out.steering = seen.is_active(Aff::Angle) ? steer_to(seen.get(Aff::Angle), offset, g) : 0.0;

  double closing = 0.0;
  if (seen.is_active(Aff::CarM)) {
    if (self.memory.prev_car_m) {
      closing = std::clamp((*self.memory.prev_car_m - seen.get(Aff::CarM)) / w.clock.dt, -20.0, 20.0);
    }
    self.memory.prev_car_m = seen.get(Aff::CarM);
  } else {
    self.memory.prev_car_m.reset();
  }
  out.accel = speed_control(seen, self.speed, g, closing);
  if (self.control.hazard_braking) {
    const auto ttc = perceived_hazard_ttc(w, self, g.hazard_ttc);
    if (auto brake = hazard_brake(ttc, self.speed, g)) out.accel = *brake;
  }
  return out;
}

}  // namespace detail

// Advances the world by one fixed step of `world.clock.dt`.
inline void step(World& world, const Perception* ego_perception = nullptr) {
  const double dt = world.clock.dt;
  const double t_next = static_cast<double>(world.clock.step + 1) * dt;

  std::vector<ControlOutput> controls(world.actors.size());
  for (std::size_t i = 0; i < world.actors.size(); ++i) {
    Actor& a = world.actors[i];
    if (!a.active || a.driver != DriverKind::Controller) continue;
    controls[i] = detail::drive_controller(world, a, a.id == world.ego_id ? ego_perception : nullptr);
  }

  for (std::size_t i = 0; i < world.actors.size(); ++i) {
    Actor& a = world.actors[i];
    if (!a.active) continue;
    switch (a.driver) {
      case DriverKind::Script: {
        const auto s = a.script.at(t_next);
        a.position = s.position;
        a.heading = s.heading;
        a.speed = s.speed;
        break;
      }
      case DriverKind::Controller: {
        const double v = a.speed;
        a.position = a.position + heading_vector(a.heading) * (v * dt);
        a.heading = wrap_radians(a.heading - v / a.control.wheelbase * std::tan(controls[i].steering) * dt);
        a.speed = std::max(0.0, v + controls[i].accel * dt);
        break;
      }
      case DriverKind::Static:
        break;
    }
  }
  ++world.clock.step;

  for (std::size_t i = 0; i < world.actors.size(); ++i) {
    const Actor& a = world.actors[i];
    if (!a.active) continue;
    for (std::size_t j = i + 1; j < world.actors.size(); ++j) {
      const Actor& b = world.actors[j];
      if (!b.active) continue;
      const auto key = std::minmax(a.id, b.id);
      const auto r = detect_collision(a.footprint(), b.footprint());
      if (r.colliding) {
        if (world.contacts.insert(key).second) {
          world.collisions.push_back({world.clock.sim_time(), key.first, key.second, r.penetration});
        }
      } else {
        world.contacts.erase(key);
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Snapshots
// ---------------------------------------------------------------------------

struct ActorState {
  int id = 0;
  ActorKind kind = ActorKind::Car;
  Vec2 position;
  double heading = 0.0;
  double speed = 0.0;
  Extents extents;
  Rgb color;
  bool operator==(const ActorState&) const = default;
};

struct Snapshot {
  int index = 0;
  double sim_time = 0.0;
  double time_of_day = 0.0;
  int ego_id = 0;
  std::vector<ActorState> actors;
  std::optional<AffordanceVector> affordances;  // ground truth; absent off-road
  int ego_segment = -1;
  int ego_lane = -1;
  bool collision = false;
  int respawns = 0;
  bool operator==(const Snapshot&) const = default;

  const ActorState* ego() const {
    for (const auto& a : actors) {
      if (a.id == ego_id) return &a;
    }
    return nullptr;
  }
};

inline Snapshot make_snapshot(const World& w, int index, double sample_time) {
  Snapshot s;
  s.index = index;
  s.sim_time = sample_time;
  s.time_of_day = SimClock::time_of_day_at(w.clock.start_time_of_day, sample_time);
  s.ego_id = w.ego_id;
  for (const Actor& a : w.actors) {
    if (!a.active) continue;
    s.actors.push_back({a.id, a.kind, a.position, a.heading, a.speed, a.extents, a.color});
  }
  if (const Actor* e = w.find(w.ego_id); e && e->active && !w.roads().empty()) {
    try {
      const LanePose pose = w.roads().locate(e->position, e->heading);
      const auto others = detail::other_vehicle_positions(w, *e);
      s.affordances = affordances_at(w.roads(), pose, e->heading, others, w.max_car_distance);
      s.ego_segment = static_cast<int>(pose.segment);
      s.ego_lane = pose.lane_index;
    } catch (const OffRoadError&) {
      s.affordances.reset();
    }
  }
  for (const auto& [a, b] : w.contacts) {
    if (a == w.ego_id || b == w.ego_id) s.collision = true;
  }
  return s;
}

inline nlohmann::json snapshot_to_json(const Snapshot& s) {
  using nlohmann::json;
  json actors = json::array();
  for (const auto& a : s.actors) {
    actors.push_back({{"id", a.id},
                      {"kind", to_string(a.kind)},
                      {"x", a.position.x},
                      {"y", a.position.y},
                      {"heading", a.heading},
                      {"speed", a.speed},
                      {"half_extents", {a.extents.half_length, a.extents.half_width, a.extents.half_height}},
                      {"color", {a.color.r, a.color.g, a.color.b}}});
  }
  return {{"index", s.index},
          {"t", s.sim_time},
          {"time_of_day", s.time_of_day},
          {"ego", s.ego_id},
          {"segment", s.ego_segment},
          {"lane", s.ego_lane},
          {"collision", s.collision},
          {"respawns", s.respawns},
          {"affordances", s.affordances ? affordances_to_json(*s.affordances) : json(nullptr)},
          {"actors", actors}};
}

inline Snapshot snapshot_from_json(const nlohmann::json& j) {
  Snapshot s;
  s.index = j.at("index").get<int>();
  s.sim_time = j.at("t").get<double>();
  s.time_of_day = j.at("time_of_day").get<double>();
  s.ego_id = j.at("ego").get<int>();
  s.ego_segment = j.at("segment").get<int>();
  s.ego_lane = j.at("lane").get<int>();
  s.collision = j.at("collision").get<bool>();
  s.respawns = j.at("respawns").get<int>();
  if (!j.at("affordances").is_null()) s.affordances = affordances_from_json(j["affordances"]);
  for (const auto& a : j.at("actors")) {
    ActorState st;
    st.id = a.at("id").get<int>();
    st.kind = actor_kind_from_string(a.at("kind").get<std::string>());
    st.position = {a.at("x").get<double>(), a.at("y").get<double>()};
    st.heading = a.at("heading").get<double>();
    st.speed = a.at("speed").get<double>();
    const auto& e = a.at("half_extents");
    st.extents = {e.at(0).get<double>(), e.at(1).get<double>(), e.at(2).get<double>()};
    const auto& c = a.at("color");
    st.color = {c.at(0).get<std::uint8_t>(), c.at(1).get<std::uint8_t>(), c.at(2).get<std::uint8_t>()};
    s.actors.push_back(st);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Episodes
// ---------------------------------------------------------------------------

struct EpisodeConfig {
  std::uint64_t seed = 1;
  double duration_s = 10.0;
  double sample_interval_s = kSampleInterval;
  double traffic_density = 8.0;  // vehicles per km per lane, around the ego
  double traffic_behind_m = 150.0;
  double traffic_ahead_m = 450.0;
  double truck_fraction = 0.1;
  double lateral_jitter_m = 1.0;
  double heading_jitter_deg = 4.0;
  double speed_min = 15.0;
  double speed_max = 28.0;
  double max_car_distance = kDefaultMaxCarDistance;
  DriverOptions ego{ControllerGains{}, true, false, 2.7, 6.0};

  int decimation() const {
    return static_cast<int>(std::llround(sample_interval_s / kStepDt));
  }

  void validate() const {
    if (!(sample_interval_s > kStepDt)) throw ConfigError("sample interval must exceed the step size");
    if (std::abs(decimation() * kStepDt - sample_interval_s) > 1e-12) {
      throw ConfigError("sample interval must be a whole number of 0.05 s steps");
    }
    if (!(duration_s >= 0.0)) throw ConfigError("duration must be non-negative");
    if (!(traffic_density >= 0.0)) throw ConfigError("traffic density must be non-negative");
    ego.gains.validate();
  }
};

struct EpisodeTrace {
  std::uint64_t seed = 0;
  double start_time_of_day = 0.0;
  std::vector<Snapshot> snapshots;
  std::vector<CollisionEvent> collisions;
  int respawns = 0;
};

namespace detail {

inline constexpr std::array<Rgb, 8> kPalette = {{{200, 30, 30},
                                                 {30, 60, 190},
                                                 {230, 230, 230},
                                                 {25, 25, 25},
                                                 {120, 120, 130},
                                                 {210, 180, 40},
                                                 {30, 140, 60},
                                                 {150, 80, 30}}};

struct LaneSlot {
  std::size_t segment;
  Travel travel;
};

inline void spawn_ego(World& w, Rng& rng, const EpisodeConfig& cfg) {
  const RoadNetwork& net = w.roads();
  std::vector<LaneSlot> slots;
  std::vector<double> weights;
  for (std::size_t i = 0; i < net.segments().size(); ++i) {
    for (Travel t : {Travel::Forward, Travel::Reverse}) {
      const int n = net.segment(i).lanes_in(t);
      if (n == 0) continue;
      slots.push_back({i, t});
      weights.push_back(net.segment(i).length() * n);
    }
  }
  double total = 0.0;
  for (double x : weights) total += x;
  double pick = uniform01(rng) * total;
  std::size_t k = 0;
  while (k + 1 < slots.size() && pick >= weights[k]) pick -= weights[k++];
  const RoadSegment& seg = net.segment(slots[k].segment);
  const Travel travel = slots[k].travel;
  const auto marks = seg.marking_offsets(travel);
  const int lane = static_cast<int>(uniform_index(rng, marks.size() - 1));
  const double len = seg.length();
  const double s = len > 700.0 ? uniform(rng, 100.0, len - 500.0) : uniform(rng, 0.1 * len, 0.5 * len);
  const double jitter = std::min(cfg.lateral_jitter_m, 0.45 * seg.lane_width());
  const double offset = 0.5 * (marks[lane] + marks[lane + 1]) + uniform(rng, -jitter, jitter);
  const Vec2 tan = seg.tangent(travel, s);

  Actor* ego = w.find(w.ego_id);
  ego->position = seg.place(travel, s, offset);
  ego->heading = std::atan2(tan.y, tan.x) + deg2rad(uniform(rng, -cfg.heading_jitter_deg, cfg.heading_jitter_deg));
  ego->speed = uniform(rng, cfg.speed_min, cfg.speed_max);
  ego->memory = DriverMemory{};
  ego->memory.home_segment = slots[k].segment;
  ego->memory.home_travel = travel;
}

inline void spawn_traffic(World& w, Rng& rng, const EpisodeConfig& cfg, int& next_id) {
  for (auto& a : w.actors) {
    if (a.id != w.ego_id) a.active = false;
  }
  w.actors.erase(std::remove_if(w.actors.begin(), w.actors.end(), [](const Actor& a) { return !a.active; }),
                 w.actors.end());
  w.contacts.clear();

  const Actor& ego = w.ego();
  const std::size_t si = ego.memory.home_segment;
  const RoadSegment& seg = w.roads().segment(si);
  const LanePose ep = w.roads().locate_on(si, ego.memory.home_travel, ego.position);
  const double window_km = (cfg.traffic_behind_m + cfg.traffic_ahead_m) / 1000.0;

  struct Placed {
    Travel travel;
    int lane;
    double s;
  };
  std::vector<Placed> placed{{ep.travel, ep.lane_index, ep.s}};

  for (Travel travel : {Travel::Forward, Travel::Reverse}) {
    const auto marks = seg.marking_offsets(travel);
    if (marks.empty()) continue;
    // The window is defined in the ego's travel coordinates.
    double lo = ep.s - cfg.traffic_behind_m, hi = ep.s + cfg.traffic_ahead_m;
    if (travel != ep.travel) {
      const double l2 = seg.length() - hi, h2 = seg.length() - lo;
      lo = l2;
      hi = h2;
    }
    lo = std::max(lo, 5.0);
    hi = std::min(hi, seg.length() - 25.0);
    if (hi <= lo) continue;
    for (int lane = 0; lane + 1 < static_cast<int>(marks.size()); ++lane) {
      const int count = static_cast<int>(std::floor(cfg.traffic_density * window_km + uniform01(rng)));
      for (int c = 0; c < count; ++c) {
        const bool truck = uniform01(rng) < cfg.truck_fraction;
        const double v0 = uniform(rng, 22.0, 30.0);
        const double speed_frac = uniform(rng, 0.8, 1.0);
        const Rgb color = kPalette[uniform_index(rng, kPalette.size())];
        double s = 0.0;
        bool ok = false;
        for (int attempt = 0; attempt < 10 && !ok; ++attempt) {
          s = uniform(rng, lo, hi);
          ok = std::none_of(placed.begin(), placed.end(), [&](const Placed& p) {
            return p.travel == travel && p.lane == lane && std::abs(p.s - s) < (truck ? 25.0 : 15.0);
          });
        }
        if (!ok) continue;
        placed.push_back({travel, lane, s});
        Actor a;
        a.id = next_id++;
        a.kind = truck ? ActorKind::Truck : ActorKind::Car;
        a.extents = default_extents(a.kind);
        a.color = color;
        a.position = seg.place(travel, s, 0.5 * (marks[lane] + marks[lane + 1]));
        const Vec2 tan = seg.tangent(travel, s);
        a.heading = std::atan2(tan.y, tan.x);
        a.speed = v0 * speed_frac;
        a.driver = DriverKind::Controller;
        a.control.gains.v0 = v0;
        a.control.gains.vehicle_length = 2.0 * a.extents.half_length;
        a.control.wheelbase = truck ? 10.0 : 2.7;
        a.memory.home_segment = si;
        a.memory.home_travel = travel;
        w.actors.push_back(std::move(a));
      }
    }
  }
}

inline bool near_segment_end(const World& w, const Actor& a, double margin) {
  const RoadSegment& seg = w.roads().segment(a.memory.home_segment);
  const auto pr = seg.project(a.position);
  const double s = a.memory.home_travel == Travel::Forward ? pr.s_forward : seg.length() - pr.s_forward;
  return pr.beyond_ends || s > seg.length() - margin;
}

}  // namespace detail

// Runs one seeded episode on `map`: the ego spawns at a random lane pose with
// traffic around it, drives under its controller (or `perception`), and is
// sampled every `sample_interval_s`. The ego respawns when it leaves the road
// or nears the end of its segment.
inline EpisodeTrace run_episode(std::shared_ptr<const WorldMap> map, const EpisodeConfig& cfg,
                                const Perception* perception = nullptr) {
  cfg.validate();
  if (!map || map->roads.empty()) throw ConfigError("episode world has no roads");
  Rng rng(cfg.seed);

  World w;
  w.map = std::move(map);
  w.max_car_distance = cfg.max_car_distance;
  w.clock.start_time_of_day = uniform(rng, 0.0, SimClock::kDaySeconds);
  Actor ego;
  ego.id = 0;
  ego.kind = ActorKind::Car;
  ego.color = {240, 240, 240};
  ego.driver = DriverKind::Controller;
  ego.control = cfg.ego;
  w.actors.push_back(ego);
  w.ego_id = 0;
  int next_id = 1;
  detail::spawn_ego(w, rng, cfg);
  detail::spawn_traffic(w, rng, cfg, next_id);

  EpisodeTrace trace;
  trace.seed = cfg.seed;
  trace.start_time_of_day = w.clock.start_time_of_day;

  const int decim = cfg.decimation();
  const auto total_steps = static_cast<std::int64_t>(std::llround(cfg.duration_s / kStepDt));
  std::size_t seen_collisions = 0;
  bool collided_since_sample = false;
  for (std::int64_t k = 0;; ++k) {
    for (; seen_collisions < w.collisions.size(); ++seen_collisions) {
      const auto& c = w.collisions[seen_collisions];
      if (c.a == w.ego_id || c.b == w.ego_id) collided_since_sample = true;
    }
    if (k % decim == 0) {
      const int index = static_cast<int>(k / decim);
      Snapshot s = make_snapshot(w, index, index * cfg.sample_interval_s);
      s.collision = s.collision || collided_since_sample;
      s.respawns = trace.respawns;
      trace.snapshots.push_back(std::move(s));
      collided_since_sample = false;
    }
    if (k == total_steps) break;
    step(w, perception);

    // Retire traffic at the end of the road; respawn the ego.
    for (auto& a : w.actors) {
      if (a.active && a.id != w.ego_id && detail::near_segment_end(w, a, 20.0)) a.active = false;
    }
    const Actor& e = w.ego();
    bool respawn = detail::near_segment_end(w, e, 40.0);
    if (!respawn) {
      try {
        const LanePose p = w.roads().locate(e.position, e.heading);
        const auto marks = w.roads().segment(p.segment).marking_offsets(p.travel);
        respawn = marks.empty() || p.offset < marks.front() - 2.0 || p.offset > marks.back() + 2.0;
      } catch (const OffRoadError&) {
        respawn = true;
      }
    }
    if (respawn) {
      ++trace.respawns;
      detail::spawn_ego(w, rng, cfg);
      detail::spawn_traffic(w, rng, cfg, next_id);
    }
  }
  trace.collisions = w.collisions;
  return trace;
}

}  // namespace affsim
