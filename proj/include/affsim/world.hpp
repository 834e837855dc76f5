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

// The static world: local frame, lane model and extruded buildings, plus the
// JSON "world file" that carries them between tools.

#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string_view>
#include <string>
#include <vector>

#include <json.hpp>

#include "affsim/common.hpp"
#include "affsim/geo.hpp"
#include "affsim/road.hpp"

namespace affsim {

inline constexpr int kWorldFileVersion = 1;

struct Building {
  std::vector<Vec2> footprint;  // open ring, local metres
  double height_m = 0.0;
};

struct WorldMap {
  LocalFrame frame;
  std::optional<GeoBBox> bbox;
  std::uint64_t seed = 0;
  double lane_width = RoadSegment::kDefaultLaneWidth;
  RoadNetwork roads;
  std::vector<Building> buildings;
  std::vector<Diagnostic> diagnostics;
};

namespace detail {

inline std::vector<Vec2> drop_close_points(const std::vector<Vec2>& pts, double min_spacing) {
  std::vector<Vec2> out;
  for (const Vec2& p : pts) {
    if (out.empty() || norm(p - out.back()) >= min_spacing) out.push_back(p);
  }
  return out;
}

}  // namespace detail

// Builds a world from a map document clipped to `bbox`. The frame origin is the
// bbox centre. Roads are kept when any vertex lies in the box, buildings when
// all vertices do; building heights are drawn from `seed`.
inline WorldMap ingest(std::string_view document, const GeoBBox& bbox, std::uint64_t seed,
                       double lane_width = RoadSegment::kDefaultLaneWidth) {
  bbox.validate();
  const ParsedMap parsed = parse_map(document);
  WorldMap w;
  w.bbox = bbox;
  w.seed = seed;
  w.lane_width = lane_width;
  w.frame = LocalFrame(bbox.center().lat, bbox.center().lon);
  w.diagnostics = parsed.rejected;

  int road_id = 0;
  for (std::size_t i = 0; i < parsed.roads.size(); ++i) {
    const RawRoad& r = parsed.roads[i];
    const bool inside = std::any_of(r.points.begin(), r.points.end(),
                                    [&](GeoPoint p) { return bbox.contains(p); });
    if (!inside) {
      w.diagnostics.push_back({i, "road outside bbox"});
      continue;
    }
    std::vector<Vec2> local;
    try {
      for (const GeoPoint& p : r.points) local.push_back(w.frame.to_local(p));
    } catch (const RangeError& e) {
      w.diagnostics.push_back({i, std::string("road: ") + e.what()});
      continue;
    }
    local = detail::drop_close_points(local, RoadSegment::kMinPointSpacing);
    if (local.size() < 2) {
      w.diagnostics.push_back({i, "road shorter than 0.5 m"});
      continue;
    }
    w.roads.add(RoadSegment(road_id++, std::move(local), r.lanes, r.oneway, lane_width));
  }

  std::vector<RawBuilding> kept;
  for (std::size_t i = 0; i < parsed.buildings.size(); ++i) {
    const RawBuilding& b = parsed.buildings[i];
    if (!std::all_of(b.footprint.begin(), b.footprint.end(),
                     [&](GeoPoint p) { return bbox.contains(p); })) {
      w.diagnostics.push_back({i, "building not inside bbox"});
      continue;
    }
    kept.push_back(b);
  }
  const ExtrudeResult ex = extrude_buildings(w.frame, kept, seed);
  for (const auto& d : ex.rejected) w.diagnostics.push_back(d);
  for (const RawBuilding& b : ex.buildings) {
    Building out;
    for (const GeoPoint& p : b.footprint) out.footprint.push_back(w.frame.to_local(p));
    out.height_m = *b.height_m;
    w.buildings.push_back(std::move(out));
  }
  return w;
}

inline nlohmann::json world_to_json(const WorldMap& w) {
  using nlohmann::json;
  json roads = json::array();
  for (const RoadSegment& s : w.roads.segments()) {
    json pts = json::array();
    for (const Vec2& p : s.centerline()) pts.push_back({p.x, p.y});
    roads.push_back({{"id", s.id()},
                     {"points", pts},
                     {"lanes", s.lanes()},
                     {"oneway", s.oneway()},
                     {"lane_width", s.lane_width()},
                     {"lane_split",
                      {{"forward", s.lanes_in(Travel::Forward)}, {"reverse", s.lanes_in(Travel::Reverse)}}},
                     {"markings",
                      {{"forward", s.marking_offsets(Travel::Forward)},
                       {"reverse", s.marking_offsets(Travel::Reverse)}}}});
  }
  json buildings = json::array();
  for (const Building& b : w.buildings) {
    json ring = json::array();
    for (const Vec2& p : b.footprint) ring.push_back({p.x, p.y});
    buildings.push_back({{"footprint", ring}, {"height_m", b.height_m}});
  }
  json diags = json::array();
  for (const auto& d : w.diagnostics) diags.push_back({{"feature", d.feature}, {"reason", d.reason}});
  json j = {{"format", "affsim-world"},
            {"version", kWorldFileVersion},
            {"frame",
             {{"origin_lat", w.frame.origin_lat()},
              {"origin_lon", w.frame.origin_lon()},
              {"meters_per_deg_lat", w.frame.meters_per_deg_lat()},
              {"meters_per_deg_lon", w.frame.meters_per_deg_lon()}}},
            {"seed", w.seed},
            {"lane_width", w.lane_width},
            {"projection", "equirectangular"},
            {"roads", roads},
            {"buildings", buildings},
            {"diagnostics", diags}};
  if (w.bbox) {
    j["bbox"] = {w.bbox->lat_min, w.bbox->lon_min, w.bbox->lat_max, w.bbox->lon_max};
  }
  return j;
}

inline WorldMap world_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "affsim-world") throw ConfigError("not an affsim world file");
  if (j.value("version", 0) != kWorldFileVersion) throw ConfigError("unsupported world file version");
  WorldMap w;
  const auto& f = j.at("frame");
  w.frame = LocalFrame(f.at("origin_lat").get<double>(), f.at("origin_lon").get<double>());
  w.seed = j.value("seed", std::uint64_t{0});
  w.lane_width = j.value("lane_width", RoadSegment::kDefaultLaneWidth);
  if (j.contains("bbox")) {
    const auto& b = j["bbox"];
    w.bbox = GeoBBox{b.at(0).get<double>(), b.at(2).get<double>(), b.at(1).get<double>(),
                     b.at(3).get<double>()};
  }
  for (const auto& r : j.at("roads")) {
    std::vector<Vec2> pts;
    for (const auto& p : r.at("points")) pts.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    w.roads.add(RoadSegment(r.at("id").get<int>(), std::move(pts), r.at("lanes").get<int>(),
                            r.at("oneway").get<bool>(), r.value("lane_width", w.lane_width)));
  }
  for (const auto& b : j.value("buildings", nlohmann::json::array())) {
    Building out;
    for (const auto& p : b.at("footprint")) {
      out.footprint.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    }
    out.height_m = b.at("height_m").get<double>();
    w.buildings.push_back(std::move(out));
  }
  for (const auto& d : j.value("diagnostics", nlohmann::json::array())) {
    w.diagnostics.push_back({d.at("feature").get<std::size_t>(), d.at("reason").get<std::string>()});
  }
  return w;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline WorldMap load_world(const std::string& path) {
  const std::string text = read_file(path);
  try {
    return world_from_json(nlohmann::json::parse(text));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("malformed world file: ") + e.what(), e.byte);
  }
}

inline void save_world(const WorldMap& w, const std::string& path) {
  write_file(path, world_to_json(w).dump(1));
}

// Polyline of a circular arc starting at `start` with initial heading
// `heading`, turning by `turn` radians (CCW positive) over `length` metres.
inline std::vector<Vec2> arc_polyline(Vec2 start, double heading, double turn, double length,
                                      int pieces) {
  std::vector<Vec2> pts{start};
  const double step = length / pieces;
  const double dtheta = turn / pieces;
  Vec2 p = start;
  double h = heading + 0.5 * dtheta;
  for (int i = 0; i < pieces; ++i) {
    p = p + heading_vector(h) * step;
    pts.push_back(p);
    h += dtheta;
  }
  return pts;
}

// Single straight one-way road along +x, used by closed-loop checks.
inline WorldMap straight_road_world(int lanes = 3, double length = 3000.0) {
  WorldMap w;
  w.frame = LocalFrame(40.3487, -74.6590);
  w.roads.add(RoadSegment(0, {{0.0, 0.0}, {length, 0.0}}, lanes, true));
  return w;
}

// Built-in highway set covering 2 to 5 lanes, one- and two-way, straight and
// curved, with roadside buildings. Segments stay hundreds of metres apart so a
// locate query never confuses them.
inline WorldMap builtin_highway_world(std::uint64_t seed = 7) {
  WorldMap w;
  w.frame = LocalFrame(40.3487, -74.6590);
  w.seed = seed;
  w.roads.add(RoadSegment(0, {{0.0, 0.0}, {2400.0, 0.0}}, 3, true));
  {
    auto pts = arc_polyline({0.0, 1000.0}, 0.0, deg2rad(25.0), 2400.0, 120);
    w.roads.add(RoadSegment(1, std::move(pts), 2, true));
  }
  w.roads.add(RoadSegment(2, {{0.0, 2500.0}, {1200.0, 2520.0}, {2400.0, 2500.0}}, 4, false));
  {
    auto pts = arc_polyline({0.0, 4000.0}, 0.0, deg2rad(-20.0), 2400.0, 120);
    w.roads.add(RoadSegment(3, std::move(pts), 5, true));
  }
  {
    auto pts = arc_polyline({0.0, 5000.0}, deg2rad(-10.0), deg2rad(30.0), 2400.0, 120);
    w.roads.add(RoadSegment(4, std::move(pts), 4, true));
  }
  w.roads.add(RoadSegment(5, {{0.0, 6000.0}, {2400.0, 6060.0}}, 3, false));

  // Boxy buildings set back from each road.
  Rng rng(seed);
  for (const RoadSegment& seg : w.roads.segments()) {
    const auto [left, right] = seg.paved_extent();
    for (double s = 60.0; s < seg.length() - 60.0; s += 90.0) {
      for (int side : {-1, 1}) {
        if (uniform01(rng) < 0.35) continue;
        const double setback = (side < 0 ? -left : right) + uniform(rng, 12.0, 30.0);
        const Vec2 c = seg.place(Travel::Forward, s, side * setback);
        const Vec2 d = seg.tangent(Travel::Forward, s);
        const Vec2 n = right_normal(d);
        const double hl = uniform(rng, 8.0, 20.0);
        const double hw = uniform(rng, 5.0, 10.0);
        const Vec2 cc = c + n * (side * hw);
        Building b;
        b.footprint = {cc + d * hl + n * hw, cc - d * hl + n * hw, cc - d * hl - n * hw,
                       cc + d * hl - n * hw};
        b.height_m = uniform(rng, 5.0, 15.0);
        w.buildings.push_back(std::move(b));
      }
    }
  }
  return w;
}

}  // namespace affsim
