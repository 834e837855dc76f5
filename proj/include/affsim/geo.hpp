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

// Map ingestion: a GeoJSON subset of roads and building footprints, plus the
// conversion from WGS84 degrees into a local metric frame.
//
// Accepted document shape:
//
//   { "type": "FeatureCollection",
//     "features": [
//       { "type": "Feature",
//         "geometry": { "type": "LineString", "coordinates": [[lon, lat], ...] },
//         "properties": { "kind": "road", "lanes": 3, "oneway": true } },
//       { "type": "Feature",
//         "geometry": { "type": "Polygon", "coordinates": [[[lon, lat], ...]] },
//         "properties": { "kind": "building" } } ] }
//
// Coordinates follow GeoJSON order (longitude first). Only the outer ring of a
// polygon is used.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "affsim/common.hpp"

namespace affsim {

struct GeoPoint {
  double lat = 0.0;
  double lon = 0.0;
  bool operator==(const GeoPoint&) const = default;
};

struct GeoBBox {
  double lat_min = 0.0;
  double lat_max = 0.0;
  double lon_min = 0.0;
  double lon_max = 0.0;

  void validate() const {
    if (!(lat_min < lat_max) || !(lon_min < lon_max)) {
      throw RangeError("bbox: min must be strictly below max");
    }
    if (std::abs(lat_min) > 85.0 || std::abs(lat_max) > 85.0) {
      throw RangeError("bbox: latitude beyond +/-85 degrees");
    }
  }
  bool contains(GeoPoint p) const {
    return p.lat >= lat_min && p.lat <= lat_max && p.lon >= lon_min && p.lon <= lon_max;
  }
  GeoPoint center() const { return {0.5 * (lat_min + lat_max), 0.5 * (lon_min + lon_max)}; }
};

struct RawRoad {
  std::vector<GeoPoint> points;
  int lanes = 2;
  bool oneway = false;
  bool operator==(const RawRoad&) const = default;
};

// Footprint is stored as an open ring (the closing vertex is dropped).
struct RawBuilding {
  std::vector<GeoPoint> footprint;
  std::optional<double> height_m;
  bool operator==(const RawBuilding&) const = default;
};

struct Diagnostic {
  std::size_t feature = 0;
  std::string reason;
};

struct ParsedMap {
  std::vector<RawRoad> roads;
  std::vector<RawBuilding> buildings;
  std::vector<Diagnostic> rejected;
  std::size_t unknown_kind_warnings = 0;
};

// Equirectangular projection about an origin. x is metres east, y metres north.
class LocalFrame {
 public:
  static constexpr double kMetersPerDegLat = 111320.0;
  // Conversions are only defined within this many degrees of the origin.
  static constexpr double kWindowDeg = 1.0;

  LocalFrame() = default;
  LocalFrame(double origin_lat, double origin_lon)
      : origin_lat_(origin_lat),
        origin_lon_(origin_lon),
        m_per_deg_lon_(kMetersPerDegLat * std::cos(deg2rad(origin_lat))) {
    if (std::abs(origin_lat) > 85.0) throw RangeError("frame origin beyond +/-85 degrees latitude");
  }

  double origin_lat() const { return origin_lat_; }
  double origin_lon() const { return origin_lon_; }
  double meters_per_deg_lat() const { return kMetersPerDegLat; }
  double meters_per_deg_lon() const { return m_per_deg_lon_; }

  Vec2 to_local(GeoPoint p) const {
    if (!(std::abs(p.lat - origin_lat_) <= kWindowDeg) ||
        !(std::abs(p.lon - origin_lon_) <= kWindowDeg)) {
      throw RangeError("point outside the +/-1 degree window around the frame origin");
    }
    return {(p.lon - origin_lon_) * m_per_deg_lon_, (p.lat - origin_lat_) * kMetersPerDegLat};
  }

  GeoPoint to_geo(Vec2 q) const {
    return {origin_lat_ + q.y / kMetersPerDegLat, origin_lon_ + q.x / m_per_deg_lon_};
  }

 private:
  double origin_lat_ = 0.0;
  double origin_lon_ = 0.0;
  double m_per_deg_lon_ = kMetersPerDegLat;
};

namespace detail {

inline bool segments_cross(Vec2 a, Vec2 b, Vec2 c, Vec2 d) {
  auto orient = [](Vec2 p, Vec2 q, Vec2 r) { return cross(q - p, r - p); };
  auto on_seg = [](Vec2 p, Vec2 q, Vec2 r) {
    return std::min(p.x, q.x) <= r.x && r.x <= std::max(p.x, q.x) && std::min(p.y, q.y) <= r.y &&
           r.y <= std::max(p.y, q.y);
  };
  const double o1 = orient(a, b, c), o2 = orient(a, b, d);
  const double o3 = orient(c, d, a), o4 = orient(c, d, b);
  if (((o1 > 0 && o2 < 0) || (o1 < 0 && o2 > 0)) && ((o3 > 0 && o4 < 0) || (o3 < 0 && o4 > 0))) {
    return true;
  }
  if (o1 == 0 && on_seg(a, b, c)) return true;
  if (o2 == 0 && on_seg(a, b, d)) return true;
  if (o3 == 0 && on_seg(c, d, a)) return true;
  if (o4 == 0 && on_seg(c, d, b)) return true;
  return false;
}

}  // namespace detail

// True when the open ring has at least 3 vertices and no two non-adjacent edges
// touch.
inline bool is_simple_polygon(const std::vector<Vec2>& ring) {
  const std::size_t n = ring.size();
  if (n < 3) return false;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool adjacent = (j == i + 1) || (i == 0 && j == n - 1);
      if (adjacent) continue;
      if (detail::segments_cross(ring[i], ring[(i + 1) % n], ring[j], ring[(j + 1) % n])) {
        return false;
      }
    }
  }
  return true;
}

inline double polygon_area(const std::vector<Vec2>& ring) {
  double a = 0.0;
  for (std::size_t i = 0; i < ring.size(); ++i) {
    a += cross(ring[i], ring[(i + 1) % ring.size()]);
  }
  return 0.5 * std::abs(a);
}

namespace detail {

// Simplicity is invariant under the axis scaling of the local projection,
// so the check runs directly on degrees.
inline bool geo_ring_simple(const std::vector<GeoPoint>& ring) {
  std::vector<Vec2> pts;
  pts.reserve(ring.size());
  for (const auto& p : ring) pts.push_back({p.lon, p.lat});
  return is_simple_polygon(pts);
}

inline std::optional<GeoPoint> read_position(const nlohmann::json& c) {
  if (!c.is_array() || c.size() < 2 || !c[0].is_number() || !c[1].is_number()) return std::nullopt;
  const double lon = c[0].get<double>();
  const double lat = c[1].get<double>();
  if (!std::isfinite(lon) || !std::isfinite(lat)) return std::nullopt;
  return GeoPoint{lat, lon};
}

}  // namespace detail

// Parses the GeoJSON subset. Throws ParseError on malformed JSON (nothing is
// returned in that case). Well-formed but invalid features are rejected
// individually with a reason.
inline ParsedMap parse_map(std::string_view bytes) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(bytes.begin(), bytes.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("malformed map document: ") + e.what(), e.byte);
  }
  if (!doc.is_object() || doc.value("type", "") != "FeatureCollection" ||
      !doc.contains("features") || !doc["features"].is_array()) {
    throw ParseError("map document is not a FeatureCollection", 0);
  }

  ParsedMap out;
  const auto& features = doc["features"];
  for (std::size_t i = 0; i < features.size(); ++i) {
    const auto& f = features[i];
    auto reject = [&](std::string reason) { out.rejected.push_back({i, std::move(reason)}); };
    if (!f.is_object() || !f.contains("geometry") || !f["geometry"].is_object()) {
      reject("feature without geometry");
      continue;
    }
    const auto props = f.value("properties", nlohmann::json::object());
    const std::string kind = props.is_object() ? props.value("kind", "") : "";
    const auto& geom = f["geometry"];
    const std::string gtype = geom.value("type", "");

    if (kind == "road") {
      if (gtype != "LineString" || !geom.contains("coordinates") || !geom["coordinates"].is_array()) {
        reject("road geometry must be a LineString");
        continue;
      }
      RawRoad road;
      bool ok = true;
      for (const auto& c : geom["coordinates"]) {
        auto p = detail::read_position(c);
        if (!p) {
          ok = false;
          break;
        }
        road.points.push_back(*p);
      }
      if (!ok) {
        reject("road has a malformed position");
        continue;
      }
      if (road.points.size() < 2) {
        reject("road needs at least 2 points");
        continue;
      }
      if (!props.contains("lanes") || !props["lanes"].is_number_integer()) {
        reject("road lanes missing or not an integer");
        continue;
      }
      road.lanes = props["lanes"].get<int>();
      if (road.lanes < 2 || road.lanes > 5) {
        reject("lanes " + std::to_string(road.lanes) + " outside {2,3,4,5}");
        continue;
      }
      if (!props.contains("oneway") || !props["oneway"].is_boolean()) {
        reject("road oneway missing or not a boolean");
        continue;
      }
      road.oneway = props["oneway"].get<bool>();
      out.roads.push_back(std::move(road));
    } else if (kind == "building") {
      if (gtype != "Polygon" || !geom.contains("coordinates") || !geom["coordinates"].is_array() ||
          geom["coordinates"].empty() || !geom["coordinates"][0].is_array()) {
        reject("building geometry must be a Polygon");
        continue;
      }
      RawBuilding b;
      bool ok = true;
      for (const auto& c : geom["coordinates"][0]) {
        auto p = detail::read_position(c);
        if (!p) {
          ok = false;
          break;
        }
        b.footprint.push_back(*p);
      }
      if (!ok) {
        reject("building has a malformed position");
        continue;
      }
      if (b.footprint.size() >= 2 && b.footprint.front() == b.footprint.back()) {
        b.footprint.pop_back();
      }
      if (b.footprint.size() < 3) {
        reject("building footprint needs at least 3 vertices");
        continue;
      }
      if (!detail::geo_ring_simple(b.footprint)) {
        reject("building footprint is self-intersecting");
        continue;
      }
      if (props.contains("height_m") && props["height_m"].is_number()) {
        const double h = props["height_m"].get<double>();
        if (!(h >= 5.0 && h <= 15.0)) {
          reject("building height outside [5, 15] m");
          continue;
        }
        b.height_m = h;
      }
      out.buildings.push_back(std::move(b));
    } else {
      ++out.unknown_kind_warnings;
    }
  }
  return out;
}

// Writes roads and buildings back into the accepted GeoJSON subset.
inline std::string serialize_map(const std::vector<RawRoad>& roads,
                                 const std::vector<RawBuilding>& buildings) {
  nlohmann::json features = nlohmann::json::array();
  for (const auto& r : roads) {
    nlohmann::json coords = nlohmann::json::array();
    for (const auto& p : r.points) coords.push_back({p.lon, p.lat});
    features.push_back({{"type", "Feature"},
                        {"geometry", {{"type", "LineString"}, {"coordinates", coords}}},
                        {"properties", {{"kind", "road"}, {"lanes", r.lanes}, {"oneway", r.oneway}}}});
  }
  for (const auto& b : buildings) {
    nlohmann::json ring = nlohmann::json::array();
    for (const auto& p : b.footprint) ring.push_back({p.lon, p.lat});
    ring.push_back({b.footprint.front().lon, b.footprint.front().lat});
    nlohmann::json props = {{"kind", "building"}};
    if (b.height_m) props["height_m"] = *b.height_m;
    features.push_back({{"type", "Feature"},
                        {"geometry", {{"type", "Polygon"}, {"coordinates", {ring}}}},
                        {"properties", props}});
  }
  return nlohmann::json{{"type", "FeatureCollection"}, {"features", features}}.dump();
}

struct ExtrudeResult {
  std::vector<RawBuilding> buildings;
  std::vector<Diagnostic> rejected;  // `feature` indexes the input list
};

// Assigns each footprint a height drawn uniformly from [5, 15] m. One draw is
// consumed per input footprint, in order, so a rejected footprint does not
// shift the heights of the ones after it.
inline ExtrudeResult extrude_buildings(const LocalFrame& frame,
                                       const std::vector<RawBuilding>& footprints,
                                       std::uint64_t seed) {
  constexpr double kMinHeight = 5.0;
  constexpr double kMaxHeight = 15.0;
  Rng rng(seed);
  ExtrudeResult out;
  for (std::size_t i = 0; i < footprints.size(); ++i) {
    const double h = uniform(rng, kMinHeight, kMaxHeight);
    std::vector<Vec2> ring;
    for (const auto& p : footprints[i].footprint) ring.push_back(frame.to_local(p));
    if (ring.size() < 3 || polygon_area(ring) < 1.0) {
      out.rejected.push_back({i, "degenerate footprint (area below 1 m^2)"});
      continue;
    }
    RawBuilding b = footprints[i];
    b.height_m = h;
    out.buildings.push_back(std::move(b));
  }
  return out;
}

}  // namespace affsim
