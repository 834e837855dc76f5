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

// Ground-truth affordances and their label encoding.
//
// The eight variables, in storage order:
//   angle    ego heading minus road tangent, degrees, CCW positive
//   car_L    arc-length gap to the nearest vehicle ahead in the left lane
//   car_M    ... in the ego lane
//   car_R    ... in the right lane
//   lane_LL  distance to the second marking on the left
//   lane_L   distance to the marking immediately left
//   lane_R   distance to the marking immediately right
//   lane_RR  distance to the second marking on the right
//
// Distances are metres and non-negative. Car gaps are centre-to-centre.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "affsim/common.hpp"
#include "affsim/road.hpp"

namespace affsim {

inline constexpr std::size_t kNumAffordances = 8;

enum class Aff : std::size_t { Angle, CarL, CarM, CarR, LaneLL, LaneL, LaneR, LaneRR };

inline constexpr std::array<const char*, kNumAffordances> kAffordanceNames = {
    "angle", "car_L", "car_M", "car_R", "lane_LL", "lane_L", "lane_R", "lane_RR"};

constexpr std::size_t idx(Aff a) { return static_cast<std::size_t>(a); }
constexpr bool is_car(std::size_t i) { return i >= idx(Aff::CarL) && i <= idx(Aff::CarR); }
constexpr bool is_lane(std::size_t i) { return i >= idx(Aff::LaneLL); }

struct AffordanceVector {
  std::array<double, kNumAffordances> value{};
  std::array<bool, kNumAffordances> active{};

  double get(Aff a) const { return value[idx(a)]; }
  bool is_active(Aff a) const { return active[idx(a)]; }
  void set(Aff a, double v) {
    value[idx(a)] = v;
    active[idx(a)] = true;
  }
  void clear(Aff a) {
    value[idx(a)] = 0.0;
    active[idx(a)] = false;
  }
  bool operator==(const AffordanceVector&) const = default;
};

inline constexpr double kInactiveCode = 1.1;
inline constexpr double kInactiveThreshold = 0.99;
inline constexpr double kEncodedBound = 0.9;
inline constexpr double kDefaultMaxCarDistance = 60.0;

struct EncodedAffordances {
  std::array<double, kNumAffordances> value{};
  bool operator==(const EncodedAffordances&) const = default;
};

struct NormalizationRanges {
  std::array<std::pair<double, double>, kNumAffordances> range{};

  static NormalizationRanges defaults(double d_max = kDefaultMaxCarDistance) {
    NormalizationRanges r;
    r.range[idx(Aff::Angle)] = {-90.0, 90.0};
    r.range[idx(Aff::CarL)] = {0.0, d_max};
    r.range[idx(Aff::CarM)] = {0.0, d_max};
    r.range[idx(Aff::CarR)] = {0.0, d_max};
    r.range[idx(Aff::LaneLL)] = {0.0, 9.25};
    r.range[idx(Aff::LaneL)] = {0.0, 5.55};
    r.range[idx(Aff::LaneR)] = {0.0, 5.55};
    r.range[idx(Aff::LaneRR)] = {0.0, 9.25};
    return r;
  }

  void validate() const {
    for (std::size_t i = 0; i < kNumAffordances; ++i) {
      if (!(range[i].first < range[i].second)) {
        throw ConfigError(std::string("normalization range for ") + kAffordanceNames[i] +
                          " must satisfy lo < hi");
      }
    }
  }

  double span(std::size_t i) const { return range[i].second - range[i].first; }
  double max_car_distance() const { return range[idx(Aff::CarM)].second; }
};

inline void to_json(nlohmann::json& j, const NormalizationRanges& r) {
  j = nlohmann::json::object();
  for (std::size_t i = 0; i < kNumAffordances; ++i) {
    j[kAffordanceNames[i]] = {r.range[i].first, r.range[i].second};
  }
}

inline void from_json(const nlohmann::json& j, NormalizationRanges& r) {
  for (std::size_t i = 0; i < kNumAffordances; ++i) {
    const auto& v = j.at(kAffordanceNames[i]);
    r.range[i] = {v.at(0).get<double>(), v.at(1).get<double>()};
  }
  r.validate();
}

// Encoded value of an active variable after the clamping rule: angle and lane
// distances clamp into range; car distances beyond the range become inactive.
inline EncodedAffordances encode(const AffordanceVector& a, const NormalizationRanges& r) {
  EncodedAffordances e;
  for (std::size_t i = 0; i < kNumAffordances; ++i) {
    if (!a.active[i]) {
      e.value[i] = kInactiveCode;
      continue;
    }
    double x = a.value[i];
    if (std::isnan(x)) {
      throw RangeError(std::string("cannot encode NaN ") + kAffordanceNames[i]);
    }
    const auto [lo, hi] = r.range[i];
    if (is_car(i) && x > hi) {
      e.value[i] = kInactiveCode;
      continue;
    }
    x = std::clamp(x, lo, hi);
    e.value[i] = -kEncodedBound + 2.0 * kEncodedBound * (x - lo) / (hi - lo);
  }
  return e;
}

inline double decode_value(double y, std::size_t i, const NormalizationRanges& r) {
  const auto [lo, hi] = r.range[i];
  return lo + (y + kEncodedBound) * (hi - lo) / (2.0 * kEncodedBound);
}

// Accepts encoded labels or raw network outputs. Anything above the 0.99
// threshold decodes as inactive.
inline AffordanceVector decode(std::span<const double, kNumAffordances> y,
                               const NormalizationRanges& r) {
  AffordanceVector a;
  for (std::size_t i = 0; i < kNumAffordances; ++i) {
    if (!std::isfinite(y[i])) {
      throw RangeError(std::string("cannot decode non-finite ") + kAffordanceNames[i]);
    }
    if (y[i] > kInactiveThreshold) {
      a.active[i] = false;
      a.value[i] = 0.0;
    } else {
      a.active[i] = true;
      a.value[i] = decode_value(y[i], i, r);
    }
  }
  return a;
}

inline AffordanceVector decode(const EncodedAffordances& e, const NormalizationRanges& r) {
  return decode(std::span<const double, kNumAffordances>(e.value), r);
}

// Affordances for an ego already located at `pose`, among other vehicles given
// by centre position. Throws OffRoadError when the ego is not between the
// outer markings of its travel direction.
inline AffordanceVector affordances_at(const RoadNetwork& net, const LanePose& pose, double heading,
                                       std::span<const Vec2> others,
                                       double max_car_distance = kDefaultMaxCarDistance) {
  const RoadSegment& seg = net.segment(pose.segment);
  const auto marks = seg.marking_offsets(pose.travel);
  if (marks.empty() || pose.offset < marks.front() || pose.offset > marks.back()) {
    throw OffRoadError("ego is outside the lanes of its travel direction");
  }
  const int n = static_cast<int>(marks.size()) - 1;
  const int k = pose.lane_index;
  const double o = pose.offset;

  AffordanceVector a;
  const double road_heading = std::atan2(pose.tangent.y, pose.tangent.x);
  a.set(Aff::Angle, wrap_degrees(rad2deg(heading - road_heading)));
  a.set(Aff::LaneL, o - marks[k]);
  a.set(Aff::LaneR, marks[k + 1] - o);
  if (k >= 1) a.set(Aff::LaneLL, o - marks[k - 1]);
  if (k + 2 <= n) a.set(Aff::LaneRR, marks[k + 2] - o);

  std::array<double, 3> nearest;
  nearest.fill(std::numeric_limits<double>::infinity());
  for (const Vec2& p : others) {
    const auto pr = seg.project(p);
    if (pr.beyond_ends) continue;
    const bool fwd = pose.travel == Travel::Forward;
    const double s_v = fwd ? pr.s_forward : seg.length() - pr.s_forward;
    const double o_v = fwd ? pr.offset_forward : -pr.offset_forward;
    const double gap = s_v - pose.s;
    if (!(gap > 0.0) || gap > max_car_distance) continue;
    if (o_v < marks.front() || o_v > marks.back()) continue;
    const int lane = lane_index_for(marks, o_v);
    const int rel = lane - k;  // -1 left, 0 own, +1 right
    if (rel < -1 || rel > 1) continue;
    auto& slot = nearest[static_cast<std::size_t>(rel + 1)];
    slot = std::min(slot, gap);
  }
  const std::array<Aff, 3> car_vars = {Aff::CarL, Aff::CarM, Aff::CarR};
  for (std::size_t j = 0; j < 3; ++j) {
    const int lane = k + static_cast<int>(j) - 1;
    if (lane < 0 || lane >= n || !std::isfinite(nearest[j])) continue;
    a.set(car_vars[j], nearest[j]);
  }
  return a;
}

// Locates the ego, then computes its affordances.
inline AffordanceVector compute_affordances(const RoadNetwork& net, Vec2 position, double heading,
                                            std::span<const Vec2> others,
                                            double max_car_distance = kDefaultMaxCarDistance) {
  return affordances_at(net, net.locate(position, heading), heading, others, max_car_distance);
}

inline nlohmann::json affordances_to_json(const AffordanceVector& a) {
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t i = 0; i < kNumAffordances; ++i) {
    j[kAffordanceNames[i]] = a.active[i] ? nlohmann::json(a.value[i]) : nlohmann::json(nullptr);
  }
  return j;
}

inline AffordanceVector affordances_from_json(const nlohmann::json& j) {
  AffordanceVector a;
  for (std::size_t i = 0; i < kNumAffordances; ++i) {
    const auto& v = j.at(kAffordanceNames[i]);
    if (v.is_null()) continue;
    a.value[i] = v.get<double>();
    a.active[i] = true;
  }
  return a;
}

}  // namespace affsim
