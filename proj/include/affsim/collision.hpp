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

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>

#include "affsim/common.hpp"

namespace affsim {

// Oriented rectangle on the ground plane.
struct Footprint {
  Vec2 center;
  double heading = 0.0;
  double half_length = 0.0;
  double half_width = 0.0;

  Vec2 axis_long() const { return heading_vector(heading); }
  Vec2 axis_lat() const { return {-std::sin(heading), std::cos(heading)}; }

  std::array<Vec2, 4> corners() const {
    const Vec2 l = axis_long() * half_length;
    const Vec2 w = axis_lat() * half_width;
    return {center + l + w, center - l + w, center - l - w, center + l - w};
  }

  bool contains(Vec2 p) const {
    const Vec2 d = p - center;
    return std::abs(dot(d, axis_long())) <= half_length && std::abs(dot(d, axis_lat())) <= half_width;
  }

  // Circumscribing disc radius.
  double radius() const { return std::hypot(half_length, half_width); }
};

struct CollisionResult {
  bool colliding = false;
  // Smallest overlap over the separating-axis candidates; negative when apart.
  double penetration = 0.0;
};

// Separating axis test, exact for rectangles. Touching counts as apart.
inline CollisionResult detect_collision(const Footprint& a, const Footprint& b) {
  const std::array<Vec2, 4> axes = {a.axis_long(), a.axis_lat(), b.axis_long(), b.axis_lat()};
  const Vec2 d = b.center - a.center;
  double min_overlap = std::numeric_limits<double>::infinity();
  for (const Vec2& ax : axes) {
    const double ra = a.half_length * std::abs(dot(a.axis_long(), ax)) +
                      a.half_width * std::abs(dot(a.axis_lat(), ax));
    const double rb = b.half_length * std::abs(dot(b.axis_long(), ax)) +
                      b.half_width * std::abs(dot(b.axis_lat(), ax));
    min_overlap = std::min(min_overlap, ra + rb - std::abs(dot(d, ax)));
  }
  return {min_overlap > 0.0, min_overlap};
}

inline double point_segment_distance(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double len2 = dot(ab, ab);
  const double t = len2 > 0.0 ? std::clamp(dot(p - a, ab) / len2, 0.0, 1.0) : 0.0;
  return norm(p - (a + ab * t));
}

// Euclidean distance between two footprints; 0 when they overlap.
inline double footprint_distance(const Footprint& a, const Footprint& b) {
  if (detect_collision(a, b).colliding) return 0.0;
  const auto ca = a.corners();
  const auto cb = b.corners();
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      best = std::min(best, point_segment_distance(ca[i], cb[j], cb[(j + 1) % 4]));
      best = std::min(best, point_segment_distance(cb[i], ca[j], ca[(j + 1) % 4]));
    }
  }
  return best;
}

// Constant-velocity mover bounded by a disc.
struct DiscMover {
  Vec2 position;
  Vec2 velocity;
  double radius = 0.0;
};

// Earliest t >= 0 with |dp + dv t| = ra + rb. Already-touching discs give 0;
// no contact in the future gives nullopt.
inline std::optional<double> time_to_collision(const DiscMover& a, const DiscMover& b) {
  const Vec2 dp = b.position - a.position;
  const Vec2 dv = b.velocity - a.velocity;
  const double r = a.radius + b.radius;
  const double c = dot(dp, dp) - r * r;
  if (c <= 0.0) return 0.0;
  const double qa = dot(dv, dv);
  if (qa == 0.0) return std::nullopt;
  const double qb = 2.0 * dot(dp, dv);
  if (qb >= 0.0) return std::nullopt;  // separating or tangential
  const double disc = qb * qb - 4.0 * qa * c;
  if (disc < 0.0) return std::nullopt;
  // Numerically stable smaller root: c / q with q = (-b + sqrt(disc)) / 2.
  const double q = 0.5 * (-qb + std::sqrt(disc));
  return c / q;
}

// First time on a `dt` grid within `horizon` at which the two footprints,
// extrapolated at constant velocity, overlap.
inline std::optional<double> rect_time_to_contact(const Footprint& a, Vec2 va, const Footprint& b,
                                                  Vec2 vb, double horizon, double dt) {
  const auto steps = static_cast<long>(std::floor(horizon / dt + 1e-9));
  for (long k = 0; k <= steps; ++k) {
    const double t = k * dt;
    Footprint fa = a, fb = b;
    fa.center = a.center + va * t;
    fb.center = b.center + vb * t;
    if (detect_collision(fa, fb).colliding) return t;
  }
  return std::nullopt;
}

}  // namespace affsim
