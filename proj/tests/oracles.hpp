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

// Reference implementations used only by tests. Each one takes a different
// route from the library code it checks and shares none of its helpers
// beyond plain vector types.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <vector>

#include "affsim/affordance.hpp"
#include "affsim/collision.hpp"
#include "affsim/common.hpp"
#include "affsim/road.hpp"
#include "affsim/scenario.hpp"

namespace affsim::oracle {

// ---------------------------------------------------------------------------
// Affordances on a single polyline road
// ---------------------------------------------------------------------------

struct Road {
  std::vector<Vec2> pts;
  int lanes = 3;
  bool oneway = true;
  double width = 3.7;
};

struct Scene {
  Road road;
  Vec2 ego;
  double heading = 0.0;
  std::vector<Vec2> others;
  double dmax = 60.0;
};

struct Foot {
  double s = 0.0;       // forward arc length
  double side = 0.0;    // signed distance, positive right of the forward direction
  double dist = std::numeric_limits<double>::infinity();
  std::size_t piece = 0;
  bool off_end = false;
};

// Closest point by scanning every piece in parametric form.
inline Foot foot_on(const std::vector<Vec2>& pts, Vec2 p) {
  Foot best;
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    const double ex = pts[i + 1].x - pts[i].x, ey = pts[i + 1].y - pts[i].y;
    const double len2 = ex * ex + ey * ey, len = std::sqrt(len2);
    const double u = ((p.x - pts[i].x) * ex + (p.y - pts[i].y) * ey) / len2;
    const double uc = std::min(1.0, std::max(0.0, u));
    const double fx = pts[i].x + uc * ex, fy = pts[i].y + uc * ey;
    const double dist = std::sqrt((p.x - fx) * (p.x - fx) + (p.y - fy) * (p.y - fy));
    if (dist < best.dist) {
      best.dist = dist;
      best.s = acc + uc * len;
      best.piece = i;
      // cross(e, p - f) < 0 means p lies to the right of e
      const double cr = ex * (p.y - fy) - ey * (p.x - fx);
      best.side = cr < 0.0 ? dist : -dist;
      best.off_end = (i == 0 && u < 0.0) || (i + 2 == pts.size() && u > 1.0);
    }
    acc += len;
  }
  return best;
}

inline double polyline_length(const std::vector<Vec2>& pts) {
  double l = 0.0;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) l += std::hypot(pts[i + 1].x - pts[i].x, pts[i + 1].y - pts[i].y);
  return l;
}

// Markings for the chosen direction, walked outward from the reference line.
inline std::vector<double> markings(const Road& r, bool forward) {
  int n = 0;
  double start = 0.0;
  if (r.oneway) {
    if (!forward) return {};
    n = r.lanes;
    start = -0.5 * r.lanes * r.width;
  } else {
    n = forward ? r.lanes - r.lanes / 2 : r.lanes / 2;
  }
  std::vector<double> m;
  double x = start;
  for (int k = 0; k <= n; ++k, x += r.width) m.push_back(x);
  return m;
}

// Lane between markings; a point on a marking belongs to the lane on its right.
inline int lane_of(const std::vector<double>& m, double o) {
  const int n = static_cast<int>(m.size()) - 1;
  int lane = 0;
  for (int k = 0; k <= n; ++k) {
    if (o >= m[k]) lane = k;
  }
  return std::min(lane, n - 1);
}

// nullopt when the ego is off the lanes of its direction.
inline std::optional<AffordanceVector> affordances(const Scene& sc) {
  const Road& r = sc.road;
  const Foot f = foot_on(r.pts, sc.ego);
  const Vec2 a = r.pts[f.piece], b = r.pts[f.piece + 1];
  double road_dir = std::atan2(b.y - a.y, b.x - a.x);
  bool forward = true;
  if (!r.oneway) forward = std::cos(sc.heading - road_dir) > 0.0;
  const double total = polyline_length(r.pts);
  const double s_e = forward ? f.s : total - f.s;
  const double o_e = forward ? f.side : -f.side;
  if (!forward) road_dir += kPi;
  const auto m = markings(r, forward);
  if (m.empty() || o_e < m.front() || o_e > m.back()) return std::nullopt;
  const int n = static_cast<int>(m.size()) - 1;
  const int k = lane_of(m, o_e);

  AffordanceVector out;
  double ang = (sc.heading - road_dir) * 180.0 / kPi;
  ang = std::fmod(ang, 360.0);
  if (ang <= -180.0) ang += 360.0;
  if (ang > 180.0) ang -= 360.0;
  out.set(Aff::Angle, ang);
  out.set(Aff::LaneL, std::abs(o_e - m[k]));
  out.set(Aff::LaneR, std::abs(m[k + 1] - o_e));
  if (k - 1 >= 0) out.set(Aff::LaneLL, std::abs(o_e - m[k - 1]));
  if (k + 2 <= n) out.set(Aff::LaneRR, std::abs(m[k + 2] - o_e));

  const Aff slot[3] = {Aff::CarL, Aff::CarM, Aff::CarR};
  for (const Vec2& p : sc.others) {
    const Foot g = foot_on(r.pts, p);
    if (g.off_end) continue;
    const double s_v = forward ? g.s : total - g.s;
    const double o_v = forward ? g.side : -g.side;
    const double gap = s_v - s_e;
    if (gap <= 0.0 || gap > sc.dmax || o_v < m.front() || o_v > m.back()) continue;
    const int rel = lane_of(m, o_v) - k;
    if (rel < -1 || rel > 1) continue;
    const Aff which = slot[rel + 1];
    if (!out.is_active(which) || gap < out.get(which)) out.set(which, gap);
  }
  return out;
}

// Random road, ego and traffic. The ego sits away from polyline vertices so
// the nearest piece is unambiguous.
inline Scene random_scene(Rng& rng) {
  Scene sc;
  Road& r = sc.road;
  r.lanes = 2 + static_cast<int>(uniform_index(rng, 4));
  r.oneway = uniform01(rng) < 0.5;
  r.width = uniform(rng, 2.5, 4.5);
  const int pieces = 1 + static_cast<int>(uniform_index(rng, 4));
  Vec2 p{uniform(rng, -500.0, 500.0), uniform(rng, -500.0, 500.0)};
  double h = uniform(rng, -kPi, kPi);
  r.pts.push_back(p);
  std::vector<double> lens;
  for (int i = 0; i < pieces; ++i) {
    const double len = uniform(rng, 60.0, 220.0);
    lens.push_back(len);
    p = p + heading_vector(h) * len;
    r.pts.push_back(p);
    h += uniform(rng, -0.4, 0.4);
  }
  bool forward = true;
  if (!r.oneway) forward = uniform01(rng) < 0.5;
  const auto m = markings(r, forward);
  const std::size_t piece = uniform_index(rng, static_cast<std::uint64_t>(pieces));
  const Vec2 a = r.pts[piece], b = r.pts[piece + 1];
  const Vec2 dir = (b - a) * (1.0 / lens[piece]);
  const Vec2 right{dir.y, -dir.x};
  const double t = uniform(rng, 20.0, lens[piece] - 20.0);
  const double o = uniform(rng, m.front(), m.back()) * 0.999;
  sc.ego = a + dir * t + right * (forward ? o : -o);
  sc.heading = std::atan2(dir.y, dir.x) + (forward ? 0.0 : kPi) + uniform(rng, -1.3, 1.3);
  const double paved = 0.5 * r.lanes * r.width + 2.0;
  const int count = static_cast<int>(uniform_index(rng, 14));
  for (int i = 0; i < count; ++i) {
    const std::size_t j = uniform_index(rng, static_cast<std::uint64_t>(pieces));
    const Vec2 pa = r.pts[j], pb = r.pts[j + 1];
    const Vec2 d = (pb - pa) * (1.0 / lens[j]);
    const double u = uniform(rng, 8.0, lens[j] - 8.0);
    const double off = r.oneway ? uniform(rng, -paved, paved) : uniform(rng, -2.0 * paved, 2.0 * paved);
    sc.others.push_back(pa + d * u + Vec2{d.y, -d.x} * off);
  }
  sc.dmax = uniform(rng, 30.0, 120.0);
  return sc;
}

struct AffordanceComparison {
  std::size_t scenes = 0;
  std::size_t flag_mismatches = 0;
  std::size_t active_cars = 0;
  double max_deviation = 0.0;
};

// Runs the library on `count` random scenes and compares it with the oracle.
inline AffordanceComparison compare_affordances(std::size_t count, std::uint64_t seed) {
  Rng rng(seed);
  AffordanceComparison out;
  for (std::size_t i = 0; i < count; ++i) {
    const Scene sc = random_scene(rng);
    const auto want = affordances(sc);
    RoadNetwork net;
    net.add(RoadSegment(0, sc.road.pts, sc.road.lanes, sc.road.oneway, sc.road.width));
    const AffordanceVector got = compute_affordances(net, sc.ego, sc.heading, sc.others, sc.dmax);
    ++out.scenes;
    if (!want) {
      ++out.flag_mismatches;
      continue;
    }
    for (std::size_t k = 0; k < kNumAffordances; ++k) {
      if (got.active[k] != want->active[k]) {
        ++out.flag_mismatches;
        continue;
      }
      if (!got.active[k]) continue;
      if (is_car(k)) ++out.active_cars;
      out.max_deviation = std::max(out.max_deviation, std::abs(got.value[k] - want->value[k]));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rectangle overlap by corner containment and edge crossings
// ---------------------------------------------------------------------------

inline bool inside_convex(const std::array<Vec2, 4>& poly, Vec2 p) {
  int pos = 0, neg = 0;
  for (int i = 0; i < 4; ++i) {
    const Vec2 a = poly[i], b = poly[(i + 1) % 4];
    const double c = (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
    if (c > 0) ++pos;
    if (c < 0) ++neg;
  }
  return pos == 0 || neg == 0;
}

inline bool proper_cross(Vec2 a, Vec2 b, Vec2 c, Vec2 d) {
  auto orient = [](Vec2 p, Vec2 q, Vec2 r) { return (q.x - p.x) * (r.y - p.y) - (q.y - p.y) * (r.x - p.x); };
  const double o1 = orient(a, b, c), o2 = orient(a, b, d), o3 = orient(c, d, a), o4 = orient(c, d, b);
  return ((o1 > 0) != (o2 > 0)) && ((o3 > 0) != (o4 > 0)) && o1 != 0 && o2 != 0 && o3 != 0 && o4 != 0;
}

inline bool rectangles_overlap(const Footprint& fa, const Footprint& fb) {
  const auto a = fa.corners(), b = fb.corners();
  for (const Vec2& p : a) {
    if (inside_convex(b, p)) return true;
  }
  for (const Vec2& p : b) {
    if (inside_convex(a, p)) return true;
  }
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      if (proper_cross(a[i], a[(i + 1) % 4], b[j], b[(j + 1) % 4])) return true;
    }
  }
  return false;
}

// ---------------------------------------------------------------------------
// Time to collision by fine stepping
// ---------------------------------------------------------------------------

inline std::optional<double> stepped_ttc(const DiscMover& a, const DiscMover& b, double horizon,
                                         double dt = 1e-4) {
  const double r = a.radius + b.radius;
  const long steps = static_cast<long>(horizon / dt);
  for (long k = 0; k <= steps; ++k) {
    const double t = k * dt;
    const double dx = (b.position.x + b.velocity.x * t) - (a.position.x + a.velocity.x * t);
    const double dy = (b.position.y + b.velocity.y * t) - (a.position.y + a.velocity.y * t);
    if (dx * dx + dy * dy <= r * r) return t;
  }
  return std::nullopt;
}

struct Encounter {
  DiscMover a, b;
};

inline Encounter random_crossing(Rng& rng) {
  // Two movers heading for a common point from roughly perpendicular roads.
  const Vec2 meet{uniform(rng, -20, 20), uniform(rng, -20, 20)};
  const double ha = uniform(rng, -kPi, kPi);
  const double hb = ha + kPi / 2 + uniform(rng, -0.5, 0.5);
  const double va = uniform(rng, 3, 30), vb = uniform(rng, 3, 30);
  const double ta = uniform(rng, 1.0, 6.0), tb = ta + uniform(rng, -1.0, 1.0);
  Encounter e;
  e.a = {meet - heading_vector(ha) * (va * ta), heading_vector(ha) * va, uniform(rng, 0.8, 3.0)};
  e.b = {meet - heading_vector(hb) * (vb * tb), heading_vector(hb) * vb, uniform(rng, 0.5, 8.0)};
  return e;
}

// ---------------------------------------------------------------------------
// Visibility by dense rays
// ---------------------------------------------------------------------------

// Segment against box by separating axes in the box frame.
inline bool segment_box_sat(Vec3 p, Vec3 q, const OrientedBox& b) {
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  auto local = [&](Vec3 w) {
    const double x = w.x - b.center.x, y = w.y - b.center.y;
    return std::array<double, 3>{c * x + s * y, -s * x + c * y, w.z - b.center.z};
  };
  const auto lp = local(p), lq = local(q);
  const std::array<double, 3> h = {b.half.x, b.half.y, b.half.z};
  std::array<double, 3> mid, half;
  for (int i = 0; i < 3; ++i) {
    mid[i] = 0.5 * (lp[i] + lq[i]);
    half[i] = 0.5 * (lq[i] - lp[i]);
  }
  for (int i = 0; i < 3; ++i) {
    if (std::abs(mid[i]) >= h[i] + std::abs(half[i])) return false;
  }
  for (int i = 0; i < 3; ++i) {
    const int j = (i + 1) % 3, k = (i + 2) % 3;
    const double proj = std::abs(mid[j] * half[k] - mid[k] * half[j]);
    const double rad = h[j] * std::abs(half[k]) + h[k] * std::abs(half[j]);
    if (proj >= rad) return false;
  }
  return true;
}

// Fraction of an n x n grid of rays to the target's upright cross-section
// facing the eye that no box blocks.
inline double dense_visibility(Vec3 eye, const Footprint& target, double height, const std::vector<OrientedBox>& boxes,
                               int n = 1000) {
  const double dx = target.center.x - eye.x, dy = target.center.y - eye.y;
  const double len = std::hypot(dx, dy);
  const Vec2 across{-dy / len, dx / len};
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const Vec2& c : target.corners()) {
    const double t = (c.x - target.center.x) * across.x + (c.y - target.center.y) * across.y;
    lo = std::min(lo, t);
    hi = std::max(hi, t);
  }
  long clear = 0;
  for (int i = 0; i < n; ++i) {
    const double t = lo + (hi - lo) * (i + 0.5) / n;
    for (int j = 0; j < n; ++j) {
      const Vec3 q{target.center.x + across.x * t, target.center.y + across.y * t, height * (j + 0.5) / n};
      bool blocked = false;
      for (const OrientedBox& b : boxes) {
        if (segment_box_sat(eye, q, b)) {
          blocked = true;
          break;
        }
      }
      if (!blocked) ++clear;
    }
  }
  return static_cast<double>(clear) / (static_cast<double>(n) * n);
}

// ---------------------------------------------------------------------------
// Loss by explicit double loop
// ---------------------------------------------------------------------------

inline double naive_mse(const std::vector<std::array<double, kNumAffordances>>& pred,
                        const std::vector<std::array<double, kNumAffordances>>& target) {
  long double sum = 0.0L;
  std::size_t count = 0;
  for (std::size_t b = 0; b < pred.size(); ++b) {
    for (std::size_t i = 0; i < kNumAffordances; ++i) {
      const long double d = static_cast<long double>(pred[b][i]) - target[b][i];
      sum += d * d;
      ++count;
    }
  }
  return static_cast<double>(sum / count);
}

}  // namespace affsim::oracle
