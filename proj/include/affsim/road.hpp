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

// Lane model over polyline road segments.
//
// Conventions used throughout:
//  * Each segment has a reference (digitization) direction, `Travel::Forward`.
//  * Lateral offsets are measured from the road centerline in the frame of the
//    travel direction, positive to the right of travel.
//  * One-way roads carry all lanes in the forward direction, centred on the
//    centerline. Two-way roads put ceil(n/2) lanes on the right of the
//    forward direction and floor(n/2) on the other side; the centerline is
//    the divider.
//  * A position lying exactly on a marking belongs to the lane on the right
//    of that marking.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "affsim/common.hpp"

namespace affsim {

enum class Travel { Forward, Reverse };

inline const char* to_string(Travel t) { return t == Travel::Forward ? "forward" : "reverse"; }

class RoadSegment {
 public:
  static constexpr double kDefaultLaneWidth = 3.7;
  static constexpr double kMinPointSpacing = 0.5;

  RoadSegment(int id, std::vector<Vec2> centerline, int lanes, bool oneway,
              double lane_width = kDefaultLaneWidth)
      : id_(id), centerline_(std::move(centerline)), lanes_(lanes), oneway_(oneway),
        lane_width_(lane_width) {
    if (centerline_.size() < 2) throw ConfigError("road segment needs at least 2 points");
    if (lanes_ < 2 || lanes_ > 5) throw ConfigError("road segment lanes must be in {2,3,4,5}");
    if (!(lane_width_ >= 2.5 && lane_width_ <= 4.5)) {
      throw ConfigError("lane width must be within [2.5, 4.5] m");
    }
    cumulative_.reserve(centerline_.size());
    cumulative_.push_back(0.0);
    for (std::size_t i = 1; i < centerline_.size(); ++i) {
      const double len = norm(centerline_[i] - centerline_[i - 1]);
      if (!(len >= kMinPointSpacing)) {
        throw ConfigError("road segment " + std::to_string(id_) +
                          ": consecutive points closer than 0.5 m");
      }
      cumulative_.push_back(cumulative_.back() + len);
    }
  }

  int id() const { return id_; }
  const std::vector<Vec2>& centerline() const { return centerline_; }
  int lanes() const { return lanes_; }
  bool oneway() const { return oneway_; }
  double lane_width() const { return lane_width_; }
  double length() const { return cumulative_.back(); }
  std::size_t pieces() const { return centerline_.size() - 1; }
  double arc_at_vertex(std::size_t i) const { return cumulative_[i]; }

  int lanes_in(Travel t) const {
    if (oneway_) return t == Travel::Forward ? lanes_ : 0;
    return t == Travel::Forward ? (lanes_ + 1) / 2 : lanes_ / 2;
  }

  // Signed marking offsets for the given travel direction, ascending. Empty
  // when no lane runs that way.
  std::vector<double> marking_offsets(Travel t) const {
    const int n = lanes_in(t);
    std::vector<double> out;
    if (n == 0) return out;
    out.reserve(n + 1);
    for (int k = 0; k <= n; ++k) {
      out.push_back(oneway_ ? (k - 0.5 * n) * lane_width_ : k * lane_width_);
    }
    return out;
  }

  // Paved extent in the forward frame: [left edge, right edge].
  std::pair<double, double> paved_extent() const {
    if (oneway_) return {-0.5 * lanes_ * lane_width_, 0.5 * lanes_ * lane_width_};
    return {-lanes_in(Travel::Reverse) * lane_width_, lanes_in(Travel::Forward) * lane_width_};
  }

  Vec2 piece_direction(std::size_t i) const {
    return (centerline_[i + 1] - centerline_[i]) * (1.0 / (cumulative_[i + 1] - cumulative_[i]));
  }

  // Piece containing forward arc length s; a vertex belongs to the piece that
  // starts there.
  std::size_t piece_at_forward(double s) const {
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), s);
    std::size_t i = it == cumulative_.begin() ? 0 : static_cast<std::size_t>(it - cumulative_.begin()) - 1;
    return std::min(i, pieces() - 1);
  }

  // Piece that a traveller going backwards occupies at forward arc length s;
  // at a vertex that is the piece ending there.
  std::size_t piece_at_reverse(double s) const {
    auto it = std::lower_bound(cumulative_.begin(), cumulative_.end(), s);
    std::size_t j = static_cast<std::size_t>(it - cumulative_.begin());
    return j == 0 ? 0 : std::min(j - 1, pieces() - 1);
  }

  Vec2 point_at_forward(double s) const {
    const std::size_t i = piece_at_forward(s);
    return centerline_[i] + piece_direction(i) * (s - cumulative_[i]);
  }

  double to_forward_s(Travel t, double s) const { return t == Travel::Forward ? s : length() - s; }

  // Unit tangent in the travel direction at travel arc length s.
  Vec2 tangent(Travel t, double s) const {
    s = std::clamp(s, 0.0, length());
    if (t == Travel::Forward) return piece_direction(piece_at_forward(s));
    return -piece_direction(piece_at_reverse(length() - s));
  }

  // World position of (travel arc length, signed offset) in the travel frame.
  Vec2 place(Travel t, double s, double offset) const {
    const double sf = to_forward_s(t, s);
    const std::size_t i = t == Travel::Forward ? piece_at_forward(sf) : piece_at_reverse(sf);
    const Vec2 d = piece_direction(i);
    const Vec2 c = centerline_[i] + d * (sf - cumulative_[i]);
    const double off_f = t == Travel::Forward ? offset : -offset;
    return c + right_normal(d) * off_f;
  }

  struct Projection {
    double s_forward = 0.0;
    double offset_forward = 0.0;  // signed distance, positive right of forward
    double distance = 0.0;
    std::size_t piece = 0;
    bool beyond_ends = false;  // nearest point is an end vertex approached from outside
  };

  // Nearest point on the centerline. Ties resolve to the earliest piece.
  Projection project(Vec2 p) const {
    Projection best;
    best.distance = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < pieces(); ++i) {
      const Vec2 a = centerline_[i];
      const double len = cumulative_[i + 1] - cumulative_[i];
      const Vec2 d = piece_direction(i);
      const double raw = dot(p - a, d);
      const double t = std::clamp(raw, 0.0, len);
      const Vec2 q = a + d * t;
      const double dist = norm(p - q);
      if (dist < best.distance) {
        best.distance = dist;
        best.s_forward = cumulative_[i] + t;
        best.piece = i;
        const double side = dot(p - q, right_normal(d));
        best.offset_forward = side < 0.0 ? -dist : dist;
        best.beyond_ends = (i == 0 && raw < 0.0) || (i + 1 == pieces() && raw > len);
      }
    }
    return best;
  }

 private:
  int id_;
  std::vector<Vec2> centerline_;
  int lanes_;
  bool oneway_;
  double lane_width_;
  std::vector<double> cumulative_;
};

// Lane index for an offset given ascending markings. Positions outside the
// markings clamp to the edge lanes.
inline int lane_index_for(const std::vector<double>& markings, double offset) {
  const int n = static_cast<int>(markings.size()) - 1;
  const int right_of = static_cast<int>(std::upper_bound(markings.begin(), markings.end(), offset) -
                                        markings.begin());
  return std::clamp(right_of - 1, 0, n - 1);
}

struct LanePose {
  std::size_t segment = 0;  // index into RoadNetwork::segments()
  Travel travel = Travel::Forward;
  int lane_index = 0;       // 0 = leftmost lane of the travel direction
  double s = 0.0;           // arc length along the travel direction
  double offset = 0.0;      // from road centerline, positive right of travel
  double lateral = 0.0;     // from lane centre, positive right of travel
  Vec2 tangent;             // unit, travel direction
  double distance = 0.0;    // to the centerline
};

class RoadNetwork {
 public:
  static constexpr double kLocateRadius = 30.0;

  RoadNetwork() = default;
  explicit RoadNetwork(std::vector<RoadSegment> segments) : segments_(std::move(segments)) {}

  const std::vector<RoadSegment>& segments() const { return segments_; }
  const RoadSegment& segment(std::size_t i) const { return segments_.at(i); }
  bool empty() const { return segments_.empty(); }
  void add(RoadSegment seg) { segments_.push_back(std::move(seg)); }

  // Pose on the segment nearest to `position`. Two-way roads pick the travel
  // direction whose tangent has a positive dot product with the heading.
  LanePose locate(Vec2 position, double heading, double radius = kLocateRadius) const {
    std::size_t best = 0;
    RoadSegment::Projection bp;
    bp.distance = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < segments_.size(); ++i) {
      const auto pr = segments_[i].project(position);
      if (pr.distance < bp.distance) {
        bp = pr;
        best = i;
      }
    }
    if (!(bp.distance <= radius)) {
      throw OffRoadError("no road segment within " + std::to_string(radius) + " m");
    }
    const RoadSegment& seg = segments_[best];
    const Vec2 d = seg.piece_direction(bp.piece);
    Travel travel = Travel::Forward;
    if (!seg.oneway() && !(dot(heading_vector(heading), d) > 0.0)) travel = Travel::Reverse;
    return pose_from_projection(best, travel, bp);
  }

  // Pose of `position` on a given segment and travel direction, without the
  // nearest-segment search.
  LanePose locate_on(std::size_t segment, Travel travel, Vec2 position) const {
    return pose_from_projection(segment, travel, segments_.at(segment).project(position));
  }

  Vec2 place(const LanePose& pose) const {
    return segments_.at(pose.segment).place(pose.travel, pose.s, pose.offset);
  }

  // Travel tangent `lookahead` metres further along, clamped to the segment end.
  Vec2 next_node_direction(const LanePose& pose, double lookahead) const {
    if (!(lookahead > 0.0)) throw RangeError("lookahead must be positive");
    const RoadSegment& seg = segments_.at(pose.segment);
    return seg.tangent(pose.travel, std::min(pose.s + lookahead, seg.length()));
  }

 private:
  LanePose pose_from_projection(std::size_t segment, Travel travel,
                                const RoadSegment::Projection& pr) const {
    const RoadSegment& seg = segments_[segment];
    LanePose pose;
    pose.segment = segment;
    pose.travel = travel;
    pose.distance = pr.distance;
    const Vec2 d = seg.piece_direction(pr.piece);
    if (travel == Travel::Forward) {
      pose.s = pr.s_forward;
      pose.offset = pr.offset_forward;
      pose.tangent = d;
    } else {
      pose.s = seg.length() - pr.s_forward;
      pose.offset = -pr.offset_forward;
      pose.tangent = -d;
    }
    const auto marks = seg.marking_offsets(travel);
    if (!marks.empty()) {
      pose.lane_index = lane_index_for(marks, pose.offset);
      pose.lateral = pose.offset - 0.5 * (marks[pose.lane_index] + marks[pose.lane_index + 1]);
    }
    return pose;
  }

  std::vector<RoadSegment> segments_;
};

}  // namespace affsim
