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

// Software rasterizer for the ego's front camera.
//
// Pinhole model, no distortion. Pixel (i, j) has its centre at continuous
// image coordinates (i, j); a continuous coordinate x falls in pixel
// ceil(x - 0.5), so halves round down. The camera looks along the ego heading
// with zero pitch, so the horizon sits on the principal row.
//
// Scene order (painter's algorithm): sky and ground split at the horizon, road
// surfaces, lane markings, then building and actor faces from far to near.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "affsim/common.hpp"
#include "affsim/road.hpp"
#include "affsim/sim.hpp"
#include "affsim/world.hpp"

namespace affsim {

inline constexpr int kFrameWidth = 280;
inline constexpr int kFrameHeight = 210;

struct CameraRig {
  double mount_forward = 0.5;
  double mount_up = 1.2;
  double hfov_deg = 60.0;
  int width = kFrameWidth;
  int height = kFrameHeight;

  void validate() const {
    if (!(hfov_deg > 20.0 && hfov_deg < 120.0)) throw ConfigError("camera FOV must lie in (20, 120) degrees");
    if (width != kFrameWidth || height != kFrameHeight) throw ConfigError("camera resolution is fixed at 280x210");
  }
  double focal() const { return 0.5 * width / std::tan(deg2rad(0.5 * hfov_deg)); }
  double cx() const { return 0.5 * width; }
  double cy() const { return 0.5 * height; }
};

inline nlohmann::json rig_to_json(const CameraRig& r) {
  return {{"mount_forward", r.mount_forward}, {"mount_up", r.mount_up}, {"hfov_deg", r.hfov_deg},
          {"width", r.width},  {"height", r.height}, {"focal_px", r.focal()},
          {"cx", r.cx()},      {"cy", r.cy()}};
}

inline CameraRig rig_from_json(const nlohmann::json& j) {
  CameraRig r;
  r.mount_forward = j.value("mount_forward", r.mount_forward);
  r.mount_up = j.value("mount_up", r.mount_up);
  r.hfov_deg = j.value("hfov_deg", r.hfov_deg);
  r.width = j.value("width", r.width);
  r.height = j.value("height", r.height);
  r.validate();
  return r;
}

// Camera placement in the world.
struct CameraPose {
  Vec3 position;
  double heading = 0.0;

  Vec2 forward() const { return heading_vector(heading); }
  Vec2 right() const { return right_normal(forward()); }

  // (right, up, depth) camera coordinates.
  Vec3 to_camera(Vec3 p) const {
    const Vec2 d{p.x - position.x, p.y - position.y};
    return {dot(d, right()), p.z - position.z, dot(d, forward())};
  }
  Vec3 from_camera(Vec3 c) const {
    const Vec2 g = forward() * c.z + right() * c.x;
    return {position.x + g.x, position.y + g.y, position.z + c.y};
  }
};

inline CameraPose camera_pose(const CameraRig& rig, Vec2 ego_position, double ego_heading) {
  const Vec2 p = ego_position + heading_vector(ego_heading) * rig.mount_forward;
  return {{p.x, p.y, rig.mount_up}, ego_heading};
}

// Continuous pixel coordinates of a world point; nullopt at or behind the
// camera plane.
inline std::optional<Vec2> project(const CameraRig& rig, const CameraPose& pose, Vec3 p) {
  const Vec3 c = pose.to_camera(p);
  if (!(c.z > 0.0)) return std::nullopt;
  const double f = rig.focal();
  return Vec2{rig.cx() + f * c.x / c.z, rig.cy() - f * c.y / c.z};
}

// World-space unit ray direction through continuous pixel (u, v).
inline Vec3 pixel_ray(const CameraRig& rig, const CameraPose& pose, Vec2 uv) {
  const double f = rig.focal();
  const Vec3 c{(uv.x - rig.cx()) / f, -(uv.y - rig.cy()) / f, 1.0};
  const Vec3 w = pose.from_camera(c) - pose.position;
  return w * (1.0 / norm(w));
}

inline int pixel_index(double x) { return static_cast<int>(std::ceil(x - 0.5)); }

// ---------------------------------------------------------------------------
// Frames
// ---------------------------------------------------------------------------

struct Frame {
  int width = kFrameWidth;
  int height = kFrameHeight;
  std::vector<std::uint8_t> rgb = std::vector<std::uint8_t>(std::size_t(kFrameWidth) * kFrameHeight * 3);

  std::uint8_t* at(int x, int y) { return &rgb[(std::size_t(y) * width + x) * 3]; }
  const std::uint8_t* at(int x, int y) const { return &rgb[(std::size_t(y) * width + x) * 3]; }
  bool operator==(const Frame&) const = default;
};

inline std::string encode_ppm(const Frame& f) {
  std::string out = "P6\n" + std::to_string(f.width) + " " + std::to_string(f.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(f.rgb.data()), f.rgb.size());
  return out;
}

inline Frame decode_ppm(std::string_view bytes) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&] {
    skip_space();
    const std::size_t start = pos;
    long v = 0;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      v = v * 10 + (bytes[pos++] - '0');
      if (v > 1 << 20) throw ParseError("pixmap header value too large", start);
    }
    if (pos == start) throw ParseError("expected integer in pixmap header", pos);
    return static_cast<int>(v);
  };
  if (bytes.substr(0, 2) != "P6") throw ParseError("not a binary pixmap", 0);
  pos = 2;
  Frame f;
  f.width = read_int();
  f.height = read_int();
  const int maxval = read_int();
  if (maxval != 255) throw ParseError("only 8-bit pixmaps are supported", pos);
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw ParseError("missing separator after pixmap header", pos);
  }
  ++pos;
  const std::size_t n = std::size_t(f.width) * f.height * 3;
  if (bytes.size() - pos != n) throw ParseError("pixmap payload has the wrong size", pos);
  f.rgb.assign(bytes.begin() + pos, bytes.end());
  return f;
}

// Per-channel means over frames, in 0..255 units.
inline std::array<double, 3> channel_means(std::span<const Frame> frames) {
  if (frames.empty()) throw RangeError("channel means need at least one frame");
  std::array<double, 3> sum{};
  std::size_t count = 0;
  for (const Frame& f : frames) {
    for (std::size_t i = 0; i < f.rgb.size(); i += 3) {
      sum[0] += f.rgb[i];
      sum[1] += f.rgb[i + 1];
      sum[2] += f.rgb[i + 2];
    }
    count += f.rgb.size() / 3;
  }
  for (double& s : sum) s /= static_cast<double>(count);
  return sum;
}

// HWC float tensor with the given channel means removed.
inline std::vector<double> mean_subtract(const Frame& f, const std::array<double, 3>& means) {
  std::vector<double> out(f.rgb.size());
  for (std::size_t i = 0; i < f.rgb.size(); ++i) out[i] = f.rgb[i] - means[i % 3];
  return out;
}

struct MeanSubtracted {
  std::vector<std::vector<double>> tensors;
  std::array<double, 3> means{};
};

inline MeanSubtracted mean_subtract(std::span<const Frame> frames) {
  MeanSubtracted r;
  r.means = channel_means(frames);
  for (const Frame& f : frames) r.tensors.push_back(mean_subtract(f, r.means));
  return r;
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

// Ambient light in [0.2, 1]: darkest at midnight, brightest at noon.
inline double brightness(double time_of_day_s) {
  return 0.2 + 0.8 * (0.5 - 0.5 * std::cos(2.0 * kPi * time_of_day_s / SimClock::kDaySeconds));
}

struct Palette {
  Rgb sky{135, 185, 235};
  Rgb ground{78, 112, 56};
  Rgb asphalt{72, 72, 78};
  Rgb marking{235, 235, 235};
  Rgb center_line{230, 196, 40};
  Rgb building{176, 160, 140};
  Rgb foliage{46, 84, 40};
};

// Extra static prism drawn with the solids, e.g. scenario occluders.
struct Obstacle {
  std::vector<Vec2> footprint;
  double z0 = 0.0;
  double z1 = 1.0;
  Rgb color;
};

struct RenderOptions {
  double draw_distance = 350.0;
  double near_plane = 0.1;
  double road_step = 4.0;
  double marking_width = 0.15;
  double dash_length = 3.0;
  double dash_period = 12.0;
  Palette palette;
  std::vector<Obstacle> obstacles;
};

namespace detail {

struct Poly {
  std::vector<Vec3> cam;  // camera coordinates
  Rgb color;
  double depth = 0.0;
};

inline Rgb shade(Rgb c, double k) {
  auto ch = [k](std::uint8_t v) {
    return static_cast<std::uint8_t>(std::clamp<long>(std::lround(v * k), 0, 255));
  };
  return {ch(c.r), ch(c.g), ch(c.b)};
}

inline std::vector<Vec3> clip_near(const std::vector<Vec3>& in, double near) {
  std::vector<Vec3> out;
  for (std::size_t i = 0; i < in.size(); ++i) {
    const Vec3& a = in[i];
    const Vec3& b = in[(i + 1) % in.size()];
    const bool ia = a.z >= near, ib = b.z >= near;
    if (ia) out.push_back(a);
    if (ia != ib) {
      const double t = (near - a.z) / (b.z - a.z);
      out.push_back(a + (b - a) * t);
    }
  }
  return out;
}

// Even-odd scanline fill sampled at pixel centres.
inline void fill(Frame& f, const std::vector<Vec2>& pts, Rgb c) {
  if (pts.size() < 3) return;
  double ymin = pts[0].y, ymax = pts[0].y;
  for (const Vec2& p : pts) {
    ymin = std::min(ymin, p.y);
    ymax = std::max(ymax, p.y);
  }
  const int j0 = std::max(0, static_cast<int>(std::ceil(ymin)));
  const int j1 = std::min(f.height - 1, static_cast<int>(std::floor(ymax)));
  std::vector<double> xs;
  for (int j = j0; j <= j1; ++j) {
    const double y = j;
    xs.clear();
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const Vec2& a = pts[i];
      const Vec2& b = pts[(i + 1) % pts.size()];
      if ((a.y <= y) != (b.y <= y)) xs.push_back(a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y));
    }
    std::sort(xs.begin(), xs.end());
    for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
      const int i0 = std::max(0, static_cast<int>(std::ceil(xs[k])));
      const int i1 = std::min(f.width - 1, static_cast<int>(std::ceil(xs[k + 1])) - 1);
      for (int i = i0; i <= i1; ++i) {
        std::uint8_t* px = f.at(i, j);
        px[0] = c.r;
        px[1] = c.g;
        px[2] = c.b;
      }
    }
  }
}

class Painter {
 public:
  Painter(const CameraRig& rig, const CameraPose& pose, const RenderOptions& opt)
      : rig_(rig), pose_(pose), opt_(opt) {}

  void add(const std::vector<Vec3>& world, Rgb color, std::vector<Poly>& out) const {
    std::vector<Vec3> cam;
    cam.reserve(world.size());
    for (const Vec3& p : world) cam.push_back(pose_.to_camera(p));
    cam = clip_near(cam, opt_.near_plane);
    if (cam.size() < 3) return;
    double depth = 0.0;
    for (const Vec3& c : cam) depth += c.z;
    out.push_back({std::move(cam), color, depth / static_cast<double>(cam.size())});
  }

  void draw(Frame& f, const Poly& p) const {
    std::vector<Vec2> px;
    px.reserve(p.cam.size());
    const double fl = rig_.focal();
    for (const Vec3& c : p.cam) px.push_back({rig_.cx() + fl * c.x / c.z, rig_.cy() - fl * c.y / c.z});
    fill(f, px, p.color);
  }

 private:
  const CameraRig& rig_;
  const CameraPose& pose_;
  const RenderOptions& opt_;
};

inline Vec3 ground(Vec2 p, double z = 0.0) { return {p.x, p.y, z}; }

// Lateral positions of all painted lines in the forward frame of a segment.
struct LineSpec {
  double offset;
  bool dashed;
  bool yellow;
};

inline std::vector<LineSpec> painted_lines(const RoadSegment& seg) {
  std::vector<double> all = seg.marking_offsets(Travel::Forward);
  for (double m : seg.marking_offsets(Travel::Reverse)) all.push_back(-m);
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end(), [](double a, double b) { return std::abs(a - b) < 1e-9; }),
            all.end());
  std::vector<LineSpec> lines;
  for (std::size_t i = 0; i < all.size(); ++i) {
    const bool edge = i == 0 || i + 1 == all.size();
    const bool center = !seg.oneway() && std::abs(all[i]) < 1e-9;
    lines.push_back({all[i], !edge && !center, center});
  }
  return lines;
}

inline void road_polys(const RoadSegment& seg, const CameraPose& pose, const Painter& painter,
                       const RenderOptions& opt, std::vector<Poly>& surface, std::vector<Poly>& marks) {
  const Vec2 cam{pose.position.x, pose.position.y};
  const auto pr = seg.project(cam);
  if (pr.distance > opt.draw_distance) return;
  const double len = seg.length();
  const double s_lo = std::max(0.0, pr.s_forward - opt.draw_distance);
  const double s_hi = std::min(len, pr.s_forward + opt.draw_distance);
  if (!(s_hi > s_lo)) return;
  const auto [left, right] = seg.paved_extent();
  const Palette& pal = opt.palette;

  std::vector<double> ss;
  for (double s = std::floor(s_lo / opt.road_step) * opt.road_step; s < s_hi; s += opt.road_step) {
    ss.push_back(std::max(s, s_lo));
  }
  ss.push_back(s_hi);
  for (std::size_t i = 0; i + 1 < ss.size(); ++i) {
    const double a = ss[i], b = ss[i + 1];
    painter.add({ground(seg.place(Travel::Forward, a, left)), ground(seg.place(Travel::Forward, a, right)),
                 ground(seg.place(Travel::Forward, b, right)), ground(seg.place(Travel::Forward, b, left))},
                pal.asphalt, surface);
  }

  const double hw = 0.5 * opt.marking_width;
  auto quad = [&](double a, double b, double o, Rgb c) {
    painter.add({ground(seg.place(Travel::Forward, a, o - hw)), ground(seg.place(Travel::Forward, a, o + hw)),
                 ground(seg.place(Travel::Forward, b, o + hw)), ground(seg.place(Travel::Forward, b, o - hw))},
                c, marks);
  };
  for (const LineSpec& line : painted_lines(seg)) {
    const Rgb c = line.yellow ? pal.center_line : pal.marking;
    if (line.dashed) {
      for (double d = std::floor(s_lo / opt.dash_period) * opt.dash_period; d < s_hi; d += opt.dash_period) {
        const double a = std::max(d, s_lo), b = std::min(d + opt.dash_length, s_hi);
        if (b > a) quad(a, b, line.offset, c);
      }
    } else {
      for (std::size_t i = 0; i + 1 < ss.size(); ++i) quad(ss[i], ss[i + 1], line.offset, c);
    }
  }
}

inline const Vec3 kLightDir = [] {
  const Vec3 l{0.4, -0.3, 0.866};
  return l * (1.0 / norm(l));
}();

// Flat shading factor for a face with outward normal n.
inline double face_light(Vec3 n) { return 0.55 + 0.45 * std::abs(dot(n, kLightDir)); }

// Vertical prism faces visible from the camera.
inline void prism_polys(const std::vector<Vec2>& ring, double z0, double z1, Rgb color, double ambient,
                        const CameraPose& pose, const Painter& painter, std::vector<Poly>& out) {
  const std::size_t n = ring.size();
  double area2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) area2 += cross(ring[i], ring[(i + 1) % n]);
  const double orient = area2 >= 0.0 ? 1.0 : -1.0;  // CCW rings have outward normal on the right
  const Vec2 eye{pose.position.x, pose.position.y};
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = ring[i], b = ring[(i + 1) % n];
    const Vec2 e = b - a;
    const double len = norm(e);
    if (len <= 0.0) continue;
    const Vec2 outward = right_normal(e) * (orient / len);
    if (!(dot(eye - a, outward) > 0.0)) continue;
    painter.add({{a.x, a.y, z0}, {b.x, b.y, z0}, {b.x, b.y, z1}, {a.x, a.y, z1}},
                shade(color, ambient * face_light({outward.x, outward.y, 0.0})), out);
  }
  if (pose.position.z > z1) {
    std::vector<Vec3> top;
    for (const Vec2& p : ring) top.push_back({p.x, p.y, z1});
    painter.add(top, shade(color, ambient * face_light({0.0, 0.0, 1.0})), out);
  }
}

}  // namespace detail

// Renders the view from `ego` (which is not drawn itself). Pure function of
// its inputs.
inline Frame render(const WorldMap& map, std::span<const ActorState> actors, const ActorState& ego,
                    double time_of_day, const CameraRig& rig = {}, const RenderOptions& opt = {}) {
  rig.validate();
  const CameraPose pose = camera_pose(rig, ego.position, ego.heading);
  const detail::Painter painter(rig, pose, opt);
  const double amb = brightness(time_of_day);
  const Palette& pal = opt.palette;

  Frame f;
  const Rgb sky = detail::shade(pal.sky, amb);
  const Rgb grass = detail::shade(pal.ground, amb);
  for (int j = 0; j < f.height; ++j) {
    const Rgb c = j <= rig.cy() ? sky : grass;
    for (int i = 0; i < f.width; ++i) {
      std::uint8_t* px = f.at(i, j);
      px[0] = c.r;
      px[1] = c.g;
      px[2] = c.b;
    }
  }

  std::vector<detail::Poly> surface, marks, solids;
  for (const RoadSegment& seg : map.roads.segments()) {
    detail::road_polys(seg, pose, painter, opt, surface, marks);
  }
  for (auto* group : {&surface, &marks}) {
    for (auto& p : *group) p.color = detail::shade(p.color, amb);
  }
  const Vec2 eye{pose.position.x, pose.position.y};
  for (const Building& b : map.buildings) {
    bool near = false;
    for (const Vec2& p : b.footprint) near = near || norm(p - eye) < opt.draw_distance;
    if (near) detail::prism_polys(b.footprint, 0.0, b.height_m, pal.building, amb, pose, painter, solids);
  }
  for (const Obstacle& o : opt.obstacles) {
    detail::prism_polys(o.footprint, o.z0, o.z1, o.color, amb, pose, painter, solids);
  }
  for (const ActorState& a : actors) {
    if (a.id == ego.id || norm(a.position - eye) > opt.draw_distance) continue;
    const Footprint fp{a.position, a.heading, a.extents.half_length, a.extents.half_width};
    const auto c = fp.corners();
    detail::prism_polys({c[0], c[1], c[2], c[3]}, 0.0, 2.0 * a.extents.half_height, a.color, amb, pose,
                        painter, solids);
  }
  std::stable_sort(solids.begin(), solids.end(),
                   [](const detail::Poly& a, const detail::Poly& b) { return a.depth > b.depth; });

  for (const auto& p : surface) painter.draw(f, p);
  for (const auto& p : marks) painter.draw(f, p);
  for (const auto& p : solids) painter.draw(f, p);
  return f;
}

inline Frame render(const WorldMap& map, const Snapshot& snap, const CameraRig& rig = {},
                    const RenderOptions& opt = {}) {
  const ActorState* ego = snap.ego();
  if (!ego) throw ConfigError("snapshot has no ego actor");
  return render(map, snap.actors, *ego, snap.time_of_day, rig, opt);
}

}  // namespace affsim
