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

// Direct-perception driver: everything here is a pure function of the
// affordance vector, the current speed and the gains.
//
// Steering sign: positive steering turns clockwise (to the right). A vehicle
// integrating it uses yaw_rate = -v / wheelbase * tan(steering).

#pragma once

#include <algorithm>
#include <cmath>
#include <optional>

#include <json.hpp>

#include "affsim/affordance.hpp"
#include "affsim/common.hpp"

namespace affsim {

struct ControllerGains {
  // lateral
  double k_angle = 0.5;    // rad steering per rad heading error
  double k_offset = 0.02;  // rad steering per metre of lane offset
  double max_steer = 0.5;
  // longitudinal (intelligent driver model)
  double v0 = 30.0;
  double time_headway = 1.5;
  double a_max = 1.5;
  double b_comfort = 2.0;
  double s_min = 2.0;
  double vehicle_length = 4.5;
  double accel_min = -6.0;
  double accel_max = 3.0;
  // lane changes
  double lane_change_gap = 30.0;
  double lane_change_clear = 40.0;
  // emergency braking on an imminent time to collision
  double hazard_ttc = 2.5;
  double hazard_decel = 6.0;

  void validate() const {
    const double positive[] = {k_angle,        k_offset,        max_steer,         v0,
                               time_headway,   a_max,           b_comfort,         s_min,
                               vehicle_length, accel_max,       lane_change_gap,   lane_change_clear,
                               hazard_ttc,     hazard_decel,    -accel_min};
    for (double g : positive) {
      if (!(g > 0.0)) throw ConfigError("controller gains must all be positive");
    }
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ControllerGains, k_angle, k_offset, max_steer, v0,
                                                time_headway, a_max, b_comfort, s_min,
                                                vehicle_length, accel_min, accel_max,
                                                lane_change_gap, lane_change_clear, hazard_ttc,
                                                hazard_decel)

struct ControlOutput {
  double steering = 0.0;  // rad, clockwise positive
  double accel = 0.0;     // m/s^2
};

enum class LaneChange { Keep, ShiftLeft, ShiftRight };

inline const char* to_string(LaneChange c) {
  switch (c) {
    case LaneChange::ShiftLeft: return "shift_left";
    case LaneChange::ShiftRight: return "shift_right";
    default: return "keep";
  }
}

// Offset from the lane centre, positive to the right.
inline double lane_offset(const AffordanceVector& a) {
  return 0.5 * (a.get(Aff::LaneL) - a.get(Aff::LaneR));
}

inline double steer_to(double angle_deg, double offset, const ControllerGains& g) {
  const double s = g.k_angle * deg2rad(angle_deg) - g.k_offset * offset;
  return std::clamp(s, -g.max_steer, g.max_steer);
}

inline double steer(const AffordanceVector& a, const ControllerGains& g) {
  if (!a.is_active(Aff::Angle) || !a.is_active(Aff::LaneL) || !a.is_active(Aff::LaneR)) {
    throw RangeError("steer requires active angle, lane_L and lane_R");
  }
  return steer_to(a.get(Aff::Angle), lane_offset(a), g);
}

// Intelligent driver model acceleration. `closing_speed` is ego speed minus
// lead speed; callers without an estimate pass 0.
inline double speed_control(const AffordanceVector& a, double v, const ControllerGains& g,
                            double closing_speed = 0.0) {
  if (!(v >= 0.0)) throw RangeError("speed must be non-negative");
  double acc = g.a_max * (1.0 - std::pow(v / g.v0, 4));
  if (a.is_active(Aff::CarM)) {
    const double s = a.get(Aff::CarM) - g.vehicle_length;
    if (s <= 1e-3) return g.accel_min;
    const double s_star =
        g.s_min +
        std::max(0.0, v * g.time_headway + v * closing_speed / (2.0 * std::sqrt(g.a_max * g.b_comfort)));
    acc -= g.a_max * (s_star / s) * (s_star / s);
  }
  return std::clamp(acc, g.accel_min, g.accel_max);
}

// Steady-state bumper gap behind a lead at speed v.
inline double idm_equilibrium_gap(double v, const ControllerGains& g) {
  return (g.s_min + v * g.time_headway) / std::sqrt(1.0 - std::pow(v / g.v0, 4));
}

inline LaneChange lane_change_decision(const AffordanceVector& a, const ControllerGains& g) {
  if (!a.is_active(Aff::CarM) || !(a.get(Aff::CarM) < g.lane_change_gap)) return LaneChange::Keep;
  auto clear = [&](Aff car) { return !a.is_active(car) || a.get(car) > g.lane_change_clear; };
  if (a.is_active(Aff::LaneLL) && clear(Aff::CarL)) return LaneChange::ShiftLeft;
  if (a.is_active(Aff::LaneRR) && clear(Aff::CarR)) return LaneChange::ShiftRight;
  return LaneChange::Keep;
}

// Emergency braking override: full braking while a perceived time to
// collision is below the gain threshold.
inline std::optional<double> hazard_brake(std::optional<double> ttc, double v,
                                          const ControllerGains& g) {
  if (ttc && *ttc < g.hazard_ttc && v > 0.0) return -g.hazard_decel;
  return std::nullopt;
}

inline ControlOutput control(const AffordanceVector& a, double v, const ControllerGains& g,
                             double closing_speed = 0.0) {
  return {steer(a, g), speed_control(a, v, g, closing_speed)};
}

}  // namespace affsim
