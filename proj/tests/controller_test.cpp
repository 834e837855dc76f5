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

#include <gtest/gtest.h>

#include "affsim/controller.hpp"
#include "harness.hpp"

namespace affsim {
namespace {

AffordanceVector centred(double angle = 0.0, double lane_l = 1.85, double lane_r = 1.85) {
  AffordanceVector a;
  a.set(Aff::Angle, angle);
  a.set(Aff::LaneL, lane_l);
  a.set(Aff::LaneR, lane_r);
  return a;
}

TEST(Steer, CentredIsZero) {
  EXPECT_EQ(steer(centred(), ControllerGains{}), 0.0);
}

TEST(Steer, RightOfCentreSteersLeft) {
  const ControllerGains g;
  const auto a = centred(0.0, 2.35, 1.35);
  EXPECT_GT(lane_offset(a), 0.0);
  EXPECT_LT(steer(a, g), 0.0);
}

TEST(Steer, HeadingLeftOfRoadSteersRight) {
  // Steering is clockwise positive, so a counterclockwise heading error is
  // undone by positive steering.
  EXPECT_GT(steer(centred(5.0), ControllerGains{}), 0.0);
  EXPECT_LT(steer(centred(-5.0), ControllerGains{}), 0.0);
}

TEST(Steer, ClampsAndRequiresInputs) {
  const ControllerGains g;
  EXPECT_EQ(steer(centred(89.0), g), g.max_steer);
  EXPECT_EQ(steer(centred(-89.0), g), -g.max_steer);
  AffordanceVector a;
  a.set(Aff::Angle, 0.0);
  EXPECT_THROW(steer(a, g), RangeError);
}

TEST(Speed, FreeRoadExamples) {
  const ControllerGains g;
  const auto a = centred();
  EXPECT_GT(speed_control(a, 10.0, g), 0.0);
  EXPECT_NEAR(speed_control(a, g.v0, g), 0.0, 1e-12);
  EXPECT_LT(speed_control(a, g.v0 + 5.0, g), 0.0);
  EXPECT_THROW(speed_control(a, -1.0, g), RangeError);
}

TEST(Speed, OutputWithinClamps) {
  const ControllerGains g;
  Rng rng(1);
  for (int i = 0; i < 5000; ++i) {
    auto a = centred();
    if (uniform01(rng) < 0.7) a.set(Aff::CarM, uniform(rng, 0.0, 60.0));
    const double acc = speed_control(a, uniform(rng, 0.0, 40.0), g, uniform(rng, -20.0, 20.0));
    EXPECT_GE(acc, g.accel_min);
    EXPECT_LE(acc, g.accel_max);
    EXPECT_TRUE(std::isfinite(acc));
  }
}

TEST(Speed, MonotoneInLeadDistance) {
  const ControllerGains g;
  for (double v : {5.0, 15.0, 25.0}) {
    double prev = speed_control(centred(), v, g);
    for (double d = 60.0; d > g.vehicle_length + g.s_min; d -= 0.25) {
      auto a = centred();
      a.set(Aff::CarM, d);
      const double acc = speed_control(a, v, g);
      EXPECT_LE(acc, prev);
      if (acc > g.accel_min && prev < g.accel_max) { EXPECT_LT(acc, prev); }
      prev = acc;
    }
  }
}

TEST(Speed, EquilibriumGapIsFixedPoint) {
  const ControllerGains g;
  for (double v : {5.0, 12.0, 20.0, 27.0}) {
    auto a = centred();
    a.set(Aff::CarM, idm_equilibrium_gap(v, g) + g.vehicle_length);
    EXPECT_NEAR(speed_control(a, v, g), 0.0, 1e-9);
  }
  EXPECT_NEAR(idm_equilibrium_gap(20.0, g), 32.0 / std::sqrt(1.0 - std::pow(20.0 / 30.0, 4)), 1e-12);
}

// Rule restated independently of the implementation.
LaneChange expected_decision(const AffordanceVector& a, const ControllerGains& g) {
  const bool close_lead = a.is_active(Aff::CarM) && a.get(Aff::CarM) < g.lane_change_gap;
  if (!close_lead) return LaneChange::Keep;
  const bool left_ok = a.is_active(Aff::LaneLL) && (!a.is_active(Aff::CarL) || a.get(Aff::CarL) > g.lane_change_clear);
  const bool right_ok =
      a.is_active(Aff::LaneRR) && (!a.is_active(Aff::CarR) || a.get(Aff::CarR) > g.lane_change_clear);
  if (left_ok) return LaneChange::ShiftLeft;
  if (right_ok) return LaneChange::ShiftRight;
  return LaneChange::Keep;
}

TEST(LaneChangeRule, Examples) {
  const ControllerGains g;
  auto a = centred();
  a.set(Aff::LaneLL, 5.55);
  EXPECT_EQ(lane_change_decision(a, g), LaneChange::Keep);
  a.set(Aff::CarM, 15.0);
  EXPECT_EQ(lane_change_decision(a, g), LaneChange::ShiftLeft);
}

TEST(LaneChangeRule, ExhaustiveTruthTable) {
  const ControllerGains g;
  const std::optional<double> car_values[] = {std::nullopt, 10.0, g.lane_change_gap, g.lane_change_clear, 55.0};
  int checked = 0;
  for (const auto& cm : car_values) {
    for (const auto& cl : car_values) {
      for (const auto& cr : car_values) {
        for (int lanes = 0; lanes < 4; ++lanes) {
          auto a = centred();
          if (cm) a.set(Aff::CarM, *cm);
          if (cl) a.set(Aff::CarL, *cl);
          if (cr) a.set(Aff::CarR, *cr);
          if (lanes & 1) a.set(Aff::LaneLL, 5.55);
          if (lanes & 2) a.set(Aff::LaneRR, 5.55);
          EXPECT_EQ(lane_change_decision(a, g), expected_decision(a, g));
          ++checked;
        }
      }
    }
  }
  EXPECT_EQ(checked, 500);
}

TEST(HazardBrake, FiresBelowThreshold) {
  const ControllerGains g;
  EXPECT_EQ(*hazard_brake(1.0, 10.0, g), -g.hazard_decel);
  EXPECT_FALSE(hazard_brake(3.0, 10.0, g).has_value());
  EXPECT_FALSE(hazard_brake(std::nullopt, 10.0, g).has_value());
  EXPECT_FALSE(hazard_brake(1.0, 0.0, g).has_value());
}

TEST(Gains, ValidateAndJson) {
  ControllerGains g;
  g.k_angle = 0.9;
  nlohmann::json j = g;
  EXPECT_EQ(j.get<ControllerGains>().k_angle, 0.9);
  const auto partial = nlohmann::json::parse(R"({"v0": 25})").get<ControllerGains>();
  EXPECT_EQ(partial.v0, 25.0);
  EXPECT_EQ(partial.k_offset, ControllerGains{}.k_offset);
  g.s_min = 0.0;
  EXPECT_THROW(g.validate(), ConfigError);
}

TEST(ClosedLoop, RecoversFromOneMetreOffset) {
  const auto r = harness::straight_road_loop(20.0, 1.0, 20.0, std::nullopt);
  double worst_overshoot = 0.0;
  for (const auto& s : r.samples) {
    worst_overshoot = std::max(worst_overshoot, -s.lateral);
    if (s.t >= 8.0) { EXPECT_LT(std::abs(s.lateral), 0.2) << "t=" << s.t; }
  }
  EXPECT_LT(worst_overshoot, 0.5);
  EXPECT_EQ(r.collisions, 0u);
}

TEST(ClosedLoop, ConvergesToEquilibriumGapBehindLead) {
  const ControllerGains g;
  const auto r = harness::straight_road_loop(60.0, 0.0, 20.0, 20.0, 80.0);
  const double want = idm_equilibrium_gap(20.0, g) + g.vehicle_length;
  const auto& last = r.samples.back();
  EXPECT_NEAR(last.gap, want, 0.05 * want);
  EXPECT_LT(std::abs(last.lateral), 0.2);
  EXPECT_EQ(r.collisions, 0u);
}

}  // namespace
}  // namespace affsim
