// Copyright 2026 The subnav Authors.
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

#include <Eigen/Core>

#include "subnav/common.hpp"

namespace subnav::dynamics {

// 12-D quadrotor state, ordered
//   [x, y, z, r_z, r_y, r_x, xdot, ydot, zdot, w_x, w_y, w_z]
// Positions in meters, Euler angles in radians, velocities in m/s, body
// angular velocities in rad/s. In this frame +z points with gravity; the
// simulator converts to the +z-up world frame at its boundary (see
// sim/frames).
using State12 = Eigen::Matrix<double, 12, 1>;

// Rotor speed commands (dimensionless units), each in [u_min, u_max].
using Control4 = Eigen::Matrix<double, 4, 1>;

// State component indices.
enum StateIndex : int {
  kX = 0,
  kY = 1,
  kZ = 2,
  kRz = 3,
  kRy = 4,
  kRx = 5,
  kVx = 6,
  kVy = 7,
  kVz = 8,
  kWx = 9,
  kWy = 10,
  kWz = 11,
};

// Thrust term in the translational rows: linear in the rotor-speed sum (the
// form used throughout) or quadratic (conventional rotor aerodynamics),
// selectable for comparison.
enum class ThrustModel { kLinear, kQuadratic };

struct QuadParams {
  double mass = 1.0;         // kg
  double thrust_coeff = 1.0; // k
  double yaw_drag = 0.0245;  // b
  double radius = 0.3;       // m
  double inertia_x = 0.05;   // kg m^2
  double inertia_y = 0.05;
  double inertia_z = 0.09;
  double gravity = 9.81;     // m/s^2
  double dt = 0.025;         // s
  double u_min = 0.0;
  double u_max = 4.0;
  ThrustModel thrust_model = ThrustModel::kLinear;

  void validate() const;
};

// Affine model s' ~= A s + B u + C around a linearization point. Exact at
// the point itself: step(s0,u0) == A s0 + B u0 + C.
struct AffineDynamics {
  Eigen::Matrix<double, 12, 12> A;
  Eigen::Matrix<double, 12, 4> B;
  Eigen::Matrix<double, 12, 1> C;
};

inline Eigen::Ref<const Vec3> position(const State12& s) { return s.head<3>(); }
inline Eigen::Ref<const Vec3> velocity(const State12& s) { return s.segment<3>(kVx); }

/// One explicit-Euler step s + dt*f(s,u). Returns false instead of throwing
/// when the result is non-finite (pitch singularity), so samplers can treat
/// blown-up rollouts as crashes without exception overhead.
bool step_into(const State12& s, const Control4& u, const QuadParams& p, State12& out);

/// Throwing wrapper around step_into.
State12 step(const State12& s, const Control4& u, const QuadParams& p);

/// Analytic Jacobians of step(): A = d step/d s, B = d step/d u,
/// C = step(s,u) - A s - B u.
AffineDynamics affinize(const State12& s, const Control4& u, const QuadParams& p);

/// Per-rotor command that cancels gravity at level attitude.
/// Throws ConfigError if the hover command is outside [u_min, u_max].
Control4 hover_control(const QuadParams& p);

inline Control4 clamp_control(const Control4& u, const QuadParams& p) {
  return u.cwiseMax(p.u_min).cwiseMin(p.u_max);
}

}  // namespace subnav::dynamics
