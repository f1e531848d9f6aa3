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

#include "subnav/dynamics.hpp"

#include <cmath>
#include <limits>

namespace subnav::dynamics {

void QuadParams::validate() const {
  if (mass <= 0 || thrust_coeff <= 0 || radius <= 0 || inertia_x <= 0 ||
      inertia_y <= 0 || inertia_z <= 0) {
    throw ConfigError("quad params: mass, thrust coeff, radius and inertias must be > 0");
  }
  if (dt <= 0) throw ConfigError("quad params: dt must be > 0");
  if (u_max <= u_min) throw ConfigError("quad params: u_max must exceed u_min");
}

namespace {

// Thrust acceleration magnitude k*sum(omega_i)/m, or the quadratic variant.
double thrust_accel(const Control4& u, const QuadParams& p) {
  const double s = (p.thrust_model == ThrustModel::kLinear)
                       ? u.sum()
                       : u.array().square().sum();
  return p.thrust_coeff * s / p.mass;
}

}  // namespace

// Below this the Euler-angle rates are meaningless and Jacobians overflow.
static constexpr double kMinCosPitch = 1e-9;

bool step_into(const State12& s, const Control4& u, const QuadParams& p, State12& out) {
  const double rz = s[kRz], ry = s[kRy], rx = s[kRx];
  const double wx = s[kWx], wy = s[kWy], wz = s[kWz];
  const double srz = std::sin(rz), crz = std::cos(rz);
  const double sry = std::sin(ry), cry = std::cos(ry);
  const double srx = std::sin(rx), crx = std::cos(rx);
  if (std::abs(cry) < kMinCosPitch) {
    out.setConstant(std::numeric_limits<double>::quiet_NaN());
    return false;
  }
  const double tny = sry / cry;
  const double ta = thrust_accel(u, p);

  State12 f;
  f[kX] = s[kVx];
  f[kY] = s[kVy];
  f[kZ] = s[kVz];
  f[kRz] = wy * srx / cry + wz * crx / cry;
  f[kRy] = wy * crx - wz * srx;
  f[kRx] = wx + wy * srx * tny + wz * crx * tny;
  f[kVx] = -(srx * srz + crz * crx * sry) * ta;
  f[kVy] = -(crx * srz * sry - crz * srx) * ta;
  f[kVz] = p.gravity - crx * cry * ta;
  f[kWx] = ((p.inertia_y - p.inertia_z) * wy * wz +
            p.thrust_coeff * p.radius * (u[2] * u[2] - u[0] * u[0])) /
           p.inertia_x;
  f[kWy] = ((p.inertia_z - p.inertia_x) * wx * wz +
            p.thrust_coeff * p.radius * (u[3] * u[3] - u[1] * u[1])) /
           p.inertia_y;
  f[kWz] = ((p.inertia_x - p.inertia_y) * wx * wy +
            p.yaw_drag * ((u[1] * u[1] + u[3] * u[3]) - (u[0] * u[0] + u[2] * u[2]))) /
           p.inertia_z;

  out = s + p.dt * f;
  return out.allFinite();
}

State12 step(const State12& s, const Control4& u, const QuadParams& p) {
  State12 out;
  if (!step_into(s, u, p, out)) {
    throw DynamicsSingularityError("dynamics step produced a non-finite state (pitch singularity?)");
  }
  return out;
}

AffineDynamics affinize(const State12& s, const Control4& u, const QuadParams& p) {
  const double rz = s[kRz], ry = s[kRy], rx = s[kRx];
  const double wx = s[kWx], wy = s[kWy], wz = s[kWz];
  const double srz = std::sin(rz), crz = std::cos(rz);
  const double sry = std::sin(ry), cry = std::cos(ry);
  const double srx = std::sin(rx), crx = std::cos(rx);
  if (std::abs(cry) < kMinCosPitch) {
    throw DynamicsSingularityError("affinize at the pitch singularity");
  }
  const double tny = sry / cry;
  const double sec2y = 1.0 / (cry * cry);
  const double ta = thrust_accel(u, p);

  Eigen::Matrix<double, 12, 12> J = Eigen::Matrix<double, 12, 12>::Zero();
  Eigen::Matrix<double, 12, 4> Ju = Eigen::Matrix<double, 12, 4>::Zero();

  // d(thrust accel)/d u_i.
  Eigen::Matrix<double, 1, 4> dta;
  if (p.thrust_model == ThrustModel::kLinear) {
    dta.setConstant(p.thrust_coeff / p.mass);
  } else {
    dta = (2.0 * p.thrust_coeff / p.mass) * u.transpose();
  }

  J(kX, kVx) = 1.0;
  J(kY, kVy) = 1.0;
  J(kZ, kVz) = 1.0;

  // rdot_z = wy*srx/cry + wz*crx/cry
  J(kRz, kRx) = (wy * crx - wz * srx) / cry;
  J(kRz, kRy) = (wy * srx + wz * crx) * sry * sec2y;
  J(kRz, kWy) = srx / cry;
  J(kRz, kWz) = crx / cry;

  // rdot_y = wy*crx - wz*srx
  J(kRy, kRx) = -wy * srx - wz * crx;
  J(kRy, kWy) = crx;
  J(kRy, kWz) = -srx;

  // rdot_x = wx + (wy*srx + wz*crx)*tan(ry)
  J(kRx, kRx) = (wy * crx - wz * srx) * tny;
  J(kRx, kRy) = (wy * srx + wz * crx) * sec2y;
  J(kRx, kWx) = 1.0;
  J(kRx, kWy) = srx * tny;
  J(kRx, kWz) = crx * tny;

  // vdot_x = -(srx*srz + crz*crx*sry) * ta
  const double ax_dir = srx * srz + crz * crx * sry;
  J(kVx, kRz) = -(srx * crz - srz * crx * sry) * ta;
  J(kVx, kRy) = -(crz * crx * cry) * ta;
  J(kVx, kRx) = -(crx * srz - crz * srx * sry) * ta;
  Ju.row(kVx) = -ax_dir * dta;

  // vdot_y = -(crx*srz*sry - crz*srx) * ta
  const double ay_dir = crx * srz * sry - crz * srx;
  J(kVy, kRz) = -(crx * crz * sry + srz * srx) * ta;
  J(kVy, kRy) = -(crx * srz * cry) * ta;
  J(kVy, kRx) = (srx * srz * sry + crz * crx) * ta;
  Ju.row(kVy) = -ay_dir * dta;

  // vdot_z = g - crx*cry * ta
  J(kVz, kRx) = srx * cry * ta;
  J(kVz, kRy) = crx * sry * ta;
  Ju.row(kVz) = -(crx * cry) * dta;

  const double kr = p.thrust_coeff * p.radius;
  J(kWx, kWy) = (p.inertia_y - p.inertia_z) * wz / p.inertia_x;
  J(kWx, kWz) = (p.inertia_y - p.inertia_z) * wy / p.inertia_x;
  Ju(kWx, 0) = -2.0 * kr * u[0] / p.inertia_x;
  Ju(kWx, 2) = 2.0 * kr * u[2] / p.inertia_x;

  J(kWy, kWx) = (p.inertia_z - p.inertia_x) * wz / p.inertia_y;
  J(kWy, kWz) = (p.inertia_z - p.inertia_x) * wx / p.inertia_y;
  Ju(kWy, 1) = -2.0 * kr * u[1] / p.inertia_y;
  Ju(kWy, 3) = 2.0 * kr * u[3] / p.inertia_y;

  J(kWz, kWx) = (p.inertia_x - p.inertia_y) * wy / p.inertia_z;
  J(kWz, kWy) = (p.inertia_x - p.inertia_y) * wx / p.inertia_z;
  Ju(kWz, 0) = -2.0 * p.yaw_drag * u[0] / p.inertia_z;
  Ju(kWz, 1) = 2.0 * p.yaw_drag * u[1] / p.inertia_z;
  Ju(kWz, 2) = -2.0 * p.yaw_drag * u[2] / p.inertia_z;
  Ju(kWz, 3) = 2.0 * p.yaw_drag * u[3] / p.inertia_z;

  AffineDynamics aff;
  aff.A = Eigen::Matrix<double, 12, 12>::Identity() + p.dt * J;
  aff.B = p.dt * Ju;
  if (!aff.A.allFinite() || !aff.B.allFinite()) {
    throw DynamicsSingularityError("affinize at a dynamics singularity");
  }
  aff.C = step(s, u, p) - aff.A * s - aff.B * u;
  return aff;
}

Control4 hover_control(const QuadParams& p) {
  double cmd;
  if (p.thrust_model == ThrustModel::kLinear) {
    cmd = p.mass * p.gravity / (4.0 * p.thrust_coeff);
  } else {
    cmd = std::sqrt(p.mass * p.gravity / (4.0 * p.thrust_coeff));
  }
  if (cmd < p.u_min || cmd > p.u_max) {
    throw ConfigError("hover command outside control bounds");
  }
  return Control4::Constant(cmd);
}

}  // namespace subnav::dynamics
