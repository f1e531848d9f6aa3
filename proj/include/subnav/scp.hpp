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

#include <vector>

#include <Eigen/Core>

#include "subnav/dynamics.hpp"
#include "subnav/qp.hpp"
#include "subnav/world.hpp"

namespace subnav::scp {

using dynamics::Control4;
using dynamics::QuadParams;
using dynamics::State12;

struct ScpConfig {
  double w_dist = 0.1;
  double w_ctrl = 0.1;
  double w_nav = 0.01;
  double w_dyn = 100.0;
  double trust_state = 1.0;
  double trust_control = 1.0;
  double decay_state = 0.95;
  double decay_control = 0.95;
  double slack_max = 1.0;
  double slack_decay = 0.5;
  double nav_sigma = 50.0;
  double slack_reg = 100.0;
  double min_improvement = 0.01;
  int max_iterations = 20;
  double points_per_meter = 10.0;
  // Planning runs on a coarser integration step than the simulator; the
  // tracking reference is arc-length resampled afterwards, so only the
  // profile shape matters here and the problem size halves.
  double plan_dt = 0.05;
  // Extra time budget over the 1/(points_per_meter*dt) average speed implied
  // by the grid; without it the rest-to-rest profile sits at the vehicle's
  // feasibility edge and the convexified subproblems fight the slack cap.
  double time_margin = 1.5;
  int horizon_min = 20;
  int horizon_max = 400;
  int max_segments = 3;
  qp::QpSettings qp;  // tol 1e-6, max_iter 20000 defaults

  void validate() const;
};

// State/control trajectory at the dynamics timestep.
struct Trajectory {
  Eigen::MatrixXd states;    // (T, 12)
  Eigen::MatrixXd controls;  // (T-1, 4)
  double dt = 0.025;
};

enum class ScpStatus { kSuccess, kInaccurate, kInfeasible, kSingular };
const char* to_string(ScpStatus s);

struct ScpSolution {
  Trajectory trajectory;
  double objective = 0.0;
  std::vector<double> objective_history;
  double max_dynamics_slack = 0.0;
  double final_slack_bound = 0.0;  // slack cap active in the last subproblem
  ScpStatus status = ScpStatus::kInfeasible;
  int iterations = 0;
};

// Inputs in the dynamics frame (the caller converts world-frame data).
struct ScpTask {
  std::vector<Vec3> polyline;            // grid-path polyline, start to goal
  std::vector<world::Sphere> corridor;   // free spheres covering the polyline
  State12 s_init;
  State12 s_goal;
};

/// Warm-start trajectory: polyline resampled to T positions, all other state
/// rows zero, every control row the hover command.
Trajectory initialize_scp(const std::vector<Vec3>& polyline, const Control4& hover, int T,
                          double dt);

/// Sphere containment values D_{t,v} = radius_v - |p_t - c_v| (positive
/// strictly inside sphere v) for every trajectory point.
Eigen::MatrixXd sphere_distances(const Eigen::MatrixXd& states,
                                 const std::vector<world::Sphere>& corridor);

/// Iteratively affinize, assemble the convex subproblem (goal deviation,
/// control effort, navigation margin, dynamics slack; boundary, control
/// bound, trust region, slack cap and linearized corridor constraints) and
/// solve it, decaying the trust radii and the slack cap geometrically, until
/// the objective improvement falls under min_improvement.
ScpSolution scp_solve(const ScpTask& task, const ScpConfig& cfg, const QuadParams& params);

/// Split long tasks into at most max_segments sequential solves stitched at
/// zero-velocity interior waypoints. Segments share the corridor.
std::vector<ScpSolution> scp_solve_segmented(const ScpTask& task, const ScpConfig& cfg,
                                             const QuadParams& params);

/// Horizon from metric path length: clamp(round(length * points_per_meter)).
int horizon_for_length(double length_m, const ScpConfig& cfg);

}  // namespace subnav::scp
