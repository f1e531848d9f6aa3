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

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "subnav/dynamics.hpp"
#include "subnav/world.hpp"

namespace subnav::mppi {

using dynamics::Control4;
using dynamics::QuadParams;
using dynamics::State12;

struct CostParams {
  double w_goal = 1.0;
  double w_collision = 100.0;
  double collision_radius = 0.3;  // quadrotor radius
  double w_control = 0.01;
  double crash_penalty = 1.0e6;
  double temperature = 20.0;  // lambda
};

// K rollouts of horizon H: states are (H+1,12) with row 0 the start state,
// controls are stored flattened as rows of `controls` in h-major order.
struct RolloutBatch {
  std::vector<Eigen::MatrixXd> states;  // K x (H+1,12)
  Eigen::MatrixXd controls;             // (K, H*4)
  Eigen::VectorXd costs;                // (K)
};

// Diagonal Gaussian over control sequences. Variances are per control
// dimension, shared across the horizon.
struct GaussianControlPrior {
  Eigen::MatrixXd mean;       // (H, 4)
  Eigen::Vector4d variance;   // per-dimension, off-diagonals zero
};

/// Prior centered on hover with sigma = (u_max - u_min)/4 per dimension.
GaussianControlPrior make_hover_prior(int horizon, const QuadParams& p);

/// Receding-horizon update: shift the mean forward one step (repeating the
/// final entry) and translate the whole sequence so it is centered on the
/// new optimal control; variances reset to ((u_max-u_min)/4)^2.
GaussianControlPrior update_gaussian_prior(const GaussianControlPrior& prior,
                                           const Control4& u_star,
                                           const QuadParams& p);

// Source of candidate control sequences. Implementations must derive all
// randomness from (episode_seed, timestep, k) so results are independent of
// worker count and evaluation order.
class ControlSampler {
 public:
  virtual ~ControlSampler() = default;
  virtual int horizon() const = 0;
  /// K flattened control sequences, one per row, h-major.
  virtual Eigen::MatrixXd sample_batch(uint64_t episode_seed, int64_t timestep,
                                       int num_samples) const = 0;
};

class GaussianPriorSampler : public ControlSampler {
 public:
  GaussianPriorSampler(const GaussianControlPrior* prior, const QuadParams* params)
      : prior_(prior), params_(params) {}
  int horizon() const override { return static_cast<int>(prior_->mean.rows()); }
  Eigen::MatrixXd sample_batch(uint64_t episode_seed, int64_t timestep,
                               int num_samples) const override;

 private:
  const GaussianControlPrior* prior_;
  const QuadParams* params_;
};

/// Trajectory cost: per post-step state, squared goal distance plus a
/// quadratic penalty inside the collision radius (a fixed crash penalty once
/// the SDF goes nonpositive), plus squared control effort. Positions are
/// converted to the world frame for SDF queries.
double rollout_cost(const Eigen::MatrixXd& traj_states, const Eigen::MatrixXd& traj_controls,
                    const State12& goal, const world::SdfGrid& sdf, const CostParams& cp);

struct MppiResult {
  Control4 u_star;
  Eigen::MatrixXd mean_sequence;  // (H,4) softmax-weighted average
  RolloutBatch batch;
  Eigen::VectorXd weights;
  bool hover_fallback = false;  // all rollouts had infinite cost
};

/// One planning step: sample K sequences, clamp to bounds, roll out the
/// dynamics, weight by softmax(-lambda * cost), and return the first control
/// of the weighted-average sequence.
MppiResult mppi_step(const State12& s1, const ControlSampler& sampler, int num_samples,
                     const CostParams& cp, const QuadParams& params,
                     const world::SdfGrid& sdf, const State12& goal,
                     uint64_t episode_seed, int64_t timestep);

/// softmax(-lambda*costs) with max-subtraction; infinite costs get weight 0.
Eigen::VectorXd softmax_weights(const Eigen::VectorXd& costs, double temperature);

}  // namespace subnav::mppi
