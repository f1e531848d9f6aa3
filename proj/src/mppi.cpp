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

#include "subnav/mppi.hpp"

#include <cmath>
#include <limits>

#include "subnav/rng.hpp"

namespace subnav::mppi {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

GaussianControlPrior make_hover_prior(int horizon, const QuadParams& p) {
  GaussianControlPrior prior;
  const Control4 hover = dynamics::hover_control(p);
  prior.mean = hover.transpose().replicate(horizon, 1);
  const double sigma = (p.u_max - p.u_min) / 4.0;
  prior.variance.setConstant(sigma * sigma);
  return prior;
}

GaussianControlPrior update_gaussian_prior(const GaussianControlPrior& prior,
                                           const Control4& u_star,
                                           const QuadParams& p) {
  const int h = static_cast<int>(prior.mean.rows());
  GaussianControlPrior out;
  out.mean.resize(h, 4);
  for (int t = 0; t < h - 1; ++t) out.mean.row(t) = prior.mean.row(t + 1);
  out.mean.row(h - 1) = prior.mean.row(h - 1);
  const Eigen::RowVector4d shift = u_star.transpose() - out.mean.row(0);
  out.mean.rowwise() += shift;
  const double sigma = (p.u_max - p.u_min) / 4.0;
  out.variance.setConstant(sigma * sigma);
  return out;
}

Eigen::MatrixXd GaussianPriorSampler::sample_batch(uint64_t episode_seed,
                                                   int64_t timestep,
                                                   int num_samples) const {
  const int h = horizon();
  const Eigen::Vector4d sigma = prior_->variance.cwiseSqrt();
  Eigen::MatrixXd out(num_samples, h * 4);
  for (int k = 0; k < num_samples; ++k) {
    Rng rng = Rng::from_keys(episode_seed, static_cast<uint64_t>(timestep),
                             static_cast<uint64_t>(k));
    for (int t = 0; t < h; ++t)
      for (int d = 0; d < 4; ++d)
        out(k, t * 4 + d) = prior_->mean(t, d) + sigma[d] * rng.normal();
  }
  return out;
}

double rollout_cost(const Eigen::MatrixXd& traj_states, const Eigen::MatrixXd& traj_controls,
                    const State12& goal, const world::SdfGrid& sdf, const CostParams& cp) {
  const int h = static_cast<int>(traj_controls.rows());
  const Vec3 goal_pos = goal.head<3>();
  double cost = 0.0;
  for (int t = 1; t <= h; ++t) {
    const Vec3 p = traj_states.row(t).head<3>();
    cost += cp.w_goal * (p - goal_pos).squaredNorm();
    const double d = world::sdf_query(sdf, world_from_dyn(p));
    if (d <= 0.0) {
      cost += cp.crash_penalty;
    } else if (d < cp.collision_radius) {
      const double pen = cp.collision_radius - d;
      cost += cp.w_collision * pen * pen;
    }
    cost += cp.w_control * traj_controls.row(t - 1).squaredNorm();
  }
  return cost;
}

Eigen::VectorXd softmax_weights(const Eigen::VectorXd& costs, double temperature) {
  const int k = static_cast<int>(costs.size());
  double cmin = kInf;
  for (int i = 0; i < k; ++i) cmin = std::min(cmin, costs[i]);
  Eigen::VectorXd w(k);
  if (!std::isfinite(cmin)) {
    w.setZero();
    return w;
  }
  double sum = 0.0;
  for (int i = 0; i < k; ++i) {
    w[i] = std::isfinite(costs[i]) ? std::exp(-temperature * (costs[i] - cmin)) : 0.0;
    sum += w[i];
  }
  w /= sum;
  return w;
}

MppiResult mppi_step(const State12& s1, const ControlSampler& sampler, int num_samples,
                     const CostParams& cp, const QuadParams& params,
                     const world::SdfGrid& sdf, const State12& goal,
                     uint64_t episode_seed, int64_t timestep) {
  const int h = sampler.horizon();
  MppiResult res;
  res.batch.controls = sampler.sample_batch(episode_seed, timestep, num_samples);
  res.batch.states.resize(num_samples);
  res.batch.costs.resize(num_samples);

  Eigen::MatrixXd seq(h, 4);
  for (int k = 0; k < num_samples; ++k) {
    for (int t = 0; t < h; ++t) {
      const Control4 u = res.batch.controls.row(k).segment<4>(t * 4).transpose();
      seq.row(t) = dynamics::clamp_control(u, params).transpose();
    }
    for (int t = 0; t < h; ++t)
      res.batch.controls.row(k).segment<4>(t * 4) = seq.row(t);

    Eigen::MatrixXd& states = res.batch.states[k];
    states.resize(h + 1, 12);
    states.row(0) = s1.transpose();
    State12 s = s1;
    bool blown_up = false;
    for (int t = 0; t < h; ++t) {
      State12 next;
      if (!dynamics::step_into(s, seq.row(t).transpose(), params, next)) {
        blown_up = true;
        for (int r = t + 1; r <= h; ++r) states.row(r) = s.transpose();
        break;
      }
      s = next;
      states.row(t + 1) = s.transpose();
    }
    res.batch.costs[k] = blown_up ? kInf : rollout_cost(states, seq, goal, sdf, cp);
  }

  res.weights = softmax_weights(res.batch.costs, cp.temperature);
  if (res.weights.sum() == 0.0) {
    res.hover_fallback = true;
    res.u_star = dynamics::hover_control(params);
    res.mean_sequence = res.u_star.transpose().replicate(h, 1);
    return res;
  }

  Eigen::RowVectorXd mean_flat = res.weights.transpose() * res.batch.controls;
  res.mean_sequence.resize(h, 4);
  for (int t = 0; t < h; ++t) res.mean_sequence.row(t) = mean_flat.segment<4>(t * 4);
  res.u_star = dynamics::clamp_control(res.mean_sequence.row(0).transpose(), params);
  return res;
}

}  // namespace subnav::mppi
