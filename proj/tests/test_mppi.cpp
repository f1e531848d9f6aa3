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

#include <doctest.h>

#include <cmath>

using namespace subnav;
using namespace subnav::mppi;
using dynamics::Control4;
using dynamics::QuadParams;
using dynamics::State12;

namespace {

// Open 20 m free box (no obstacles): sdf is large positive everywhere.
world::SdfGrid open_sdf() {
  world::VoxelWorld w;
  w.nx = w.ny = w.nz = 20;
  w.resolution = 1.0;
  w.origin = Vec3::Constant(-9.5);  // volume [-10,10]^3
  w.occ.assign(w.cell_count(), 0);
  return world::compute_sdf(w);
}

}  // namespace

TEST_CASE("gaussian prior: sigma is one quarter of the control range") {
  QuadParams p;
  const GaussianControlPrior prior = make_hover_prior(10, p);
  CHECK(prior.variance[0] == doctest::Approx(1.0));
  CHECK(prior.mean.rows() == 10);
  CHECK(prior.mean(3, 2) == doctest::Approx(2.4525));
}

TEST_CASE("prior update recenters on the optimal control") {
  QuadParams p;
  GaussianControlPrior prior = make_hover_prior(8, p);
  Control4 u;
  u << 1.0, 2.0, 3.0, 0.5;
  const GaussianControlPrior updated = update_gaussian_prior(prior, u, p);
  // Constant initial mean -> broadcast of u_star over the horizon.
  for (int t = 0; t < 8; ++t)
    for (int d = 0; d < 4; ++d) CHECK(updated.mean(t, d) == doctest::Approx(u[d]));
  CHECK(updated.variance[1] == doctest::Approx(1.0));

  // Two successive identical updates give identical priors.
  const GaussianControlPrior again = update_gaussian_prior(updated, u, p);
  CHECK((again.mean - updated.mean).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("prior update shifts a non-constant mean and re-centers its head") {
  QuadParams p;
  GaussianControlPrior prior = make_hover_prior(4, p);
  for (int t = 0; t < 4; ++t) prior.mean.row(t).setConstant(static_cast<double>(t));
  Control4 u = Control4::Constant(10.0);
  const GaussianControlPrior updated = update_gaussian_prior(prior, u, p);
  // Shifted sequence was (1,2,3,3); translated so the head equals u_star.
  CHECK(updated.mean(0, 0) == doctest::Approx(10.0));
  CHECK(updated.mean(1, 0) == doctest::Approx(11.0));
  CHECK(updated.mean(2, 0) == doctest::Approx(12.0));
  CHECK(updated.mean(3, 0) == doctest::Approx(12.0));
}

TEST_CASE("rollout_cost is zero pinned at the goal and monotone in distance") {
  QuadParams p;
  CostParams cp;
  const world::SdfGrid sdf = open_sdf();
  State12 goal = State12::Zero();
  goal.head<3>() = Vec3(2.0, 0.0, -3.0);

  const int h = 5;
  Eigen::MatrixXd states = goal.transpose().replicate(h + 1, 1);
  Eigen::MatrixXd controls = Eigen::MatrixXd::Zero(h, 4);
  CHECK(rollout_cost(states, controls, goal, sdf, cp) == 0.0);

  Eigen::MatrixXd near = states, far = states;
  near.col(0).array() += 1.0;
  far.col(0).array() += 2.0;
  CHECK(rollout_cost(near, controls, goal, sdf, cp) <
        rollout_cost(far, controls, goal, sdf, cp));
}

TEST_CASE("rollout_cost matches a 3-term hand evaluation") {
  QuadParams p;
  CostParams cp;
  const world::SdfGrid sdf = open_sdf();
  State12 goal = State12::Zero();

  const int h = 3;
  Eigen::MatrixXd states = Eigen::MatrixXd::Zero(h + 1, 12);
  states(1, 0) = 1.0;          // 1 m from goal
  states(2, 1) = 2.0;          // 2 m
  states(3, 2) = 0.5;          // 0.5 m (z dyn -> world z = -0.5, still free space)
  Eigen::MatrixXd controls = Eigen::MatrixXd::Zero(h, 4);
  controls(0, 0) = 1.0;
  controls(2, 3) = 2.0;

  // All sdf values in the open box exceed the collision radius, so the
  // hand sum has only goal and control terms.
  const double expect = cp.w_goal * (1.0 + 4.0 + 0.25) + cp.w_control * (1.0 + 4.0);
  CHECK(rollout_cost(states, controls, goal, sdf, cp) == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("rollout_cost applies the crash penalty on nonpositive sdf") {
  CostParams cp;
  // One-cell fully occupied world: sdf <= 0 everywhere inside.
  world::VoxelWorld w;
  w.nx = w.ny = w.nz = 2;
  w.resolution = 1.0;
  w.origin = Vec3::Constant(0.5);
  w.occ.assign(8, 1);
  const world::SdfGrid sdf = world::compute_sdf(w);
  State12 goal = State12::Zero();
  goal.head<3>() = Vec3(1.0, 1.0, -1.0);
  Eigen::MatrixXd states = goal.transpose().replicate(2, 1);
  Eigen::MatrixXd controls = Eigen::MatrixXd::Zero(1, 4);
  CHECK(rollout_cost(states, controls, goal, sdf, cp) >= cp.crash_penalty);
}

TEST_CASE("softmax weights: equal costs uniform, shift invariant, sharp at lambda=20") {
  Eigen::VectorXd costs(4);
  costs.setConstant(3.0);
  Eigen::VectorXd w = softmax_weights(costs, 20.0);
  for (int i = 0; i < 4; ++i) CHECK(w[i] == doctest::Approx(0.25));

  Eigen::VectorXd two(2);
  two << 0.0, 10.0;
  w = softmax_weights(two, 20.0);
  CHECK(w[0] == doctest::Approx(1.0));
  CHECK(w[1] == doctest::Approx(std::exp(-200.0)));  // ~1.4e-87
  CHECK(w.sum() == doctest::Approx(1.0));

  Eigen::VectorXd shifted = two.array() + 123.0;
  Eigen::VectorXd w2 = softmax_weights(shifted, 20.0);
  CHECK((w - w2).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("mppi_step basics: bounds, K=1 identity, determinism") {
  QuadParams p;
  CostParams cp;
  const world::SdfGrid sdf = open_sdf();
  State12 s = State12::Zero();
  State12 goal = State12::Zero();
  goal.head<3>() = Vec3(5.0, 0.0, 0.0);

  GaussianControlPrior prior = make_hover_prior(8, p);
  GaussianPriorSampler sampler(&prior, &p);

  const MppiResult r1 = mppi_step(s, sampler, 16, cp, p, sdf, goal, 42, 0);
  CHECK(!r1.hover_fallback);
  CHECK(r1.weights.sum() == doctest::Approx(1.0));
  for (int d = 0; d < 4; ++d) {
    CHECK(r1.u_star[d] >= p.u_min);
    CHECK(r1.u_star[d] <= p.u_max);
  }
  // Every stored control is clamped.
  CHECK(r1.batch.controls.minCoeff() >= p.u_min);
  CHECK(r1.batch.controls.maxCoeff() <= p.u_max);

  const MppiResult r2 = mppi_step(s, sampler, 16, cp, p, sdf, goal, 42, 0);
  CHECK((r1.u_star - r2.u_star).cwiseAbs().maxCoeff() == 0.0);

  const MppiResult k1 = mppi_step(s, sampler, 1, cp, p, sdf, goal, 7, 3);
  const Control4 only = k1.batch.controls.row(0).segment<4>(0).transpose();
  CHECK((k1.u_star - only).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("mppi_step with tiny temperature approaches the unweighted mean") {
  QuadParams p;
  CostParams cp;
  cp.temperature = 1e-9;
  const world::SdfGrid sdf = open_sdf();
  State12 s = State12::Zero();
  State12 goal = State12::Zero();
  GaussianControlPrior prior = make_hover_prior(6, p);
  GaussianPriorSampler sampler(&prior, &p);
  const MppiResult r = mppi_step(s, sampler, 32, cp, p, sdf, goal, 9, 1);
  Control4 mean = Control4::Zero();
  for (int k = 0; k < 32; ++k) mean += r.batch.controls.row(k).segment<4>(0).transpose();
  mean /= 32.0;
  CHECK((r.u_star - mean).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("weights are permutation-equivariant with costs") {
  Eigen::VectorXd costs(3);
  costs << 1.0, 0.5, 2.0;
  const Eigen::VectorXd w = softmax_weights(costs, 20.0);
  Eigen::VectorXd perm(3);
  perm << 0.5, 2.0, 1.0;
  const Eigen::VectorXd wp = softmax_weights(perm, 20.0);
  CHECK(w[0] == doctest::Approx(wp[2]));
  CHECK(w[1] == doctest::Approx(wp[0]));
  CHECK(w[2] == doctest::Approx(wp[1]));
}

TEST_CASE("all-infinite costs fall back to hover with a diagnostic") {
  QuadParams p;
  CostParams cp;
  // Fully occupied world makes every rollout cost finite but huge; to force
  // infinite costs, start at the pitch singularity so every rollout blows up.
  const world::SdfGrid sdf = open_sdf();
  State12 s = State12::Zero();
  s[dynamics::kRy] = 1.5707963267948966;
  GaussianControlPrior prior = make_hover_prior(4, p);
  GaussianPriorSampler sampler(&prior, &p);
  const MppiResult r = mppi_step(s, sampler, 4, cp, p, sdf, State12::Zero(), 1, 0);
  CHECK(r.hover_fallback);
  CHECK((r.u_star - dynamics::hover_control(p)).cwiseAbs().maxCoeff() == 0.0);
}
