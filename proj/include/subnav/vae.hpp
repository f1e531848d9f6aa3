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

#include "subnav/dynamics.hpp"
#include "subnav/nn.hpp"
#include "subnav/world.hpp"

namespace subnav::models {

// Local SDF neighborhood sampled on a fixed 12x12x6 lattice (0.5 m spacing
// in x/y, 1.0 m in z) covering roughly 6x6x6 m around a position; 864 values
// clamped to +-clamp meters and scaled to [-1,1].
struct PatchSpec {
  int nx = 12, ny = 12, nz = 6;
  double sx = 0.5, sy = 0.5, sz = 1.0;
  double clamp = 3.0;
  int size() const { return nx * ny * nz; }
};

/// Sample the SDF lattice centered at a world-frame position. Lattice points
/// outside the grid use the enclosed-world convention (deeply occupied).
Eigen::VectorXd extract_patch(const world::SdfGrid& sdf, const Vec3& world_pos,
                              const PatchSpec& spec = PatchSpec{});

struct VaeModel {
  int input_dim = 0;
  int latent_dim = 0;
  nn::Mlp encoder;  // input -> hidden -> [mean, logvar]
  nn::Mlp decoder;  // latent -> hidden -> input

  static VaeModel make(int input_dim, int hidden, int latent, Rng& rng);

  void collect_tensors(std::vector<nn::TensorRef>& out);
};

/// Batched encode: rows of `patches` -> (means, logvars).
void vae_encode(const VaeModel& v, const Eigen::MatrixXd& patches,
                Eigen::MatrixXd& means, Eigen::MatrixXd& logvars);

/// Reparameterized draw: mean + exp(logvar/2) * eps.
Eigen::MatrixXd vae_sample(const Eigen::MatrixXd& means, const Eigen::MatrixXd& logvars,
                           const Eigen::MatrixXd& eps);

Eigen::MatrixXd vae_decode(const VaeModel& v, const Eigen::MatrixXd& latents);

/// KL(q || N(0,I)) per row, closed form.
Eigen::VectorXd vae_kl(const Eigen::MatrixXd& means, const Eigen::MatrixXd& logvars);

struct VaeGrad {
  nn::MlpGrad encoder;
  nn::MlpGrad decoder;
  void match(const VaeModel& v) {
    encoder.match(v.encoder);
    decoder.match(v.decoder);
  }
};

struct VaeLoss {
  double reconstruction = 0.0;  // summed squared error
  double kl = 0.0;
  double total = 0.0;  // reconstruction + beta * kl
};

/// Negative-ELBO loss (reconstruction squared error + beta*KL) on a batch
/// with frozen reparameterization noise; accumulates analytic grads.
VaeLoss vae_elbo_backward(const VaeModel& v, const Eigen::MatrixXd& patches,
                          const Eigen::MatrixXd& eps, double beta, VaeGrad& grad);

// Context vector: [environment latent; current state; goal state]. State
// components are normalized by fixed constants so all context dimensions are
// O(1) for the conditioner and the density prior.
struct ContextScale {
  double position = 30.0;
  double angle = 3.14159265358979323846;
  double velocity = 10.0;
  double body_rate = 10.0;
};

Eigen::VectorXd build_context(const Eigen::VectorXd& env_latent,
                              const dynamics::State12& state,
                              const dynamics::State12& goal,
                              const ContextScale& scale = ContextScale{});

}  // namespace subnav::models
