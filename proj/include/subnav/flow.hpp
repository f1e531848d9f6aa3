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

#include "subnav/nn.hpp"

namespace subnav::models {

// Elementwise sigmoid squash onto (lo, hi). Outputs are nudged strictly
// inside the interval so downstream logit calls stay finite.
struct BoundedSquash {
  double lo = 0.0;
  double hi = 4.0;

  /// y = lo + (hi-lo)*sigmoid(x); adds each row's log|dy/dx| to logdet.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Eigen::VectorXd& logdet) const;
  /// x = logit((y-lo)/(hi-lo)); adds each row's log|dx/dy| to logdet.
  Eigen::MatrixXd inverse(const Eigen::MatrixXd& y, Eigen::VectorXd& logdet) const;
};

// One affine coupling: the active half (even or odd indices, alternating by
// layer) is scaled and shifted by a conditioner MLP fed with the passive
// half plus an optional conditioning vector. Raw scales are bounded through
// tanh so exp() stays tame; the conditioner output layer starts at zero, so
// an untrained flow is the identity.
struct CouplingLayer {
  nn::Mlp conditioner;  // (n_passive + cond_dim) -> 2 * n_active
};

struct FlowCore {
  int dim = 0;
  int cond_dim = 0;
  double scale_cap = 3.0;
  bool squash_output = false;
  BoundedSquash squash;
  std::vector<CouplingLayer> layers;

  static FlowCore make(int dim, int cond_dim, int num_layers, int hidden, Rng& rng);

  /// Indices transformed by layer l: parity l%2.
  int active_count(int layer) const { return layer % 2 == 0 ? (dim + 1) / 2 : dim / 2; }
  int passive_count(int layer) const { return dim - active_count(layer); }
};

struct FlowGrad {
  std::vector<nn::MlpGrad> layers;
  void match(const FlowCore& f) {
    layers.resize(f.layers.size());
    for (size_t i = 0; i < layers.size(); ++i) layers[i].match(f.layers[i].conditioner);
  }
};

struct FlowLayerCache {
  nn::MlpCache mlp;
  Eigen::MatrixXd tanh_raw;     // tanh of the raw scale output
  Eigen::MatrixXd exp_neg_ls;   // exp(-log_scale)
  Eigen::MatrixXd recovered_a;  // active values after this inverse step
};

struct FlowCache {
  std::vector<FlowLayerCache> layers;  // indexed by layer id
  Eigen::MatrixXd z;                   // base-space values after full inverse
};

/// Base-space rows z -> data rows. If logdet is non-null it receives each
/// row's log|det dy/dz|. Thread-safe (no caches).
Eigen::MatrixXd flow_forward(const FlowCore& f, const Eigen::MatrixXd& z,
                             const Eigen::MatrixXd& cond, Eigen::VectorXd* logdet);

/// Data rows -> base-space rows; logdet receives log|det dz/dy|.
Eigen::MatrixXd flow_inverse(const FlowCore& f, const Eigen::MatrixXd& y,
                             const Eigen::MatrixXd& cond, Eigen::VectorXd* logdet);

/// log density of each row of y. Thread-safe.
Eigen::VectorXd flow_logprob(const FlowCore& f, const Eigen::MatrixXd& y,
                             const Eigen::MatrixXd& cond);

/// Training-path logprob with caches kept for the backward pass.
Eigen::VectorXd flow_logprob_forward(const FlowCore& f, const Eigen::MatrixXd& y,
                                     const Eigen::MatrixXd& cond, FlowCache& cache);

/// Backpropagates dL/dlogprob through the inverse computation; accumulates
/// conditioner grads and returns dL/dcond (one row per sample).
Eigen::MatrixXd flow_logprob_backward(const FlowCore& f, const FlowCache& cache,
                                      const Eigen::VectorXd& dlogprob, FlowGrad& grad);

// Conditional flow over flattened control sequences (h-major, 4 controls per
// step), squashed into the control bounds. Conditioning comes from a learned
// tanh embedding of the context vector.
struct FlowModel {
  int horizon = 0;
  int context_dim = 0;
  nn::Dense embed;  // context -> embedding, tanh
  FlowCore core;    // dim = 4*horizon, cond_dim = embed rows

  static FlowModel make(int horizon, int context_dim, int embed_dim, int num_layers,
                        int hidden, double u_min, double u_max, Rng& rng);

  /// tanh(W c + b) as a single row.
  Eigen::RowVectorXd embed_context(const Eigen::VectorXd& context) const;

  void collect_tensors(std::vector<nn::TensorRef>& out);
};

// Unconditional flow density over context vectors, with the running
// normalization statistics of the per-dimension training NLL.
struct PriorModel {
  FlowCore core;  // dim = context_dim, cond_dim = 0, no squash
  double nll_mean = 0.0;
  double nll_std = 1.0;
  bool trained = false;

  static PriorModel make(int context_dim, int num_layers, int hidden, Rng& rng);

  double logprob(const Eigen::VectorXd& context) const;

  void collect_tensors(std::vector<nn::TensorRef>& out, Eigen::VectorXd& stats_storage);
};

}  // namespace subnav::models
