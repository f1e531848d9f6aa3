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

#include <string>
#include <vector>

#include <Eigen/Core>

#include "subnav/common.hpp"
#include "subnav/rng.hpp"

namespace subnav::nn {

// Minimal dense-layer stack with explicit caches so inference paths stay
// const and thread-safe while training paths carry their own scratch.

struct Dense {
  Eigen::MatrixXd w;  // (out, in)
  Eigen::VectorXd b;  // (out)

  static Dense glorot(int out, int in, Rng& rng);
  static Dense zeros(int out, int in);
};

struct DenseGrad {
  Eigen::MatrixXd w;
  Eigen::VectorXd b;
  void match(const Dense& d) {
    w.setZero(d.w.rows(), d.w.cols());
    b.setZero(d.b.size());
  }
};

/// y = x * w^T + b for batched rows.
Eigen::MatrixXd dense_apply(const Dense& d, const Eigen::MatrixXd& x);
/// Accumulates into `grad`, returns dL/dx.
Eigen::MatrixXd dense_backward(const Dense& d, const Eigen::MatrixXd& x,
                               const Eigen::MatrixXd& gy, DenseGrad& grad);

// Multi-layer perceptron: tanh between layers, linear output.
struct Mlp {
  std::vector<Dense> layers;

  /// dims = {in, hidden..., out}; zero_last starts the output layer at zero.
  static Mlp make(const std::vector<int>& dims, Rng& rng, bool zero_last = false);
};

struct MlpGrad {
  std::vector<DenseGrad> layers;
  void match(const Mlp& m) {
    layers.resize(m.layers.size());
    for (size_t i = 0; i < layers.size(); ++i) layers[i].match(m.layers[i]);
  }
};

struct MlpCache {
  std::vector<Eigen::MatrixXd> inputs;  // input to each dense layer
};

Eigen::MatrixXd mlp_apply(const Mlp& m, const Eigen::MatrixXd& x);
Eigen::MatrixXd mlp_forward(const Mlp& m, const Eigen::MatrixXd& x, MlpCache& cache);
Eigen::MatrixXd mlp_backward(const Mlp& m, const MlpCache& cache,
                             const Eigen::MatrixXd& gy, MlpGrad& grad);

// Named view of one parameter (or state) tensor. Data is addressed through
// Eigen matrices, serialized row-major.
struct TensorRef {
  std::string name;
  Eigen::MatrixXd* mat = nullptr;
  Eigen::VectorXd* vec = nullptr;  // exactly one of mat/vec is set
};

inline TensorRef ref(const std::string& name, Eigen::MatrixXd& m) {
  return TensorRef{name, &m, nullptr};
}
inline TensorRef ref(const std::string& name, Eigen::VectorXd& v) {
  return TensorRef{name, nullptr, &v};
}

/// Tensor refs of a dense layer / MLP under a name prefix.
void collect(const std::string& prefix, Dense& d, std::vector<TensorRef>& out);
void collect(const std::string& prefix, DenseGrad& d, std::vector<TensorRef>& out);
void collect(const std::string& prefix, Mlp& m, std::vector<TensorRef>& out);
void collect(const std::string& prefix, MlpGrad& m, std::vector<TensorRef>& out);

// Plain SGD with momentum. Velocity buffers are keyed by position in the
// param list, which must stay stable across steps.
class SgdMomentum {
 public:
  SgdMomentum(double lr, double momentum) : lr_(lr), momentum_(momentum) {}
  void step(const std::vector<TensorRef>& params, const std::vector<TensorRef>& grads);

 private:
  double lr_, momentum_;
  std::vector<Eigen::VectorXd> velocity_;
};

/// Versioned binary checkpoint of named tensors (row-major 64-bit floats,
/// little-endian). Loading requires identical names and shapes in order.
void save_checkpoint(const std::string& path, const std::vector<TensorRef>& tensors);
void load_checkpoint(const std::string& path, const std::vector<TensorRef>& tensors);

/// All tensors of a checkpoint in file order (vectors come back as n x 1).
std::vector<std::pair<std::string, Eigen::MatrixXd>> read_checkpoint(const std::string& path);

}  // namespace subnav::nn
