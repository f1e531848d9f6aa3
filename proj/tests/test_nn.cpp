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

#include "subnav/nn.hpp"

#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <functional>

using namespace subnav;
using namespace subnav::nn;

namespace {

// Central-difference gradient of a scalar loss over every tensor in `params`,
// compared against the entries of `grads` (relative tolerance).
double max_grad_error(const std::vector<TensorRef>& params,
                      const std::vector<TensorRef>& grads,
                      const std::function<double()>& loss, double eps = 1e-6) {
  double worst = 0.0;
  for (size_t t = 0; t < params.size(); ++t) {
    double* p = params[t].mat ? params[t].mat->data() : params[t].vec->data();
    const double* g = grads[t].mat ? grads[t].mat->data() : grads[t].vec->data();
    const Eigen::Index n = params[t].mat ? params[t].mat->size() : params[t].vec->size();
    for (Eigen::Index i = 0; i < n; ++i) {
      const double saved = p[i];
      p[i] = saved + eps;
      const double up = loss();
      p[i] = saved - eps;
      const double dn = loss();
      p[i] = saved;
      const double fd = (up - dn) / (2 * eps);
      const double denom = std::max({1.0, std::abs(fd), std::abs(g[i])});
      worst = std::max(worst, std::abs(fd - g[i]) / denom);
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("dense and mlp forward/backward agree with finite differences") {
  Rng rng(1);
  Mlp m = Mlp::make({3, 5, 2}, rng);
  Eigen::MatrixXd x(4, 3);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 3; ++c) x(r, c) = rng.uniform(-1.0, 1.0);

  // Loss: squared norm of outputs.
  MlpGrad grad;
  grad.match(m);
  MlpCache cache;
  const Eigen::MatrixXd y = mlp_forward(m, x, cache);
  mlp_backward(m, cache, 2.0 * y, grad);

  std::vector<TensorRef> params, grads;
  collect("m", m, params);
  collect("m", grad, grads);
  const auto loss = [&]() { return mlp_apply(m, x).squaredNorm(); };
  CHECK(max_grad_error(params, grads, loss) <= 1e-7);
}

TEST_CASE("mlp_apply equals mlp_forward and zero-last init outputs zero") {
  Rng rng(2);
  Mlp m = Mlp::make({4, 6, 3}, rng, /*zero_last=*/true);
  Eigen::MatrixXd x(2, 4);
  x.setRandom();
  MlpCache cache;
  CHECK((mlp_apply(m, x) - mlp_forward(m, x, cache)).cwiseAbs().maxCoeff() == 0.0);
  CHECK(mlp_apply(m, x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("sgd with momentum matches the hand recursion") {
  Eigen::MatrixXd p(1, 1), g(1, 1);
  p << 1.0;
  g << 0.5;
  std::vector<TensorRef> params{ref("p", p)}, grads{ref("p", g)};
  SgdMomentum opt(0.1, 0.9);
  opt.step(params, grads);
  // v = -0.05, p = 0.95
  CHECK(p(0, 0) == doctest::Approx(0.95));
  opt.step(params, grads);
  // v = 0.9*(-0.05) - 0.05 = -0.095, p = 0.855
  CHECK(p(0, 0) == doctest::Approx(0.855));
}

TEST_CASE("checkpoint round-trips bit-exactly and validates names/shapes") {
  Rng rng(3);
  Mlp m = Mlp::make({3, 4, 2}, rng);
  std::vector<TensorRef> tensors;
  collect("net", m, tensors);

  const std::string path =
      (std::filesystem::temp_directory_path() / "subnav_test_ckpt.bin").string();
  save_checkpoint(path, tensors);

  Mlp loaded = Mlp::make({3, 4, 2}, rng);  // different random weights
  std::vector<TensorRef> loaded_refs;
  collect("net", loaded, loaded_refs);
  load_checkpoint(path, loaded_refs);
  for (size_t l = 0; l < m.layers.size(); ++l) {
    CHECK(loaded.layers[l].w == m.layers[l].w);
    CHECK(loaded.layers[l].b == m.layers[l].b);
  }

  const auto raw = read_checkpoint(path);
  CHECK(raw.size() == tensors.size());
  CHECK(raw[0].first == "net.0.w");
  CHECK(raw[0].second == m.layers[0].w);

  // Shape mismatch rejected.
  Mlp other = Mlp::make({3, 5, 2}, rng);
  std::vector<TensorRef> other_refs;
  collect("net", other, other_refs);
  CHECK_THROWS_AS(load_checkpoint(path, other_refs), IoError);
  std::remove(path.c_str());
}
