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

#include "subnav/flow.hpp"

#include <doctest.h>

#include <Eigen/LU>

#include <cmath>

using namespace subnav;
using namespace subnav::models;

namespace {

// Adds random weights to every conditioner so the flow is far from identity.
void randomize(FlowCore& f, Rng& rng, double scale = 0.1) {
  for (auto& layer : f.layers)
    for (auto& d : layer.conditioner.layers) {
      for (int r = 0; r < d.w.rows(); ++r)
        for (int c = 0; c < d.w.cols(); ++c) d.w(r, c) += rng.uniform(-scale, scale);
      for (int r = 0; r < d.b.size(); ++r) d.b(r) += rng.uniform(-scale, scale);
    }
}

Eigen::MatrixXd random_matrix(Rng& rng, int rows, int cols, double lo = -1.0, double hi = 1.0) {
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = rng.uniform(lo, hi);
  return m;
}

}  // namespace

TEST_CASE("zero-initialized flow is the identity with zero logdet") {
  Rng rng(1);
  FlowCore f = FlowCore::make(6, 2, 4, 16, rng);
  const Eigen::MatrixXd z = random_matrix(rng, 5, 6);
  const Eigen::MatrixXd cond = random_matrix(rng, 5, 2);
  Eigen::VectorXd ld(5);
  const Eigen::MatrixXd y = flow_forward(f, z, cond, &ld);
  CHECK((y - z).cwiseAbs().maxCoeff() == 0.0);
  CHECK(ld.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("inverse(forward(z)) returns z within 1e-9") {
  Rng rng(2);
  for (int dim : {2, 4, 8, 100}) {
    FlowCore f = FlowCore::make(dim, 3, 4, 24, rng);
    randomize(f, rng);
    f.squash_output = true;
    f.squash.lo = 0.0;
    f.squash.hi = 4.0;
    const Eigen::MatrixXd z = random_matrix(rng, 7, dim, -2.0, 2.0);
    const Eigen::MatrixXd cond = random_matrix(rng, 7, 3);
    Eigen::VectorXd ld_f(7), ld_i(7);
    ld_f.setZero();
    ld_i.setZero();
    const Eigen::MatrixXd y = flow_forward(f, z, cond, &ld_f);
    CHECK(y.minCoeff() > 0.0);
    CHECK(y.maxCoeff() < 4.0);
    const Eigen::MatrixXd back = flow_inverse(f, y, cond, &ld_i);
    CHECK((back - z).cwiseAbs().maxCoeff() <= 1e-9);
    // Forward and inverse log-determinants cancel.
    CHECK((ld_f + ld_i).cwiseAbs().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("logdet matches a dense numerical Jacobian on small dims") {
  Rng rng(3);
  for (int dim : {2, 4, 8}) {
    FlowCore f = FlowCore::make(dim, 2, 3, 16, rng);
    randomize(f, rng, 0.15);
    f.squash_output = true;
    f.squash.lo = -1.0;
    f.squash.hi = 2.0;

    const Eigen::MatrixXd z = random_matrix(rng, 1, dim, -1.0, 1.0);
    const Eigen::MatrixXd cond = random_matrix(rng, 1, 2);
    Eigen::VectorXd ld(1);
    ld.setZero();
    flow_forward(f, z, cond, &ld);

    const double eps = 1e-6;
    Eigen::MatrixXd jac(dim, dim);
    for (int c = 0; c < dim; ++c) {
      Eigen::MatrixXd zp = z, zm = z;
      zp(0, c) += eps;
      zm(0, c) -= eps;
      const Eigen::MatrixXd yp = flow_forward(f, zp, cond, nullptr);
      const Eigen::MatrixXd ym = flow_forward(f, zm, cond, nullptr);
      jac.col(c) = (yp - ym).transpose() / (2 * eps);
    }
    const double logdet_num = std::log(std::abs(jac.determinant()));
    CHECK(ld[0] == doctest::Approx(logdet_num).epsilon(1e-5));
  }
}

TEST_CASE("flow_logprob equals base logprob plus inverse logdet") {
  Rng rng(4);
  FlowCore f = FlowCore::make(4, 0, 2, 8, rng);
  randomize(f, rng);
  const Eigen::MatrixXd y = random_matrix(rng, 3, 4);
  const Eigen::MatrixXd cond(3, 0);
  Eigen::VectorXd ld(3);
  ld.setZero();
  const Eigen::MatrixXd z = flow_inverse(f, y, cond, &ld);
  const Eigen::VectorXd lp = flow_logprob(f, y, cond);
  for (int r = 0; r < 3; ++r) {
    const double expect =
        -0.5 * 4 * std::log(2 * M_PI) - 0.5 * z.row(r).squaredNorm() + ld[r];
    CHECK(lp[r] == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("squashed base density integrates to one on a 1-D toy (quadrature)") {
  // The squash bijection applied to a standard normal: integrate the
  // density over (lo,hi) with Simpson's rule.
  BoundedSquash squash{-1.0, 3.0};
  const auto density = [&](double y) {
    Eigen::MatrixXd ym(1, 1);
    ym << y;
    Eigen::VectorXd ld(1);
    ld.setZero();
    const Eigen::MatrixXd x = squash.inverse(ym, ld);
    const double logp = -0.5 * std::log(2 * M_PI) - 0.5 * x(0, 0) * x(0, 0) + ld[0];
    return std::exp(logp);
  };
  const int n = 4000;  // even
  const double a = -1.0 + 1e-9, b = 3.0 - 1e-9;
  const double h = (b - a) / n;
  double integral = density(a) + density(b);
  for (int i = 1; i < n; ++i) integral += density(a + i * h) * (i % 2 ? 4.0 : 2.0);
  integral *= h / 3.0;
  CHECK(integral == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("2-D coupled flow density integrates to one (tensor quadrature)") {
  Rng rng(5);
  FlowCore f = FlowCore::make(2, 0, 2, 8, rng);
  randomize(f, rng, 0.15);
  f.squash_output = true;
  f.squash.lo = 0.0;
  f.squash.hi = 4.0;
  const Eigen::MatrixXd cond(1, 0);

  const int n = 400;  // Simpson per axis
  const double a = 1e-9, b = 4.0 - 1e-9;
  const double h = (b - a) / n;
  const auto w1 = [&](int i) { return (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0); };
  double integral = 0.0;
  Eigen::MatrixXd y(1, 2);
  for (int i = 0; i <= n; ++i) {
    for (int j = 0; j <= n; ++j) {
      y << a + i * h, a + j * h;
      integral += w1(i) * w1(j) * std::exp(flow_logprob(f, y, cond)[0]);
    }
  }
  integral *= (h / 3.0) * (h / 3.0);
  CHECK(integral == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("flow gradients match finite differences (conditioner + context)") {
  Rng rng(6);
  FlowModel m = FlowModel::make(/*horizon=*/2, /*context_dim=*/5, /*embed_dim=*/3,
                                /*num_layers=*/3, /*hidden=*/8, 0.0, 4.0, rng);
  for (auto& layer : m.core.layers)
    for (auto& d : layer.conditioner.layers) {
      for (int r = 0; r < d.w.rows(); ++r)
        for (int c = 0; c < d.w.cols(); ++c) d.w(r, c) += rng.uniform(-0.3, 0.3);
    }

  const int kSamples = 4;
  Eigen::VectorXd context(5);
  for (int i = 0; i < 5; ++i) context[i] = rng.uniform(-1.0, 1.0);

  // Fixed data rows strictly inside the bounds.
  Eigen::MatrixXd u(kSamples, 8);
  for (int r = 0; r < kSamples; ++r)
    for (int c = 0; c < 8; ++c) u(r, c) = rng.uniform(0.5, 3.5);
  Eigen::VectorXd wts(kSamples);
  wts << 0.7, 0.1, 0.15, 0.05;

  // Loss = sum_k wts_k * (-logprob_k), including the embedding path.
  const auto loss_value = [&]() {
    const Eigen::RowVectorXd e = m.embed_context(context);
    const Eigen::MatrixXd cond = e.replicate(kSamples, 1);
    return -(wts.array() * flow_logprob(m.core, u, cond).array()).sum();
  };

  FlowGrad fgrad;
  fgrad.match(m.core);
  nn::DenseGrad egrad;
  egrad.match(m.embed);
  {
    const Eigen::RowVectorXd e = m.embed_context(context);
    const Eigen::MatrixXd cond = e.replicate(kSamples, 1);
    FlowCache cache;
    flow_logprob_forward(m.core, u, cond, cache);
    const Eigen::MatrixXd g_cond = flow_logprob_backward(m.core, cache, -wts, fgrad);
    // Back through the shared tanh embedding.
    const Eigen::RowVectorXd g_e = g_cond.colwise().sum();
    const Eigen::RowVectorXd g_pre =
        (g_e.array() * (1.0 - e.array().square())).matrix();
    egrad.w += g_pre.transpose() * context.transpose();
    egrad.b += g_pre.transpose();
  }

  std::vector<nn::TensorRef> params, grads;
  for (size_t l = 0; l < m.core.layers.size(); ++l) {
    nn::collect("c" + std::to_string(l), m.core.layers[l].conditioner, params);
    nn::collect("c" + std::to_string(l), fgrad.layers[l], grads);
  }
  nn::collect("embed", m.embed, params);
  nn::collect("embed", egrad, grads);

  double worst = 0.0;
  const double eps = 1e-6;
  for (size_t t = 0; t < params.size(); ++t) {
    double* p = params[t].mat ? params[t].mat->data() : params[t].vec->data();
    const double* g = grads[t].mat ? grads[t].mat->data() : grads[t].vec->data();
    const Eigen::Index n = params[t].mat ? params[t].mat->size() : params[t].vec->size();
    for (Eigen::Index i = 0; i < n; ++i) {
      const double saved = p[i];
      p[i] = saved + eps;
      const double up = loss_value();
      p[i] = saved - eps;
      const double dn = loss_value();
      p[i] = saved;
      const double fd = (up - dn) / (2 * eps);
      const double denom = std::max({1.0, std::abs(fd), std::abs(g[i])});
      worst = std::max(worst, std::abs(fd - g[i]) / denom);
    }
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("prior model logprob is finite and improves with gradient steps") {
  Rng rng(7);
  PriorModel prior = PriorModel::make(6, 2, 12, rng);

  // A tight cluster of contexts.
  Eigen::MatrixXd data(16, 6);
  for (int r = 0; r < 16; ++r)
    for (int c = 0; c < 6; ++c) data(r, c) = 0.3 * rng.normal() + (c % 2 ? 1.0 : -1.0);

  const Eigen::MatrixXd cond(16, 0);
  const double before = flow_logprob(prior.core, data, cond).mean();
  CHECK(std::isfinite(before));

  std::vector<nn::TensorRef> params, grads;
  FlowGrad grad;
  grad.match(prior.core);
  for (size_t l = 0; l < prior.core.layers.size(); ++l) {
    nn::collect("p" + std::to_string(l), prior.core.layers[l].conditioner, params);
    nn::collect("p" + std::to_string(l), grad.layers[l], grads);
  }
  nn::SgdMomentum opt(3e-3, 0.9);
  for (int it = 0; it < 200; ++it) {
    for (auto& g : grad.layers)
      for (auto& d : g.layers) {
        d.w.setZero();
        d.b.setZero();
      }
    FlowCache cache;
    flow_logprob_forward(prior.core, data, cond, cache);
    Eigen::VectorXd dlp = Eigen::VectorXd::Constant(16, -1.0 / 16.0);  // mean NLL
    flow_logprob_backward(prior.core, cache, dlp, grad);
    opt.step(params, grads);
  }
  const double after = flow_logprob(prior.core, data, cond).mean();
  CHECK(after > before + 0.5);
}
