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

#include "subnav/qp.hpp"

#include <doctest.h>

#include <Eigen/Dense>

#include "oracle_ipm.hpp"
#include "subnav/rng.hpp"

using namespace subnav;
using namespace subnav::qp;

namespace {

Eigen::SparseMatrix<double> sparse(const Eigen::MatrixXd& m) {
  return m.sparseView();
}

QpProblem make_problem(const Eigen::MatrixXd& P, const Eigen::VectorXd& q,
                       const Eigen::MatrixXd& G, const Eigen::VectorXd& h,
                       const Eigen::MatrixXd& A = Eigen::MatrixXd(),
                       const Eigen::VectorXd& b = Eigen::VectorXd()) {
  QpProblem prob;
  prob.P = sparse(P);
  prob.q = q;
  prob.A_in = G.size() ? sparse(G) : Eigen::SparseMatrix<double>(0, q.size());
  prob.b_in = h;
  prob.A_eq = A.size() ? sparse(A) : Eigen::SparseMatrix<double>(0, q.size());
  prob.b_eq = b.size() ? b : Eigen::VectorXd(0);
  if (!h.size()) prob.b_in = Eigen::VectorXd(0);
  return prob;
}

}  // namespace

TEST_CASE("min x^2 subject to x >= 1 gives x=1 with dual 2") {
  Eigen::MatrixXd P(1, 1), G(1, 1);
  P << 2.0;
  G << -1.0;  // -x <= -1
  Eigen::VectorXd q(1), h(1);
  q << 0.0;
  h << -1.0;
  const QpSolution sol = solve_qp(make_problem(P, q, G, h));
  CHECK(sol.status == QpStatus::kSolved);
  CHECK(sol.x[0] == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(sol.y_in[0] == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(sol.primal_residual <= 1e-6);
  CHECK(sol.dual_residual <= 1e-6);
}

TEST_CASE("unconstrained identity quadratic returns -q") {
  const int n = 5;
  Eigen::MatrixXd P = Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd q(n);
  q << 1.0, -2.0, 0.5, 3.0, -0.25;
  const QpSolution sol = solve_qp(make_problem(P, q, Eigen::MatrixXd(), Eigen::VectorXd()));
  CHECK(sol.status == QpStatus::kSolved);
  CHECK((sol.x + q).lpNorm<Eigen::Infinity>() <= 1e-7);
}

TEST_CASE("random strictly-feasible QPs match the interior-point oracle") {
  Rng rng(2025);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 + static_cast<int>(rng.uniform_index(9));   // 2..10
    const int m = n + static_cast<int>(rng.uniform_index(6));   // a few extra rows
    Eigen::MatrixXd R(n, n);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) R(r, c) = rng.normal();
    Eigen::MatrixXd P = R.transpose() * R + 0.1 * Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd q(n);
    for (int i = 0; i < n; ++i) q[i] = rng.normal();
    Eigen::MatrixXd G(m, n);
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < n; ++c) G(r, c) = rng.normal();
    Eigen::VectorXd x0(n);
    for (int i = 0; i < n; ++i) x0[i] = rng.normal();
    Eigen::VectorXd h = G * x0;
    for (int i = 0; i < m; ++i) h[i] += 0.1 + rng.uniform();  // strictly feasible at x0

    const QpProblem prob = make_problem(P, q, G, h);
    QpSettings st;
    st.tol = 1e-9;
    const QpSolution sol = solve_qp(prob, st);
    const oracles::IpmResult oracle = oracles::ipm_solve(P, q, G, h);
    REQUIRE(oracle.converged);
    CHECK(sol.status == QpStatus::kSolved);
    CHECK(sol.objective == doctest::Approx(oracle.objective).epsilon(1e-6));
    CHECK((sol.x - oracle.x).lpNorm<Eigen::Infinity>() <= 1e-5);

    // Full KKT check at tolerance 1e-6: stationarity, feasibility,
    // complementary slackness, dual nonnegativity.
    const Eigen::VectorXd grad = P * sol.x + q + G.transpose() * sol.y_in;
    CHECK(grad.lpNorm<Eigen::Infinity>() <= 1e-6);
    CHECK(((G * sol.x - h).cwiseMax(0.0)).lpNorm<Eigen::Infinity>() <= 1e-6);
    CHECK(sol.y_in.minCoeff() >= -1e-8);
    for (int i = 0; i < m; ++i)
      CHECK(std::abs(sol.y_in[i] * (G.row(i).dot(sol.x) - h[i])) <= 1e-6);
  }
}

TEST_CASE("equality-constrained QP matches the oracle") {
  Rng rng(7);
  const int n = 6, m = 4, p = 2;
  Eigen::MatrixXd R(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) R(r, c) = rng.normal();
  Eigen::MatrixXd P = R.transpose() * R + 0.5 * Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd q(n);
  for (int i = 0; i < n; ++i) q[i] = rng.normal();
  Eigen::MatrixXd G(m, n), A(p, n);
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < n; ++c) G(r, c) = rng.normal();
  for (int r = 0; r < p; ++r)
    for (int c = 0; c < n; ++c) A(r, c) = rng.normal();
  Eigen::VectorXd x0(n);
  for (int i = 0; i < n; ++i) x0[i] = 0.3 * rng.normal();
  Eigen::VectorXd h = G * x0 + Eigen::VectorXd::Constant(m, 0.5);
  Eigen::VectorXd b = A * x0;

  QpSettings st;
  st.tol = 1e-9;
  const QpSolution sol = solve_qp(make_problem(P, q, G, h, A, b), st);
  const oracles::IpmResult oracle = oracles::ipm_solve(P, q, G, h, A, b);
  REQUIRE(oracle.converged);
  CHECK(sol.status == QpStatus::kSolved);
  CHECK(sol.objective == doctest::Approx(oracle.objective).epsilon(1e-6));
  CHECK((A * sol.x - b).lpNorm<Eigen::Infinity>() <= 1e-6);
}

TEST_CASE("contradictory bounds are reported primal infeasible") {
  Eigen::MatrixXd P = Eigen::MatrixXd::Identity(1, 1);
  Eigen::VectorXd q = Eigen::VectorXd::Zero(1);
  Eigen::MatrixXd G(2, 1);
  G << 1.0, -1.0;  // x <= -1 and -x <= -1 (x >= 1)
  Eigen::VectorXd h(2);
  h << -1.0, -1.0;
  const QpSolution sol = solve_qp(make_problem(P, q, G, h));
  CHECK(sol.status == QpStatus::kPrimalInfeasible);
}

TEST_CASE("unbounded direction is reported dual infeasible") {
  // min x with x <= 0: unbounded below.
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(1, 1);
  Eigen::VectorXd q(1);
  q << 1.0;
  Eigen::MatrixXd G(1, 1);
  G << 1.0;
  Eigen::VectorXd h(1);
  h << 0.0;
  const QpSolution sol = solve_qp(make_problem(P, q, G, h));
  CHECK(sol.status == QpStatus::kDualInfeasible);
}

TEST_CASE("iteration budget exhaustion returns the best iterate as inaccurate") {
  Rng rng(3);
  const int n = 8, m = 12;
  Eigen::MatrixXd R(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) R(r, c) = rng.normal();
  Eigen::MatrixXd P = R.transpose() * R + 0.1 * Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd q(n);
  for (int i = 0; i < n; ++i) q[i] = rng.normal();
  Eigen::MatrixXd G(m, n);
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < n; ++c) G(r, c) = rng.normal();
  Eigen::VectorXd h = Eigen::VectorXd::Constant(m, 1.0);
  QpSettings st;
  st.max_iter = 2;
  st.polish = false;
  const QpSolution sol = solve_qp(make_problem(P, q, G, h), st);
  CHECK(sol.status == QpStatus::kInaccurate);
  CHECK(sol.x.size() == n);
}

TEST_CASE("warm starting cuts iterations on a perturbed problem") {
  Rng rng(11);
  const int n = 12, m = 20;
  Eigen::MatrixXd R(n, n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) R(r, c) = rng.normal();
  Eigen::MatrixXd P = R.transpose() * R + Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd q(n);
  for (int i = 0; i < n; ++i) q[i] = rng.normal();
  Eigen::MatrixXd G(m, n);
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < n; ++c) G(r, c) = rng.normal();
  Eigen::VectorXd h = Eigen::VectorXd::Constant(m, 2.0);

  const QpProblem prob = make_problem(P, q, G, h);
  const QpSolution cold = solve_qp(prob);
  REQUIRE(cold.status == QpStatus::kSolved);

  Eigen::VectorXd q2 = q;
  q2[0] += 0.01;
  const QpProblem prob2 = make_problem(P, q2, G, h);
  const QpSolution warm = solve_qp(prob2, QpSettings{}, &cold);
  CHECK(warm.status == QpStatus::kSolved);
  CHECK(warm.iterations <= cold.iterations);
}
