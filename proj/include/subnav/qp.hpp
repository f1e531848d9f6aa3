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
#include <Eigen/SparseCore>

#include "subnav/common.hpp"

namespace subnav::qp {

// min 1/2 x'Px + q'x  s.t.  A_eq x = b_eq,  A_in x <= b_in.
struct QpProblem {
  Eigen::SparseMatrix<double> P;  // (n,n) symmetric PSD
  Eigen::VectorXd q;              // (n)
  Eigen::SparseMatrix<double> A_eq;
  Eigen::VectorXd b_eq;
  Eigen::SparseMatrix<double> A_in;
  Eigen::VectorXd b_in;

  Eigen::Index n() const { return q.size(); }
  void validate() const;
};

enum class QpStatus {
  kSolved,
  kInaccurate,         // iteration budget exhausted; best iterate returned
  kPrimalInfeasible,
  kDualInfeasible,
};

const char* to_string(QpStatus s);

struct QpSettings {
  double tol = 1e-6;       // absolute and relative residual tolerance
  int max_iter = 20000;
  double sigma = 1e-6;     // x-regularization
  double alpha = 1.6;      // relaxation
  double rho = 0.1;        // base step; equality rows get 1e3 * rho
  bool adaptive_rho = true;
  bool polish = true;
  int check_every = 25;
};

struct QpSolution {
  Eigen::VectorXd x;
  Eigen::VectorXd y_eq;  // equality duals
  Eigen::VectorXd y_in;  // inequality duals (nonnegative at optimum)
  QpStatus status = QpStatus::kInaccurate;
  int iterations = 0;
  double primal_residual = 0.0;  // ||Ax - z||_inf, unscaled
  double dual_residual = 0.0;    // ||Px + q + A'y||_inf, unscaled
  double objective = 0.0;
};

/// Operator-splitting (ADMM) solver with Ruiz equilibration, optional
/// rho adaptation and active-set polish. `warm` seeds the iterates.
QpSolution solve_qp(const QpProblem& p, const QpSettings& s = QpSettings{},
                    const QpSolution* warm = nullptr);

}  // namespace subnav::qp
