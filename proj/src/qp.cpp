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

#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <vector>

namespace subnav::qp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kRhoEqFactor = 1e3;
constexpr double kRhoMin = 1e-6;
constexpr double kRhoMax = 1e6;

using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

// Vertically stacked [A_eq; A_in].
SpMat vstack(const SpMat& top, const SpMat& bot) {
  SpMat out(top.rows() + bot.rows(), std::max(top.cols(), bot.cols()));
  std::vector<Triplet> trips;
  trips.reserve(static_cast<size_t>(top.nonZeros() + bot.nonZeros()));
  for (int k = 0; k < top.outerSize(); ++k)
    for (SpMat::InnerIterator it(top, k); it; ++it)
      trips.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
  for (int k = 0; k < bot.outerSize(); ++k)
    for (SpMat::InnerIterator it(bot, k); it; ++it)
      trips.emplace_back(static_cast<int>(it.row() + top.rows()), static_cast<int>(it.col()),
                         it.value());
  out.setFromTriplets(trips.begin(), trips.end());
  return out;
}

// Infinity norms of columns/rows of a sparse matrix.
Eigen::VectorXd col_inf_norms(const SpMat& m) {
  Eigen::VectorXd norms = Eigen::VectorXd::Zero(m.cols());
  for (int k = 0; k < m.outerSize(); ++k)
    for (SpMat::InnerIterator it(m, k); it; ++it)
      norms[it.col()] = std::max(norms[it.col()], std::abs(it.value()));
  return norms;
}

Eigen::VectorXd row_inf_norms(const SpMat& m) {
  Eigen::VectorXd norms = Eigen::VectorXd::Zero(m.rows());
  for (int k = 0; k < m.outerSize(); ++k)
    for (SpMat::InnerIterator it(m, k); it; ++it)
      norms[it.row()] = std::max(norms[it.row()], std::abs(it.value()));
  return norms;
}

SpMat diag_scale(const Eigen::VectorXd& left, const SpMat& m, const Eigen::VectorXd& right) {
  SpMat out = m;
  for (int k = 0; k < out.outerSize(); ++k)
    for (SpMat::InnerIterator it(out, k); it; ++it)
      it.valueRef() = left[it.row()] * it.value() * right[it.col()];
  return out;
}

struct Kkt {
  Eigen::SimplicialLDLT<SpMat> ldlt;
  bool ok = false;
};

void factorize(Kkt& kkt, const SpMat& P, const SpMat& A, double sigma,
               const Eigen::VectorXd& rho) {
  const Eigen::Index n = P.rows(), m = A.rows();
  std::vector<Triplet> trips;
  trips.reserve(static_cast<size_t>(P.nonZeros() + 2 * A.nonZeros() + n + m));
  for (int k = 0; k < P.outerSize(); ++k)
    for (SpMat::InnerIterator it(P, k); it; ++it)
      trips.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
  for (Eigen::Index i = 0; i < n; ++i)
    trips.emplace_back(static_cast<int>(i), static_cast<int>(i), sigma);
  for (int k = 0; k < A.outerSize(); ++k)
    for (SpMat::InnerIterator it(A, k); it; ++it) {
      trips.emplace_back(static_cast<int>(n + it.row()), static_cast<int>(it.col()), it.value());
      trips.emplace_back(static_cast<int>(it.col()), static_cast<int>(n + it.row()), it.value());
    }
  for (Eigen::Index i = 0; i < m; ++i)
    trips.emplace_back(static_cast<int>(n + i), static_cast<int>(n + i), -1.0 / rho[i]);
  SpMat kmat(n + m, n + m);
  kmat.setFromTriplets(trips.begin(), trips.end());
  kkt.ldlt.compute(kmat);
  kkt.ok = (kkt.ldlt.info() == Eigen::Success);
}

}  // namespace

void QpProblem::validate() const {
  if (P.rows() != P.cols() || P.rows() != q.size())
    throw ConfigError("qp: P/q dimensions inconsistent");
  if (A_eq.rows() != b_eq.size() || (A_eq.rows() > 0 && A_eq.cols() != q.size()))
    throw ConfigError("qp: equality block dimensions inconsistent");
  if (A_in.rows() != b_in.size() || (A_in.rows() > 0 && A_in.cols() != q.size()))
    throw ConfigError("qp: inequality block dimensions inconsistent");
}

const char* to_string(QpStatus s) {
  switch (s) {
    case QpStatus::kSolved: return "solved";
    case QpStatus::kInaccurate: return "inaccurate";
    case QpStatus::kPrimalInfeasible: return "primal_infeasible";
    case QpStatus::kDualInfeasible: return "dual_infeasible";
  }
  return "unknown";
}

QpSolution solve_qp(const QpProblem& prob, const QpSettings& settings,
                    const QpSolution* warm) {
  prob.validate();
  const Eigen::Index n = prob.n();
  const Eigen::Index m_eq = prob.A_eq.rows();
  const Eigen::Index m_in = prob.A_in.rows();
  const Eigen::Index m = m_eq + m_in;

  const SpMat A0 = (m_eq > 0 && m_in > 0) ? vstack(prob.A_eq, prob.A_in)
                   : (m_eq > 0)           ? prob.A_eq
                                          : prob.A_in;
  Eigen::VectorXd lo(m), up(m);
  lo.head(m_eq) = prob.b_eq;
  up.head(m_eq) = prob.b_eq;
  lo.tail(m_in).setConstant(-kInf);
  up.tail(m_in) = prob.b_in;

  // Ruiz equilibration on [[P, A'], [A, 0]].
  Eigen::VectorXd d = Eigen::VectorXd::Ones(n);
  Eigen::VectorXd e = Eigen::VectorXd::Ones(m);
  SpMat Ps = prob.P;
  SpMat As = A0;
  for (int pass = 0; pass < 10; ++pass) {
    Eigen::VectorXd cn = col_inf_norms(Ps).cwiseMax(col_inf_norms(As));
    Eigen::VectorXd rn = row_inf_norms(As);
    Eigen::VectorXd dx(n), de(m);
    for (Eigen::Index i = 0; i < n; ++i) dx[i] = cn[i] > 1e-12 ? 1.0 / std::sqrt(cn[i]) : 1.0;
    for (Eigen::Index i = 0; i < m; ++i) de[i] = rn[i] > 1e-12 ? 1.0 / std::sqrt(rn[i]) : 1.0;
    Ps = diag_scale(dx, Ps, dx);
    As = diag_scale(de, As, dx);
    d = d.cwiseProduct(dx);
    e = e.cwiseProduct(de);
  }
  Eigen::VectorXd qs = d.cwiseProduct(prob.q);
  Eigen::VectorXd los = e.cwiseProduct(lo);
  Eigen::VectorXd ups = e.cwiseProduct(up);
  for (Eigen::Index i = 0; i < m; ++i)
    if (!std::isfinite(lo[i])) los[i] = -kInf;

  double rho_base = settings.rho;
  auto rho_vector = [&](double base) {
    Eigen::VectorXd r(m);
    r.head(m_eq).setConstant(std::clamp(base * kRhoEqFactor, kRhoMin, kRhoMax));
    r.tail(m_in).setConstant(std::clamp(base, kRhoMin, kRhoMax));
    return r;
  };
  Eigen::VectorXd rho = rho_vector(rho_base);

  Kkt kkt;
  factorize(kkt, Ps, As, settings.sigma, rho);
  if (!kkt.ok) throw Error("qp: KKT factorization failed");

  // Scaled iterates.
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd z = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd y = Eigen::VectorXd::Zero(m);
  if (warm && warm->x.size() == n) {
    x = d.cwiseInverse().cwiseProduct(warm->x);
    Eigen::VectorXd yw(m);
    yw.head(m_eq) = warm->y_eq;
    yw.tail(m_in) = warm->y_in;
    y = e.cwiseInverse().cwiseProduct(yw);
    z = As * x;
  }

  QpSolution sol;
  sol.status = QpStatus::kInaccurate;

  Eigen::VectorXd rhs(n + m), xz(n + m);
  Eigen::VectorXd x_prev, y_prev;
  const double tol = settings.tol;

  auto unscaled_residuals = [&](const Eigen::VectorXd& xs, const Eigen::VectorXd& zs,
                                const Eigen::VectorXd& ys, double& rp, double& rd) {
    const Eigen::VectorXd xu = d.cwiseProduct(xs);
    const Eigen::VectorXd zu = e.cwiseInverse().cwiseProduct(zs);
    const Eigen::VectorXd yu = e.cwiseProduct(ys);
    const Eigen::VectorXd Ax = A0 * xu;
    rp = m > 0 ? (Ax - zu).lpNorm<Eigen::Infinity>() : 0.0;
    const Eigen::VectorXd grad = prob.P * xu + prob.q +
                                 (m > 0 ? Eigen::VectorXd(A0.transpose() * yu)
                                        : Eigen::VectorXd::Zero(n));
    rd = grad.lpNorm<Eigen::Infinity>();
    // Relative scaling.
    const double sp = std::max({Ax.size() ? Ax.lpNorm<Eigen::Infinity>() : 0.0,
                                zu.size() ? zu.lpNorm<Eigen::Infinity>() : 0.0, 1.0});
    const double sd = std::max({(prob.P * xu).lpNorm<Eigen::Infinity>(),
                                prob.q.lpNorm<Eigen::Infinity>(),
                                m > 0 ? (A0.transpose() * yu).lpNorm<Eigen::Infinity>() : 0.0,
                                1.0});
    rp /= sp;
    rd /= sd;
  };

  // Absolute KKT residuals of an unscaled candidate (x, stacked duals).
  auto abs_residuals = [&](const Eigen::VectorXd& xu, const Eigen::VectorXd& ysu,
                           double& rp, double& rd) {
    const Eigen::VectorXd grad =
        prob.P * xu + prob.q +
        (m > 0 ? Eigen::VectorXd(A0.transpose() * ysu) : Eigen::VectorXd::Zero(n));
    rd = grad.lpNorm<Eigen::Infinity>();
    if (m > 0) {
      Eigen::VectorXd viol = (A0 * xu - up).cwiseMax(0.0);
      viol.head(m_eq) = (prob.A_eq * xu - prob.b_eq).cwiseAbs();
      rp = viol.lpNorm<Eigen::Infinity>();
    } else {
      rp = 0.0;
    }
  };

  auto relative_ok = [&](const Eigen::VectorXd& xu, const Eigen::VectorXd& ysu,
                         double rp_abs, double rd_abs) {
    const double sp = std::max(
        {m > 0 ? (A0 * xu).lpNorm<Eigen::Infinity>() : 0.0, 1.0});
    const double sd = std::max({(prob.P * xu).lpNorm<Eigen::Infinity>(),
                                prob.q.lpNorm<Eigen::Infinity>(),
                                m > 0 ? (A0.transpose() * ysu).lpNorm<Eigen::Infinity>() : 0.0,
                                1.0});
    return rp_abs <= settings.tol * sp && rd_abs <= settings.tol * sd;
  };

  // Active-set polish on the unscaled problem: equality rows plus inequality
  // rows that look active by dual value or by primal slack at the current
  // accuracy. Adopted only if it improves the worst absolute KKT residual.
  auto polish_pass = [&](Eigen::VectorXd& xu, Eigen::VectorXd& ysu) -> bool {
    double rp0, rd0;
    abs_residuals(xu, ysu, rp0, rd0);
    std::vector<Eigen::Index> active;
    for (Eigen::Index i = 0; i < m_eq; ++i) active.push_back(i);
    // Dual-driven selection with a scale-aware threshold: genuinely active
    // rows carry duals orders of magnitude above the splitting noise, and
    // slack-based selection would pull in both rows of opposing +-pairs.
    const double y_thresh =
        std::max(1e-9, 1e-6 * (m_in > 0 ? ysu.tail(m_in).maxCoeff() : 0.0));
    for (Eigen::Index i = m_eq; i < m; ++i)
      if (ysu[i] > y_thresh) active.push_back(i);
    std::vector<std::vector<std::pair<int, double>>> rows(m);
    for (int k = 0; k < A0.outerSize(); ++k)
      for (SpMat::InnerIterator aIt(A0, k); aIt; ++aIt)
        rows[aIt.row()].push_back({static_cast<int>(aIt.col()), aIt.value()});
    std::vector<uint8_t> in_set(m, 0);
    for (Eigen::Index i : active) in_set[i] = 1;

    // Active-set refinement: re-solve while the candidate violates rows that
    // were left out or carries negative duals on included ones.
    Eigen::VectorXd x1, y1;
    double rp1 = kInf, rd1 = kInf;
    const double delta = 1e-9;
    for (int round = 0; round < 6; ++round) {
      const Eigen::Index ma = static_cast<Eigen::Index>(active.size());
      std::vector<Triplet> trips;
      for (int k = 0; k < prob.P.outerSize(); ++k)
        for (SpMat::InnerIterator pIt(prob.P, k); pIt; ++pIt)
          trips.emplace_back(static_cast<int>(pIt.row()), static_cast<int>(pIt.col()),
                             pIt.value());
      for (Eigen::Index i = 0; i < n; ++i)
        trips.emplace_back(static_cast<int>(i), static_cast<int>(i), delta);
      for (Eigen::Index a = 0; a < ma; ++a) {
        for (const auto& [col, val] : rows[active[a]]) {
          trips.emplace_back(static_cast<int>(n + a), col, val);
          trips.emplace_back(col, static_cast<int>(n + a), val);
        }
        trips.emplace_back(static_cast<int>(n + a), static_cast<int>(n + a), -delta);
      }
      SpMat kpol(n + ma, n + ma);
      kpol.setFromTriplets(trips.begin(), trips.end());
      Eigen::SimplicialLDLT<SpMat> ldlt(kpol);
      if (ldlt.info() != Eigen::Success) return false;

      Eigen::VectorXd rhs_p(n + ma);
      rhs_p.head(n) = -prob.q;
      for (Eigen::Index a = 0; a < ma; ++a) rhs_p[n + a] = up[active[a]];
      Eigen::VectorXd sol_p = ldlt.solve(rhs_p);
      sol_p += ldlt.solve(rhs_p - kpol * sol_p);

      x1 = sol_p.head(n);
      y1 = Eigen::VectorXd::Zero(m);
      for (Eigen::Index a = 0; a < ma; ++a) y1[active[a]] = sol_p[n + a];

      bool changed = false;
      // Drop wrongly included inequality rows.
      std::vector<Eigen::Index> next;
      for (Eigen::Index i : active) {
        if (i >= m_eq && y1[i] < -1e-9) {
          in_set[i] = 0;
          y1[i] = 0.0;
          changed = true;
        } else {
          next.push_back(i);
        }
      }
      // Add violated rows.
      const Eigen::VectorXd ax1 = A0 * x1;
      for (Eigen::Index i = m_eq; i < m; ++i) {
        if (!in_set[i] && ax1[i] > up[i] + 1e-9 * (1.0 + std::abs(up[i]))) {
          next.push_back(i);
          in_set[i] = 1;
          changed = true;
        }
      }
      active = std::move(next);
      if (!changed) break;
    }

    for (Eigen::Index i = m_eq; i < m; ++i) y1[i] = std::max(y1[i], 0.0);
    abs_residuals(x1, y1, rp1, rd1);
    if (std::getenv("SUBNAV_QP_TRACE"))
      std::fprintf(stderr, "  qp polish: active=%d rp %.3e->%.3e rd %.3e->%.3e\n",
                   static_cast<int>(active.size()), rp0, rp1, rd0, rd1);
    if (std::max(rp1, rd1) < std::max(rp0, rd0)) {
      xu = x1;
      ysu = y1;
      return true;
    }
    return false;
  };

  auto finalize = [&](QpSolution& out) {
    Eigen::VectorXd ys(m);
    ys.head(m_eq) = out.y_eq;
    ys.tail(m_in) = out.y_in;
    double rp_abs, rd_abs;
    abs_residuals(out.x, ys, rp_abs, rd_abs);
    out.primal_residual = rp_abs;
    out.dual_residual = rd_abs;
    out.objective = 0.5 * out.x.dot(prob.P * out.x) + prob.q.dot(out.x);
    if (relative_ok(out.x, ys, rp_abs, rd_abs)) {
      out.status = QpStatus::kSolved;
    } else if (out.status == QpStatus::kSolved) {
      out.status = QpStatus::kInaccurate;
    }
  };

  int it = 0;
  double best_rp = kInf;
  int last_progress_iter = 0;
  int next_adapt = 50;
  for (it = 1; it <= settings.max_iter; ++it) {
    x_prev = x;
    y_prev = y;

    rhs.head(n) = settings.sigma * x - qs;
    rhs.tail(m) = z - y.cwiseQuotient(rho);
    xz = kkt.ldlt.solve(rhs);
    const Eigen::VectorXd x_tilde = xz.head(n);
    const Eigen::VectorXd nu = xz.tail(m);
    const Eigen::VectorXd z_tilde = z + (nu - y).cwiseQuotient(rho);

    x = settings.alpha * x_tilde + (1.0 - settings.alpha) * x;
    const Eigen::VectorXd z_relaxed = settings.alpha * z_tilde + (1.0 - settings.alpha) * z;
    z = (z_relaxed + y.cwiseQuotient(rho)).cwiseMax(los).cwiseMin(ups);
    y = y + rho.cwiseProduct(z_relaxed - z);

    if (it % settings.check_every != 0 && it != settings.max_iter) continue;

    double rp, rd;
    unscaled_residuals(x, z, y, rp, rd);
    if (std::getenv("SUBNAV_QP_TRACE") && it % 500 == 0) {
      std::fprintf(stderr, "  qp it=%d rp=%.3e rd=%.3e rho=%.3g\n", it, rp, rd, rho_base);
    }
    if (rp <= tol && rd <= tol) {
      sol.status = QpStatus::kSolved;
      break;
    }
    // Mid-run polish: near an active boundary the splitting iteration crawls,
    // while the active-set solve lands exactly; exit early when it succeeds.
    if (settings.polish && m > 0 && (it == 200 || it % 800 == 0) && rp <= 1e3 * tol) {
      Eigen::VectorXd xu = d.cwiseProduct(x);
      Eigen::VectorXd ysu = e.cwiseProduct(y);
      if (polish_pass(xu, ysu)) {
        double rp_abs, rd_abs;
        abs_residuals(xu, ysu, rp_abs, rd_abs);
        if (relative_ok(xu, ysu, rp_abs, rd_abs)) {
          sol.x = xu;
          sol.y_eq = ysu.head(m_eq);
          sol.y_in = ysu.tail(m_in);
          sol.iterations = it;
          sol.status = QpStatus::kSolved;
          finalize(sol);
          return sol;
        }
      }
    }
    // Bail out when the primal residual has plateaued far from tolerance;
    // that is how (near-)infeasible problems present here. Slow convergence
    // toward an active boundary plateaus too, so the cutoff stays well above
    // it (gaps observed in practice are 1e-2 and larger).
    if (rp < 0.9 * best_rp) {
      best_rp = rp;
      last_progress_iter = it;
    } else if (it - last_progress_iter > 1200) {
      sol.status = QpStatus::kInaccurate;
      break;
    }

    // Infeasibility certificates from normalized iterate deltas
    // (thresholds follow common operator-splitting practice).
    const double eps_inf = 1e-5;
    const Eigen::VectorXd dy = e.cwiseProduct(y - y_prev);
    const double dy_norm = dy.lpNorm<Eigen::Infinity>();
    if (m > 0 && dy_norm > 1e-14) {
      const Eigen::VectorXd v = dy / dy_norm;
      const double aty = (A0.transpose() * v).lpNorm<Eigen::Infinity>();
      double support = 0.0;
      bool valid = true;
      for (Eigen::Index i = 0; i < m; ++i) {
        if (v[i] > 0) {
          if (!std::isfinite(up[i])) { valid = false; break; }
          support += up[i] * v[i];
        } else if (v[i] < 0) {
          if (!std::isfinite(lo[i])) { valid = false; break; }
          support += lo[i] * v[i];
        }
      }
      if (valid && aty <= eps_inf && support < -eps_inf) {
        sol.status = QpStatus::kPrimalInfeasible;
        break;
      }
    }
    const Eigen::VectorXd dx = d.cwiseProduct(x - x_prev);
    const double dx_norm = dx.lpNorm<Eigen::Infinity>();
    if (dx_norm > 1e-14) {
      const Eigen::VectorXd v = dx / dx_norm;
      const double pdx = (prob.P * v).lpNorm<Eigen::Infinity>();
      const double qdx = prob.q.dot(v);
      bool cone_ok = true;
      if (m > 0) {
        const Eigen::VectorXd adx = A0 * v;
        for (Eigen::Index i = 0; i < m; ++i) {
          const bool is_eq = i < m_eq;
          if (is_eq && std::abs(adx[i]) > eps_inf) { cone_ok = false; break; }
          if (!is_eq && adx[i] > eps_inf) { cone_ok = false; break; }
        }
      }
      if (cone_ok && pdx <= eps_inf && qdx < -eps_inf) {
        sol.status = QpStatus::kDualInfeasible;
        break;
      }
    }

    // rho adaptation on the residual ratio, on a geometric schedule so
    // refactorizations stay cheap relative to iteration work.
    if (settings.adaptive_rho && it >= next_adapt && rd > 0) {
      next_adapt = static_cast<int>(next_adapt * 2.5);
      const double ratio = std::sqrt(rp / std::max(rd, 1e-16));
      if (ratio > 5.0 || ratio < 0.2) {
        rho_base = std::clamp(rho_base * ratio, kRhoMin, kRhoMax);
        rho = rho_vector(rho_base);
        factorize(kkt, Ps, As, settings.sigma, rho);
        if (!kkt.ok) throw Error("qp: KKT refactorization failed");
      }
    }
  }

  sol.iterations = std::min(it, settings.max_iter);
  sol.x = d.cwiseProduct(x);
  Eigen::VectorXd yu = e.cwiseProduct(y);
  sol.y_eq = yu.head(m_eq);
  sol.y_in = yu.tail(m_in);

  if (sol.status == QpStatus::kPrimalInfeasible || sol.status == QpStatus::kDualInfeasible) {
    sol.objective = std::numeric_limits<double>::quiet_NaN();
    return sol;
  }

  if (settings.polish && m > 0) {
    Eigen::VectorXd x_pol = sol.x, y_pol = yu;
    if (polish_pass(x_pol, y_pol)) {
      sol.x = x_pol;
      sol.y_eq = y_pol.head(m_eq);
      sol.y_in = y_pol.tail(m_in);
    }
  }

  finalize(sol);
  return sol;
}

}  // namespace subnav::qp
