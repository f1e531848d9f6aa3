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

#include "subnav/scp.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cmath>
#include <limits>

namespace subnav::scp {

namespace {

// Slack caps below this are physically meaningless (sub-millimeter per step)
// and turn the +-xi <= m rows into badly scaled near-equalities.
constexpr double kSlackFloor = 1e-3;

using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

std::vector<double> cumulative_lengths(const std::vector<Vec3>& pts) {
  std::vector<double> cum(pts.size(), 0.0);
  for (size_t i = 1; i < pts.size(); ++i)
    cum[i] = cum[i - 1] + (pts[i] - pts[i - 1]).norm();
  return cum;
}

Vec3 point_at_arc(const std::vector<Vec3>& pts, const std::vector<double>& cum, double arc) {
  if (arc <= 0.0 || pts.size() == 1) return pts.front();
  if (arc >= cum.back()) return pts.back();
  const auto it = std::upper_bound(cum.begin(), cum.end(), arc);
  const size_t i = static_cast<size_t>(it - cum.begin());
  const double seg = cum[i] - cum[i - 1];
  const double a = seg > 0 ? (arc - cum[i - 1]) / seg : 0.0;
  return pts[i - 1] + a * (pts[i] - pts[i - 1]);
}

// Variable layout inside one subproblem. Navigation slack is ragged: each
// timestep carries entries only for the spheres near its previous-iterate
// position (the others are dynamically irrelevant constants).
struct Layout {
  int T = 0;
  std::vector<std::vector<int>> nav_spheres;  // per t, corridor indices
  std::vector<int> nav_offsets;               // per t, first nav variable
  int nav_total = 0;
  int s_off(int t) const { return 12 * t; }
  int u_off(int t) const { return 12 * T + 4 * t; }
  int xi_off(int t) const { return 12 * T + 4 * (T - 1) + 12 * t; }
  int m_off() const { return 12 * T + 4 * (T - 1) + 12 * (T - 1); }
  int nav_off(int t, int k) const { return m_off() + 1 + nav_offsets[t] + k; }
  int n() const { return m_off() + 1 + nav_total; }
};

struct Subproblem {
  qp::QpProblem qp;
  Layout lay;
};

int L_debug_T(const Subproblem& sp) { return sp.lay.T; }

// Row-wise softmax weights and log-sum-exp of sigma*D, max-shifted.
void softmax_row(const Eigen::RowVectorXd& d, double sigma, Eigen::RowVectorXd& alpha,
                 double& lse) {
  const double dmax = d.maxCoeff();
  Eigen::RowVectorXd e = ((d.array() - dmax) * sigma).exp();
  const double sum = e.sum();
  alpha = e / sum;
  lse = dmax + std::log(sum) / sigma;
  // Drop vanishing weights: coefficients like e^-500 would otherwise enter
  // the constraint matrix and wreck its scaling.
  for (int i = 0; i < alpha.size(); ++i)
    if (alpha[i] < 1e-12) alpha[i] = 0.0;
}

Subproblem assemble(const ScpTask& task, const ScpConfig& cfg, const QuadParams& params,
                    const Trajectory& prev, double trust_s, double trust_u,
                    double slack_cap) {
  const int T = static_cast<int>(prev.states.rows());
  const int V = static_cast<int>(task.corridor.size());
  Subproblem sp;
  sp.lay.T = T;
  const Eigen::MatrixXd d_prev = sphere_distances(prev.states, task.corridor);
  sp.lay.nav_spheres.resize(T);
  sp.lay.nav_offsets.resize(T);
  for (int t = 0; t < T; ++t) {
    sp.lay.nav_offsets[t] = sp.lay.nav_total;
    int best = 0;
    for (int v = 0; v < V; ++v) {
      if (d_prev(t, v) > d_prev(t, best)) best = v;
      if (d_prev(t, v) >= -(task.corridor[v].radius + 2.0))
        sp.lay.nav_spheres[t].push_back(v);
    }
    if (sp.lay.nav_spheres[t].empty()) sp.lay.nav_spheres[t].push_back(best);
    sp.lay.nav_total += static_cast<int>(sp.lay.nav_spheres[t].size());
  }
  const Layout& L = sp.lay;
  const int n = L.n();

  std::vector<Triplet> p_trips, aeq_trips, ain_trips;
  Eigen::VectorXd q = Eigen::VectorXd::Zero(n);

  // Objective: w_dist sum |s_t - goal|^2 + w_ctrl sum |u - u_hover|^2
  //            - w_nav sum xi_nav + w_dyn * m.
  // Control effort is measured from the hover trim; penalizing raw |u|^2
  // rewards cutting lift and lobbing the vehicle ballistically.
  const Control4 u_trim = dynamics::hover_control(params);
  for (int t = 0; t < T; ++t)
    for (int i = 0; i < 12; ++i) {
      p_trips.emplace_back(L.s_off(t) + i, L.s_off(t) + i, 2.0 * cfg.w_dist);
      q[L.s_off(t) + i] = -2.0 * cfg.w_dist * task.s_goal[i];
    }
  for (int t = 0; t < T - 1; ++t)
    for (int i = 0; i < 4; ++i) {
      p_trips.emplace_back(L.u_off(t) + i, L.u_off(t) + i, 2.0 * cfg.w_ctrl);
      q[L.u_off(t) + i] = -2.0 * cfg.w_ctrl * u_trim[i];
    }
  for (int t = 0; t < T; ++t)
    for (size_t k = 0; k < L.nav_spheres[t].size(); ++k)
      q[L.nav_off(t, static_cast<int>(k))] = -cfg.w_nav;
  q[L.m_off()] = cfg.w_dyn;
  // Quadratic regularizer on the dynamics slack. The max-structured penalty
  // alone prices slack only at its peak, which lets the solver ride the cap
  // across the whole trajectory and then fail the homotopy when the cap
  // decays. Scaling inversely with the cap keeps the marginal price of
  // cap-level slack constant, so riding never pays at any stage; the term
  // vanishes at the converged near-zero-slack solution.
  const double slack_reg = cfg.slack_reg / std::max(slack_cap, 1e-3);
  for (int t = 0; t < T - 1; ++t)
    for (int i = 0; i < 12; ++i)
      p_trips.emplace_back(L.xi_off(t) + i, L.xi_off(t) + i, 2.0 * slack_reg);

  // Equalities: affinized dynamics with slack, and pinned endpoints.
  int eq_row = 0;
  Eigen::VectorXd b_eq(12 * (T - 1) + 24);
  for (int t = 0; t < T - 1; ++t) {
    const State12 s_prev = prev.states.row(t).transpose();
    const Control4 u_prev = prev.controls.row(t).transpose();
    const dynamics::AffineDynamics aff = dynamics::affinize(s_prev, u_prev, params);
    for (int r = 0; r < 12; ++r) {
      for (int c = 0; c < 12; ++c)
        if (aff.A(r, c) != 0.0) aeq_trips.emplace_back(eq_row + r, L.s_off(t) + c, -aff.A(r, c));
      for (int c = 0; c < 4; ++c)
        if (aff.B(r, c) != 0.0) aeq_trips.emplace_back(eq_row + r, L.u_off(t) + c, -aff.B(r, c));
      aeq_trips.emplace_back(eq_row + r, L.s_off(t + 1) + r, 1.0);
      aeq_trips.emplace_back(eq_row + r, L.xi_off(t) + r, -1.0);
    }
    b_eq.segment<12>(eq_row) = aff.C;
    eq_row += 12;
  }
  for (int i = 0; i < 12; ++i) aeq_trips.emplace_back(eq_row + i, L.s_off(0) + i, 1.0);
  b_eq.segment<12>(eq_row) = task.s_init;
  eq_row += 12;
  for (int i = 0; i < 12; ++i) aeq_trips.emplace_back(eq_row + i, L.s_off(T - 1) + i, 1.0);
  b_eq.segment<12>(eq_row) = task.s_goal;
  eq_row += 12;

  // Inequalities.
  int in_row = 0;
  std::vector<double> b_in_vals;
  auto add_row = [&](std::initializer_list<std::pair<int, double>> entries, double rhs) {
    for (const auto& [col, val] : entries) ain_trips.emplace_back(in_row, col, val);
    b_in_vals.push_back(rhs);
    ++in_row;
  };

  // Control bounds.
  for (int t = 0; t < T - 1; ++t)
    for (int i = 0; i < 4; ++i) {
      add_row({{L.u_off(t) + i, 1.0}}, params.u_max);
      add_row({{L.u_off(t) + i, -1.0}}, -params.u_min);
    }
  // Trust regions (per-coordinate boxes). The state box is unit-aware:
  // positions and velocities enter the dynamics linearly (no linearization
  // error), so velocities get a wide box and the position box adapts to the
  // local corridor width (inside 0.5 m spheres a 1 m move makes the
  // linearized sphere distances meaningless); a 1 rad angle move stresses
  // the affine model like several meters, so angles get half the radius.
  for (int t = 0; t < T; ++t) {
    double d_loc = -1e9;
    for (int v : L.nav_spheres[t]) d_loc = std::max(d_loc, d_prev(t, v));
    const double pos_box = std::min(trust_s, std::max(0.3, d_loc));
    for (int i = 0; i < 12; ++i) {
      double r = trust_s;
      if (i <= 2) r = pos_box;
      else if (i >= 3 && i <= 5) r = 0.5 * trust_s;   // Euler angles
      else if (i >= 6 && i <= 8) r = 4.0 * trust_s;   // velocities
      const double sp_ti = prev.states(t, i);
      add_row({{L.s_off(t) + i, 1.0}}, sp_ti + r);
      add_row({{L.s_off(t) + i, -1.0}}, -(sp_ti - r));
    }
  }
  for (int t = 0; t < T - 1; ++t)
    for (int i = 0; i < 4; ++i) {
      const double up_ti = prev.controls(t, i);
      add_row({{L.u_off(t) + i, 1.0}}, up_ti + trust_u);
      add_row({{L.u_off(t) + i, -1.0}}, -(up_ti - trust_u));
    }
  // |xi| <= m and m <= slack_cap.
  for (int t = 0; t < T - 1; ++t)
    for (int i = 0; i < 12; ++i) {
      add_row({{L.xi_off(t) + i, 1.0}, {L.m_off(), -1.0}}, 0.0);
      add_row({{L.xi_off(t) + i, -1.0}, {L.m_off(), -1.0}}, 0.0);
    }
  add_row({{L.m_off(), 1.0}}, slack_cap);

  // Navigation: xi_nav <= D linearized about the previous trajectory, and the
  // softmax aggregation keeping the smoothed containment nonnegative. Both
  // run over each timestep's nearby spheres.
  for (int t = 0; t < T; ++t) {
    const Vec3 p_prev = prev.states.row(t).head<3>();
    const auto& ids = L.nav_spheres[t];
    const int nv = static_cast<int>(ids.size());
    Eigen::RowVectorXd d_local(nv);
    for (int k = 0; k < nv; ++k) d_local[k] = d_prev(t, ids[k]);
    for (int k = 0; k < nv; ++k) {
      const int v = ids[k];
      const Vec3 delta = p_prev - task.corridor[v].center;
      const double dist = delta.norm();
      Vec3 grad = Vec3::Zero();  // d D / d p = -delta/|delta|
      if (dist > 1e-12) grad = -delta / dist;
      // xi - grad' p <= D_prev - grad' p_prev
      ain_trips.emplace_back(in_row, L.nav_off(t, k), 1.0);
      for (int a = 0; a < 3; ++a)
        if (grad[a] != 0.0) ain_trips.emplace_back(in_row, L.s_off(t) + a, -grad[a]);
      b_in_vals.push_back(d_local[k] - grad.dot(p_prev));
      ++in_row;
    }
    Eigen::RowVectorXd alpha;
    double lse;
    softmax_row(d_local, cfg.nav_sigma, alpha, lse);
    // -sum_k alpha_k xi_{t,k} <= lse - sum_k alpha_k D_prev_{t,k}
    for (int k = 0; k < nv; ++k)
      if (alpha[k] != 0.0) ain_trips.emplace_back(in_row, L.nav_off(t, k), -alpha[k]);
    b_in_vals.push_back(lse - alpha.dot(d_local));
    ++in_row;
  }

  sp.qp.P.resize(n, n);
  sp.qp.P.setFromTriplets(p_trips.begin(), p_trips.end());
  sp.qp.q = q;
  sp.qp.A_eq.resize(eq_row, n);
  sp.qp.A_eq.setFromTriplets(aeq_trips.begin(), aeq_trips.end());
  sp.qp.b_eq = b_eq;
  sp.qp.A_in.resize(in_row, n);
  sp.qp.A_in.setFromTriplets(ain_trips.begin(), ain_trips.end());
  sp.qp.b_in = Eigen::Map<Eigen::VectorXd>(b_in_vals.data(), in_row);
  return sp;
}

}  // namespace

void ScpConfig::validate() const {
  if (w_dist < 0 || w_ctrl < 0 || w_nav < 0 || w_dyn < 0)
    throw ConfigError("scp: weights must be >= 0");
  if (decay_state <= 0 || decay_state > 1 || decay_control <= 0 || decay_control > 1 ||
      slack_decay <= 0 || slack_decay > 1)
    throw ConfigError("scp: decays must lie in (0,1]");
  if (nav_sigma <= 0) throw ConfigError("scp: nav sigma must be > 0");
  if (horizon_min < 2 || horizon_max < horizon_min)
    throw ConfigError("scp: invalid horizon bounds");
  if (max_segments < 1) throw ConfigError("scp: max_segments must be >= 1");
}

const char* to_string(ScpStatus s) {
  switch (s) {
    case ScpStatus::kSuccess: return "success";
    case ScpStatus::kInaccurate: return "inaccurate";
    case ScpStatus::kInfeasible: return "infeasible";
    case ScpStatus::kSingular: return "singular";
  }
  return "unknown";
}

int horizon_for_length(double length_m, const ScpConfig& cfg) {
  // Average-speed target 1/(points_per_meter * time_margin * 0.025), laid out
  // on the planning timestep.
  const double steps =
      length_m * cfg.points_per_meter * cfg.time_margin * (0.025 / cfg.plan_dt);
  return std::clamp(static_cast<int>(std::lround(steps)), cfg.horizon_min,
                    cfg.horizon_max);
}

Trajectory initialize_scp(const std::vector<Vec3>& polyline, const Control4& hover, int T,
                          double dt) {
  if (polyline.empty()) throw ConfigError("initialize_scp: empty polyline");
  Trajectory traj;
  traj.dt = dt;
  traj.states.setZero(T, 12);
  traj.controls = hover.transpose().replicate(T - 1, 1);
  const std::vector<double> cum = cumulative_lengths(polyline);
  const double total = cum.back();
  for (int t = 0; t < T; ++t) {
    const double arc = (T > 1) ? total * t / (T - 1) : 0.0;
    traj.states.row(t).head<3>() = point_at_arc(polyline, cum, arc).transpose();
  }
  return traj;
}

Eigen::MatrixXd sphere_distances(const Eigen::MatrixXd& states,
                                 const std::vector<world::Sphere>& corridor) {
  const int T = static_cast<int>(states.rows());
  const int V = static_cast<int>(corridor.size());
  Eigen::MatrixXd d(T, V);
  for (int t = 0; t < T; ++t) {
    const Vec3 p = states.row(t).head<3>();
    for (int v = 0; v < V; ++v)
      d(t, v) = corridor[v].radius - (p - corridor[v].center).norm();
  }
  return d;
}

ScpSolution scp_solve(const ScpTask& task, const ScpConfig& cfg, const QuadParams& sim_params) {
  cfg.validate();
  if (task.corridor.empty()) throw ConfigError("scp_solve: empty corridor");

  QuadParams params = sim_params;
  params.dt = cfg.plan_dt;
  const std::vector<double> cum = cumulative_lengths(task.polyline);
  const int T = horizon_for_length(cum.back(), cfg);
  const Control4 hover = dynamics::hover_control(params);

  ScpSolution sol;
  Trajectory prev = initialize_scp(task.polyline, hover, T, params.dt);
  prev.states.row(0) = task.s_init.transpose();
  prev.states.row(T - 1) = task.s_goal.transpose();

  double trust_s = cfg.trust_state;
  double trust_u = cfg.trust_control;
  // Slack bounds are per-step quantities; linearization error per step grows
  // with the planning timestep, so the schedule scales with it.
  const double dt_scale = cfg.plan_dt / 0.025;
  const double slack_floor = kSlackFloor * dt_scale;
  double slack_cap = cfg.slack_max * dt_scale;
  double schedule_cap = slack_cap;
  double last_max_slack = slack_cap;
  double j_prev = std::numeric_limits<double>::infinity();
  int resets = 0;
  qp::QpSolution warm;
  bool have_warm = false;
  bool last_inaccurate = false;

  for (int iter = 0; iter < cfg.max_iterations; ++iter) {
    const auto t_assemble = std::chrono::steady_clock::now();
    Subproblem sp;
    try {
      sp = assemble(task, cfg, params, prev, trust_s, trust_u, slack_cap);
    } catch (const DynamicsSingularityError&) {
      sol.status = ScpStatus::kSingular;
      sol.iterations = iter;
      return sol;
    }
    // Inexact scheme: loose subproblems while the homotopy is moving, the
    // configured tolerance once the objective settles (final re-solve below).
    qp::QpSettings qps = cfg.qp;
    qps.tol = std::max(cfg.qp.tol, 1e-4);
    qps.max_iter = std::min(cfg.qp.max_iter, 6000);
    const auto t_solve = std::chrono::steady_clock::now();
    const qp::QpSolution qsol = qp::solve_qp(sp.qp, qps, have_warm ? &warm : nullptr);
    if (std::getenv("SUBNAV_SCP_TIME")) {
      const auto t_end = std::chrono::steady_clock::now();
      std::fprintf(stderr, "  iter %d: assemble %.2fs solve %.2fs (%d admm)\n", iter,
                   std::chrono::duration<double>(t_solve - t_assemble).count(),
                   std::chrono::duration<double>(t_end - t_solve).count(), qsol.iterations);
    }
    if (std::getenv("SUBNAV_SCP_TRACE")) {
      std::fprintf(stderr, "scp iter %d: qp %s in %d iters, rp=%.2e rd=%.2e cap=%.2e\n",
                   iter, qp::to_string(qsol.status), qsol.iterations,
                   qsol.primal_residual, qsol.dual_residual, slack_cap);
    }
    // A stalled solve with a large primal residual is an infeasibility signal
    // (the residual plateaus at the constraint-set gap); mildly inaccurate
    // solves near an active boundary are kept as iterates.
    const bool stalled = qsol.status == qp::QpStatus::kInaccurate &&
                         qsol.primal_residual > 1e4 * cfg.qp.tol;
    if (stalled && std::getenv("SUBNAV_SCP_TRACE")) {
      const Eigen::VectorXd viol_in =
          (sp.qp.A_in * qsol.x - sp.qp.b_in).cwiseMax(0.0);
      const Eigen::VectorXd viol_eq = (sp.qp.A_eq * qsol.x - sp.qp.b_eq).cwiseAbs();
      const int T_ = L_debug_T(sp);
      const int n_ub = 8 * (T_ - 1);
      const int n_ts = 24 * T_;
      const int n_tu = 8 * (T_ - 1);
      const int n_xi = 24 * (T_ - 1) + 1;
      int off = 0;
      auto blockmax = [&](int len) {
        double m = len > 0 ? viol_in.segment(off, len).maxCoeff() : 0.0;
        off += len;
        return m;
      };
      const double v_ub = blockmax(n_ub), v_ts = blockmax(n_ts), v_tu = blockmax(n_tu),
                   v_xi = blockmax(n_xi),
                   v_nav = blockmax(static_cast<int>(viol_in.size()) - off);
      std::fprintf(stderr,
                   "   viol: eq=%.3g ubound=%.3g trust_s=%.3g trust_u=%.3g xi=%.3g nav=%.3g\n",
                   viol_eq.maxCoeff(), v_ub, v_ts, v_tu, v_xi, v_nav);
    }
    if (stalled || qsol.status == qp::QpStatus::kPrimalInfeasible ||
        qsol.status == qp::QpStatus::kDualInfeasible) {
      if (resets == 0) {
        // Relax once: trust radii restart from their initial values. The
        // slack cap keeps its current value, so the solver must work its way
        // back to a low-slack trajectory inside the enlarged region.
        trust_s = cfg.trust_state;
        trust_u = cfg.trust_control;
        resets = 1;
        have_warm = false;
        continue;
      }
      sol.status = ScpStatus::kInfeasible;
      sol.iterations = iter;
      return sol;
    }
    last_inaccurate = (qsol.status == qp::QpStatus::kInaccurate &&
                       qsol.primal_residual > 1e2 * cfg.qp.tol);
    warm = qsol;
    have_warm = true;

    const Layout& L = sp.lay;
    Trajectory next;
    next.dt = params.dt;
    next.states.resize(T, 12);
    next.controls.resize(T - 1, 4);
    for (int t = 0; t < T; ++t)
      next.states.row(t) = qsol.x.segment<12>(L.s_off(t)).transpose();
    for (int t = 0; t < T - 1; ++t)
      next.controls.row(t) =
          dynamics::clamp_control(qsol.x.segment<4>(L.u_off(t)), params).transpose();

    double max_slack = 0.0;
    for (int t = 0; t < T - 1; ++t)
      max_slack = std::max(max_slack,
                           qsol.x.segment<12>(L.xi_off(t)).cwiseAbs().maxCoeff());
    if (std::getenv("SUBNAV_SCP_TRACE")) {
      double blocks[4] = {0, 0, 0, 0};
      for (int t = 0; t < T - 1; ++t)
        for (int b = 0; b < 4; ++b)
          blocks[b] = std::max(blocks[b],
                               qsol.x.segment<3>(L.xi_off(t) + 3 * b).cwiseAbs().maxCoeff());
      std::fprintf(stderr, "   slack blocks: pos=%.3g ang=%.3g vel=%.3g rate=%.3g\n",
                   blocks[0], blocks[1], blocks[2], blocks[3]);
    }

    // Objective per the multi-term cost at this iterate. The navigation term
    // is evaluated in closed form (true sphere distances over all spheres) so
    // the improvement test is not rattled by the per-step sphere sets.
    const Control4 u_trim = dynamics::hover_control(params);
    double j = 0.0;
    for (int t = 0; t < T; ++t)
      j += cfg.w_dist * (next.states.row(t).transpose() - task.s_goal).squaredNorm();
    for (int t = 0; t < T - 1; ++t)
      j += cfg.w_ctrl * (next.controls.row(t).transpose() - u_trim).squaredNorm();
    j += -cfg.w_nav * sphere_distances(next.states, task.corridor).sum();
    j += cfg.w_dyn * max_slack;

    last_max_slack = max_slack;
    prev = next;
    sol.trajectory = next;
    sol.objective = j;
    sol.objective_history.push_back(j);
    sol.max_dynamics_slack = max_slack;
    sol.final_slack_bound = slack_cap;
    sol.iterations = iter + 1;

    const double improvement = j_prev - j;
    j_prev = j;
    // During the homotopy J legitimately climbs as the slack budget closes;
    // the improvement test applies once the schedule has bottomed out. The
    // threshold acts relatively on large objectives, where a fixed 0.01 on a
    // several-thousand J would never fire.
    if (iter >= 1 && slack_cap <= 2.0 * slack_floor &&
        improvement < std::max(cfg.min_improvement, 1e-5 * std::abs(j)))
      break;

    trust_s *= cfg.decay_state;
    trust_u *= cfg.decay_control;
    // The cap is floored at a numerically meaningful level; below this the
    // +-xi <= m rows degenerate into badly scaled equalities.
    // Geometric decay with feedback: the cap follows the slack actually
    // achieved so consecutive feasible sets overlap within one trust step,
    // floored where the +-xi <= m rows would degenerate.
    schedule_cap *= cfg.slack_decay;
    slack_cap = std::max({schedule_cap, 0.6 * last_max_slack, slack_floor});
  }
  (void)last_inaccurate;

  // Final pass at the configured tolerance, warm-started from the homotopy.
  double final_rp = std::numeric_limits<double>::infinity();
  try {
    const Subproblem sp = assemble(task, cfg, params, prev, trust_s, trust_u, slack_cap);
    const qp::QpSolution qsol = qp::solve_qp(sp.qp, cfg.qp, have_warm ? &warm : nullptr);
    if (qsol.status == qp::QpStatus::kSolved ||
        qsol.status == qp::QpStatus::kInaccurate) {
      const Layout& L = sp.lay;
      Trajectory final_traj;
      final_traj.dt = params.dt;
      final_traj.states.resize(T, 12);
      final_traj.controls.resize(T - 1, 4);
      for (int t = 0; t < T; ++t)
        final_traj.states.row(t) = qsol.x.segment<12>(L.s_off(t)).transpose();
      for (int t = 0; t < T - 1; ++t)
        final_traj.controls.row(t) =
            dynamics::clamp_control(qsol.x.segment<4>(L.u_off(t)), params).transpose();
      double max_slack = 0.0;
      for (int t = 0; t < T - 1; ++t)
        max_slack = std::max(max_slack,
                             qsol.x.segment<12>(L.xi_off(t)).cwiseAbs().maxCoeff());
      sol.trajectory = final_traj;
      sol.max_dynamics_slack = max_slack;
      sol.final_slack_bound = slack_cap;
      final_rp = qsol.primal_residual;
      if (std::getenv("SUBNAV_SCP_TRACE")) {
        std::fprintf(stderr, "scp final: qp %s in %d iters, rp=%.2e maxslack=%.3g cap=%.3g\n",
                     qp::to_string(qsol.status), qsol.iterations, qsol.primal_residual,
                     max_slack, slack_cap);
      }
    }
  } catch (const DynamicsSingularityError&) {
    sol.status = ScpStatus::kSingular;
    return sol;
  }

  const double tol_slack = sol.final_slack_bound + 100.0 * cfg.qp.tol;
  if (sol.max_dynamics_slack <= tol_slack && final_rp <= 1e3 * cfg.qp.tol) {
    sol.status = ScpStatus::kSuccess;
  } else {
    sol.status = ScpStatus::kInaccurate;
  }
  return sol;
}

std::vector<ScpSolution> scp_solve_segmented(const ScpTask& task, const ScpConfig& cfg,
                                             const QuadParams& params) {
  const std::vector<double> cum = cumulative_lengths(task.polyline);
  const double total = cum.back();
  const int t_raw = static_cast<int>(
      std::lround(total * cfg.points_per_meter * cfg.time_margin * (0.025 / cfg.plan_dt)));
  const int n_seg =
      std::min(cfg.max_segments,
               std::max(1, (t_raw + cfg.horizon_max - 1) / cfg.horizon_max));

  std::vector<ScpSolution> out;
  for (int seg = 0; seg < n_seg; ++seg) {
    const double arc_lo = total * seg / n_seg;
    const double arc_hi = total * (seg + 1) / n_seg;
    std::vector<Vec3> sub;
    sub.push_back(point_at_arc(task.polyline, cum, arc_lo));
    for (size_t i = 0; i < task.polyline.size(); ++i)
      if (cum[i] > arc_lo && cum[i] < arc_hi) sub.push_back(task.polyline[i]);
    sub.push_back(point_at_arc(task.polyline, cum, arc_hi));

    ScpTask sub_task;
    sub_task.polyline = sub;
    sub_task.corridor = task.corridor;
    sub_task.s_init = State12::Zero();
    sub_task.s_goal = State12::Zero();
    sub_task.s_init.head<3>() = sub.front();
    sub_task.s_goal.head<3>() = sub.back();
    if (seg == 0) sub_task.s_init = task.s_init;
    if (seg == n_seg - 1) sub_task.s_goal = task.s_goal;

    out.push_back(scp_solve(sub_task, cfg, params));
    if (out.back().status != ScpStatus::kSuccess) break;
  }
  return out;
}

}  // namespace subnav::scp
