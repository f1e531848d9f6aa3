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

#include <cmath>

namespace subnav::models {

namespace {

constexpr double kLogTwoPi = 1.8378770664093454835606594728112;
// Keeps squash outputs strictly inside the bounds and logits finite.
constexpr double kSquashEps = 1e-12;

Eigen::MatrixXd hcat(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (b.cols() == 0) return a;
  Eigen::MatrixXd out(a.rows(), a.cols() + b.cols());
  out << a, b;
  return out;
}

// Column index lists for a layer's parity.
void parity_columns(int dim, int parity, std::vector<int>& active, std::vector<int>& passive) {
  active.clear();
  passive.clear();
  for (int i = 0; i < dim; ++i) {
    if (i % 2 == parity) active.push_back(i);
    else passive.push_back(i);
  }
}

Eigen::MatrixXd gather_cols(const Eigen::MatrixXd& x, const std::vector<int>& idx) {
  Eigen::MatrixXd out(x.rows(), static_cast<Eigen::Index>(idx.size()));
  for (size_t c = 0; c < idx.size(); ++c) out.col(static_cast<Eigen::Index>(c)) = x.col(idx[c]);
  return out;
}

void scatter_cols(Eigen::MatrixXd& x, const std::vector<int>& idx, const Eigen::MatrixXd& vals) {
  for (size_t c = 0; c < idx.size(); ++c) x.col(idx[c]) = vals.col(static_cast<Eigen::Index>(c));
}

}  // namespace

Eigen::MatrixXd BoundedSquash::forward(const Eigen::MatrixXd& x, Eigen::VectorXd& logdet) const {
  const double range = hi - lo;
  Eigen::MatrixXd s = (1.0 + (-x.array()).exp()).inverse();  // sigmoid
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double ld = 0.0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      const double sv = s(r, c);
      ld += std::log(range) + std::log(std::max(sv, kSquashEps)) +
            std::log(std::max(1.0 - sv, kSquashEps));
    }
    logdet[r] += ld;
  }
  const double eps = kSquashEps;
  return (lo + range * s.array()).cwiseMax(lo + eps * range).cwiseMin(hi - eps * range);
}

Eigen::MatrixXd BoundedSquash::inverse(const Eigen::MatrixXd& y, Eigen::VectorXd& logdet) const {
  const double range = hi - lo;
  Eigen::MatrixXd x(y.rows(), y.cols());
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    double ld = 0.0;
    for (Eigen::Index c = 0; c < y.cols(); ++c) {
      double t = (y(r, c) - lo) / range;
      t = std::min(std::max(t, kSquashEps), 1.0 - kSquashEps);
      x(r, c) = std::log(t) - std::log(1.0 - t);
      ld -= std::log(range) + std::log(t) + std::log(1.0 - t);
    }
    logdet[r] += ld;
  }
  return x;
}

FlowCore FlowCore::make(int dim, int cond_dim, int num_layers, int hidden, Rng& rng) {
  FlowCore f;
  f.dim = dim;
  f.cond_dim = cond_dim;
  f.layers.resize(num_layers);
  for (int l = 0; l < num_layers; ++l) {
    const int n_act = f.active_count(l);
    const int n_pas = f.passive_count(l);
    f.layers[l].conditioner =
        nn::Mlp::make({n_pas + cond_dim, hidden, 2 * n_act}, rng, /*zero_last=*/true);
  }
  return f;
}

Eigen::MatrixXd flow_forward(const FlowCore& f, const Eigen::MatrixXd& z,
                             const Eigen::MatrixXd& cond, Eigen::VectorXd* logdet) {
  Eigen::MatrixXd x = z;
  Eigen::VectorXd ld = Eigen::VectorXd::Zero(z.rows());
  std::vector<int> act, pas;
  for (size_t l = 0; l < f.layers.size(); ++l) {
    parity_columns(f.dim, static_cast<int>(l) % 2, act, pas);
    const Eigen::MatrixXd xp = gather_cols(x, pas);
    const Eigen::MatrixXd xa = gather_cols(x, act);
    const Eigen::MatrixXd rt = nn::mlp_apply(f.layers[l].conditioner, hcat(xp, cond));
    const Eigen::Index na = static_cast<Eigen::Index>(act.size());
    const Eigen::MatrixXd log_s =
        f.scale_cap * rt.leftCols(na).array().tanh().matrix();
    const Eigen::MatrixXd shift = rt.rightCols(na);
    const Eigen::MatrixXd ya =
        (xa.array() * log_s.array().exp() + shift.array()).matrix();
    ld += log_s.rowwise().sum();
    scatter_cols(x, act, ya);
  }
  if (f.squash_output) x = f.squash.forward(x, ld);
  if (logdet) *logdet = ld;
  return x;
}

Eigen::MatrixXd flow_inverse(const FlowCore& f, const Eigen::MatrixXd& y,
                             const Eigen::MatrixXd& cond, Eigen::VectorXd* logdet) {
  Eigen::MatrixXd x = y;
  Eigen::VectorXd ld = Eigen::VectorXd::Zero(y.rows());
  if (f.squash_output) x = f.squash.inverse(x, ld);
  std::vector<int> act, pas;
  for (size_t l = f.layers.size(); l-- > 0;) {
    parity_columns(f.dim, static_cast<int>(l) % 2, act, pas);
    const Eigen::MatrixXd xp = gather_cols(x, pas);
    const Eigen::MatrixXd ya = gather_cols(x, act);
    const Eigen::MatrixXd rt = nn::mlp_apply(f.layers[l].conditioner, hcat(xp, cond));
    const Eigen::Index na = static_cast<Eigen::Index>(act.size());
    const Eigen::MatrixXd log_s =
        f.scale_cap * rt.leftCols(na).array().tanh().matrix();
    const Eigen::MatrixXd shift = rt.rightCols(na);
    const Eigen::MatrixXd xa =
        ((ya.array() - shift.array()) * (-log_s.array()).exp()).matrix();
    ld -= log_s.rowwise().sum();
    scatter_cols(x, act, xa);
  }
  if (logdet) *logdet = ld;
  return x;
}

Eigen::VectorXd flow_logprob(const FlowCore& f, const Eigen::MatrixXd& y,
                             const Eigen::MatrixXd& cond) {
  Eigen::VectorXd ld(y.rows());
  ld.setZero();
  const Eigen::MatrixXd z = flow_inverse(f, y, cond, &ld);
  Eigen::VectorXd lp(y.rows());
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    lp[r] = -0.5 * f.dim * kLogTwoPi - 0.5 * z.row(r).squaredNorm() + ld[r];
  }
  return lp;
}

Eigen::VectorXd flow_logprob_forward(const FlowCore& f, const Eigen::MatrixXd& y,
                                     const Eigen::MatrixXd& cond, FlowCache& cache) {
  cache.layers.resize(f.layers.size());
  Eigen::MatrixXd x = y;
  Eigen::VectorXd ld = Eigen::VectorXd::Zero(y.rows());
  if (f.squash_output) x = f.squash.inverse(x, ld);
  std::vector<int> act, pas;
  for (size_t l = f.layers.size(); l-- > 0;) {
    parity_columns(f.dim, static_cast<int>(l) % 2, act, pas);
    FlowLayerCache& lc = cache.layers[l];
    const Eigen::MatrixXd xp = gather_cols(x, pas);
    const Eigen::MatrixXd ya = gather_cols(x, act);
    const Eigen::MatrixXd rt =
        nn::mlp_forward(f.layers[l].conditioner, hcat(xp, cond), lc.mlp);
    const Eigen::Index na = static_cast<Eigen::Index>(act.size());
    lc.tanh_raw = rt.leftCols(na).array().tanh().matrix();
    const Eigen::MatrixXd log_s = f.scale_cap * lc.tanh_raw;
    lc.exp_neg_ls = (-log_s.array()).exp().matrix();
    const Eigen::MatrixXd shift = rt.rightCols(na);
    lc.recovered_a = ((ya.array() - shift.array()) * lc.exp_neg_ls.array()).matrix();
    ld -= log_s.rowwise().sum();
    scatter_cols(x, act, lc.recovered_a);
  }
  cache.z = x;
  Eigen::VectorXd lp(y.rows());
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    lp[r] = -0.5 * f.dim * kLogTwoPi - 0.5 * x.row(r).squaredNorm() + ld[r];
  }
  return lp;
}

Eigen::MatrixXd flow_logprob_backward(const FlowCore& f, const FlowCache& cache,
                                      const Eigen::VectorXd& dlogprob, FlowGrad& grad) {
  const Eigen::Index rows = cache.z.rows();
  Eigen::MatrixXd g_cond = Eigen::MatrixXd::Zero(rows, f.cond_dim);
  // d logprob / dz = -z.
  Eigen::MatrixXd g = (cache.z.array().colwise() * (-dlogprob.array())).matrix();

  std::vector<int> act, pas;
  // The inverse ran layers L-1..0 ending at z, so reverse-mode walks 0..L-1.
  for (size_t l = 0; l < f.layers.size(); ++l) {
    parity_columns(f.dim, static_cast<int>(l) % 2, act, pas);
    const FlowLayerCache& lc = cache.layers[l];
    const Eigen::Index na = static_cast<Eigen::Index>(act.size());
    const Eigen::Index np = static_cast<Eigen::Index>(pas.size());

    const Eigen::MatrixXd g_pas_out = gather_cols(g, pas);
    const Eigen::MatrixXd g_xa = gather_cols(g, act);

    // x_a = (y_a - shift) * exp(-log_s);  logdet term: -sum(log_s).
    const Eigen::MatrixXd g_ya = (g_xa.array() * lc.exp_neg_ls.array()).matrix();
    Eigen::MatrixXd g_log_s =
        (-(g_xa.array() * lc.recovered_a.array())).matrix();
    g_log_s.array().colwise() -= dlogprob.array();
    const Eigen::MatrixXd g_raw =
        (g_log_s.array() * f.scale_cap * (1.0 - lc.tanh_raw.array().square())).matrix();

    Eigen::MatrixXd g_rt(rows, 2 * na);
    g_rt << g_raw, -g_ya;
    const Eigen::MatrixXd g_in =
        nn::mlp_backward(f.layers[l].conditioner, lc.mlp, g_rt, grad.layers[l]);

    if (f.cond_dim > 0) g_cond += g_in.rightCols(f.cond_dim);
    const Eigen::MatrixXd g_pas_total = g_pas_out + g_in.leftCols(np);

    scatter_cols(g, pas, g_pas_total);
    scatter_cols(g, act, g_ya);
  }
  return g_cond;
}

FlowModel FlowModel::make(int horizon, int context_dim, int embed_dim, int num_layers,
                          int hidden, double u_min, double u_max, Rng& rng) {
  FlowModel m;
  m.horizon = horizon;
  m.context_dim = context_dim;
  m.embed = nn::Dense::glorot(embed_dim, context_dim, rng);
  m.core = FlowCore::make(4 * horizon, embed_dim, num_layers, hidden, rng);
  m.core.squash_output = true;
  m.core.squash.lo = u_min;
  m.core.squash.hi = u_max;
  return m;
}

Eigen::RowVectorXd FlowModel::embed_context(const Eigen::VectorXd& context) const {
  return (embed.w * context + embed.b).array().tanh().matrix().transpose();
}

void FlowModel::collect_tensors(std::vector<nn::TensorRef>& out) {
  nn::collect("flow.embed", embed, out);
  for (size_t l = 0; l < core.layers.size(); ++l)
    nn::collect("flow.coupling." + std::to_string(l), core.layers[l].conditioner, out);
}

PriorModel PriorModel::make(int context_dim, int num_layers, int hidden, Rng& rng) {
  PriorModel m;
  m.core = FlowCore::make(context_dim, 0, num_layers, hidden, rng);
  return m;
}

double PriorModel::logprob(const Eigen::VectorXd& context) const {
  const Eigen::MatrixXd y = context.transpose();
  const Eigen::MatrixXd cond(1, 0);
  return flow_logprob(core, y, cond)[0];
}

void PriorModel::collect_tensors(std::vector<nn::TensorRef>& out, Eigen::VectorXd& stats_storage) {
  for (size_t l = 0; l < core.layers.size(); ++l)
    nn::collect("prior.coupling." + std::to_string(l), core.layers[l].conditioner, out);
  stats_storage.resize(3);
  stats_storage << nll_mean, nll_std, trained ? 1.0 : 0.0;
  out.push_back(nn::ref("prior.stats", stats_storage));
}

}  // namespace subnav::models
