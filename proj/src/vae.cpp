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

#include "subnav/vae.hpp"

#include <cmath>

namespace subnav::models {

Eigen::VectorXd extract_patch(const world::SdfGrid& sdf, const Vec3& world_pos,
                              const PatchSpec& spec) {
  Eigen::VectorXd patch(spec.size());
  int n = 0;
  for (int k = 0; k < spec.nz; ++k) {
    const double dz = (k - 0.5 * (spec.nz - 1)) * spec.sz;
    for (int j = 0; j < spec.ny; ++j) {
      const double dy = (j - 0.5 * (spec.ny - 1)) * spec.sy;
      for (int i = 0; i < spec.nx; ++i) {
        const double dx = (i - 0.5 * (spec.nx - 1)) * spec.sx;
        const double v = world::sdf_query(sdf, world_pos + Vec3(dx, dy, dz));
        patch[n++] = std::clamp(v, -spec.clamp, spec.clamp) / spec.clamp;
      }
    }
  }
  return patch;
}

VaeModel VaeModel::make(int input_dim, int hidden, int latent, Rng& rng) {
  VaeModel v;
  v.input_dim = input_dim;
  v.latent_dim = latent;
  v.encoder = nn::Mlp::make({input_dim, hidden, 2 * latent}, rng);
  v.decoder = nn::Mlp::make({latent, hidden, input_dim}, rng);
  return v;
}

void VaeModel::collect_tensors(std::vector<nn::TensorRef>& out) {
  nn::collect("vae.encoder", encoder, out);
  nn::collect("vae.decoder", decoder, out);
}

void vae_encode(const VaeModel& v, const Eigen::MatrixXd& patches,
                Eigen::MatrixXd& means, Eigen::MatrixXd& logvars) {
  const Eigen::MatrixXd out = nn::mlp_apply(v.encoder, patches);
  means = out.leftCols(v.latent_dim);
  logvars = out.rightCols(v.latent_dim);
}

Eigen::MatrixXd vae_sample(const Eigen::MatrixXd& means, const Eigen::MatrixXd& logvars,
                           const Eigen::MatrixXd& eps) {
  return means.array() + (0.5 * logvars.array()).exp() * eps.array();
}

Eigen::MatrixXd vae_decode(const VaeModel& v, const Eigen::MatrixXd& latents) {
  return nn::mlp_apply(v.decoder, latents);
}

Eigen::VectorXd vae_kl(const Eigen::MatrixXd& means, const Eigen::MatrixXd& logvars) {
  return 0.5 * (means.array().square() + logvars.array().exp() - 1.0 - logvars.array())
             .rowwise()
             .sum();
}

VaeLoss vae_elbo_backward(const VaeModel& v, const Eigen::MatrixXd& patches,
                          const Eigen::MatrixXd& eps, double beta, VaeGrad& grad) {
  nn::MlpCache enc_cache, dec_cache;
  const Eigen::MatrixXd enc_out = nn::mlp_forward(v.encoder, patches, enc_cache);
  const Eigen::MatrixXd means = enc_out.leftCols(v.latent_dim);
  const Eigen::MatrixXd logvars = enc_out.rightCols(v.latent_dim);
  const Eigen::MatrixXd std = (0.5 * logvars.array()).exp().matrix();
  const Eigen::MatrixXd z = means.array() + std.array() * eps.array();
  const Eigen::MatrixXd recon = nn::mlp_forward(v.decoder, z, dec_cache);

  const Eigen::MatrixXd diff = recon - patches;
  VaeLoss loss;
  loss.reconstruction = diff.squaredNorm();
  loss.kl = vae_kl(means, logvars).sum();
  loss.total = loss.reconstruction + beta * loss.kl;

  // d recon_loss / d recon = 2*diff; through decoder to z.
  const Eigen::MatrixXd g_z = nn::mlp_backward(v.decoder, dec_cache, 2.0 * diff, grad.decoder);

  // z = mean + exp(logvar/2)*eps; KL adds beta*mean and beta*(e^lv - 1)/2.
  Eigen::MatrixXd g_mean = g_z + beta * means;
  Eigen::MatrixXd g_logvar =
      (g_z.array() * eps.array() * 0.5 * std.array() +
       beta * 0.5 * (logvars.array().exp() - 1.0))
          .matrix();
  Eigen::MatrixXd g_enc(patches.rows(), 2 * v.latent_dim);
  g_enc << g_mean, g_logvar;
  nn::mlp_backward(v.encoder, enc_cache, g_enc, grad.encoder);
  return loss;
}

Eigen::VectorXd build_context(const Eigen::VectorXd& env_latent,
                              const dynamics::State12& state,
                              const dynamics::State12& goal,
                              const ContextScale& sc) {
  const auto normalize = [&sc](const dynamics::State12& s) {
    Eigen::Matrix<double, 12, 1> n;
    n.segment<3>(0) = s.segment<3>(0) / sc.position;
    n.segment<3>(3) = s.segment<3>(3) / sc.angle;
    n.segment<3>(6) = s.segment<3>(6) / sc.velocity;
    n.segment<3>(9) = s.segment<3>(9) / sc.body_rate;
    return n;
  };
  Eigen::VectorXd c(env_latent.size() + 24);
  c.head(env_latent.size()) = env_latent;
  c.segment(env_latent.size(), 12) = normalize(state);
  c.tail(12) = normalize(goal);
  return c;
}

}  // namespace subnav::models
