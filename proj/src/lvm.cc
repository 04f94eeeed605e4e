// Copyright 2026 The convasr Authors.
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

#include "convasr/lvm.h"

namespace convasr {

LvmModule::LvmModule(ParamMap& pm, const std::string& prefix,
                     const LvmConfig& config, Rng& rng)
    : config_(config) {
  const int d = config.d_model, dz = config.d_z;
  prior_mu_role_ = Linear(pm, prefix + ".prior.role.mu", d, dz, rng);
  prior_sigma_role_ = Linear(pm, prefix + ".prior.role.sigma", d, dz, rng);
  prior_mu_topic_ = Linear(pm, prefix + ".prior.topic.mu", d, dz, rng);
  prior_sigma_topic_ = Linear(pm, prefix + ".prior.topic.sigma", d, dz, rng);
  posterior_extractor_ =
      TextEncoder(pm, prefix + ".post.extractor", config.vocab_size, d,
                  config.posterior_layers, config.heads, config.d_ff, rng);
  post_mu_role_ = Linear(pm, prefix + ".post.role.mu", 2 * d, dz, rng);
  post_sigma_role_ = Linear(pm, prefix + ".post.role.sigma", 2 * d, dz, rng);
  post_mu_topic_ = Linear(pm, prefix + ".post.topic.mu", 2 * d, dz, rng);
  post_sigma_topic_ = Linear(pm, prefix + ".post.topic.sigma", 2 * d, dz, rng);
}

GaussianParams LvmModule::Prior(LatentBranch branch,
                                const Tensor& pooled) const {
  const Linear& mu_head =
      branch == LatentBranch::kRole ? prior_mu_role_ : prior_mu_topic_;
  const Linear& sigma_head =
      branch == LatentBranch::kRole ? prior_sigma_role_ : prior_sigma_topic_;
  GaussianParams out;
  out.mu = mu_head.Apply(pooled);
  out.sigma = Softplus(sigma_head.Apply(pooled));
  return out;
}

GaussianParams LvmModule::Posterior(LatentBranch branch, const Tensor& pooled,
                                    const std::vector<int>& target_ids) const {
  if (target_ids.empty()) {
    throw InputError("LvmModule::Posterior: empty target");
  }
  Tensor h_y = posterior_extractor_.EncodePooled(target_ids);
  Tensor joint = Concat({pooled, h_y}, 0);
  const Linear& mu_head =
      branch == LatentBranch::kRole ? post_mu_role_ : post_mu_topic_;
  const Linear& sigma_head =
      branch == LatentBranch::kRole ? post_sigma_role_ : post_sigma_topic_;
  GaussianParams out;
  out.mu = mu_head.Apply(joint);
  out.sigma = Softplus(sigma_head.Apply(joint));
  return out;
}

Tensor Reparameterize(const GaussianParams& params, SampleMode mode,
                      Rng* rng) {
  if (mode == SampleMode::kMean) return params.mu;
  if (rng == nullptr) {
    throw ContractError("Reparameterize: sampling requires a generator");
  }
  int dz = params.mu.dim(0);
  std::vector<double> eps(dz);
  for (double& e : eps) e = rng->Gaussian();
  Tensor noise = Tensor::FromVector({dz}, std::move(eps));
  return Add(params.mu, Mul(params.sigma, noise));
}

Tensor KlDiagonalGaussian(const GaussianParams& q, const GaussianParams& p) {
  if (q.mu.shape() != p.mu.shape() || q.sigma.shape() != p.sigma.shape()) {
    throw ShapeError("KlDiagonalGaussian: dimension mismatch");
  }
  for (double s : q.sigma.values()) {
    if (s <= 0) throw NumericError("KlDiagonalGaussian: q.sigma must be > 0");
  }
  for (double s : p.sigma.values()) {
    if (s <= 0) throw NumericError("KlDiagonalGaussian: p.sigma must be > 0");
  }
  int dz = q.mu.dim(0);
  Tensor log_ratio = Sub(Log(p.sigma), Log(q.sigma));
  Tensor diff = Sub(q.mu, p.mu);
  Tensor numer = Add(Mul(q.sigma, q.sigma), Mul(diff, diff));
  Tensor denom = Scale(Mul(p.sigma, p.sigma), 2.0);
  Tensor terms = Add(log_ratio, Div(numer, denom));
  return Sub(Sum(terms), Tensor::Scalar(0.5 * dz));
}

}  // namespace convasr
