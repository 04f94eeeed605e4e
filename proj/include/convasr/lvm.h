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

#ifndef CONVASR_LVM_H_
#define CONVASR_LVM_H_

#include <vector>

#include "convasr/layers.h"

namespace convasr {

// Role and topic variational modules: each branch has a prior network
// (context only) and a posterior network (context plus the current target),
// both emitting a diagonal Gaussian over the latent space.

enum class LatentBranch { kRole, kTopic };

struct GaussianParams {
  Tensor mu;     // d_z
  Tensor sigma;  // d_z, strictly positive per-dimension std
};

enum class SampleMode { kSample, kMean };

struct LvmConfig {
  int d_model = 64;
  int d_z = 16;
  int posterior_layers = 2;
  int heads = 4;
  int d_ff = 128;
  int vocab_size = 0;
};

class LvmModule {
 public:
  LvmModule(ParamMap& pm, const std::string& prefix, const LvmConfig& config,
            Rng& rng);

  // mu = W_mu * pooled + b; sigma = softplus(W_sigma * pooled + b).
  GaussianParams Prior(LatentBranch branch, const Tensor& pooled) const;

  // The posterior conditions on the pooled context and on h_y, the
  // mean-pooled output of the posterior's own transformer stack over the
  // embedded target. Throws InputError when the target is empty.
  GaussianParams Posterior(LatentBranch branch, const Tensor& pooled,
                           const std::vector<int>& target_ids) const;

  int d_z() const { return config_.d_z; }

 private:
  LvmConfig config_;
  // theta: prior heads.
  Linear prior_mu_role_, prior_sigma_role_;
  Linear prior_mu_topic_, prior_sigma_topic_;
  // phi: shared target extractor plus branch-specific heads over
  // concat(pooled, h_y).
  TextEncoder posterior_extractor_;
  Linear post_mu_role_, post_sigma_role_;
  Linear post_mu_topic_, post_sigma_topic_;
};

// z = mu + sigma .* eps with eps ~ N(0, I) from the caller's generator
// (kSample), or z = mu (kMean; rng may be null).
Tensor Reparameterize(const GaussianParams& params, SampleMode mode, Rng* rng);

// Closed-form KL(q || p) for diagonal Gaussians:
//   sum_i [ ln(p.sigma_i / q.sigma_i)
//           + (q.sigma_i^2 + (q.mu_i - p.mu_i)^2) / (2 p.sigma_i^2) - 1/2 ].
// Differentiable through both parameter sets.
Tensor KlDiagonalGaussian(const GaussianParams& q, const GaussianParams& p);

}  // namespace convasr

#endif  // CONVASR_LVM_H_
