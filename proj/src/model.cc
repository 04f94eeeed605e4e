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

#include "convasr/model.h"

#include <cmath>

namespace convasr {

void ModelConfig::Validate() const {
  if (n_con < 1 || enc_layers_text < 1 || dec_layers < 1) {
    throw ConfigError("ModelConfig: layer counts must be >= 1");
  }
  if (d_model < 1 || d_ff < 1 || d_z < 1 || heads < 1) {
    throw ConfigError("ModelConfig: widths must be >= 1");
  }
  if (d_model % heads != 0) {
    throw ConfigError("ModelConfig: d_model must be divisible by heads");
  }
  if (conv_kernel < 1 || conv_kernel % 2 == 0) {
    throw ConfigError("ModelConfig: conv_kernel must be odd");
  }
  if (vocab_size < Vocabulary::kFirstCharId + 1) {
    throw ConfigError("ModelConfig: vocab_size must cover reserved ids");
  }
  if (feat_dim < 1) throw ConfigError("ModelConfig: feat_dim must be >= 1");
  if (max_decode_len < 2) {
    throw ConfigError("ModelConfig: max_decode_len must be >= 2");
  }
}

SpeechEncoder::SpeechEncoder(ParamMap& pm, const ModelConfig& config, Rng& rng)
    : d_model_(config.d_model),
      feat_dim_(config.feat_dim),
      subsample_x2_(config.subsample_x2) {
  int in_dim = subsample_x2_ ? 2 * config.feat_dim : config.feat_dim;
  input_proj_ = Linear(pm, "speech.in", in_dim, config.d_model, rng);
  for (int i = 0; i < config.n_con; ++i) {
    blocks_.emplace_back(pm, "speech.block" + std::to_string(i),
                         config.d_model, config.heads, config.d_ff,
                         config.conv_kernel, rng);
  }
}

Tensor SpeechEncoder::Encode(const FeatureSequence& feats) const {
  feats.Validate();
  if (feats.dim != feat_dim_) {
    throw ShapeError("SpeechEncoder: feature dim " + std::to_string(feats.dim) +
                     " does not match configured " + std::to_string(feat_dim_));
  }
  Tensor x;
  if (subsample_x2_) {
    int t_out = feats.frames / 2;
    if (t_out < 1) {
      throw InputError("SpeechEncoder: too few frames after x2 subsampling");
    }
    // Strided projection over concatenated frame pairs.
    std::vector<double> rows(static_cast<size_t>(t_out) * 2 * feats.dim);
    for (int t = 0; t < t_out; ++t) {
      for (int f = 0; f < feats.dim; ++f) {
        rows[t * 2 * feats.dim + f] = feats.at(2 * t, f);
        rows[t * 2 * feats.dim + feats.dim + f] = feats.at(2 * t + 1, f);
      }
    }
    x = input_proj_.Apply(
        Tensor::FromVector({t_out, 2 * feats.dim}, std::move(rows)));
  } else {
    x = input_proj_.Apply(
        Tensor::FromVector({feats.frames, feats.dim}, feats.data));
  }
  x = Add(x, PositionalEncoding(x.dim(0), d_model_));
  for (const auto& block : blocks_) x = block.Apply(x);
  return x;
}

Decoder::Decoder(ParamMap& pm, const ModelConfig& config, Rng& rng)
    : d_model_(config.d_model) {
  embedding_ = pm.Create("dec.emb", {config.vocab_size, config.d_model});
  InitGaussian(embedding_, rng,
               1.0 / std::sqrt(static_cast<double>(config.d_model)));
  for (int i = 0; i < config.dec_layers; ++i) {
    layers_.emplace_back(pm, "dec.layer" + std::to_string(i), config.d_model,
                         config.heads, config.d_ff, rng);
  }
  z_proj_role_ = Linear(pm, "dec.fusion.zrole", config.d_z, config.d_model, rng);
  z_proj_dia_ = Linear(pm, "dec.fusion.zdia", config.d_z, config.d_model, rng);
  fusion_attn_ = MultiHeadAttention(pm, "dec.fusion.attn", config.d_model,
                                    config.heads, rng);
  fusion_ffn_ =
      FeedForward(pm, "dec.fusion.ffn", config.d_model, config.d_ff, rng);
  fusion_ln1_ = LayerNormModule(pm, "dec.fusion.ln1", config.d_model);
  fusion_ln2_ = LayerNormModule(pm, "dec.fusion.ln2", config.d_model);
  fusion_bias_ = pm.Create("dec.fusion.bias", {config.d_model});
  out_ = Linear(pm, "dec.out", config.d_model, config.vocab_size, rng);
}

Tensor Decoder::HiddenStates(const std::vector<int>& input_ids,
                             const Tensor& enc) const {
  Tensor x = EmbedTokens(embedding_, input_ids, d_model_);
  Tensor mask = CausalMask(static_cast<int>(input_ids.size()));
  for (const auto& layer : layers_) x = layer.Apply(x, enc, mask);
  return x;
}

Tensor Decoder::FuseRow(const Tensor& h_row, const Tensor& zr_row,
                        const Tensor& zd_row) const {
  Tensor memory = Concat({h_row, zr_row, zd_row}, 0);
  Tensor attended = fusion_attn_.Apply(h_row, memory, nullptr);
  Tensor u = fusion_ln1_.Apply(Add(h_row, attended));
  Tensor merged = fusion_ln2_.Apply(Add(u, fusion_ffn_.Apply(u)));
  return Tanh(Add(merged, fusion_bias_));
}

Tensor Decoder::ForwardAll(const std::vector<int>& input_ids,
                           const Tensor& enc, const Tensor& z_role,
                           const Tensor& z_dia) const {
  Tensor h = HiddenStates(input_ids, enc);
  Tensor zr_row = Reshape(z_proj_role_.Apply(z_role), {1, d_model_});
  Tensor zd_row = Reshape(z_proj_dia_.Apply(z_dia), {1, d_model_});
  std::vector<Tensor> rows;
  rows.reserve(input_ids.size());
  for (int t = 0; t < static_cast<int>(input_ids.size()); ++t) {
    rows.push_back(FuseRow(SliceRows(h, t, 1), zr_row, zd_row));
  }
  Tensor fused = Concat(rows, 0);
  return Softmax(out_.Apply(fused), 1);
}

Tensor Decoder::StepDistribution(const std::vector<int>& prev_tokens,
                                 const Tensor& enc, const Tensor& z_role,
                                 const Tensor& z_dia) const {
  std::vector<int> input_ids;
  input_ids.reserve(prev_tokens.size() + 1);
  input_ids.push_back(Vocabulary::kSosId);
  input_ids.insert(input_ids.end(), prev_tokens.begin(), prev_tokens.end());
  Tensor probs = ForwardAll(input_ids, enc, z_role, z_dia);
  int t_last = probs.dim(0) - 1;
  return Reshape(SliceRows(probs, t_last, 1), {probs.dim(1)});
}

AsrModel::AsrModel(const ModelConfig& config, bool with_lvm, uint64_t seed)
    : config_(config) {
  config_.Validate();
  // Independent init streams per module, so adding the LVM at stage 2 does
  // not disturb backbone initialization.
  Rng speech_rng(SubSeed(seed, "init.speech"));
  Rng text_rng(SubSeed(seed, "init.text"));
  Rng dec_rng(SubSeed(seed, "init.dec"));
  speech_ = SpeechEncoder(params_, config_, speech_rng);
  text_ = TextEncoder(params_, "text", config_.vocab_size, config_.d_model,
                      config_.enc_layers_text, config_.heads, config_.d_ff,
                      text_rng);
  decoder_ = Decoder(params_, config_, dec_rng);
  if (with_lvm) {
    Rng lvm_rng(SubSeed(seed, "init.lvm"));
    LvmConfig lvm_config;
    lvm_config.d_model = config_.d_model;
    lvm_config.d_z = config_.d_z;
    lvm_config.heads = config_.heads;
    lvm_config.d_ff = config_.d_ff;
    lvm_config.vocab_size = config_.vocab_size;
    lvm_ = std::make_unique<LvmModule>(params_, "lvm", lvm_config, lvm_rng);
  }
}

const LvmModule& AsrModel::lvm() const {
  if (!lvm_) throw ContractError("AsrModel: model built without LVM");
  return *lvm_;
}

Tensor TeacherForcedLogProbs(const AsrModel& model,
                             const std::vector<int>& targets,
                             const Tensor& enc, const Tensor& z_role,
                             const Tensor& z_dia) {
  if (targets.empty()) {
    throw InputError("TeacherForcedLogProbs: empty target sequence");
  }
  std::vector<int> input_ids;
  input_ids.reserve(targets.size());
  input_ids.push_back(Vocabulary::kSosId);
  input_ids.insert(input_ids.end(), targets.begin(), targets.end() - 1);
  Tensor probs = model.decoder().ForwardAll(input_ids, enc, z_role, z_dia);
  return Log(GatherRows(probs, targets));
}

}  // namespace convasr
