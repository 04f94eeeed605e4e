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

#ifndef CONVASR_MODEL_H_
#define CONVASR_MODEL_H_

#include <memory>
#include <string>
#include <vector>

#include "convasr/corpus.h"
#include "convasr/layers.h"
#include "convasr/lvm.h"

namespace convasr {

struct ModelConfig {
  int n_con = 2;            // conformer blocks in the speech encoder
  int enc_layers_text = 2;  // shared text encoder depth
  int dec_layers = 2;
  int d_model = 64;
  int heads = 4;
  int d_ff = 128;
  int conv_kernel = 7;
  int d_z = 16;
  int vocab_size = 0;  // including reserved ids
  int feat_dim = 8;
  bool subsample_x2 = true;
  int max_decode_len = 48;

  void Validate() const;
};

class SpeechEncoder {
 public:
  SpeechEncoder() = default;
  SpeechEncoder(ParamMap& pm, const ModelConfig& config, Rng& rng);

  // Input projection (optionally with x2 frame subsampling over concatenated
  // frame pairs), then the conformer stack. Output is T' x d_model.
  Tensor Encode(const FeatureSequence& feats) const;

 private:
  Linear input_proj_;
  std::vector<ConformerBlock> blocks_;
  int d_model_ = 0;
  int feat_dim_ = 0;
  bool subsample_x2_ = true;
};

// Attention decoder. Hidden states from causal self-attention plus
// cross-attention are merged with the projected latent vectors by a fusion
// transformer layer that attends, per step, over [h_t; z_role; z_dia]; the
// merged state passes through tanh(. + b) and the output softmax.
class Decoder {
 public:
  Decoder() = default;
  Decoder(ParamMap& pm, const ModelConfig& config, Rng& rng);

  // States of a teacher-forced pass; input_ids start with sos.
  Tensor HiddenStates(const std::vector<int>& input_ids,
                      const Tensor& enc) const;
  // T x vocab probability matrix for the teacher-forced input sequence.
  Tensor ForwardAll(const std::vector<int>& input_ids, const Tensor& enc,
                    const Tensor& z_role, const Tensor& z_dia) const;
  // Probability vector over the vocabulary for the token following
  // prev_tokens (character ids, sos excluded).
  Tensor StepDistribution(const std::vector<int>& prev_tokens,
                          const Tensor& enc, const Tensor& z_role,
                          const Tensor& z_dia) const;

 private:
  Tensor FuseRow(const Tensor& h_row, const Tensor& zr_row,
                 const Tensor& zd_row) const;

  Tensor embedding_;
  std::vector<TransformerDecoderLayer> layers_;
  Linear z_proj_role_, z_proj_dia_;
  MultiHeadAttention fusion_attn_;
  FeedForward fusion_ffn_;
  LayerNormModule fusion_ln1_, fusion_ln2_;
  Tensor fusion_bias_;
  Linear out_;
  int d_model_ = 0;
};

// The full model: conformer speech encoder, shared text encoder, decoder,
// and (from stage 2 on) the latent variational module.
class AsrModel {
 public:
  AsrModel(const ModelConfig& config, bool with_lvm, uint64_t seed);

  const ModelConfig& config() const { return config_; }
  ParamMap& params() { return params_; }
  const ParamMap& params() const { return params_; }
  const SpeechEncoder& speech_encoder() const { return speech_; }
  const TextEncoder& text_encoder() const { return text_; }
  const Decoder& decoder() const { return decoder_; }
  bool with_lvm() const { return lvm_ != nullptr; }
  const LvmModule& lvm() const;
  Tensor ZeroLatent() const { return Tensor::Zeros({config_.d_z}); }

 private:
  ModelConfig config_;
  ParamMap params_;
  SpeechEncoder speech_;
  TextEncoder text_;
  Decoder decoder_;
  std::unique_ptr<LvmModule> lvm_;
};

// Per-step log-probabilities of `targets` (characters plus final eos) under
// teacher forcing; rank-1, one entry per target token.
Tensor TeacherForcedLogProbs(const AsrModel& model,
                             const std::vector<int>& targets,
                             const Tensor& enc, const Tensor& z_role,
                             const Tensor& z_dia);

}  // namespace convasr

#endif  // CONVASR_MODEL_H_
