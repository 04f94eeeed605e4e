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

#ifndef CONVASR_LAYERS_H_
#define CONVASR_LAYERS_H_

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "convasr/tensor.h"

namespace convasr {

// Named trainable tensors in stable insertion order. Insertion order drives
// optimizer iteration and checkpoint layout, so runs are reproducible.
class ParamMap {
 public:
  Tensor Create(const std::string& name, const Shape& shape);
  Tensor Get(const std::string& name) const;
  bool Has(const std::string& name) const { return index_.count(name) > 0; }
  const std::vector<std::pair<std::string, Tensor>>& items() const {
    return items_;
  }
  int64_t TotalElements() const;
  void ZeroGrads();

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
  std::unordered_map<std::string, size_t> index_;
};

void InitXavier(Tensor t, Rng& rng);
void InitGaussian(Tensor t, Rng& rng, double stddev);

// Sinusoidal absolute positions, returned as a constant (no-grad) tensor.
Tensor PositionalEncoding(int t_len, int d_model);

// Lower-triangular 0/1 matrix for causal self-attention.
Tensor CausalMask(int t_len);

struct Linear {
  Tensor w;  // in x out
  Tensor b;  // out
  int in = 0, out = 0;

  Linear() = default;
  Linear(ParamMap& pm, const std::string& prefix, int in_dim, int out_dim,
         Rng& rng);
  // Accepts rank-1 (in) or rank-2 (T x in).
  Tensor Apply(const Tensor& x) const;
};

struct LayerNormModule {
  Tensor gain, bias;

  LayerNormModule() = default;
  LayerNormModule(ParamMap& pm, const std::string& prefix, int dim);
  Tensor Apply(const Tensor& x) const { return LayerNorm(x, gain, bias); }
};

struct MultiHeadAttention {
  Linear wq, wk, wv, wo;
  int heads = 1;
  int d_model = 0;

  MultiHeadAttention() = default;
  MultiHeadAttention(ParamMap& pm, const std::string& prefix, int d_model,
                     int heads, Rng& rng);
  // query: Tq x d, memory: S x d, mask (optional): Tq x S constant 0/1.
  Tensor Apply(const Tensor& query, const Tensor& memory,
               const Tensor* mask) const;
};

// Two-layer position-wise network with a swish hidden activation (smooth
// everywhere, which keeps finite-difference checks clean).
struct FeedForward {
  Linear l1, l2;

  FeedForward() = default;
  FeedForward(ParamMap& pm, const std::string& prefix, int d_model, int d_ff,
              Rng& rng);
  Tensor Apply(const Tensor& x) const;
};

// Post-norm transformer encoder layer.
struct TransformerEncoderLayer {
  MultiHeadAttention attn;
  FeedForward ffn;
  LayerNormModule ln1, ln2;

  TransformerEncoderLayer() = default;
  TransformerEncoderLayer(ParamMap& pm, const std::string& prefix, int d_model,
                          int heads, int d_ff, Rng& rng);
  Tensor Apply(const Tensor& x) const;
};

// Post-norm transformer decoder layer (causal self-attention, then
// cross-attention over encoder states, then feed-forward).
struct TransformerDecoderLayer {
  MultiHeadAttention self_attn, cross_attn;
  FeedForward ffn;
  LayerNormModule ln1, ln2, ln3;

  TransformerDecoderLayer() = default;
  TransformerDecoderLayer(ParamMap& pm, const std::string& prefix, int d_model,
                          int heads, int d_ff, Rng& rng);
  Tensor Apply(const Tensor& x, const Tensor& enc, const Tensor& mask) const;
};

// Conformer block wired exactly as
//   s = MHSA(h) + h
//   c = CONV(s)          (no residual around the convolution module)
//   out = FFN(c) + c
// The convolution module is pointwise(d->2d) -> GLU -> depthwise -> pointwise.
struct ConformerBlock {
  MultiHeadAttention attn;
  Linear conv_pw1;   // d -> 2d (GLU halves it back)
  Tensor conv_dw;    // K x d depthwise kernel
  Linear conv_pw2;   // d -> d
  FeedForward ffn;
  int d_model = 0;

  ConformerBlock() = default;
  ConformerBlock(ParamMap& pm, const std::string& prefix, int d_model,
                 int heads, int d_ff, int conv_kernel, Rng& rng);
  Tensor Apply(const Tensor& h) const;
};

// Word embedding plus a stack of transformer encoder layers with mean
// pooling over time. Shared by the role and dialog context paths; also
// reused as the posterior feature extractor.
class TextEncoder {
 public:
  TextEncoder() = default;
  TextEncoder(ParamMap& pm, const std::string& prefix, int vocab_size,
              int d_model, int layers, int heads, int d_ff, Rng& rng);

  // T x d encoder states; ids must be non-empty.
  Tensor EncodeSequence(const std::vector<int>& ids) const;
  // Mean-pooled vector of d_model; the empty sequence pools to zeros.
  Tensor EncodePooled(const std::vector<int>& ids) const;
  int d_model() const { return d_model_; }
  const Tensor& embedding() const { return embedding_; }

 private:
  Tensor embedding_;
  std::vector<TransformerEncoderLayer> layers_;
  int d_model_ = 0;
};

// Embedding lookup scaled by sqrt(d) with positions added.
Tensor EmbedTokens(const Tensor& table, const std::vector<int>& ids,
                   int d_model);

}  // namespace convasr

#endif  // CONVASR_LAYERS_H_
