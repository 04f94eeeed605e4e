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

#include "convasr/layers.h"

#include <cmath>

namespace convasr {

Tensor ParamMap::Create(const std::string& name, const Shape& shape) {
  if (index_.count(name)) {
    throw ContractError("ParamMap: duplicate parameter name " + name);
  }
  Tensor t = Tensor::Zeros(shape);
  t.set_requires_grad(true);
  index_[name] = items_.size();
  items_.emplace_back(name, t);
  return t;
}

Tensor ParamMap::Get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) {
    throw ContractError("ParamMap: unknown parameter " + name);
  }
  return items_[it->second].second;
}

int64_t ParamMap::TotalElements() const {
  int64_t n = 0;
  for (const auto& [name, t] : items_) n += t.numel();
  return n;
}

void ParamMap::ZeroGrads() {
  for (auto& [name, t] : items_) t.ZeroGrad();
}

void InitXavier(Tensor t, Rng& rng) {
  const Shape& s = t.shape();
  int fan_in = s.size() == 2 ? s[0] : static_cast<int>(t.numel());
  int fan_out = s.size() == 2 ? s[1] : static_cast<int>(t.numel());
  double limit = std::sqrt(6.0 / (fan_in + fan_out));
  for (double& v : t.mutable_values()) v = rng.Uniform(-limit, limit);
}

void InitGaussian(Tensor t, Rng& rng, double stddev) {
  for (double& v : t.mutable_values()) v = stddev * rng.Gaussian();
}

Tensor PositionalEncoding(int t_len, int d_model) {
  std::vector<double> pe(static_cast<size_t>(t_len) * d_model);
  for (int t = 0; t < t_len; ++t) {
    for (int i = 0; i < d_model; i += 2) {
      double rate = std::pow(10000.0, -static_cast<double>(i) / d_model);
      pe[t * d_model + i] = std::sin(t * rate);
      if (i + 1 < d_model) pe[t * d_model + i + 1] = std::cos(t * rate);
    }
  }
  return Tensor::FromVector({t_len, d_model}, std::move(pe));
}

Tensor CausalMask(int t_len) {
  std::vector<double> m(static_cast<size_t>(t_len) * t_len, 0.0);
  for (int i = 0; i < t_len; ++i) {
    for (int j = 0; j <= i; ++j) m[i * t_len + j] = 1.0;
  }
  return Tensor::FromVector({t_len, t_len}, std::move(m));
}

Linear::Linear(ParamMap& pm, const std::string& prefix, int in_dim,
               int out_dim, Rng& rng)
    : in(in_dim), out(out_dim) {
  w = pm.Create(prefix + ".w", {in_dim, out_dim});
  b = pm.Create(prefix + ".b", {out_dim});
  InitXavier(w, rng);
}

Tensor Linear::Apply(const Tensor& x) const {
  if (x.rank() == 1) {
    Tensor row = Reshape(x, {1, x.dim(0)});
    return Reshape(Add(MatMul(row, w), b), {out});
  }
  return Add(MatMul(x, w), b);
}

LayerNormModule::LayerNormModule(ParamMap& pm, const std::string& prefix,
                                 int dim) {
  gain = pm.Create(prefix + ".gain", {dim});
  bias = pm.Create(prefix + ".bias", {dim});
  for (double& v : gain.mutable_values()) v = 1.0;
}

MultiHeadAttention::MultiHeadAttention(ParamMap& pm, const std::string& prefix,
                                       int d_model_in, int heads_in, Rng& rng)
    : heads(heads_in), d_model(d_model_in) {
  if (d_model % heads != 0) {
    throw ConfigError("MultiHeadAttention: d_model must be divisible by heads");
  }
  wq = Linear(pm, prefix + ".wq", d_model, d_model, rng);
  wk = Linear(pm, prefix + ".wk", d_model, d_model, rng);
  wv = Linear(pm, prefix + ".wv", d_model, d_model, rng);
  wo = Linear(pm, prefix + ".wo", d_model, d_model, rng);
}

Tensor MultiHeadAttention::Apply(const Tensor& query, const Tensor& memory,
                                 const Tensor* mask) const {
  Tensor q = wq.Apply(query);
  Tensor k = wk.Apply(memory);
  Tensor v = wv.Apply(memory);
  int dh = d_model / heads;
  double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> ctx;
  ctx.reserve(heads);
  for (int h = 0; h < heads; ++h) {
    Tensor qh = SliceCols(q, h * dh, dh);
    Tensor kh = SliceCols(k, h * dh, dh);
    Tensor vh = SliceCols(v, h * dh, dh);
    Tensor scores = Scale(MatMul(qh, Transpose(kh)), scale);
    Tensor att = mask ? MaskedSoftmax(scores, *mask) : Softmax(scores, 1);
    ctx.push_back(MatMul(att, vh));
  }
  return wo.Apply(Concat(ctx, 1));
}

FeedForward::FeedForward(ParamMap& pm, const std::string& prefix, int d_model,
                         int d_ff, Rng& rng) {
  l1 = Linear(pm, prefix + ".l1", d_model, d_ff, rng);
  l2 = Linear(pm, prefix + ".l2", d_ff, d_model, rng);
}

Tensor FeedForward::Apply(const Tensor& x) const {
  Tensor h = l1.Apply(x);
  return l2.Apply(Mul(h, Sigmoid(h)));  // swish
}

TransformerEncoderLayer::TransformerEncoderLayer(ParamMap& pm,
                                                 const std::string& prefix,
                                                 int d_model, int heads,
                                                 int d_ff, Rng& rng) {
  attn = MultiHeadAttention(pm, prefix + ".attn", d_model, heads, rng);
  ffn = FeedForward(pm, prefix + ".ffn", d_model, d_ff, rng);
  ln1 = LayerNormModule(pm, prefix + ".ln1", d_model);
  ln2 = LayerNormModule(pm, prefix + ".ln2", d_model);
}

Tensor TransformerEncoderLayer::Apply(const Tensor& x) const {
  Tensor a = ln1.Apply(Add(x, attn.Apply(x, x, nullptr)));
  return ln2.Apply(Add(a, ffn.Apply(a)));
}

TransformerDecoderLayer::TransformerDecoderLayer(ParamMap& pm,
                                                 const std::string& prefix,
                                                 int d_model, int heads,
                                                 int d_ff, Rng& rng) {
  self_attn = MultiHeadAttention(pm, prefix + ".self", d_model, heads, rng);
  cross_attn = MultiHeadAttention(pm, prefix + ".cross", d_model, heads, rng);
  ffn = FeedForward(pm, prefix + ".ffn", d_model, d_ff, rng);
  ln1 = LayerNormModule(pm, prefix + ".ln1", d_model);
  ln2 = LayerNormModule(pm, prefix + ".ln2", d_model);
  ln3 = LayerNormModule(pm, prefix + ".ln3", d_model);
}

Tensor TransformerDecoderLayer::Apply(const Tensor& x, const Tensor& enc,
                                      const Tensor& mask) const {
  Tensor a = ln1.Apply(Add(x, self_attn.Apply(x, x, &mask)));
  Tensor c = ln2.Apply(Add(a, cross_attn.Apply(a, enc, nullptr)));
  return ln3.Apply(Add(c, ffn.Apply(c)));
}

ConformerBlock::ConformerBlock(ParamMap& pm, const std::string& prefix,
                               int d_model_in, int heads, int d_ff,
                               int conv_kernel, Rng& rng)
    : d_model(d_model_in) {
  attn = MultiHeadAttention(pm, prefix + ".attn", d_model, heads, rng);
  conv_pw1 = Linear(pm, prefix + ".conv.pw1", d_model, 2 * d_model, rng);
  conv_dw = pm.Create(prefix + ".conv.dw", {conv_kernel, d_model});
  conv_pw2 = Linear(pm, prefix + ".conv.pw2", d_model, d_model, rng);
  ffn = FeedForward(pm, prefix + ".ffn", d_model, d_ff, rng);
  // Kernel starts near a scaled delta so early training is well-conditioned.
  InitGaussian(conv_dw, rng, 0.1);
  int center = conv_kernel / 2;
  for (int c = 0; c < d_model; ++c) {
    conv_dw.mutable_values()[center * d_model + c] += 0.5;
  }
}

Tensor ConformerBlock::Apply(const Tensor& h) const {
  Tensor s = Add(attn.Apply(h, h, nullptr), h);
  // Convolution module, no residual.
  Tensor u = conv_pw1.Apply(s);
  Tensor a = SliceCols(u, 0, d_model);
  Tensor gate = SliceCols(u, d_model, d_model);
  Tensor gated = Mul(a, Sigmoid(gate));
  Tensor c = conv_pw2.Apply(DepthwiseConv1d(gated, conv_dw));
  return Add(ffn.Apply(c), c);
}

Tensor EmbedTokens(const Tensor& table, const std::vector<int>& ids,
                   int d_model) {
  Tensor e = Scale(EmbeddingLookup(table, ids),
                   std::sqrt(static_cast<double>(d_model)));
  return Add(e, PositionalEncoding(static_cast<int>(ids.size()), d_model));
}

TextEncoder::TextEncoder(ParamMap& pm, const std::string& prefix,
                         int vocab_size, int d_model, int layers, int heads,
                         int d_ff, Rng& rng)
    : d_model_(d_model) {
  embedding_ = pm.Create(prefix + ".emb", {vocab_size, d_model});
  InitGaussian(embedding_, rng, 1.0 / std::sqrt(static_cast<double>(d_model)));
  for (int i = 0; i < layers; ++i) {
    layers_.emplace_back(pm, prefix + ".layer" + std::to_string(i), d_model,
                         heads, d_ff, rng);
  }
}

Tensor TextEncoder::EncodeSequence(const std::vector<int>& ids) const {
  if (ids.empty()) {
    throw InputError("TextEncoder::EncodeSequence: empty token sequence");
  }
  Tensor x = EmbedTokens(embedding_, ids, d_model_);
  for (const auto& layer : layers_) x = layer.Apply(x);
  return x;
}

Tensor TextEncoder::EncodePooled(const std::vector<int>& ids) const {
  // No history pools to the origin; the prior networks see a well-defined
  // "nothing yet" input at the first turn.
  if (ids.empty()) return Tensor::Zeros({d_model_});
  return MeanPoolTime(EncodeSequence(ids));
}

}  // namespace convasr
