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

#include "convasr/tensor.h"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace convasr {

namespace {

thread_local bool g_grad_enabled = true;

void CheckFinite(const std::vector<double>& v, const char* op) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw NumericError(std::string(op) + ": non-finite value in result");
    }
  }
}

bool AnyRequiresGrad(const std::vector<std::shared_ptr<TensorImpl>>& parents) {
  for (const auto& p : parents) {
    if (p->requires_grad) return true;
  }
  return false;
}

// Finalizes an op result: finiteness check, then graph recording if grads
// are enabled and some input needs them.
Tensor MakeOp(const char* op, Shape shape, std::vector<double> data,
              std::vector<std::shared_ptr<TensorImpl>> parents,
              std::function<void(const TensorImpl&)> backward) {
  CheckFinite(data, op);
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  if (g_grad_enabled && AnyRequiresGrad(parents)) {
    impl->requires_grad = true;
    impl->parents = std::move(parents);
    impl->backward_fn = std::move(backward);
  }
  return Tensor(impl);
}

std::vector<double>& GradOf(const std::shared_ptr<TensorImpl>& p) {
  p->EnsureGrad();
  return p->grad;
}

void RequireRank(const Tensor& t, int rank, const char* op) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " +
                     std::to_string(rank) + ", got " +
                     ShapeToString(t.shape()));
  }
}

void RequireSameShape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     ShapeToString(a.shape()) + " vs " +
                     ShapeToString(b.shape()));
  }
}

double StableSigmoid(double x) {
  if (x >= 0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

int64_t NumelOf(const Shape& shape) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

std::string ShapeToString(const Shape& shape) {
  std::string s = "(";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

bool GradEnabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : saved_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = saved_; }

Tensor Tensor::Zeros(const Shape& shape) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = shape;
  impl->data.assign(NumelOf(shape), 0.0);
  return Tensor(impl);
}

Tensor Tensor::Full(const Shape& shape, double value) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = shape;
  impl->data.assign(NumelOf(shape), value);
  return Tensor(impl);
}

Tensor Tensor::FromVector(const Shape& shape, std::vector<double> values) {
  if (static_cast<int64_t>(values.size()) != NumelOf(shape)) {
    throw ShapeError("Tensor::FromVector: data length does not match shape " +
                     ShapeToString(shape));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = shape;
  impl->data = std::move(values);
  return Tensor(impl);
}

Tensor Tensor::Scalar(double value) { return FromVector({}, {value}); }

double Tensor::value() const {
  if (numel() != 1) {
    throw ContractError("Tensor::value: tensor is not scalar, shape " +
                        ShapeToString(shape()));
  }
  return impl_->data[0];
}

Graph Graph::FromRoot(const Tensor& root) {
  Graph g;
  if (!root.defined() || !root.node()->requires_grad) return g;
  // Iterative DFS post-order: parents appear before consumers.
  std::unordered_set<TensorImpl*> visited;
  std::vector<std::pair<TensorImpl*, size_t>> stack;
  stack.emplace_back(root.node(), 0);
  visited.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorImpl* p = node->parents[next++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      g.order.push_back(node);
      stack.pop_back();
    }
  }
  return g;
}

void Graph::RunBackward() {
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorImpl* node = *it;
    if (node->backward_fn) node->backward_fn(*node);
  }
}

void Backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw ContractError("Backward: loss must be scalar, shape " +
                        ShapeToString(loss.shape()));
  }
  Graph g = Graph::FromRoot(loss);
  if (g.order.empty()) return;  // nothing requires grad
  // Interior grads restart from zero on every call; leaf grads accumulate.
  for (TensorImpl* node : g.order) {
    if (node->backward_fn) node->grad.assign(node->data.size(), 0.0);
  }
  loss.node()->EnsureGrad();
  loss.node()->grad[0] += 1.0;
  g.RunBackward();
}

// ---- Primitives ---------------------------------------------------------

Tensor Add(const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) {
    std::vector<double> out(a.values());
    for (int64_t i = 0; i < a.numel(); ++i) out[i] += b.at(i);
    return MakeOp("Add", a.shape(), std::move(out), {a.impl(), b.impl()},
                  [](const TensorImpl& self) {
                    const auto& g = self.grad;
                    for (int side = 0; side < 2; ++side) {
                      const auto& p = self.parents[side];
                      if (!p->requires_grad) continue;
                      auto& pg = GradOf(p);
                      for (size_t i = 0; i < g.size(); ++i) pg[i] += g[i];
                    }
                  });
  }
  // Row-broadcast bias: (m x n) + (n)
  if (a.rank() == 2 && b.rank() == 1 && a.dim(1) == b.dim(0)) {
    int m = a.dim(0), n = a.dim(1);
    std::vector<double> out(a.values());
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < n; ++j) out[i * n + j] += b.at(j);
    }
    return MakeOp("Add", a.shape(), std::move(out), {a.impl(), b.impl()},
                  [m, n](const TensorImpl& self) {
                    const auto& g = self.grad;
                    if (self.parents[0]->requires_grad) {
                      auto& ga = GradOf(self.parents[0]);
                      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                    }
                    if (self.parents[1]->requires_grad) {
                      auto& gb = GradOf(self.parents[1]);
                      for (int i = 0; i < m; ++i) {
                        for (int j = 0; j < n; ++j) gb[j] += g[i * n + j];
                      }
                    }
                  });
  }
  throw ShapeError("Add: shape mismatch " + ShapeToString(a.shape()) +
                   " vs " + ShapeToString(b.shape()));
}

Tensor Sub(const Tensor& a, const Tensor& b) {
  RequireSameShape(a, b, "Sub");
  std::vector<double> out(a.values());
  for (int64_t i = 0; i < a.numel(); ++i) out[i] -= b.at(i);
  return MakeOp("Sub", a.shape(), std::move(out), {a.impl(), b.impl()},
                [](const TensorImpl& self) {
                  const auto& g = self.grad;
                  if (self.parents[0]->requires_grad) {
                    auto& ga = GradOf(self.parents[0]);
                    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                  }
                  if (self.parents[1]->requires_grad) {
                    auto& gb = GradOf(self.parents[1]);
                    for (size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
                  }
                });
}

Tensor Mul(const Tensor& a, const Tensor& b) {
  RequireSameShape(a, b, "Mul");
  std::vector<double> out(a.values());
  for (int64_t i = 0; i < a.numel(); ++i) out[i] *= b.at(i);
  return MakeOp("Mul", a.shape(), std::move(out), {a.impl(), b.impl()},
                [](const TensorImpl& self) {
                  const auto& g = self.grad;
                  const auto& av = self.parents[0]->data;
                  const auto& bv = self.parents[1]->data;
                  if (self.parents[0]->requires_grad) {
                    auto& ga = GradOf(self.parents[0]);
                    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
                  }
                  if (self.parents[1]->requires_grad) {
                    auto& gb = GradOf(self.parents[1]);
                    for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
                  }
                });
}

Tensor Div(const Tensor& a, const Tensor& b) {
  RequireSameShape(a, b, "Div");
  std::vector<double> out(a.values());
  for (int64_t i = 0; i < a.numel(); ++i) out[i] /= b.at(i);
  return MakeOp("Div", a.shape(), std::move(out), {a.impl(), b.impl()},
                [](const TensorImpl& self) {
                  const auto& g = self.grad;
                  const auto& av = self.parents[0]->data;
                  const auto& bv = self.parents[1]->data;
                  if (self.parents[0]->requires_grad) {
                    auto& ga = GradOf(self.parents[0]);
                    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / bv[i];
                  }
                  if (self.parents[1]->requires_grad) {
                    auto& gb = GradOf(self.parents[1]);
                    for (size_t i = 0; i < g.size(); ++i) {
                      gb[i] -= g[i] * av[i] / (bv[i] * bv[i]);
                    }
                  }
                });
}

Tensor Scale(const Tensor& a, double c) {
  std::vector<double> out(a.values());
  for (double& x : out) x *= c;
  return MakeOp("Scale", a.shape(), std::move(out), {a.impl()},
                [c](const TensorImpl& self) {
                  if (!self.parents[0]->requires_grad) return;
                  auto& ga = GradOf(self.parents[0]);
                  const auto& g = self.grad;
                  for (size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
                });
}

Tensor MatMul(const Tensor& a, const Tensor& b) {
  RequireRank(a, 2, "MatMul");
  RequireRank(b, 2, "MatMul");
  if (a.dim(1) != b.dim(0)) {
    throw ShapeError("MatMul: inner dims differ, " + ShapeToString(a.shape()) +
                     " x " + ShapeToString(b.shape()));
  }
  int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(static_cast<size_t>(m) * n, 0.0);
  const double* A = a.values().data();
  const double* B = b.values().data();
  for (int i = 0; i < m; ++i) {
    for (int p = 0; p < k; ++p) {
      double av = A[i * k + p];
      double* orow = out.data() + static_cast<size_t>(i) * n;
      const double* brow = B + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return MakeOp(
      "MatMul", {m, n}, std::move(out), {a.impl(), b.impl()},
      [m, k, n](const TensorImpl& self) {
        const auto& g = self.grad;
        const auto& av = self.parents[0]->data;
        const auto& bv = self.parents[1]->data;
        if (self.parents[0]->requires_grad) {
          auto& ga = GradOf(self.parents[0]);
          // dA = G * B^T
          for (int i = 0; i < m; ++i) {
            for (int j = 0; j < n; ++j) {
              double gv = g[i * n + j];
              const double* brow = bv.data();
              for (int p = 0; p < k; ++p) {
                ga[i * k + p] += gv * brow[p * n + j];
              }
            }
          }
        }
        if (self.parents[1]->requires_grad) {
          auto& gb = GradOf(self.parents[1]);
          // dB = A^T * G
          for (int i = 0; i < m; ++i) {
            for (int p = 0; p < k; ++p) {
              double a_ip = av[i * k + p];
              const double* grow = g.data() + static_cast<size_t>(i) * n;
              double* gbrow = gb.data() + static_cast<size_t>(p) * n;
              for (int j = 0; j < n; ++j) gbrow[j] += a_ip * grow[j];
            }
          }
        }
      });
}

Tensor Tanh(const Tensor& a) {
  std::vector<double> out(a.values());
  for (double& x : out) x = std::tanh(x);
  return MakeOp("Tanh", a.shape(), std::move(out), {a.impl()},
                [](const TensorImpl& self) {
                  if (!self.parents[0]->requires_grad) return;
                  auto& ga = GradOf(self.parents[0]);
                  const auto& g = self.grad;
                  const auto& y = self.data;
                  for (size_t i = 0; i < g.size(); ++i) {
                    ga[i] += g[i] * (1.0 - y[i] * y[i]);
                  }
                });
}

Tensor Sigmoid(const Tensor& a) {
  std::vector<double> out(a.values());
  for (double& x : out) x = StableSigmoid(x);
  return MakeOp("Sigmoid", a.shape(), std::move(out), {a.impl()},
                [](const TensorImpl& self) {
                  if (!self.parents[0]->requires_grad) return;
                  auto& ga = GradOf(self.parents[0]);
                  const auto& g = self.grad;
                  const auto& y = self.data;
                  for (size_t i = 0; i < g.size(); ++i) {
                    ga[i] += g[i] * y[i] * (1.0 - y[i]);
                  }
                });
}

Tensor Softplus(const Tensor& a) {
  std::vector<double> out(a.values());
  for (double& x : out) {
    x = x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  }
  return MakeOp("Softplus", a.shape(), std::move(out), {a.impl()},
                [](const TensorImpl& self) {
                  if (!self.parents[0]->requires_grad) return;
                  auto& ga = GradOf(self.parents[0]);
                  const auto& g = self.grad;
                  const auto& x = self.parents[0]->data;
                  for (size_t i = 0; i < g.size(); ++i) {
                    ga[i] += g[i] * StableSigmoid(x[i]);
                  }
                });
}

Tensor Log(const Tensor& a) {
  std::vector<double> out(a.values());
  for (double& x : out) x = std::log(x);
  return MakeOp("Log", a.shape(), std::move(out), {a.impl()},
                [](const TensorImpl& self) {
                  if (!self.parents[0]->requires_grad) return;
                  auto& ga = GradOf(self.parents[0]);
                  const auto& g = self.grad;
                  const auto& x = self.parents[0]->data;
                  for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / x[i];
                });
}

namespace {

// Shared softmax slice math. `idx(s, i)` maps slice s, element i to a flat
// offset; every slice has `len` elements.
template <typename IndexFn>
void SoftmaxForward(const std::vector<double>& in, std::vector<double>& out,
                    int slices, int len, IndexFn idx) {
  for (int s = 0; s < slices; ++s) {
    double mx = in[idx(s, 0)];
    for (int i = 1; i < len; ++i) mx = std::max(mx, in[idx(s, i)]);
    double sum = 0.0;
    for (int i = 0; i < len; ++i) {
      double e = std::exp(in[idx(s, i)] - mx);
      out[idx(s, i)] = e;
      sum += e;
    }
    for (int i = 0; i < len; ++i) out[idx(s, i)] /= sum;
  }
}

template <typename IndexFn>
void SoftmaxBackward(const std::vector<double>& y, const std::vector<double>& g,
                     std::vector<double>& gx, int slices, int len,
                     IndexFn idx) {
  for (int s = 0; s < slices; ++s) {
    double dot = 0.0;
    for (int i = 0; i < len; ++i) dot += g[idx(s, i)] * y[idx(s, i)];
    for (int i = 0; i < len; ++i) {
      gx[idx(s, i)] += y[idx(s, i)] * (g[idx(s, i)] - dot);
    }
  }
}

}  // namespace

Tensor Softmax(const Tensor& a, int axis) {
  if (a.rank() == 1) {
    if (axis != 0) throw ShapeError("Softmax: axis out of range for rank 1");
    int n = a.dim(0);
    std::vector<double> out(a.values());
    auto idx = [](int, int i) { return i; };
    SoftmaxForward(a.values(), out, 1, n, idx);
    return MakeOp("Softmax", a.shape(), std::move(out), {a.impl()},
                  [n, idx](const TensorImpl& self) {
                    if (!self.parents[0]->requires_grad) return;
                    SoftmaxBackward(self.data, self.grad,
                                    GradOf(self.parents[0]), 1, n, idx);
                  });
  }
  RequireRank(a, 2, "Softmax");
  int m = a.dim(0), n = a.dim(1);
  std::vector<double> out(a.values());
  if (axis == 1) {
    auto idx = [n](int s, int i) { return s * n + i; };
    SoftmaxForward(a.values(), out, m, n, idx);
    return MakeOp("Softmax", a.shape(), std::move(out), {a.impl()},
                  [m, n, idx](const TensorImpl& self) {
                    if (!self.parents[0]->requires_grad) return;
                    SoftmaxBackward(self.data, self.grad,
                                    GradOf(self.parents[0]), m, n, idx);
                  });
  }
  if (axis == 0) {
    auto idx = [n](int s, int i) { return i * n + s; };
    SoftmaxForward(a.values(), out, n, m, idx);
    return MakeOp("Softmax", a.shape(), std::move(out), {a.impl()},
                  [m, n, idx](const TensorImpl& self) {
                    if (!self.parents[0]->requires_grad) return;
                    SoftmaxBackward(self.data, self.grad,
                                    GradOf(self.parents[0]), n, m, idx);
                  });
  }
  throw ShapeError("Softmax: axis out of range for rank 2");
}

Tensor MaskedSoftmax(const Tensor& a, const Tensor& mask) {
  RequireRank(a, 2, "MaskedSoftmax");
  RequireSameShape(a, mask, "MaskedSoftmax");
  int m = a.dim(0), n = a.dim(1);
  const auto& in = a.values();
  const auto& mk = mask.values();
  std::vector<double> out(in.size(), 0.0);
  for (int i = 0; i < m; ++i) {
    double mx = 0.0;
    bool any = false;
    for (int j = 0; j < n; ++j) {
      if (mk[i * n + j] != 0.0) {
        double v = in[i * n + j];
        mx = any ? std::max(mx, v) : v;
        any = true;
      }
    }
    if (!any) {
      throw ShapeError("MaskedSoftmax: row " + std::to_string(i) +
                       " has no unmasked entries");
    }
    double sum = 0.0;
    for (int j = 0; j < n; ++j) {
      if (mk[i * n + j] != 0.0) {
        double e = std::exp(in[i * n + j] - mx);
        out[i * n + j] = e;
        sum += e;
      }
    }
    for (int j = 0; j < n; ++j) out[i * n + j] /= sum;
  }
  // The mask is a constant; it never receives gradient.
  return MakeOp("MaskedSoftmax", a.shape(), std::move(out), {a.impl()},
                [m, n](const TensorImpl& self) {
                  if (!self.parents[0]->requires_grad) return;
                  auto idx = [n](int s, int i) { return s * n + i; };
                  SoftmaxBackward(self.data, self.grad,
                                  GradOf(self.parents[0]), m, n, idx);
                });
}

Tensor LayerNorm(const Tensor& a, const Tensor& gain, const Tensor& bias) {
  constexpr double kEps = 1e-8;
  if (a.rank() != 1 && a.rank() != 2) {
    throw ShapeError("LayerNorm: rank must be 1 or 2");
  }
  int rows = a.rank() == 2 ? a.dim(0) : 1;
  int n = a.rank() == 2 ? a.dim(1) : a.dim(0);
  RequireRank(gain, 1, "LayerNorm");
  RequireRank(bias, 1, "LayerNorm");
  if (gain.dim(0) != n || bias.dim(0) != n) {
    throw ShapeError("LayerNorm: gain/bias extent must match last axis");
  }
  const auto& x = a.values();
  std::vector<double> out(x.size());
  std::vector<double> mean(rows), inv_std(rows);
  for (int i = 0; i < rows; ++i) {
    const double* row = x.data() + static_cast<size_t>(i) * n;
    double mu = 0.0;
    for (int j = 0; j < n; ++j) mu += row[j];
    mu /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= n;
    double inv = 1.0 / std::sqrt(var + kEps);
    mean[i] = mu;
    inv_std[i] = inv;
    for (int j = 0; j < n; ++j) {
      out[i * n + j] = (row[j] - mu) * inv * gain.at(j) + bias.at(j);
    }
  }
  return MakeOp(
      "LayerNorm", a.shape(), std::move(out),
      {a.impl(), gain.impl(), bias.impl()},
      [rows, n, mean, inv_std](const TensorImpl& self) {
        const auto& g = self.grad;
        const auto& x = self.parents[0]->data;
        const auto& gainv = self.parents[1]->data;
        for (int i = 0; i < rows; ++i) {
          const double* xrow = x.data() + static_cast<size_t>(i) * n;
          const double* grow = g.data() + static_cast<size_t>(i) * n;
          double inv = inv_std[i], mu = mean[i];
          // dgain / dbias
          if (self.parents[1]->requires_grad) {
            auto& gg = GradOf(self.parents[1]);
            for (int j = 0; j < n; ++j) {
              gg[j] += grow[j] * (xrow[j] - mu) * inv;
            }
          }
          if (self.parents[2]->requires_grad) {
            auto& gb = GradOf(self.parents[2]);
            for (int j = 0; j < n; ++j) gb[j] += grow[j];
          }
          if (self.parents[0]->requires_grad) {
            auto& gx = GradOf(self.parents[0]);
            double mean_h = 0.0, mean_hy = 0.0;
            for (int j = 0; j < n; ++j) {
              double h = grow[j] * gainv[j];
              double yhat = (xrow[j] - mu) * inv;
              mean_h += h;
              mean_hy += h * yhat;
            }
            mean_h /= n;
            mean_hy /= n;
            for (int j = 0; j < n; ++j) {
              double h = grow[j] * gainv[j];
              double yhat = (xrow[j] - mu) * inv;
              gx[i * n + j] += inv * (h - mean_h - yhat * mean_hy);
            }
          }
        }
      });
}

Tensor EmbeddingLookup(const Tensor& table, const std::vector<int>& ids) {
  RequireRank(table, 2, "EmbeddingLookup");
  int v = table.dim(0), d = table.dim(1);
  for (int id : ids) {
    if (id < 0 || id >= v) {
      throw RangeError("EmbeddingLookup: id " + std::to_string(id) +
                       " out of range [0, " + std::to_string(v) + ")");
    }
  }
  int len = static_cast<int>(ids.size());
  std::vector<double> out(static_cast<size_t>(len) * d);
  const auto& tv = table.values();
  for (int i = 0; i < len; ++i) {
    std::copy_n(tv.data() + static_cast<size_t>(ids[i]) * d, d,
                out.data() + static_cast<size_t>(i) * d);
  }
  return MakeOp("EmbeddingLookup", {len, d}, std::move(out), {table.impl()},
                [ids, d](const TensorImpl& self) {
                  if (!self.parents[0]->requires_grad) return;
                  auto& gt = GradOf(self.parents[0]);
                  const auto& g = self.grad;
                  for (size_t i = 0; i < ids.size(); ++i) {
                    for (int j = 0; j < d; ++j) {
                      gt[static_cast<size_t>(ids[i]) * d + j] += g[i * d + j];
                    }
                  }
                });
}

Tensor DepthwiseConv1d(const Tensor& x, const Tensor& kernel) {
  RequireRank(x, 2, "DepthwiseConv1d");
  RequireRank(kernel, 2, "DepthwiseConv1d");
  int t_len = x.dim(0), d = x.dim(1);
  int k = kernel.dim(0);
  if (kernel.dim(1) != d) {
    throw ShapeError("DepthwiseConv1d: kernel channels must match input");
  }
  if (k % 2 == 0) throw ShapeError("DepthwiseConv1d: kernel size must be odd");
  int pad = k / 2;
  const auto& xv = x.values();
  const auto& kv = kernel.values();
  std::vector<double> out(xv.size(), 0.0);
  for (int t = 0; t < t_len; ++t) {
    for (int tap = 0; tap < k; ++tap) {
      int src = t + tap - pad;
      if (src < 0 || src >= t_len) continue;
      const double* xrow = xv.data() + static_cast<size_t>(src) * d;
      const double* krow = kv.data() + static_cast<size_t>(tap) * d;
      double* orow = out.data() + static_cast<size_t>(t) * d;
      for (int c = 0; c < d; ++c) orow[c] += krow[c] * xrow[c];
    }
  }
  return MakeOp(
      "DepthwiseConv1d", x.shape(), std::move(out), {x.impl(), kernel.impl()},
      [t_len, d, k, pad](const TensorImpl& self) {
        const auto& g = self.grad;
        const auto& xv = self.parents[0]->data;
        const auto& kv = self.parents[1]->data;
        if (self.parents[0]->requires_grad) {
          auto& gx = GradOf(self.parents[0]);
          for (int t = 0; t < t_len; ++t) {
            for (int tap = 0; tap < k; ++tap) {
              int src = t + tap - pad;
              if (src < 0 || src >= t_len) continue;
              for (int c = 0; c < d; ++c) {
                gx[src * d + c] += kv[tap * d + c] * g[t * d + c];
              }
            }
          }
        }
        if (self.parents[1]->requires_grad) {
          auto& gk = GradOf(self.parents[1]);
          for (int t = 0; t < t_len; ++t) {
            for (int tap = 0; tap < k; ++tap) {
              int src = t + tap - pad;
              if (src < 0 || src >= t_len) continue;
              for (int c = 0; c < d; ++c) {
                gk[tap * d + c] += xv[src * d + c] * g[t * d + c];
              }
            }
          }
        }
      });
}

Tensor Concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ContractError("Concat: no inputs");
  int rank = parts[0].rank();
  if (rank == 1) {
    if (axis != 0) throw ShapeError("Concat: axis out of range for rank 1");
    int total = 0;
    for (const auto& p : parts) {
      RequireRank(p, 1, "Concat");
      total += p.dim(0);
    }
    std::vector<double> out;
    out.reserve(total);
    std::vector<std::shared_ptr<TensorImpl>> parents;
    std::vector<int> lens;
    for (const auto& p : parts) {
      out.insert(out.end(), p.values().begin(), p.values().end());
      parents.push_back(p.impl());
      lens.push_back(p.dim(0));
    }
    return MakeOp("Concat", {total}, std::move(out), std::move(parents),
                  [lens](const TensorImpl& self) {
                    const auto& g = self.grad;
                    int off = 0;
                    for (size_t pi = 0; pi < lens.size(); ++pi) {
                      if (self.parents[pi]->requires_grad) {
                        auto& gp = GradOf(self.parents[pi]);
                        for (int i = 0; i < lens[pi]; ++i) gp[i] += g[off + i];
                      }
                      off += lens[pi];
                    }
                  });
  }
  if (rank != 2 || (axis != 0 && axis != 1)) {
    throw ShapeError("Concat: unsupported rank/axis");
  }
  if (axis == 0) {
    int cols = parts[0].dim(1);
    int rows = 0;
    for (const auto& p : parts) {
      RequireRank(p, 2, "Concat");
      if (p.dim(1) != cols) throw ShapeError("Concat: column mismatch");
      rows += p.dim(0);
    }
    std::vector<double> out;
    out.reserve(static_cast<size_t>(rows) * cols);
    std::vector<std::shared_ptr<TensorImpl>> parents;
    std::vector<int> lens;
    for (const auto& p : parts) {
      out.insert(out.end(), p.values().begin(), p.values().end());
      parents.push_back(p.impl());
      lens.push_back(p.dim(0));
    }
    return MakeOp("Concat", {rows, cols}, std::move(out), std::move(parents),
                  [lens, cols](const TensorImpl& self) {
                    const auto& g = self.grad;
                    size_t off = 0;
                    for (size_t pi = 0; pi < lens.size(); ++pi) {
                      size_t count = static_cast<size_t>(lens[pi]) * cols;
                      if (self.parents[pi]->requires_grad) {
                        auto& gp = GradOf(self.parents[pi]);
                        for (size_t i = 0; i < count; ++i) gp[i] += g[off + i];
                      }
                      off += count;
                    }
                  });
  }
  // axis == 1
  int rows = parts[0].dim(0);
  int cols = 0;
  for (const auto& p : parts) {
    RequireRank(p, 2, "Concat");
    if (p.dim(0) != rows) throw ShapeError("Concat: row mismatch");
    cols += p.dim(1);
  }
  std::vector<double> out(static_cast<size_t>(rows) * cols);
  std::vector<std::shared_ptr<TensorImpl>> parents;
  std::vector<int> widths;
  int off = 0;
  for (const auto& p : parts) {
    int w = p.dim(1);
    for (int i = 0; i < rows; ++i) {
      std::copy_n(p.values().data() + static_cast<size_t>(i) * w, w,
                  out.data() + static_cast<size_t>(i) * cols + off);
    }
    parents.push_back(p.impl());
    widths.push_back(w);
    off += w;
  }
  return MakeOp("Concat", {rows, cols}, std::move(out), std::move(parents),
                [widths, rows, cols](const TensorImpl& self) {
                  const auto& g = self.grad;
                  int off = 0;
                  for (size_t pi = 0; pi < widths.size(); ++pi) {
                    int w = widths[pi];
                    if (self.parents[pi]->requires_grad) {
                      auto& gp = GradOf(self.parents[pi]);
                      for (int i = 0; i < rows; ++i) {
                        for (int j = 0; j < w; ++j) {
                          gp[i * w + j] += g[i * cols + off + j];
                        }
                      }
                    }
                    off += w;
                  }
                });
}

Tensor MeanPoolTime(const Tensor& x) {
  RequireRank(x, 2, "MeanPoolTime");
  int t_len = x.dim(0), d = x.dim(1);
  if (t_len < 1) throw ShapeError("MeanPoolTime: empty time axis");
  std::vector<double> out(d, 0.0);
  const auto& xv = x.values();
  for (int t = 0; t < t_len; ++t) {
    for (int j = 0; j < d; ++j) out[j] += xv[t * d + j];
  }
  for (double& v : out) v /= t_len;
  return MakeOp("MeanPoolTime", {d}, std::move(out), {x.impl()},
                [t_len, d](const TensorImpl& self) {
                  if (!self.parents[0]->requires_grad) return;
                  auto& gx = GradOf(self.parents[0]);
                  const auto& g = self.grad;
                  for (int t = 0; t < t_len; ++t) {
                    for (int j = 0; j < d; ++j) gx[t * d + j] += g[j] / t_len;
                  }
                });
}

Tensor Sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  return MakeOp("Sum", {}, {s}, {a.impl()}, [](const TensorImpl& self) {
    if (!self.parents[0]->requires_grad) return;
    auto& ga = GradOf(self.parents[0]);
    double g = self.grad[0];
    for (double& v : ga) v += g;
  });
}

Tensor SliceRows(const Tensor& x, int start, int len) {
  RequireRank(x, 2, "SliceRows");
  if (start < 0 || len < 0 || start + len > x.dim(0)) {
    throw RangeError("SliceRows: range out of bounds");
  }
  int d = x.dim(1);
  std::vector<double> out(x.values().begin() + static_cast<size_t>(start) * d,
                          x.values().begin() +
                              static_cast<size_t>(start + len) * d);
  return MakeOp("SliceRows", {len, d}, std::move(out), {x.impl()},
                [start, len, d](const TensorImpl& self) {
                  if (!self.parents[0]->requires_grad) return;
                  auto& gx = GradOf(self.parents[0]);
                  const auto& g = self.grad;
                  for (int i = 0; i < len; ++i) {
                    for (int j = 0; j < d; ++j) {
                      gx[(start + i) * d + j] += g[i * d + j];
                    }
                  }
                });
}

Tensor SliceCols(const Tensor& x, int start, int len) {
  RequireRank(x, 2, "SliceCols");
  if (start < 0 || len < 0 || start + len > x.dim(1)) {
    throw RangeError("SliceCols: range out of bounds");
  }
  int rows = x.dim(0), cols = x.dim(1);
  std::vector<double> out(static_cast<size_t>(rows) * len);
  const auto& xv = x.values();
  for (int i = 0; i < rows; ++i) {
    std::copy_n(xv.data() + static_cast<size_t>(i) * cols + start, len,
                out.data() + static_cast<size_t>(i) * len);
  }
  return MakeOp("SliceCols", {rows, len}, std::move(out), {x.impl()},
                [start, len, rows, cols](const TensorImpl& self) {
                  if (!self.parents[0]->requires_grad) return;
                  auto& gx = GradOf(self.parents[0]);
                  const auto& g = self.grad;
                  for (int i = 0; i < rows; ++i) {
                    for (int j = 0; j < len; ++j) {
                      gx[i * cols + start + j] += g[i * len + j];
                    }
                  }
                });
}

Tensor Transpose(const Tensor& x) {
  RequireRank(x, 2, "Transpose");
  int m = x.dim(0), n = x.dim(1);
  std::vector<double> out(x.numel());
  const auto& xv = x.values();
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) out[j * m + i] = xv[i * n + j];
  }
  return MakeOp("Transpose", {n, m}, std::move(out), {x.impl()},
                [m, n](const TensorImpl& self) {
                  if (!self.parents[0]->requires_grad) return;
                  auto& gx = GradOf(self.parents[0]);
                  const auto& g = self.grad;
                  for (int i = 0; i < m; ++i) {
                    for (int j = 0; j < n; ++j) gx[i * n + j] += g[j * m + i];
                  }
                });
}

Tensor Reshape(const Tensor& x, const Shape& shape) {
  if (NumelOf(shape) != x.numel()) {
    throw ShapeError("Reshape: element count mismatch");
  }
  std::vector<double> out(x.values());
  return MakeOp("Reshape", shape, std::move(out), {x.impl()},
                [](const TensorImpl& self) {
                  if (!self.parents[0]->requires_grad) return;
                  auto& gx = GradOf(self.parents[0]);
                  const auto& g = self.grad;
                  for (size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                });
}

Tensor GatherRows(const Tensor& x, const std::vector<int>& ids) {
  RequireRank(x, 2, "GatherRows");
  int rows = x.dim(0), cols = x.dim(1);
  if (static_cast<int>(ids.size()) != rows) {
    throw ShapeError("GatherRows: one index per row required");
  }
  std::vector<double> out(rows);
  for (int i = 0; i < rows; ++i) {
    if (ids[i] < 0 || ids[i] >= cols) {
      throw RangeError("GatherRows: index out of range");
    }
    out[i] = x.at(i, ids[i]);
  }
  return MakeOp("GatherRows", {rows}, std::move(out), {x.impl()},
                [ids, cols](const TensorImpl& self) {
                  if (!self.parents[0]->requires_grad) return;
                  auto& gx = GradOf(self.parents[0]);
                  const auto& g = self.grad;
                  for (size_t i = 0; i < ids.size(); ++i) {
                    gx[i * cols + ids[i]] += g[i];
                  }
                });
}

double FiniteDifferenceCheck(const std::function<Tensor()>& f,
                             const std::vector<Tensor>& params, double step) {
  if (step <= 0) throw ContractError("FiniteDifferenceCheck: step must be > 0");
  for (auto p : params) p.ZeroGrad();
  Tensor loss = f();
  if (loss.numel() != 1) {
    throw ContractError("FiniteDifferenceCheck: f must return a scalar");
  }
  Backward(loss);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) {
    analytic.push_back(p.has_grad() ? p.grad()
                                    : std::vector<double>(p.numel(), 0.0));
  }
  double max_err = 0.0;
  NoGradGuard no_grad;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor p = params[pi];
    auto& vals = p.mutable_values();
    for (size_t i = 0; i < vals.size(); ++i) {
      double saved = vals[i];
      vals[i] = saved + step;
      double up = f().value();
      vals[i] = saved - step;
      double down = f().value();
      vals[i] = saved;
      double numeric = (up - down) / (2.0 * step);
      double ana = analytic[pi][i];
      double denom = std::max({std::fabs(ana), std::fabs(numeric), 1e-12});
      max_err = std::max(max_err, std::fabs(ana - numeric) / denom);
    }
  }
  return max_err;
}

}  // namespace convasr
