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

#ifndef CONVASR_TENSOR_H_
#define CONVASR_TENSOR_H_

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "convasr/common.h"

namespace convasr {

// Dense 64-bit tensor with reverse-mode autodiff. Graphs are dynamic: each
// op records parent links and a backward closure on its output node whenever
// gradients are enabled and some input requires them. Rank 0 (scalar), 1 and
// 2 are supported; that is all the models here need.

using Shape = std::vector<int>;

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // allocated lazily, same length as data
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorImpl>> parents;
  // Propagates this node's grad into its parents' grads.
  std::function<void(const TensorImpl&)> backward_fn;

  void EnsureGrad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

class Tensor {
 public:
  Tensor() : impl_(nullptr) {}
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

  static Tensor Zeros(const Shape& shape);
  static Tensor Full(const Shape& shape, double value);
  static Tensor FromVector(const Shape& shape, std::vector<double> values);
  static Tensor Scalar(double value);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int rank() const { return static_cast<int>(impl_->shape.size()); }
  int dim(int axis) const { return impl_->shape[axis]; }
  int64_t numel() const { return static_cast<int64_t>(impl_->data.size()); }

  const std::vector<double>& values() const { return impl_->data; }
  std::vector<double>& mutable_values() { return impl_->data; }
  double value() const;  // scalar only
  double at(int i) const { return impl_->data[i]; }
  double at(int i, int j) const { return impl_->data[i * dim(1) + j]; }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool v) { impl_->requires_grad = v; }
  bool has_grad() const { return !impl_->grad.empty(); }
  const std::vector<double>& grad() const { return impl_->grad; }
  std::vector<double>& mutable_grad() {
    impl_->EnsureGrad();
    return impl_->grad;
  }
  void ZeroGrad() {
    if (!impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
  }

  TensorImpl* node() const { return impl_.get(); }
  const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

int64_t NumelOf(const Shape& shape);
std::string ShapeToString(const Shape& shape);

// Thread-local gradient switch. Inference paths disable recording so the
// forward pass allocates no graph.
bool GradEnabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool saved_;
};

// Recorded operations reachable from a root, in topological order (inputs
// before consumers). Backward walks the order once, in reverse.
struct Graph {
  std::vector<TensorImpl*> order;

  static Graph FromRoot(const Tensor& root);
  // Runs all backward closures. The root's grad must be seeded first.
  void RunBackward();
};

// Populates grads of all requires_grad leaves reachable from `loss`.
// Repeated calls accumulate. Throws ContractError if loss is not scalar.
void Backward(const Tensor& loss);

// ---- Primitives ---------------------------------------------------------

Tensor Add(const Tensor& a, const Tensor& b);  // same shape, or b rank-1 row bias
Tensor Sub(const Tensor& a, const Tensor& b);
Tensor Mul(const Tensor& a, const Tensor& b);
Tensor Div(const Tensor& a, const Tensor& b);
Tensor Scale(const Tensor& a, double c);
Tensor MatMul(const Tensor& a, const Tensor& b);
Tensor Tanh(const Tensor& a);
Tensor Sigmoid(const Tensor& a);
Tensor Softplus(const Tensor& a);
Tensor Log(const Tensor& a);
// Softmax along `axis` (rank-1: axis 0; rank-2: 0 or 1).
Tensor Softmax(const Tensor& a, int axis);
// Row-wise softmax over positions where mask is nonzero; masked entries are
// exactly zero in the output. Mask is a constant 0/1 matrix of a's shape.
Tensor MaskedSoftmax(const Tensor& a, const Tensor& mask);
// Normalizes the last axis to zero mean / unit variance, then applies the
// affine (gain, bias), both rank-1 of the axis extent.
Tensor LayerNorm(const Tensor& a, const Tensor& gain, const Tensor& bias);
Tensor EmbeddingLookup(const Tensor& table, const std::vector<int>& ids);
// Per-channel 1-D convolution with same padding; kernel is K x d, K odd.
Tensor DepthwiseConv1d(const Tensor& x, const Tensor& kernel);
Tensor Concat(const std::vector<Tensor>& parts, int axis);
Tensor MeanPoolTime(const Tensor& x);  // T x d -> d
Tensor Sum(const Tensor& a);           // -> scalar
Tensor SliceRows(const Tensor& x, int start, int len);
Tensor SliceCols(const Tensor& x, int start, int len);
Tensor Transpose(const Tensor& x);
Tensor Reshape(const Tensor& x, const Shape& shape);
// out[t] = x[t, ids[t]] for a T x V matrix.
Tensor GatherRows(const Tensor& x, const std::vector<int>& ids);

// ---- Verification -------------------------------------------------------

// Central-difference check of the analytic gradient of f() (a scalar tensor
// rebuilt from the current parameter values on every call) against finite
// differences with the given step. Returns the max over all parameter
// entries of |analytic - numeric| / max(|analytic|, |numeric|, 1e-12).
double FiniteDifferenceCheck(const std::function<Tensor()>& f,
                             const std::vector<Tensor>& params, double step);

}  // namespace convasr

#endif  // CONVASR_TENSOR_H_
