#pragma once
// Reverse-mode autodiff on a linear tape. Ops append nodes in evaluation order;
// backward() walks the node list once in reverse, so each node's adjoint is
// complete before it propagates to its parents (valid for any DAG built through
// this API). Gradients are allocated lazily and only for nodes that require them.

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "ledit/tensor.hpp"

namespace ledit {

struct Var {
  int32_t idx = -1;
  bool valid() const { return idx >= 0; }
};

class Tape {
 public:
  // ---- leaves ----
  Var leaf(Tensor value, bool requires_grad = true);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  const Tensor& value(Var v) const { return node(v).value; }
  // Adjoint of v after backward(); zero tensor if v never received gradient.
  Tensor grad(Var v) const;
  bool requires_grad(Var v) const { return node(v).requires_grad; }
  size_t size() const { return nodes_.size(); }
  void reset();

  // ---- elementwise / broadcast ----
  Var add(Var a, Var b);                 // same shape
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);                 // Hadamard
  Var scale(Var a, double s);
  Var add_scalar(Var a, double c);
  Var add_rowvec(Var x, Var v);          // x [n,m] + v (numel m), broadcast over rows
  Var mul_rowvec(Var x, Var v);          // x [n,m] * v (numel m)
  Var gelu(Var x);                       // exact erf form
  Var silu(Var x);

  // ---- linear algebra ----
  Var matmul(Var a, Var b);
  Var matmul_nt(Var a, Var b);           // a * b^T

  // ---- normalization / attention pieces ----
  Var softmax_lastdim(Var x, const Tensor* mask = nullptr);
  Var layer_norm(Var x, double eps = 1e-6);

  // ---- convolution ----
  Var conv2d(Var x, Var w, Var b, const ConvSpec& spec);

  // ---- layout ----
  Var reshape(Var x, std::vector<int64_t> shape);              // same numel
  Var slice_cols(Var x, int64_t c0, int64_t c1);               // x rank-2
  Var concat_cols(const std::vector<Var>& xs);                 // all rank-2, same rows
  Var take_row(Var table, int64_t row);                        // -> [1, d]
  // Bijective layout permutation: out.flat[i] = x.flat[index[i]]. Used for
  // patch <-> image <-> grid reshuffles; index must be a permutation for the
  // scatter backward to be exact (not checked, callers build them as such).
  Var gather(Var x, std::shared_ptr<const std::vector<int64_t>> index,
             std::vector<int64_t> out_shape);

  // ---- reductions ----
  Var sum(Var x);                        // -> [1]
  Var mse(Var a, Var b);                 // mean squared difference -> [1]

  // Seed root (numel 1) with 1 and sweep. May be called once per tape build.
  void backward(Var root);

 private:
  struct Node {
    Tensor value;
    Tensor grad;                         // empty until first accumulation
    bool requires_grad = false;
    std::function<void(Tape&, const Tensor&)> backfn;  // (tape, upstream grad)
  };

  Node& node(Var v) {
    if (!v.valid() || v.idx >= static_cast<int32_t>(nodes_.size()))
      throw InputError("Tape: invalid Var handle");
    return nodes_[static_cast<size_t>(v.idx)];
  }
  const Node& node(Var v) const { return const_cast<Tape*>(this)->node(v); }

  Var push(Tensor value, bool requires_grad,
           std::function<void(Tape&, const Tensor&)> backfn);
  void accumulate(Var v, const Tensor& delta);

  std::vector<Node> nodes_;
  bool swept_ = false;
};

// Numerical gradient check. Builds the tape via f (which must return a scalar,
// numel-1 Var), compares analytic input gradients against central differences,
// and returns max over all coordinates of |analytic - numeric| / max(1, |analytic|).
// Throws NumericError if any value or gradient is non-finite.
double grad_check(const std::function<Var(Tape&, const std::vector<Var>&)>& f,
                  const std::vector<Tensor>& inputs, double h = 1e-5);

}  // namespace ledit
