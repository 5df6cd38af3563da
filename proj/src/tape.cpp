#include "ledit/tape.hpp"

#include <cmath>

namespace ledit {

Var Tape::push(Tensor value, bool requires_grad,
               std::function<void(Tape&, const Tensor&)> backfn) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backfn = std::move(backfn);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int32_t>(nodes_.size() - 1)};
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  return push(std::move(value), requires_grad, nullptr);
}

Tensor Tape::grad(Var v) const {
  const Node& n = node(v);
  if (n.grad.numel() == 0) return Tensor(n.value.shape);
  return n.grad;
}

void Tape::reset() {
  nodes_.clear();
  swept_ = false;
}

void Tape::accumulate(Var v, const Tensor& delta) {
  Node& n = node(v);
  if (!n.requires_grad) return;
  if (n.grad.numel() == 0) {
    n.grad = delta;
    return;
  }
  if (!n.grad.same_shape(delta)) throw DimensionError("Tape: gradient shape mismatch on accumulate");
  for (int64_t i = 0; i < delta.numel(); ++i) n.grad[i] += delta[i];
}

void Tape::backward(Var root) {
  if (swept_) throw InputError("Tape: backward called twice on one tape");
  Node& r = node(root);
  if (r.value.numel() != 1) throw DimensionError("Tape: backward root must be scalar");
  if (!r.requires_grad) throw InputError("Tape: backward root does not require grad");
  r.grad = Tensor::full(r.value.shape, 1.0);
  for (int32_t i = root.idx; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (!n.requires_grad || n.grad.numel() == 0 || !n.backfn) continue;
    n.backfn(*this, n.grad);
  }
  swept_ = true;
}

// ---- helpers -----------------------------------------------------------------

static void need_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw DimensionError(std::string(op) + ": shapes " + shape_str(a.shape) + " vs " + shape_str(b.shape));
}

// ---- elementwise ---------------------------------------------------------------

Var Tape::add(Var a, Var b) {
  const Tensor &ta = value(a), &tb = value(b);
  need_same_shape(ta, tb, "add");
  Tensor out(ta.shape);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = ta[i] + tb[i];
  bool rg = requires_grad(a) || requires_grad(b);
  return push(std::move(out), rg, [a, b](Tape& t, const Tensor& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var Tape::sub(Var a, Var b) {
  const Tensor &ta = value(a), &tb = value(b);
  need_same_shape(ta, tb, "sub");
  Tensor out(ta.shape);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = ta[i] - tb[i];
  bool rg = requires_grad(a) || requires_grad(b);
  return push(std::move(out), rg, [a, b](Tape& t, const Tensor& g) {
    t.accumulate(a, g);
    Tensor neg(g.shape);
    for (int64_t i = 0; i < g.numel(); ++i) neg[i] = -g[i];
    t.accumulate(b, neg);
  });
}

Var Tape::mul(Var a, Var b) {
  const Tensor &ta = value(a), &tb = value(b);
  need_same_shape(ta, tb, "mul");
  Tensor out(ta.shape);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = ta[i] * tb[i];
  bool rg = requires_grad(a) || requires_grad(b);
  return push(std::move(out), rg, [a, b](Tape& t, const Tensor& g) {
    const Tensor &va = t.value(a), &vb = t.value(b);
    Tensor da(g.shape), db(g.shape);
    for (int64_t i = 0; i < g.numel(); ++i) {
      da[i] = g[i] * vb[i];
      db[i] = g[i] * va[i];
    }
    t.accumulate(a, da);
    t.accumulate(b, db);
  });
}

Var Tape::scale(Var a, double s) {
  const Tensor& ta = value(a);
  Tensor out(ta.shape);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = ta[i] * s;
  return push(std::move(out), requires_grad(a), [a, s](Tape& t, const Tensor& g) {
    Tensor da(g.shape);
    for (int64_t i = 0; i < g.numel(); ++i) da[i] = g[i] * s;
    t.accumulate(a, da);
  });
}

Var Tape::add_scalar(Var a, double c) {
  const Tensor& ta = value(a);
  Tensor out(ta.shape);
  for (int64_t i = 0; i < out.numel(); ++i) out[i] = ta[i] + c;
  return push(std::move(out), requires_grad(a),
              [a](Tape& t, const Tensor& g) { t.accumulate(a, g); });
}

static void need_rowvec(const Tensor& x, const Tensor& v, const char* op) {
  if (x.ndim() != 2) throw DimensionError(std::string(op) + ": x must be rank-2");
  if (v.numel() != x.shape[1])
    throw DimensionError(std::string(op) + ": vec numel " + std::to_string(v.numel()) +
                         " vs cols " + std::to_string(x.shape[1]));
}

Var Tape::add_rowvec(Var x, Var v) {
  const Tensor &tx = value(x), &tv = value(v);
  need_rowvec(tx, tv, "add_rowvec");
  int64_t n = tx.shape[0], m = tx.shape[1];
  Tensor out(tx.shape);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < m; ++j) out[i * m + j] = tx[i * m + j] + tv[j];
  bool rg = requires_grad(x) || requires_grad(v);
  return push(std::move(out), rg, [x, v, n, m](Tape& t, const Tensor& g) {
    t.accumulate(x, g);
    Tensor dv(t.value(v).shape);
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < m; ++j) dv[j] += g[i * m + j];
    t.accumulate(v, dv);
  });
}

Var Tape::mul_rowvec(Var x, Var v) {
  const Tensor &tx = value(x), &tv = value(v);
  need_rowvec(tx, tv, "mul_rowvec");
  int64_t n = tx.shape[0], m = tx.shape[1];
  Tensor out(tx.shape);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < m; ++j) out[i * m + j] = tx[i * m + j] * tv[j];
  bool rg = requires_grad(x) || requires_grad(v);
  return push(std::move(out), rg, [x, v, n, m](Tape& t, const Tensor& g) {
    const Tensor &vx = t.value(x), &vv = t.value(v);
    Tensor dx(vx.shape);
    Tensor dv(vv.shape);
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < m; ++j) {
        dx[i * m + j] = g[i * m + j] * vv[j];
        dv[j] += g[i * m + j] * vx[i * m + j];
      }
    t.accumulate(x, dx);
    t.accumulate(v, dv);
  });
}

Var Tape::gelu(Var x) {
  const Tensor& tx = value(x);
  Tensor out(tx.shape);
  constexpr double inv_sqrt2 = 0.7071067811865475244;
  for (int64_t i = 0; i < out.numel(); ++i)
    out[i] = 0.5 * tx[i] * (1.0 + std::erf(tx[i] * inv_sqrt2));
  return push(std::move(out), requires_grad(x), [x](Tape& t, const Tensor& g) {
    const Tensor& vx = t.value(x);
    Tensor dx(vx.shape);
    constexpr double is2 = 0.7071067811865475244;
    constexpr double inv_sqrt2pi = 0.3989422804014326779;
    for (int64_t i = 0; i < g.numel(); ++i) {
      double v = vx[i];
      double d = 0.5 * (1.0 + std::erf(v * is2)) + v * inv_sqrt2pi * std::exp(-0.5 * v * v);
      dx[i] = g[i] * d;
    }
    t.accumulate(x, dx);
  });
}

Var Tape::silu(Var x) {
  const Tensor& tx = value(x);
  Tensor out(tx.shape);
  for (int64_t i = 0; i < out.numel(); ++i) {
    double s = 1.0 / (1.0 + std::exp(-tx[i]));
    out[i] = tx[i] * s;
  }
  return push(std::move(out), requires_grad(x), [x](Tape& t, const Tensor& g) {
    const Tensor& vx = t.value(x);
    Tensor dx(vx.shape);
    for (int64_t i = 0; i < g.numel(); ++i) {
      double s = 1.0 / (1.0 + std::exp(-vx[i]));
      dx[i] = g[i] * s * (1.0 + vx[i] * (1.0 - s));
    }
    t.accumulate(x, dx);
  });
}

// ---- linear algebra -------------------------------------------------------------

Var Tape::matmul(Var a, Var b) {
  Tensor out = ledit::matmul(value(a), value(b));
  bool rg = requires_grad(a) || requires_grad(b);
  return push(std::move(out), rg, [a, b](Tape& t, const Tensor& g) {
    Tensor da, db;
    matmul_backward(t.value(a), t.value(b), g, da, db);
    t.accumulate(a, da);
    t.accumulate(b, db);
  });
}

Var Tape::matmul_nt(Var a, Var b) {
  Tensor out = ledit::matmul_nt(value(a), value(b));
  bool rg = requires_grad(a) || requires_grad(b);
  return push(std::move(out), rg, [a, b](Tape& t, const Tensor& g) {
    Tensor da, db;
    matmul_nt_backward(t.value(a), t.value(b), g, da, db);
    t.accumulate(a, da);
    t.accumulate(b, db);
  });
}

// ---- normalization / attention pieces ----------------------------------------

Var Tape::softmax_lastdim(Var x, const Tensor* mask) {
  Tensor out = ledit::softmax_lastdim(value(x), mask);
  Var self{static_cast<int32_t>(nodes_.size())};  // softmax backward reads own value
  return push(std::move(out), requires_grad(x), [x, self](Tape& t, const Tensor& g) {
    Tensor dx;
    softmax_lastdim_backward(t.value(self), g, dx);
    t.accumulate(x, dx);
  });
}

Var Tape::layer_norm(Var x, double eps) {
  Tensor out = ledit::layer_norm(value(x), eps);
  return push(std::move(out), requires_grad(x), [x, eps](Tape& t, const Tensor& g) {
    Tensor dx;
    layer_norm_backward(t.value(x), g, eps, dx);
    t.accumulate(x, dx);
  });
}

// ---- convolution -----------------------------------------------------------------

Var Tape::conv2d(Var x, Var w, Var b, const ConvSpec& spec) {
  Tensor out = ledit::conv2d(value(x), value(w), value(b), spec);
  bool rg = requires_grad(x) || requires_grad(w) || requires_grad(b);
  return push(std::move(out), rg, [x, w, b, spec](Tape& t, const Tensor& g) {
    Tensor dx, dw, db;
    conv2d_backward(t.value(x), t.value(w), spec, g, dx, dw, db);
    t.accumulate(x, dx);
    t.accumulate(w, dw);
    t.accumulate(b, db);
  });
}

// ---- layout ---------------------------------------------------------------------

Var Tape::reshape(Var x, std::vector<int64_t> shape) {
  const Tensor& tx = value(x);
  if (Tensor::numel_of(shape) != tx.numel())
    throw DimensionError("reshape: numel mismatch " + shape_str(tx.shape) + " -> " + shape_str(shape));
  Tensor out(shape, tx.data);
  return push(std::move(out), requires_grad(x), [x](Tape& t, const Tensor& g) {
    Tensor dx(t.value(x).shape, g.data);
    t.accumulate(x, dx);
  });
}

Var Tape::slice_cols(Var x, int64_t c0, int64_t c1) {
  const Tensor& tx = value(x);
  if (tx.ndim() != 2) throw DimensionError("slice_cols: x must be rank-2");
  if (c0 < 0 || c1 > tx.shape[1] || c0 >= c1) throw DimensionError("slice_cols: bad column range");
  int64_t n = tx.shape[0], m = tx.shape[1], w = c1 - c0;
  Tensor out({n, w});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < w; ++j) out[i * w + j] = tx[i * m + c0 + j];
  return push(std::move(out), requires_grad(x), [x, c0, n, m, w](Tape& t, const Tensor& g) {
    Tensor dx({n, m});
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < w; ++j) dx[i * m + c0 + j] = g[i * w + j];
    t.accumulate(x, dx);
  });
}

Var Tape::concat_cols(const std::vector<Var>& xs) {
  if (xs.empty()) throw InputError("concat_cols: no inputs");
  int64_t n = value(xs[0]).shape[0];
  int64_t total = 0;
  bool rg = false;
  for (Var v : xs) {
    const Tensor& tv = value(v);
    if (tv.ndim() != 2 || tv.shape[0] != n) throw DimensionError("concat_cols: row mismatch");
    total += tv.shape[1];
    rg = rg || requires_grad(v);
  }
  Tensor out({n, total});
  int64_t off = 0;
  for (Var v : xs) {
    const Tensor& tv = value(v);
    int64_t w = tv.shape[1];
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < w; ++j) out[i * total + off + j] = tv[i * w + j];
    off += w;
  }
  std::vector<Var> parents = xs;
  return push(std::move(out), rg, [parents, n, total](Tape& t, const Tensor& g) {
    int64_t off = 0;
    for (Var v : parents) {
      int64_t w = t.value(v).shape[1];
      Tensor dv({n, w});
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < w; ++j) dv[i * w + j] = g[i * total + off + j];
      t.accumulate(v, dv);
      off += w;
    }
  });
}

Var Tape::take_row(Var table, int64_t row) {
  const Tensor& tt = value(table);
  if (tt.ndim() != 2) throw DimensionError("take_row: table must be rank-2");
  if (row < 0 || row >= tt.shape[0])
    throw InputError("take_row: row " + std::to_string(row) + " out of " + std::to_string(tt.shape[0]));
  int64_t d = tt.shape[1];
  Tensor out({1, d});
  for (int64_t j = 0; j < d; ++j) out[j] = tt[row * d + j];
  return push(std::move(out), requires_grad(table), [table, row, d](Tape& t, const Tensor& g) {
    Tensor dt(t.value(table).shape);
    for (int64_t j = 0; j < d; ++j) dt[row * d + j] = g[j];
    t.accumulate(table, dt);
  });
}

Var Tape::gather(Var x, std::shared_ptr<const std::vector<int64_t>> index,
                 std::vector<int64_t> out_shape) {
  const Tensor& tx = value(x);
  if (static_cast<int64_t>(index->size()) != Tensor::numel_of(out_shape))
    throw DimensionError("gather: index size vs out shape");
  Tensor out(out_shape);
  for (size_t i = 0; i < index->size(); ++i) {
    int64_t src = (*index)[i];
    if (src < 0 || src >= tx.numel()) throw DimensionError("gather: index out of range");
    out[static_cast<int64_t>(i)] = tx[src];
  }
  return push(std::move(out), requires_grad(x), [x, index](Tape& t, const Tensor& g) {
    Tensor dx(t.value(x).shape);
    for (size_t i = 0; i < index->size(); ++i) dx[(*index)[i]] += g[static_cast<int64_t>(i)];
    t.accumulate(x, dx);
  });
}

// ---- reductions ---------------------------------------------------------------

Var Tape::sum(Var x) {
  const Tensor& tx = value(x);
  double s = 0.0;
  for (int64_t i = 0; i < tx.numel(); ++i) s += tx[i];
  Tensor out({1});
  out[0] = s;
  return push(std::move(out), requires_grad(x), [x](Tape& t, const Tensor& g) {
    Tensor dx = Tensor::full(t.value(x).shape, g[0]);
    t.accumulate(x, dx);
  });
}

Var Tape::mse(Var a, Var b) {
  const Tensor &ta = value(a), &tb = value(b);
  need_same_shape(ta, tb, "mse");
  int64_t n = ta.numel();
  if (n == 0) throw DimensionError("mse: empty tensors");
  double s = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    double d = ta[i] - tb[i];
    s += d * d;
  }
  Tensor out({1});
  out[0] = s / double(n);
  bool rg = requires_grad(a) || requires_grad(b);
  return push(std::move(out), rg, [a, b, n](Tape& t, const Tensor& g) {
    const Tensor &va = t.value(a), &vb = t.value(b);
    Tensor da(va.shape), db(vb.shape);
    double c = 2.0 * g[0] / double(n);
    for (int64_t i = 0; i < n; ++i) {
      double d = c * (va[i] - vb[i]);
      da[i] = d;
      db[i] = -d;
    }
    t.accumulate(a, da);
    t.accumulate(b, db);
  });
}

// ---- numerical gradient check ---------------------------------------------------

double grad_check(const std::function<Var(Tape&, const std::vector<Var>&)>& f,
                  const std::vector<Tensor>& inputs, double h) {
  if (h <= 0) throw ConfigError("grad_check: h must be > 0");

  auto eval = [&](const std::vector<Tensor>& ins, std::vector<Tensor>* grads) -> double {
    Tape tape;
    std::vector<Var> vars;
    vars.reserve(ins.size());
    for (const Tensor& t : ins) vars.push_back(tape.leaf(t, true));
    Var y = f(tape, vars);
    const Tensor& yv = tape.value(y);
    if (yv.numel() != 1) throw DimensionError("grad_check: f must be scalar-valued");
    if (!yv.all_finite()) throw NumericError("grad_check: non-finite function value");
    double out = yv[0];
    if (grads) {
      tape.backward(y);
      grads->clear();
      for (Var v : vars) {
        Tensor g = tape.grad(v);
        if (!g.all_finite()) throw NumericError("grad_check: non-finite analytic gradient");
        grads->push_back(std::move(g));
      }
    }
    return out;
  };

  std::vector<Tensor> analytic;
  eval(inputs, &analytic);

  std::vector<Tensor> work = inputs;
  double max_err = 0.0;
  for (size_t k = 0; k < work.size(); ++k) {
    for (int64_t i = 0; i < work[k].numel(); ++i) {
      double orig = work[k][i];
      work[k][i] = orig + h;
      double fp = eval(work, nullptr);
      work[k][i] = orig - h;
      double fm = eval(work, nullptr);
      work[k][i] = orig;
      double numeric = (fp - fm) / (2.0 * h);
      if (!std::isfinite(numeric)) throw NumericError("grad_check: non-finite finite difference");
      double a = analytic[k][i];
      double err = std::abs(a - numeric) / std::max(1.0, std::abs(a));
      if (err > max_err) max_err = err;
    }
  }
  return max_err;
}

}  // namespace ledit
