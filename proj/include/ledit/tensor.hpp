#pragma once
// Dense row-major double tensor plus the numeric kernels everything else is
// built from: matmul, masked softmax over the last dim, layer norm, and a
// dilated 2D convolution. Forward kernels live here together with the matching
// backward kernels the autodiff tape calls.

#include <cstdint>
#include <string>
#include <vector>

#include "ledit/errors.hpp"
#include "ledit/rng.hpp"

namespace ledit {

// Additive-mask sentinel: logits at or below kMaskedThreshold are treated as
// hard-masked and produce exactly 0.0 after softmax (not just a tiny value).
inline constexpr double kMaskedLogit = -1e30;
inline constexpr double kMaskedThreshold = -1e29;

struct Tensor {
  std::vector<int64_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int64_t> s) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(numel_of(shape)), 0.0);
  }
  Tensor(std::vector<int64_t> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (static_cast<int64_t>(data.size()) != numel_of(shape))
      throw DimensionError("Tensor: data size does not match shape");
  }

  static int64_t numel_of(const std::vector<int64_t>& s) {
    int64_t n = 1;
    for (int64_t d : s) {
      if (d < 0) throw DimensionError("Tensor: negative dimension");
      n *= d;
    }
    return n;
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int ndim() const { return static_cast<int>(shape.size()); }
  int64_t dim(int i) const { return shape[static_cast<size_t>(i)]; }

  // Flat and 2D/3D accessors; kernels index manually for speed, these are for
  // tests and glue code.
  double& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }
  double& at2(int64_t i, int64_t j) { return data[static_cast<size_t>(i * shape[1] + j)]; }
  double at2(int64_t i, int64_t j) const { return data[static_cast<size_t>(i * shape[1] + j)]; }
  double& at3(int64_t i, int64_t j, int64_t k) {
    return data[static_cast<size_t>((i * shape[1] + j) * shape[2] + k)];
  }
  double at3(int64_t i, int64_t j, int64_t k) const {
    return data[static_cast<size_t>((i * shape[1] + j) * shape[2] + k)];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  bool all_finite() const;

  static Tensor zeros(std::vector<int64_t> s) { return Tensor(std::move(s)); }
  static Tensor full(std::vector<int64_t> s, double v);
  // N(0, scale^2) entries drawn in flat order from rng.
  static Tensor randn(std::vector<int64_t> s, RngStream& rng, double scale = 1.0);
  static Tensor identity(int64_t n);
};

std::string shape_str(const std::vector<int64_t>& s);

// ---- dilated conv geometry ------------------------------------------------

struct ConvSpec {
  int kernel = 3;
  int pad = 1;
  int stride = 1;
  int dilation = 1;
};

// Output length of one spatial axis; throws ConfigError on non-positive result
// or invalid spec fields.
int64_t conv_out_len(int64_t in_len, const ConvSpec& spec);

// ---- forward kernels --------------------------------------------------------

// [m,k] x [k,n] -> [m,n]; exact 2D shape check.
Tensor matmul(const Tensor& a, const Tensor& b);
// a [m,k] x b^T where b is [n,k] -> [m,n]; used for attention scores.
Tensor matmul_nt(const Tensor& a, const Tensor& b);

// Softmax over the last dim. `mask` (additive, may be nullptr) must have the
// same trailing shape and a numel that divides x's; it is tiled over leading
// dims. Entries <= kMaskedThreshold come out exactly 0; a fully masked slice
// throws AllMaskedError.
Tensor softmax_lastdim(const Tensor& x, const Tensor* mask = nullptr);

// Normalize each last-dim slice to mean 0 / variance 1 (eps inside the sqrt).
// A constant slice maps to zeros.
Tensor layer_norm(const Tensor& x, double eps = 1e-6);

// x [Cin,H,W], w [Cout,Cin,k,k], b [Cout] -> [Cout,H',W']; zero padding,
// cross-correlation orientation. Requires odd kernel.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, const ConvSpec& spec);

// ---- backward kernels (used by the tape) -----------------------------------

// dL/da and dL/db of c = a*b given g = dL/dc.
void matmul_backward(const Tensor& a, const Tensor& b, const Tensor& g, Tensor& da, Tensor& db);
void matmul_nt_backward(const Tensor& a, const Tensor& b, const Tensor& g, Tensor& da, Tensor& db);

// dx of y = softmax(x+mask) given y and g: dx = y * (g - sum(g*y)) per slice
// (masked slots have y = 0, hence dx = 0 automatically).
void softmax_lastdim_backward(const Tensor& y, const Tensor& g, Tensor& dx);

void layer_norm_backward(const Tensor& x, const Tensor& g, double eps, Tensor& dx);

void conv2d_backward(const Tensor& x, const Tensor& w, const ConvSpec& spec, const Tensor& g,
                     Tensor& dx, Tensor& dw, Tensor& db);

}  // namespace ledit
