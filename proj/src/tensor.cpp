#include "ledit/tensor.hpp"

#include <Eigen/Core>

#include <cmath>
#include <sstream>

namespace ledit {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using MapM = Eigen::Map<RowMat>;

std::string shape_str(const std::vector<int64_t>& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

bool Tensor::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

Tensor Tensor::full(std::vector<int64_t> s, double v) {
  Tensor t(std::move(s));
  for (double& x : t.data) x = v;
  return t;
}

Tensor Tensor::randn(std::vector<int64_t> s, RngStream& rng, double scale) {
  Tensor t(std::move(s));
  for (double& x : t.data) x = scale * rng.normal();
  return t;
}

Tensor Tensor::identity(int64_t n) {
  Tensor t({n, n});
  for (int64_t i = 0; i < n; ++i) t.at2(i, i) = 1.0;
  return t;
}

int64_t conv_out_len(int64_t in_len, const ConvSpec& spec) {
  if (spec.kernel < 1 || spec.kernel % 2 == 0)
    throw ConfigError("conv: kernel must be odd and positive, got " + std::to_string(spec.kernel));
  if (spec.stride < 1) throw ConfigError("conv: stride must be >= 1");
  if (spec.dilation < 1) throw ConfigError("conv: dilation must be >= 1");
  if (spec.pad < 0) throw ConfigError("conv: pad must be >= 0");
  int64_t eff = static_cast<int64_t>(spec.dilation) * (spec.kernel - 1) + 1;  // effective kernel extent
  int64_t out = (in_len + 2 * spec.pad - eff) / spec.stride + 1;
  if (in_len + 2 * spec.pad < eff || out < 1)
    throw ConfigError("conv: output length would be < 1 (in=" + std::to_string(in_len) + ")");
  return out;
}

// ---- matmul -----------------------------------------------------------------

static void check_2d(const Tensor& t, const char* who) {
  if (t.ndim() != 2) throw DimensionError(std::string(who) + ": expected rank-2, got " + shape_str(t.shape));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_2d(a, "matmul lhs");
  check_2d(b, "matmul rhs");
  if (a.shape[1] != b.shape[0])
    throw DimensionError("matmul: inner dims " + shape_str(a.shape) + " x " + shape_str(b.shape));
  Tensor c({a.shape[0], b.shape[1]});
  MapM(c.data.data(), a.shape[0], b.shape[1]) =
      MapC(a.data.data(), a.shape[0], a.shape[1]) * MapC(b.data.data(), b.shape[0], b.shape[1]);
  return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  check_2d(a, "matmul_nt lhs");
  check_2d(b, "matmul_nt rhs");
  if (a.shape[1] != b.shape[1])
    throw DimensionError("matmul_nt: inner dims " + shape_str(a.shape) + " x " + shape_str(b.shape) + "^T");
  Tensor c({a.shape[0], b.shape[0]});
  MapM(c.data.data(), a.shape[0], b.shape[0]) =
      MapC(a.data.data(), a.shape[0], a.shape[1]) * MapC(b.data.data(), b.shape[0], b.shape[1]).transpose();
  return c;
}

void matmul_backward(const Tensor& a, const Tensor& b, const Tensor& g, Tensor& da, Tensor& db) {
  // da = g * b^T, db = a^T * g
  da = Tensor({a.shape[0], a.shape[1]});
  db = Tensor({b.shape[0], b.shape[1]});
  MapM(da.data.data(), a.shape[0], a.shape[1]) =
      MapC(g.data.data(), g.shape[0], g.shape[1]) * MapC(b.data.data(), b.shape[0], b.shape[1]).transpose();
  MapM(db.data.data(), b.shape[0], b.shape[1]) =
      MapC(a.data.data(), a.shape[0], a.shape[1]).transpose() * MapC(g.data.data(), g.shape[0], g.shape[1]);
}

void matmul_nt_backward(const Tensor& a, const Tensor& b, const Tensor& g, Tensor& da, Tensor& db) {
  // c = a * b^T: da = g * b, db = g^T * a
  da = Tensor({a.shape[0], a.shape[1]});
  db = Tensor({b.shape[0], b.shape[1]});
  MapM(da.data.data(), a.shape[0], a.shape[1]) =
      MapC(g.data.data(), g.shape[0], g.shape[1]) * MapC(b.data.data(), b.shape[0], b.shape[1]);
  MapM(db.data.data(), b.shape[0], b.shape[1]) =
      MapC(g.data.data(), g.shape[0], g.shape[1]).transpose() * MapC(a.data.data(), a.shape[0], a.shape[1]);
}

// ---- softmax ----------------------------------------------------------------

Tensor softmax_lastdim(const Tensor& x, const Tensor* mask) {
  if (x.ndim() < 1) throw DimensionError("softmax: rank-0 input");
  int64_t n = x.shape.back();
  if (n < 1) throw DimensionError("softmax: empty last dim");
  int64_t rows = x.numel() / n;

  int64_t mask_rows = 0;
  if (mask) {
    if (mask->ndim() < 1 || mask->shape.back() != n)
      throw DimensionError("softmax: mask last dim " + shape_str(mask->shape) + " vs x " + shape_str(x.shape));
    if (mask->numel() % n != 0 || x.numel() % mask->numel() != 0)
      throw DimensionError("softmax: mask numel must tile x");
    mask_rows = mask->numel() / n;
  }

  Tensor y(x.shape);
  for (int64_t r = 0; r < rows; ++r) {
    const double* xr = x.data.data() + r * n;
    const double* mr = mask ? mask->data.data() + (r % mask_rows) * n : nullptr;
    double* yr = y.data.data() + r * n;

    double maxv = -std::numeric_limits<double>::infinity();
    for (int64_t j = 0; j < n; ++j) {
      double v = xr[j] + (mr ? mr[j] : 0.0);
      bool masked = (mr && mr[j] <= kMaskedThreshold) || v <= kMaskedThreshold;
      if (!masked && v > maxv) maxv = v;
    }
    if (maxv == -std::numeric_limits<double>::infinity())
      throw AllMaskedError("softmax: slice " + std::to_string(r) + " has every entry masked");

    double sum = 0.0;
    for (int64_t j = 0; j < n; ++j) {
      double v = xr[j] + (mr ? mr[j] : 0.0);
      bool masked = (mr && mr[j] <= kMaskedThreshold) || v <= kMaskedThreshold;
      double e = masked ? 0.0 : std::exp(v - maxv);
      yr[j] = e;
      sum += e;
    }
    for (int64_t j = 0; j < n; ++j) yr[j] /= sum;
  }
  return y;
}

void softmax_lastdim_backward(const Tensor& y, const Tensor& g, Tensor& dx) {
  int64_t n = y.shape.back();
  int64_t rows = y.numel() / n;
  dx = Tensor(y.shape);
  for (int64_t r = 0; r < rows; ++r) {
    const double* yr = y.data.data() + r * n;
    const double* gr = g.data.data() + r * n;
    double* dr = dx.data.data() + r * n;
    double dot = 0.0;
    for (int64_t j = 0; j < n; ++j) dot += yr[j] * gr[j];
    for (int64_t j = 0; j < n; ++j) dr[j] = yr[j] * (gr[j] - dot);
  }
}

// ---- layer norm ---------------------------------------------------------------

Tensor layer_norm(const Tensor& x, double eps) {
  if (x.ndim() < 1) throw DimensionError("layer_norm: rank-0 input");
  if (eps < 0) throw ConfigError("layer_norm: eps must be >= 0");
  int64_t n = x.shape.back();
  if (n < 1) throw DimensionError("layer_norm: empty last dim");
  int64_t rows = x.numel() / n;
  Tensor y(x.shape);
  for (int64_t r = 0; r < rows; ++r) {
    const double* xr = x.data.data() + r * n;
    double* yr = y.data.data() + r * n;
    double mean = 0.0;
    for (int64_t j = 0; j < n; ++j) mean += xr[j];
    mean /= double(n);
    double var = 0.0;
    for (int64_t j = 0; j < n; ++j) {
      double d = xr[j] - mean;
      var += d * d;
    }
    var /= double(n);
    double inv = 1.0 / std::sqrt(var + eps);
    for (int64_t j = 0; j < n; ++j) yr[j] = (xr[j] - mean) * inv;
  }
  return y;
}

void layer_norm_backward(const Tensor& x, const Tensor& g, double eps, Tensor& dx) {
  int64_t n = x.shape.back();
  int64_t rows = x.numel() / n;
  dx = Tensor(x.shape);
  for (int64_t r = 0; r < rows; ++r) {
    const double* xr = x.data.data() + r * n;
    const double* gr = g.data.data() + r * n;
    double* dr = dx.data.data() + r * n;
    double mean = 0.0;
    for (int64_t j = 0; j < n; ++j) mean += xr[j];
    mean /= double(n);
    double var = 0.0;
    for (int64_t j = 0; j < n; ++j) {
      double d = xr[j] - mean;
      var += d * d;
    }
    var /= double(n);
    double inv = 1.0 / std::sqrt(var + eps);
    // y_j = (x_j - mean) * inv; dx = inv * (g - mean(g) - y * mean(g*y))
    double gmean = 0.0, gymean = 0.0;
    for (int64_t j = 0; j < n; ++j) {
      double yj = (xr[j] - mean) * inv;
      gmean += gr[j];
      gymean += gr[j] * yj;
    }
    gmean /= double(n);
    gymean /= double(n);
    for (int64_t j = 0; j < n; ++j) {
      double yj = (xr[j] - mean) * inv;
      dr[j] = inv * (gr[j] - gmean - yj * gymean);
    }
  }
}

// ---- conv2d -----------------------------------------------------------------

static void check_conv_shapes(const Tensor& x, const Tensor& w, const Tensor& b) {
  if (x.ndim() != 3) throw DimensionError("conv2d: x must be [C,H,W], got " + shape_str(x.shape));
  if (w.ndim() != 4) throw DimensionError("conv2d: w must be [Cout,Cin,k,k], got " + shape_str(w.shape));
  if (b.ndim() != 1 || b.shape[0] != w.shape[0])
    throw DimensionError("conv2d: b must be [Cout], got " + shape_str(b.shape));
  if (w.shape[1] != x.shape[0])
    throw DimensionError("conv2d: Cin mismatch, x " + shape_str(x.shape) + " w " + shape_str(w.shape));
  if (w.shape[2] != w.shape[3]) throw DimensionError("conv2d: kernel must be square");
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, const ConvSpec& spec) {
  check_conv_shapes(x, w, b);
  if (w.shape[2] != spec.kernel) throw ConfigError("conv2d: w kernel != spec.kernel");
  int64_t C = x.shape[0], H = x.shape[1], W = x.shape[2];
  int64_t Co = w.shape[0], K = spec.kernel;
  int64_t Ho = conv_out_len(H, spec), Wo = conv_out_len(W, spec);
  Tensor y({Co, Ho, Wo});
  for (int64_t co = 0; co < Co; ++co)
    for (int64_t oy = 0; oy < Ho; ++oy)
      for (int64_t ox = 0; ox < Wo; ++ox) {
        double acc = b[co];
        for (int64_t ci = 0; ci < C; ++ci)
          for (int64_t ky = 0; ky < K; ++ky) {
            int64_t iy = oy * spec.stride - spec.pad + ky * spec.dilation;
            if (iy < 0 || iy >= H) continue;
            for (int64_t kx = 0; kx < K; ++kx) {
              int64_t ix = ox * spec.stride - spec.pad + kx * spec.dilation;
              if (ix < 0 || ix >= W) continue;
              acc += x.at3(ci, iy, ix) * w.data[((co * C + ci) * K + ky) * K + kx];
            }
          }
        y.at3(co, oy, ox) = acc;
      }
  return y;
}

void conv2d_backward(const Tensor& x, const Tensor& w, const ConvSpec& spec, const Tensor& g,
                     Tensor& dx, Tensor& dw, Tensor& db) {
  int64_t C = x.shape[0], H = x.shape[1], W = x.shape[2];
  int64_t Co = w.shape[0], K = spec.kernel;
  int64_t Ho = g.shape[1], Wo = g.shape[2];
  dx = Tensor(x.shape);
  dw = Tensor(w.shape);
  db = Tensor({Co});
  for (int64_t co = 0; co < Co; ++co)
    for (int64_t oy = 0; oy < Ho; ++oy)
      for (int64_t ox = 0; ox < Wo; ++ox) {
        double go = g.at3(co, oy, ox);
        db[co] += go;
        for (int64_t ci = 0; ci < C; ++ci)
          for (int64_t ky = 0; ky < K; ++ky) {
            int64_t iy = oy * spec.stride - spec.pad + ky * spec.dilation;
            if (iy < 0 || iy >= H) continue;
            for (int64_t kx = 0; kx < K; ++kx) {
              int64_t ix = ox * spec.stride - spec.pad + kx * spec.dilation;
              if (ix < 0 || ix >= W) continue;
              dw.data[((co * C + ci) * K + ky) * K + kx] += go * x.at3(ci, iy, ix);
              dx.at3(ci, iy, ix) += go * w.data[((co * C + ci) * K + ky) * K + kx];
            }
          }
      }
}

}  // namespace ledit
