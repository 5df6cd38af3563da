#include "ledit/conditioning.hpp"

#include <cmath>

namespace ledit {

Tensor timestep_sinusoid(double t, int64_t dim) {
  if (dim < 2 || dim % 2 != 0)
    throw ConfigError("timestep_sinusoid: dim must be even and >= 2, got " + std::to_string(dim));
  int64_t half = dim / 2;
  Tensor out({1, dim});
  for (int64_t k = 0; k < half; ++k) {
    double freq = std::exp(-std::log(10000.0) * double(k) / double(half));
    out[k] = std::sin(t * freq);
    out[half + k] = std::cos(t * freq);
  }
  return out;
}

void LabelTable::validate() const {
  if (num_classes < 1) throw ConfigError("label table: num_classes must be >= 1");
  if (table.ndim() != 2 || table.shape[0] != num_classes + 1)
    throw DimensionError("label table: expected [" + std::to_string(num_classes + 1) +
                         ", dim], got " + shape_str(table.shape));
}

int64_t resolve_label_row(int label, int num_classes, double dropout_p, RngStream* rng) {
  if (num_classes < 1) throw ConfigError("resolve_label_row: num_classes must be >= 1");
  if (!(dropout_p >= 0.0 && dropout_p <= 1.0))
    throw ConfigError("resolve_label_row: dropout_p must be in [0,1]");
  if (label == kNullLabel) return num_classes;
  if (label < 0 || label >= num_classes)
    throw InputError("resolve_label_row: class id " + std::to_string(label) + " out of [0," +
                     std::to_string(num_classes) + ")");
  if (dropout_p > 0.0) {
    if (!rng) throw InputError("resolve_label_row: dropout requires an rng");
    if (rng->uniform() < dropout_p) return num_classes;
  }
  return label;
}

Tensor modulate(const Tensor& x, const Tensor& shift, const Tensor& scale, double eps) {
  if (x.ndim() < 1) throw DimensionError("modulate: rank-0 input");
  int64_t d = x.shape.back();
  if (shift.numel() != d || scale.numel() != d)
    throw DimensionError("modulate: shift/scale numel must equal last dim " + std::to_string(d));
  Tensor y = layer_norm(x, eps);
  int64_t rows = y.numel() / d;
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t j = 0; j < d; ++j) {
      double& v = y.data[static_cast<size_t>(r * d + j)];
      v = v * (1.0 + scale[j]) + shift[j];
    }
  return y;
}

Var modulate_t(Tape& tape, Var x, Var shift, Var scale, double eps) {
  Var normed = tape.layer_norm(x, eps);
  Var scaled = tape.mul_rowvec(normed, tape.add_scalar(scale, 1.0));
  return tape.add_rowvec(scaled, shift);
}

ModulationParams split_modulation(Tape& tape, Var mod, int64_t hidden) {
  const Tensor& mv = tape.value(mod);
  if (mv.ndim() != 2 || mv.shape[0] != 1 || mv.shape[1] != 6 * hidden)
    throw DimensionError("split_modulation: expected [1," + std::to_string(6 * hidden) + "], got " +
                         shape_str(mv.shape));
  ModulationParams p;
  p.shift_attn = tape.slice_cols(mod, 0 * hidden, 1 * hidden);
  p.scale_attn = tape.slice_cols(mod, 1 * hidden, 2 * hidden);
  p.gate_attn = tape.slice_cols(mod, 2 * hidden, 3 * hidden);
  p.shift_mlp = tape.slice_cols(mod, 3 * hidden, 4 * hidden);
  p.scale_mlp = tape.slice_cols(mod, 4 * hidden, 5 * hidden);
  p.gate_mlp = tape.slice_cols(mod, 5 * hidden, 6 * hidden);
  return p;
}

}  // namespace ledit
