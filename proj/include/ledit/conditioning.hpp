#pragma once
// Timestep + class-label conditioning and adaLN modulation. Conditioning is
// spatially uniform — one vector modulates every token — so no positional
// information can enter through this path.

#include <cstdint>

#include "ledit/rng.hpp"
#include "ledit/tape.hpp"
#include "ledit/tensor.hpp"

namespace ledit {

// Class id meaning "unconditional" (classifier-free guidance null row).
inline constexpr int kNullLabel = -1;

// Raw sinusoid for scalar t: [sin(t*f_0)..sin(t*f_{h-1}), cos(...)] with
// f_k = 10000^(-k/h), h = dim/2. The learnable 2-layer map that follows lives
// in the model parameters. dim must be even.
Tensor timestep_sinusoid(double t, int64_t dim);

struct LabelTable {
  int num_classes = 0;
  Tensor table;  // [num_classes + 1, dim]; last row is the null embedding

  int64_t null_row() const { return num_classes; }
  void validate() const;
};

// Map a class id (or kNullLabel) to a table row, applying training-time label
// dropout: with probability dropout_p the class row is replaced by the null
// row. dropout_p = 0 never consumes rng; out-of-range ids -> InputError.
int64_t resolve_label_row(int label, int num_classes, double dropout_p, RngStream* rng);

// Plain-tensor adaLN modulation: layer_norm(x) * (1 + scale) + shift, with
// shift/scale broadcast over rows. shift/scale numel must equal x's last dim.
Tensor modulate(const Tensor& x, const Tensor& shift, const Tensor& scale, double eps = 1e-6);

// Tape version used inside blocks.
Var modulate_t(Tape& tape, Var x, Var shift, Var scale, double eps = 1e-6);

// The per-block modulation sextuple, each [1, hidden].
struct ModulationParams {
  Var shift_attn, scale_attn, gate_attn;
  Var shift_mlp, scale_mlp, gate_mlp;
};

// Slice a [1, 6*hidden] modulation vector into the sextuple, in the order
// (shift_attn, scale_attn, gate_attn, shift_mlp, scale_mlp, gate_mlp).
ModulationParams split_modulation(Tape& tape, Var mod, int64_t hidden);

}  // namespace ledit
