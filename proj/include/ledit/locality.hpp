#pragma once
// Patch embedding and the locality-enhancement convolution that runs on the
// patch-token grid right after embedding. The conv's zero padding is what leaks
// local position into otherwise position-free tokens; training occasionally
// swaps in a dilated kernel so the model cannot overfit one receptive field.

#include <cstdint>
#include <memory>
#include <vector>

#include "ledit/rng.hpp"
#include "ledit/tape.hpp"
#include "ledit/tensor.hpp"

namespace ledit {

// Tokens laid out raster-order over an h x w patch grid.
struct PatchGrid {
  int h = 0;
  int w = 0;
  Tensor tokens;  // [h*w, dim]

  int64_t n() const { return static_cast<int64_t>(h) * w; }
  int64_t dim() const { return tokens.ndim() == 2 ? tokens.shape[1] : 0; }
};

// Training-time dilation swap: with `probability` the standard (3,1,1,1) spec
// is replaced by (3,r,1,r) for r drawn uniformly from `rates`. Inference always
// uses the standard spec.
struct MultiDilationPolicy {
  double probability = 0.1;
  std::vector<int> rates = {2};

  void validate() const;  // probability in [0,1]; rates nonempty, each >= 2
};

// True iff a conv with this spec maps [dim,h,w] -> [dim,h,w]: odd kernel,
// stride 1, pad = dilation*(kernel-1)/2.
bool is_shape_preserving(const ConvSpec& spec);

// Standard locality spec (3x3, dilation 1) and its dilated sibling.
ConvSpec standard_conv_spec();
ConvSpec dilated_conv_spec(int rate);

// Draw the conv spec for one training pass. Consumes one uniform for the coin
// and, only when it lands on the dilated branch, one more for the rate.
ConvSpec sample_conv_spec(const MultiDilationPolicy& policy, RngStream& rng);

// ---- plain-tensor versions (tests, inspection) ----

// img [C,H,W] with H,W divisible by patch; w [patch*patch*C, dim], b [dim].
PatchGrid patchify(const Tensor& img, int patch, const Tensor& w, const Tensor& b);

// tokens dim must equal patch*patch*out_channels; inverse layout of patchify's
// flatten (channel-major within a patch).
Tensor unpatchify(const PatchGrid& grid, int patch, int out_channels);

// Shape-preserving conv over the token grid; w [dim,dim,k,k], b [dim].
// Throws ConfigError if `spec` is not shape-preserving.
PatchGrid locality_conv(const PatchGrid& grid, const Tensor& w, const Tensor& b,
                        const ConvSpec& spec);

// ---- tape versions (model forward) ----

// Flatten index: image flat [C,H,W] -> token-raw flat [n, patch*patch*C].
std::shared_ptr<const std::vector<int64_t>> patch_gather_index(int C, int H, int W, int patch);
// tokens [n, dim] -> grid tensor [dim, h, w] and back.
std::shared_ptr<const std::vector<int64_t>> tokens_to_grid_index(int h, int w, int64_t dim);
std::shared_ptr<const std::vector<int64_t>> grid_to_tokens_index(int h, int w, int64_t dim);
// token-raw flat [n, patch*patch*C] -> image flat [C,H,W] (inverse of patch_gather_index).
std::shared_ptr<const std::vector<int64_t>> unpatch_gather_index(int C, int H, int W, int patch);

Var patchify_t(Tape& tape, Var img, int patch, Var w, Var b);
Var locality_conv_t(Tape& tape, Var tokens, int h, int w, Var conv_w, Var conv_b,
                    const ConvSpec& spec);
Var unpatchify_t(Tape& tape, Var tokens, int patch, int out_channels, int H, int W);

}  // namespace ledit
