#pragma once
// The diffusion transformer: patch embed + locality conv, a stack of blocks
// alternating self-attention and 2D-causal attention per a configurable order,
// adaLN-Zero conditioning, and a linear head back to patches. No positional
// encoding exists anywhere; position enters only via the causal mask and the
// conv's zero padding, which is the point of the architecture.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ledit/attention.hpp"
#include "ledit/conditioning.hpp"
#include "ledit/locality.hpp"
#include "ledit/masks.hpp"
#include "ledit/tape.hpp"
#include "ledit/tensor.hpp"

namespace ledit {

enum class BlockMode : uint8_t { SA = 0, CA = 1 };

enum class BlockOrder : uint8_t {
  CA_THEN_SA = 0,  // first half causal, second half self
  SA_THEN_CA = 1,
  ALT_CA_SA = 2,   // CA,SA,CA,SA,...
  ALT_SA_CA = 3,   // SA,CA,SA,CA,... (default: first block is self-attention)
};

const char* to_string(BlockOrder o);
BlockOrder block_order_from_string(const std::string& s);

struct ModelConfig {
  int depth = 8;
  int hidden = 192;
  int heads = 6;
  int patch = 2;
  int channels = 3;
  int num_classes = 4;
  int train_h = 16;
  int train_w = 16;
  ScanVariant scan = ScanVariant::D_LOWER_RIGHT_CORNER;
  BlockOrder order = BlockOrder::ALT_SA_CA;
  bool use_causal = true;  // false: every block runs as SA (mask ablated)
  bool use_conv = true;    // false: locality conv ablated
  MultiDilationPolicy dilation;

  int64_t train_tokens() const {
    return (int64_t(train_h) / patch) * (int64_t(train_w) / patch);
  }
  void validate() const;
};

struct AttentionModeSchedule {
  std::vector<BlockMode> modes;  // length = depth
  // Timestep switch threshold: calls with t < t_prime run every CA block
  // unmasked. 0 disables switching (t is never negative).
  int t_prime = 0;
};

// Pairwise orders need even depth (ConfigError otherwise). use_causal=false
// yields an all-SA schedule regardless of order.
std::vector<BlockMode> assign_block_modes(BlockOrder order, int depth);
AttentionModeSchedule make_schedule(const ModelConfig& cfg, int t_prime = 0);

// Named parameters in fixed order (checkpoint layout and Adam state both key
// off this order).
struct Model {
  ModelConfig cfg;
  std::vector<std::pair<std::string, Tensor>> params;

  Tensor& param(const std::string& name);
  const Tensor& param(const std::string& name) const;
  bool has_param(const std::string& name) const;
};

// Fresh model: linears N(0, 1/fan_in), label table N(0, 0.02^2), locality conv
// = identity (center tap), every modulation linear and the final projection
// zero — so each block is exactly the identity map at init.
Model init_model(const ModelConfig& cfg, RngStream& rng);

struct ForwardOptions {
  ConvSpec conv_spec = standard_conv_spec();
  double logit_scale = 1.0;
  int t_prime = 0;
  int capture_block = -1;  // >= 0: copy that block's output tokens [n, hidden]
};

// Additive mask for (variant, h, w), built once and cached for the process
// lifetime. Masks are immutable; the cache only grows.
const Tensor& cached_additive_mask(ScanVariant v, int h, int w);

// Tape forward (training path). `bound` maps every param name to a leaf Var on
// `tape` (see bind_params). x_t is [C,H,W] with H,W divisible by patch; label
// is a class id or kNullLabel. Returns predicted noise tokens as a Var of
// shape [C,H,W]. Throws NumericError naming the first block that produced a
// non-finite value.
struct TapeBinding {
  std::vector<std::pair<std::string, Var>> vars;
  Var at(const std::string& name) const;
};
TapeBinding bind_params(Tape& tape, const Model& m, bool learnable);

Var model_forward_t(Tape& tape, const Model& m, const TapeBinding& bound, const Tensor& x_t,
                    int t, int label, const ForwardOptions& opt, Tensor* captured = nullptr);

// Inference wrapper: builds a throwaway tape with constant parameters.
Tensor model_forward(const Model& m, const Tensor& x_t, int t, int label,
                     const ForwardOptions& opt, Tensor* captured = nullptr);

// Standalone head: adaLN-modulated linear from tokens [n, hidden] to per-patch
// outputs [n, patch^2 * channels], using the model's final-layer parameters.
Var final_layer(Tape& tape, const Model& m, const TapeBinding& bound, Var tokens, Var cond);

}  // namespace ledit
