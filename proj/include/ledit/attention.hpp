#pragma once
// Multi-head attention with optional additive mask and a logit-scale policy for
// running longer sequences than the model was trained on. Position information
// enters only through the mask: there is no positional encoding anywhere.

#include <cstdint>

#include "ledit/masks.hpp"
#include "ledit/tape.hpp"
#include "ledit/tensor.hpp"

namespace ledit {

struct AttentionWeights {
  Tensor wq, wk, wv, wo;  // each [d, d]
  int n_heads = 1;

  int64_t dim() const { return wq.ndim() == 2 ? wq.shape[0] : 0; }
  // Throws ConfigError / DimensionError on malformed weights.
  void validate() const;
};

enum class LogitScaleMode : uint8_t { OFF = 0, LOG_RATIO = 1 };

struct LogitScalePolicy {
  int64_t train_len = 0;  // token count the weights were trained at
  LogitScaleMode mode = LogitScaleMode::LOG_RATIO;
};

// OFF -> 1. LOG_RATIO -> max(1, ln(infer_len)/ln(train_len)); never shrinks
// logits below the trained temperature. train_len >= 2 or ConfigError,
// infer_len >= 1 or InputError.
double attention_logit_scale(const LogitScalePolicy& policy, int64_t infer_len);

// Projection weights already living on a tape (learnable in training).
struct AttentionVars {
  Var wq, wk, wv, wo;
  int n_heads = 1;
};

// x [n, d] -> [n, d]. Per head: softmax(scale * q k^T / sqrt(d_head) + mask) v,
// heads concatenated then projected by wo. The additive mask may be null
// (plain softmax attention); if present it must be [n, n].
Var masked_attention(Tape& tape, Var x, const AttentionVars& w, const Tensor* additive_mask,
                     double logit_scale = 1.0);

// Convenience overloads: constant weights, and the boolean-mask form (the
// grid's token count must equal n).
Var masked_attention(Tape& tape, Var x, const AttentionWeights& w, const Tensor* additive_mask,
                     double logit_scale = 1.0);
Tensor masked_attention(const Tensor& x, const AttentionWeights& w, const AttentionMask* mask,
                        double logit_scale = 1.0);

// Same math outside the tape, returning the attention map [n_heads, n, n]
// (rows sum to 1, masked entries exactly 0). For tests and inspection.
Tensor attention_probabilities(const Tensor& x, const AttentionWeights& w, const Tensor* mask,
                               double logit_scale = 1.0);

// Number of query-key score terms for a length-L 1D sequence: L^2 for full
// attention, L(L+1)/2 when each query sees only keys at or before it.
int64_t score_op_count(int64_t len, bool causal);

}  // namespace ledit
