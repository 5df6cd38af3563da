#include "ledit/attention.hpp"

#include <cmath>

namespace ledit {

static void check_attention_core(const Tensor& x, const Tensor& wq, const Tensor& wk,
                                 const Tensor& wv, const Tensor& wo, int heads,
                                 const Tensor* mask);

void AttentionWeights::validate() const {
  Tensor probe({1, dim()});
  check_attention_core(probe, wq, wk, wv, wo, n_heads, nullptr);
}

double attention_logit_scale(const LogitScalePolicy& policy, int64_t infer_len) {
  if (infer_len < 1) throw InputError("attention_logit_scale: infer_len must be >= 1");
  if (policy.mode == LogitScaleMode::OFF) return 1.0;
  if (policy.train_len < 2) throw ConfigError("attention_logit_scale: train_len must be >= 2");
  double s = std::log(double(infer_len)) / std::log(double(policy.train_len));
  return s > 1.0 ? s : 1.0;
}

static void check_attention_core(const Tensor& x, const Tensor& wq, const Tensor& wk,
                                 const Tensor& wv, const Tensor& wo, int heads,
                                 const Tensor* mask) {
  auto square = [](const Tensor& t, const char* name) {
    if (t.ndim() != 2 || t.shape[0] != t.shape[1])
      throw DimensionError(std::string("attention: ") + name + " must be square, got " + shape_str(t.shape));
  };
  square(wq, "wq");
  square(wk, "wk");
  square(wv, "wv");
  square(wo, "wo");
  int64_t d = wq.shape[0];
  if (wk.shape[0] != d || wv.shape[0] != d || wo.shape[0] != d)
    throw DimensionError("attention: projection dims disagree");
  if (heads < 1) throw ConfigError("attention: n_heads must be >= 1");
  if (d % heads != 0)
    throw ConfigError("attention: dim " + std::to_string(d) + " not divisible by heads " +
                      std::to_string(heads));
  if (x.ndim() != 2) throw DimensionError("attention: x must be [n, d], got " + shape_str(x.shape));
  if (x.shape[1] != d)
    throw DimensionError("attention: x dim " + std::to_string(x.shape[1]) + " vs weights " +
                         std::to_string(d));
  if (mask) {
    if (mask->ndim() != 2 || mask->shape[0] != x.shape[0] || mask->shape[1] != x.shape[0])
      throw DimensionError("attention: mask must be [n, n] = " + std::to_string(x.shape[0]) +
                           ", got " + shape_str(mask->shape));
  }
}

Var masked_attention(Tape& tape, Var x, const AttentionVars& w, const Tensor* additive_mask,
                     double logit_scale) {
  check_attention_core(tape.value(x), tape.value(w.wq), tape.value(w.wk), tape.value(w.wv),
                       tape.value(w.wo), w.n_heads, additive_mask);
  int64_t d = tape.value(w.wq).shape[0];
  int64_t dh = d / w.n_heads;
  double temp = logit_scale / std::sqrt(double(dh));

  Var q = tape.matmul(x, w.wq);
  Var k = tape.matmul(x, w.wk);
  Var v = tape.matmul(x, w.wv);

  std::vector<Var> heads;
  heads.reserve(static_cast<size_t>(w.n_heads));
  for (int hix = 0; hix < w.n_heads; ++hix) {
    int64_t c0 = hix * dh, c1 = c0 + dh;
    Var qh = tape.slice_cols(q, c0, c1);
    Var kh = tape.slice_cols(k, c0, c1);
    Var vh = tape.slice_cols(v, c0, c1);
    Var logits = tape.scale(tape.matmul_nt(qh, kh), temp);
    Var probs = tape.softmax_lastdim(logits, additive_mask);
    heads.push_back(tape.matmul(probs, vh));
  }
  Var cat = w.n_heads == 1 ? heads[0] : tape.concat_cols(heads);
  return tape.matmul(cat, w.wo);
}

Var masked_attention(Tape& tape, Var x, const AttentionWeights& w, const Tensor* additive_mask,
                     double logit_scale) {
  AttentionVars vars{tape.constant(w.wq), tape.constant(w.wk), tape.constant(w.wv),
                     tape.constant(w.wo), w.n_heads};
  return masked_attention(tape, x, vars, additive_mask, logit_scale);
}

Tensor masked_attention(const Tensor& x, const AttentionWeights& w, const AttentionMask* mask,
                        double logit_scale) {
  Tensor additive;
  if (mask) {
    if (mask->tokens() != x.shape[0])
      throw DimensionError("attention: mask grid tokens " + std::to_string(mask->tokens()) +
                           " vs n " + std::to_string(x.shape[0]));
    additive = to_additive(*mask);
  }
  Tape tape;
  Var out = masked_attention(tape, tape.constant(x), w, mask ? &additive : nullptr, logit_scale);
  return tape.value(out);
}

Tensor attention_probabilities(const Tensor& x, const AttentionWeights& w, const Tensor* mask,
                               double logit_scale) {
  check_attention_core(x, w.wq, w.wk, w.wv, w.wo, w.n_heads, mask);
  int64_t n = x.shape[0], d = w.dim();
  int64_t dh = d / w.n_heads;
  double temp = logit_scale / std::sqrt(double(dh));

  Tensor q = matmul(x, w.wq), k = matmul(x, w.wk);
  Tensor out({w.n_heads, n, n});
  for (int hix = 0; hix < w.n_heads; ++hix) {
    // per-head column slice
    Tensor qh({n, dh}), kh({n, dh});
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < dh; ++j) {
        qh.at2(i, j) = q.at2(i, hix * dh + j);
        kh.at2(i, j) = k.at2(i, hix * dh + j);
      }
    Tensor logits = matmul_nt(qh, kh);
    for (double& s : logits.data) s *= temp;
    Tensor probs = softmax_lastdim(logits, mask);
    for (int64_t i = 0; i < n * n; ++i) out[hix * n * n + i] = probs[i];
  }
  return out;
}

int64_t score_op_count(int64_t len, bool causal) {
  if (len < 1) throw InputError("score_op_count: len must be >= 1");
  return causal ? len * (len + 1) / 2 : len * len;
}

}  // namespace ledit
