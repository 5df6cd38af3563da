#include "ledit/gradcheck_suite.hpp"

#include <functional>

#include "ledit/attention.hpp"
#include "ledit/conditioning.hpp"
#include "ledit/masks.hpp"
#include "ledit/tape.hpp"

namespace ledit {

std::vector<GradCheckResult> run_gradcheck_suite(uint64_t seed) {
  std::vector<GradCheckResult> results;
  auto run = [&](const std::string& name,
                 const std::function<Var(Tape&, const std::vector<Var>&)>& f,
                 const std::vector<Tensor>& inputs) {
    results.push_back({name, grad_check(f, inputs)});
  };

  {
    RngStream r(seed, 1);
    run("matmul",
        [](Tape& t, const std::vector<Var>& in) {
          return t.mse(t.matmul(in[0], in[1]), in[2]);
        },
        {Tensor::randn({4, 5}, r), Tensor::randn({5, 3}, r), Tensor::randn({4, 3}, r)});
  }
  {
    RngStream r(seed, 2);
    run("softmax",
        [](Tape& t, const std::vector<Var>& in) {
          return t.mse(t.softmax_lastdim(in[0]), in[1]);
        },
        {Tensor::randn({3, 6}, r), Tensor::randn({3, 6}, r, 0.3)});
  }
  {
    RngStream r(seed, 3);
    Tensor add = to_additive(build_mask(ScanVariant::A_1D, 1, 6));
    run("softmax_masked",
        [add](Tape& t, const std::vector<Var>& in) {
          return t.mse(t.softmax_lastdim(in[0], &add), in[1]);
        },
        {Tensor::randn({6, 6}, r), Tensor::randn({6, 6}, r, 0.3)});
  }
  {
    RngStream r(seed, 4);
    ConvSpec spec{3, 1, 1, 1};
    run("conv_dilation1",
        [spec](Tape& t, const std::vector<Var>& in) {
          return t.mse(t.conv2d(in[0], in[1], in[2], spec), in[3]);
        },
        {Tensor::randn({2, 5, 5}, r), Tensor::randn({3, 2, 3, 3}, r, 0.4),
         Tensor::randn({3}, r, 0.2), Tensor::randn({3, 5, 5}, r, 0.3)});
  }
  {
    RngStream r(seed, 5);
    ConvSpec spec{3, 2, 1, 2};
    run("conv_dilation2",
        [spec](Tape& t, const std::vector<Var>& in) {
          return t.mse(t.conv2d(in[0], in[1], in[2], spec), in[3]);
        },
        {Tensor::randn({2, 5, 5}, r), Tensor::randn({3, 2, 3, 3}, r, 0.4),
         Tensor::randn({3}, r, 0.2), Tensor::randn({3, 5, 5}, r, 0.3)});
  }
  {
    RngStream r(seed, 6);
    run("layer_norm",
        [](Tape& t, const std::vector<Var>& in) {
          return t.mse(t.layer_norm(in[0]), in[1]);
        },
        {Tensor::randn({4, 7}, r), Tensor::randn({4, 7}, r, 0.5)});
  }
  {
    RngStream r(seed, 7);
    run("modulation",
        [](Tape& t, const std::vector<Var>& in) {
          return t.mse(modulate_t(t, in[0], in[1], in[2]), in[3]);
        },
        {Tensor::randn({5, 6}, r), Tensor::randn({1, 6}, r, 0.3), Tensor::randn({1, 6}, r, 0.3),
         Tensor::randn({5, 6}, r, 0.5)});
  }
  {
    // Full block on a 2x3 token grid: modulated masked attention with a gated
    // residual, then a modulated gated MLP. Every tensor is a leaf, including
    // the six modulation vectors, so the check spans the whole block graph.
    RngStream r(seed, 8);
    Tensor add = to_additive(build_mask(ScanVariant::D_LOWER_RIGHT_CORNER, 2, 3));
    run("transformer_block",
        [add](Tape& t, const std::vector<Var>& in) {
          AttentionVars av{in[1], in[2], in[3], in[4], 2};
          Var attn_in = modulate_t(t, in[0], in[9], in[10]);
          Var attn = masked_attention(t, attn_in, av, &add, 1.0);
          Var z = t.add(in[0], t.mul_rowvec(attn, in[11]));
          Var mlp_in = modulate_t(t, z, in[12], in[13]);
          Var hidden = t.gelu(t.add_rowvec(t.matmul(mlp_in, in[5]), in[6]));
          Var mlp_out = t.add_rowvec(t.matmul(hidden, in[7]), in[8]);
          z = t.add(z, t.mul_rowvec(mlp_out, in[14]));
          return t.mse(z, in[15]);
        },
        {Tensor::randn({6, 8}, r),                                       // x
         Tensor::randn({8, 8}, r, 0.35), Tensor::randn({8, 8}, r, 0.35),  // wq wk
         Tensor::randn({8, 8}, r, 0.35), Tensor::randn({8, 8}, r, 0.35),  // wv wo
         Tensor::randn({8, 16}, r, 0.35), Tensor::randn({16}, r, 0.2),    // mlp w1 b1
         Tensor::randn({16, 8}, r, 0.25), Tensor::randn({8}, r, 0.2),     // mlp w2 b2
         Tensor::randn({1, 8}, r, 0.3), Tensor::randn({1, 8}, r, 0.3),    // shift/scale attn
         Tensor::randn({1, 8}, r, 0.5),                                   // gate attn
         Tensor::randn({1, 8}, r, 0.3), Tensor::randn({1, 8}, r, 0.3),    // shift/scale mlp
         Tensor::randn({1, 8}, r, 0.5),                                   // gate mlp
         Tensor::randn({6, 8}, r, 0.5)});                                 // target
  }
  return results;
}

}  // namespace ledit
