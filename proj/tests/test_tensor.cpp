// Numeric core: RNG, tensor kernels (matmul / softmax / layer norm / conv2d),
// and the autodiff tape. Every kernel is double-entered against an independent
// reference written here, and every backward is checked against central
// differences through grad_check.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "ledit/rng.hpp"
#include "ledit/tape.hpp"
#include "ledit/tensor.hpp"

using namespace ledit;

// ---- rng ------------------------------------------------------------------------

TEST_CASE("rng: same triple gives same sequence, counter restores mid-stream") {
  RngStream a(42, 7), b(42, 7);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  // burn some draws, remember the triple, draw, then resume from the triple
  RngStream c(9, 3);
  for (int i = 0; i < 17; ++i) c.uniform();
  RngStream resumed(c.seed(), c.stream(), c.counter());
  for (int i = 0; i < 50; ++i) CHECK(c.next_u64() == resumed.next_u64());
}

TEST_CASE("rng: streams and seeds decorrelate") {
  RngStream a(1, 0), b(1, 1), c(2, 0);
  CHECK(a.next_u64() != b.next_u64());
  RngStream a2(1, 0);
  CHECK(a2.next_u64() != c.next_u64());
  // split children of distinct ids differ from each other and the parent
  RngStream parent(5, 5);
  RngStream s0 = parent.split(0), s1 = parent.split(1);
  CHECK(s0.next_u64() != s1.next_u64());
}

TEST_CASE("rng: uniform range and draw accounting") {
  RngStream r(3, 0);
  for (int i = 0; i < 1000; ++i) {
    double u = r.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
  uint64_t before = r.counter();
  r.normal();
  CHECK(r.counter() == before + 2);  // Box-Muller always burns exactly two draws
  before = r.counter();
  r.exponential();
  CHECK(r.counter() == before + 1);
  for (int i = 0; i < 500; ++i) {
    uint64_t v = r.uniform_int(7);
    CHECK(v < 7);
  }
}

TEST_CASE("rng: moment sanity for normal and exponential") {
  RngStream r(11, 0);
  double sum = 0, sum2 = 0, esum = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    double z = r.normal();
    sum += z;
    sum2 += z * z;
    esum += r.exponential();
  }
  CHECK(std::abs(sum / n) < 0.01);
  CHECK(sum2 / n == doctest::Approx(1.0).epsilon(0.02));
  CHECK(esum / n == doctest::Approx(1.0).epsilon(0.02));
}

// ---- tensor basics ---------------------------------------------------------------

TEST_CASE("tensor: construction and shape errors") {
  Tensor t({2, 3});
  CHECK(t.numel() == 6);
  CHECK(t.ndim() == 2);
  for (int64_t i = 0; i < 6; ++i) CHECK(t[i] == 0.0);

  CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0, 3.0}), DimensionError);
  CHECK_THROWS_AS(Tensor({-1, 2}), DimensionError);

  Tensor e = Tensor::identity(3);
  CHECK(e.at2(0, 0) == 1.0);
  CHECK(e.at2(0, 1) == 0.0);
  CHECK(Tensor::full({2}, 3.5)[1] == 3.5);

  RngStream r(1, 2);
  Tensor a = Tensor::randn({4, 4}, r);
  RngStream r2(1, 2);
  Tensor b = Tensor::randn({4, 4}, r2);
  for (int64_t i = 0; i < 16; ++i) CHECK(a[i] == b[i]);

  Tensor f({2}, {1.0, std::nan("")});
  CHECK_FALSE(f.all_finite());
  CHECK(a.all_finite());
}

// ---- matmul -----------------------------------------------------------------------

static Tensor ref_matmul(const Tensor& a, const Tensor& b) {
  int64_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
  Tensor out({m, n});
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int64_t p = 0; p < k; ++p) acc += a.at2(i, p) * b.at2(p, j);
      out.at2(i, j) = acc;
    }
  return out;
}

TEST_CASE("matmul: hand value, reference agreement, transposed form") {
  Tensor a({2, 2}, {1, 2, 3, 4});
  Tensor b({2, 1}, {5, 6});
  Tensor c = matmul(a, b);
  CHECK(c.shape == std::vector<int64_t>{2, 1});
  CHECK(c[0] == 17.0);
  CHECK(c[1] == 39.0);

  RngStream r(5, 0);
  Tensor x = Tensor::randn({5, 7}, r), y = Tensor::randn({7, 3}, r);
  Tensor got = matmul(x, y), want = ref_matmul(x, y);
  for (int64_t i = 0; i < got.numel(); ++i)
    CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));

  // a * b^T == a * transpose(b)
  Tensor z = Tensor::randn({4, 7}, r);
  Tensor zt({7, 4});
  for (int64_t i = 0; i < 4; ++i)
    for (int64_t j = 0; j < 7; ++j) zt.at2(j, i) = z.at2(i, j);
  Tensor nt = matmul_nt(x, z), plain = matmul(x, zt);
  for (int64_t i = 0; i < nt.numel(); ++i)
    CHECK(nt[i] == doctest::Approx(plain[i]).epsilon(1e-12));

  CHECK_THROWS_AS(matmul(x, z), DimensionError);            // 7 vs 4 inner dim
  CHECK_THROWS_AS(matmul(Tensor({3}), Tensor({3, 1})), DimensionError);
}

// ---- softmax ----------------------------------------------------------------------

TEST_CASE("softmax: hand value with a hard-masked slot") {
  // logits [0, 1, anything] with the third slot masked: exp(0)=1, exp(1)=e
  Tensor x({1, 3}, {0.0, 1.0, 123.0});
  Tensor mask({1, 3}, {0.0, 0.0, kMaskedLogit});
  Tensor y = softmax_lastdim(x, &mask);
  double e = std::exp(1.0);
  CHECK(y[0] == doctest::Approx(1.0 / (1.0 + e)).epsilon(1e-14));
  CHECK(y[1] == doctest::Approx(e / (1.0 + e)).epsilon(1e-14));
  CHECK(y[2] == 0.0);  // exactly zero, not merely small
}

TEST_CASE("softmax: rows sum to one and survive huge logits") {
  RngStream r(7, 0);
  Tensor x = Tensor::randn({4, 6}, r, 3.0);
  x[0] = 1e5;
  x[1] = 1e5 - 2.0;  // overflow without max subtraction
  Tensor y = softmax_lastdim(x);
  CHECK(y.all_finite());
  for (int64_t i = 0; i < 4; ++i) {
    double s = 0;
    for (int64_t j = 0; j < 6; ++j) {
      s += y.at2(i, j);
      CHECK(y.at2(i, j) >= 0.0);
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("softmax: mask tiles over leading dims, full mask row throws") {
  // x [2,2,2] with one [2,2] mask shared by both leading slices
  Tensor x({2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
  Tensor mask({2, 2}, {0.0, kMaskedLogit, 0.0, 0.0});
  Tensor y = softmax_lastdim(x, &mask);
  CHECK(y.at3(0, 0, 0) == 1.0);
  CHECK(y.at3(0, 0, 1) == 0.0);
  CHECK(y.at3(1, 0, 0) == 1.0);
  CHECK(y.at3(1, 0, 1) == 0.0);
  CHECK(y.at3(0, 1, 0) + y.at3(0, 1, 1) == doctest::Approx(1.0));

  Tensor dead({1, 2}, {kMaskedLogit, kMaskedLogit});
  Tensor x2({1, 2}, {0.0, 0.0});
  CHECK_THROWS_AS(softmax_lastdim(x2, &dead), AllMaskedError);

  Tensor bad({3}, {0, 0, 0});  // numel does not divide x's
  CHECK_THROWS_AS(softmax_lastdim(x, &bad), DimensionError);
}

// ---- layer norm -------------------------------------------------------------------

TEST_CASE("layer_norm: normalizes each slice, constant slice maps to zeros") {
  RngStream r(9, 0);
  Tensor x = Tensor::randn({3, 8}, r, 2.5);
  Tensor y = layer_norm(x);
  for (int64_t i = 0; i < 3; ++i) {
    double mean = 0, var = 0;
    for (int64_t j = 0; j < 8; ++j) mean += y.at2(i, j);
    mean /= 8;
    for (int64_t j = 0; j < 8; ++j) var += (y.at2(i, j) - mean) * (y.at2(i, j) - mean);
    var /= 8;
    CHECK(std::abs(mean) < 1e-12);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-5));  // eps inside the sqrt
  }
  Tensor c = Tensor::full({2, 4}, 3.0);
  Tensor yc = layer_norm(c);
  for (int64_t i = 0; i < 8; ++i) CHECK(yc[i] == 0.0);
}

// ---- conv2d -----------------------------------------------------------------------

// Independent direct convolution; same accumulation order as the kernel so the
// comparison below can be exact (the point is double-entering the *geometry*:
// padding, stride, dilation, channel indexing).
static Tensor ref_conv2d(const Tensor& x, const Tensor& w, const Tensor& b, const ConvSpec& s) {
  int64_t Ci = x.shape[0], H = x.shape[1], W = x.shape[2];
  int64_t Co = w.shape[0], K = w.shape[2];
  int64_t Ho = conv_out_len(H, s), Wo = conv_out_len(W, s);
  Tensor out({Co, Ho, Wo});
  for (int64_t co = 0; co < Co; ++co)
    for (int64_t oy = 0; oy < Ho; ++oy)
      for (int64_t ox = 0; ox < Wo; ++ox) {
        double acc = b[co];
        for (int64_t ci = 0; ci < Ci; ++ci)
          for (int64_t ky = 0; ky < K; ++ky)
            for (int64_t kx = 0; kx < K; ++kx) {
              int64_t iy = oy * s.stride - s.pad + ky * s.dilation;
              int64_t ix = ox * s.stride - s.pad + kx * s.dilation;
              if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
              acc += x[(ci * H + iy) * W + ix] * w[((co * Ci + ci) * K + ky) * K + kx];
            }
        out[(co * Ho + oy) * Wo + ox] = acc;
      }
  return out;
}

TEST_CASE("conv2d: matches the direct reference across specs") {
  RngStream r(13, 0);
  Tensor x = Tensor::randn({3, 7, 6}, r);
  for (ConvSpec s : {ConvSpec{3, 1, 1, 1}, ConvSpec{3, 2, 1, 2}, ConvSpec{3, 1, 2, 1},
                     ConvSpec{1, 0, 1, 1}, ConvSpec{5, 2, 1, 1}}) {
    Tensor w = Tensor::randn({4, 3, s.kernel, s.kernel}, r);
    Tensor b = Tensor::randn({4}, r);
    Tensor got = conv2d(x, w, b, s);
    Tensor want = ref_conv2d(x, w, b, s);
    REQUIRE(got.shape == want.shape);
    for (int64_t i = 0; i < got.numel(); ++i) CHECK(got[i] == want[i]);
  }
}

TEST_CASE("conv2d: identity center tap copies the input exactly") {
  RngStream r(14, 0);
  Tensor x = Tensor::randn({2, 5, 5}, r);
  Tensor w({2, 2, 3, 3});
  for (int64_t f = 0; f < 2; ++f) w[((f * 2 + f) * 3 + 1) * 3 + 1] = 1.0;
  Tensor y = conv2d(x, w, Tensor({2}), ConvSpec{3, 1, 1, 1});
  REQUIRE(y.same_shape(x));
  for (int64_t i = 0; i < y.numel(); ++i) CHECK(y[i] == x[i]);
}

TEST_CASE("conv2d: geometry contract") {
  CHECK(conv_out_len(8, ConvSpec{3, 1, 1, 1}) == 8);
  CHECK(conv_out_len(8, ConvSpec{3, 2, 1, 2}) == 8);
  CHECK(conv_out_len(8, ConvSpec{3, 1, 2, 1}) == 4);
  CHECK_THROWS_AS(conv_out_len(1, ConvSpec{5, 0, 1, 1}), ConfigError);  // negative output
  CHECK_THROWS_AS(conv_out_len(8, ConvSpec{4, 1, 1, 1}), ConfigError);  // even kernel
  RngStream r(15, 0);
  Tensor x = Tensor::randn({2, 4, 4}, r);
  Tensor w = Tensor::randn({3, 9, 3, 3}, r);  // channel mismatch 9 vs 2
  CHECK_THROWS_AS(conv2d(x, w, Tensor({3}), ConvSpec{3, 1, 1, 1}), DimensionError);
}

// ---- tape: values and gradients ----------------------------------------------------

TEST_CASE("tape: gradients match central differences for every op") {
  RngStream r(21, 0);
  auto run = [&](const char* name, double tol,
                 const std::function<Var(Tape&, const std::vector<Var>&)>& f,
                 std::vector<Tensor> inputs) {
    CAPTURE(name);
    CHECK(grad_check(f, inputs) < tol);
  };

  run("add_mul_scale", 1e-7,
      [](Tape& t, const std::vector<Var>& v) {
        return t.sum(t.scale(t.mul(t.add(v[0], v[1]), t.sub(v[0], v[1])), 0.7));
      },
      {Tensor::randn({3, 4}, r), Tensor::randn({3, 4}, r)});

  run("rowvec_ops", 1e-7,
      [](Tape& t, const std::vector<Var>& v) {
        return t.sum(t.mul_rowvec(t.add_rowvec(v[0], v[1]), v[2]));
      },
      {Tensor::randn({4, 3}, r), Tensor::randn({1, 3}, r), Tensor::randn({1, 3}, r)});

  run("gelu_silu", 1e-6,
      [](Tape& t, const std::vector<Var>& v) { return t.sum(t.gelu(t.silu(v[0]))); },
      {Tensor::randn({3, 5}, r)});

  run("matmul_chain", 1e-6,
      [](Tape& t, const std::vector<Var>& v) {
        return t.sum(t.matmul_nt(t.matmul(v[0], v[1]), v[2]));
      },
      {Tensor::randn({3, 4}, r), Tensor::randn({4, 5}, r), Tensor::randn({2, 5}, r)});

  run("softmax_unmasked", 1e-6,
      [](Tape& t, const std::vector<Var>& v) {
        return t.mse(t.softmax_lastdim(v[0]), t.constant(Tensor::full({3, 4}, 0.25)));
      },
      {Tensor::randn({3, 4}, r)});

  Tensor mask({4, 4});
  for (int64_t q = 0; q < 4; ++q)
    for (int64_t k = 0; k < 4; ++k) mask.at2(q, k) = k <= q ? 0.0 : kMaskedLogit;
  run("softmax_masked", 1e-6,
      [mask](Tape& t, const std::vector<Var>& v) {
        return t.sum(t.mul(t.softmax_lastdim(v[0], &mask), v[1]));
      },
      {Tensor::randn({4, 4}, r), Tensor::randn({4, 4}, r)});

  run("layer_norm", 1e-5,
      [](Tape& t, const std::vector<Var>& v) {
        return t.sum(t.mul(t.layer_norm(v[0]), v[1]));
      },
      {Tensor::randn({3, 6}, r), Tensor::randn({3, 6}, r)});

  for (int dil = 1; dil <= 2; ++dil) {
    ConvSpec spec{3, dil, 1, dil};
    run("conv2d", 1e-5,
        [spec](Tape& t, const std::vector<Var>& v) {
          return t.sum(t.conv2d(v[0], v[1], v[2], spec));
        },
        {Tensor::randn({2, 4, 4}, r), Tensor::randn({3, 2, 3, 3}, r), Tensor::randn({3}, r)});
  }

  auto perm = std::make_shared<std::vector<int64_t>>(std::vector<int64_t>{5, 2, 0, 4, 1, 3});
  run("layout_ops", 1e-7,
      [perm](Tape& t, const std::vector<Var>& v) {
        Var g = t.gather(v[0], perm, {2, 3});
        Var s = t.concat_cols({t.slice_cols(g, 1, 3), t.slice_cols(g, 0, 1)});
        Var row = t.take_row(v[1], 1);
        return t.mse(t.add_rowvec(s, row), t.reshape(v[2], {2, 3}));
      },
      {Tensor::randn({2, 3}, r), Tensor::randn({3, 3}, r), Tensor::randn({6}, r)});
}

TEST_CASE("tape: fan-out accumulates, constants stay gradient-free") {
  Tape t;
  Var x = t.leaf(Tensor({2}, {1.0, 2.0}), true);
  Var c = t.constant(Tensor({2}, {10.0, 20.0}));
  Var y = t.sum(t.add(t.mul(x, x), t.add(x, c)));  // d/dx = 2x + 1
  t.backward(y);
  Tensor g = t.grad(x);
  CHECK(g[0] == 3.0);
  CHECK(g[1] == 5.0);
  Tensor gc = t.grad(c);  // zero tensor, never accumulated
  CHECK(gc[0] == 0.0);
}

TEST_CASE("tape: misuse is rejected") {
  Tape t;
  Var x = t.leaf(Tensor({2}, {1.0, 2.0}), true);
  Var y = t.sum(x);
  t.backward(y);
  CHECK_THROWS_AS(t.backward(y), InputError);  // one sweep per tape

  Tape t2;
  Var v = t2.leaf(Tensor({3}, {1, 2, 3}), true);
  CHECK_THROWS_AS(t2.backward(v), DimensionError);  // root must be scalar
  CHECK_THROWS_AS(t2.value(Var{99}), InputError);   // stale handle
  CHECK_THROWS_AS(t2.slice_cols(v, 0, 1), DimensionError);
  CHECK_THROWS_AS(t2.take_row(t2.reshape(v, {3, 1}), 5), InputError);
}
