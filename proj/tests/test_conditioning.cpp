// Timestep/label conditioning and adaLN modulation: frozen sinusoid values,
// label-dropout draw accounting, and the exact slice order of the per-block
// modulation sextuple.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "ledit/conditioning.hpp"

using namespace ledit;

TEST_CASE("timestep_sinusoid: frozen values and frequency layout") {
  // t=0: all sines 0, all cosines 1
  Tensor z = timestep_sinusoid(0.0, 8);
  REQUIRE(z.shape == std::vector<int64_t>{1, 8});
  for (int64_t k = 0; k < 4; ++k) {
    CHECK(z[k] == 0.0);
    CHECK(z[4 + k] == 1.0);
  }
  // dim=2 has a single unit frequency: [sin t, cos t]
  Tensor s = timestep_sinusoid(2.0, 2);
  CHECK(s[0] == doctest::Approx(std::sin(2.0)).epsilon(1e-14));
  CHECK(s[1] == doctest::Approx(std::cos(2.0)).epsilon(1e-14));
  // frequencies decay geometrically: slot k uses 10000^(-k/half)
  Tensor w = timestep_sinusoid(1.0, 8);
  CHECK(w[1] == doctest::Approx(std::sin(std::exp(-std::log(10000.0) / 4.0))).epsilon(1e-12));

  CHECK_THROWS_AS(timestep_sinusoid(1.0, 7), ConfigError);
  CHECK_THROWS_AS(timestep_sinusoid(1.0, 0), ConfigError);

  // distinct timesteps map to distinct embeddings
  Tensor a = timestep_sinusoid(3.0, 16), b = timestep_sinusoid(4.0, 16);
  double diff = 0;
  for (int64_t i = 0; i < 16; ++i) diff += std::abs(a[i] - b[i]);
  CHECK(diff > 0.1);
}

TEST_CASE("resolve_label_row: null, range, and dropout behavior") {
  CHECK(resolve_label_row(2, 4, 0.0, nullptr) == 2);
  CHECK(resolve_label_row(kNullLabel, 4, 0.0, nullptr) == 4);  // null row is last
  CHECK_THROWS_AS(resolve_label_row(4, 4, 0.0, nullptr), InputError);
  CHECK_THROWS_AS(resolve_label_row(-2, 4, 0.0, nullptr), InputError);
  CHECK_THROWS_AS(resolve_label_row(1, 0, 0.0, nullptr), ConfigError);
  CHECK_THROWS_AS(resolve_label_row(1, 4, 1.5, nullptr), ConfigError);
  CHECK_THROWS_AS(resolve_label_row(1, 4, 0.5, nullptr), InputError);  // dropout needs rng

  RngStream r(51, 0);
  uint64_t c0 = r.counter();
  CHECK(resolve_label_row(1, 4, 0.0, &r) == 1);
  CHECK(r.counter() == c0);  // zero dropout consumes nothing
  CHECK(resolve_label_row(1, 4, 1.0, &r) == 4);
  CHECK(r.counter() == c0 + 1);
  // null labels never consume the coin even with dropout on
  c0 = r.counter();
  CHECK(resolve_label_row(kNullLabel, 4, 0.9, &r) == 4);
  CHECK(r.counter() == c0);

  int dropped = 0;
  for (int i = 0; i < 4000; ++i)
    if (resolve_label_row(0, 4, 0.3, &r) == 4) ++dropped;
  CHECK(dropped / 4000.0 == doctest::Approx(0.3).epsilon(0.12));
}

TEST_CASE("modulate: zero parameters reduce to layer norm, math matches by hand") {
  RngStream r(52, 0);
  Tensor x = Tensor::randn({3, 6}, r, 2.0);
  Tensor zero({6});
  Tensor ln = layer_norm(x);
  Tensor m0 = modulate(x, zero, zero);
  for (int64_t i = 0; i < x.numel(); ++i) CHECK(m0[i] == ln[i]);

  Tensor shift = Tensor::full({6}, 0.5), scale = Tensor::full({6}, 1.0);
  Tensor m1 = modulate(x, shift, scale);
  for (int64_t i = 0; i < x.numel(); ++i)
    CHECK(m1[i] == doctest::Approx(2.0 * ln[i] + 0.5).epsilon(1e-13));

  CHECK_THROWS_AS(modulate(x, Tensor({5}), zero), DimensionError);
}

TEST_CASE("modulate_t agrees with the plain version") {
  RngStream r(53, 0);
  Tensor x = Tensor::randn({4, 5}, r);
  Tensor shift = Tensor::randn({1, 5}, r), scale = Tensor::randn({1, 5}, r);
  Tensor want = modulate(x, shift, scale);
  Tape tape;
  Var got = modulate_t(tape, tape.constant(x), tape.constant(shift), tape.constant(scale));
  for (int64_t i = 0; i < want.numel(); ++i)
    CHECK(tape.value(got)[i] == doctest::Approx(want[i]).epsilon(1e-13));
}

TEST_CASE("split_modulation: slices come out in the documented order") {
  const int64_t h = 4;
  Tensor mod({1, 6 * h});
  for (int64_t s = 0; s < 6; ++s)
    for (int64_t j = 0; j < h; ++j) mod[s * h + j] = double(s * 100 + j);
  Tape tape;
  ModulationParams p = split_modulation(tape, tape.constant(mod), h);
  const Var slots[6] = {p.shift_attn, p.scale_attn, p.gate_attn,
                        p.shift_mlp,  p.scale_mlp,  p.gate_mlp};
  for (int64_t s = 0; s < 6; ++s) {
    const Tensor& t = tape.value(slots[s]);
    REQUIRE(t.shape == std::vector<int64_t>{1, h});
    for (int64_t j = 0; j < h; ++j) CHECK(t[j] == double(s * 100 + j));
  }
  Tape t2;
  CHECK_THROWS_AS(split_modulation(t2, t2.constant(Tensor({1, 23})), h), DimensionError);
}

TEST_CASE("label table validation") {
  LabelTable t;
  t.num_classes = 3;
  t.table = Tensor({4, 8});
  CHECK(t.null_row() == 3);
  CHECK_NOTHROW(t.validate());
  t.table = Tensor({3, 8});  // missing the null row
  CHECK_THROWS_AS(t.validate(), DimensionError);
  t.num_classes = 0;
  CHECK_THROWS_AS(t.validate(), ConfigError);
}
