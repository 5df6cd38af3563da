// Checkpoint round trips (fresh and mid-training), bitwise resume equivalence,
// and corrupt-file rejection with distinct messages. The byte offsets used for
// corruption are asserted against the file contents first, so a layout change
// fails loudly here instead of silently corrupting the wrong field.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "ledit/checkpoint.hpp"

using namespace ledit;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.depth = 2;
  c.hidden = 16;
  c.heads = 2;
  c.patch = 2;
  c.channels = 3;
  c.num_classes = 2;
  c.train_h = 8;
  c.train_w = 8;
  return c;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(bool(f));
  return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

void spit(const std::string& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  REQUIRE(bool(f));
  f.write(bytes.data(), std::streamsize(bytes.size()));
}

uint32_t le32(const std::string& b, size_t off) {
  REQUIRE(off + 4 <= b.size());
  return uint32_t(uint8_t(b[off])) | uint32_t(uint8_t(b[off + 1])) << 8 |
         uint32_t(uint8_t(b[off + 2])) << 16 | uint32_t(uint8_t(b[off + 3])) << 24;
}

void poke32(std::string& b, size_t off, uint32_t v) {
  for (int i = 0; i < 4; ++i) b[off + size_t(i)] = char((v >> (8 * i)) & 0xff);
}

// the exception text for a load attempt ("" if it unexpectedly succeeded)
std::string load_error(const std::string& path) {
  try {
    load_checkpoint(path);
  } catch (const IoError& e) {
    return e.what();
  }
  return "";
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) return false;
  for (int64_t i = 0; i < a.numel(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.same_shape(b));
  double d = 0;
  for (int64_t i = 0; i < a.numel(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

// Header layout: magic(8) version(4) eight i32 config ints(32) four u32
// enums/flags(16) dilation probability(8) rate count(4) rates(4n) step(8)
// rng(24) adam scalars(24) adam step count(8) -> tensor count.
constexpr size_t kVersionOff = 8;
constexpr size_t kDepthOff = 12;
constexpr size_t kHiddenOff = 16;
size_t count_offset(size_t n_rates) { return 136 + 4 * n_rates; }

}  // namespace

TEST_CASE("fresh model round trip: config, params, and empty optimizer state") {
  ModelConfig c = tiny_config();
  c.scan = ScanVariant::B_LOWER_RIGHT;
  c.order = BlockOrder::CA_THEN_SA;
  c.use_conv = false;
  c.dilation.probability = 0.25;
  c.dilation.rates = {2, 3};
  RngStream r(21, 0);
  Model m = init_model(c, r);
  TrainerState st;
  st.step = 0;
  st.rng = RngStream(9, 8, 7);

  const std::string path = "test_persistence_fresh.bin";
  save_checkpoint(m, st, path);
  LoadedCheckpoint lc = load_checkpoint(path);

  CHECK(lc.model.cfg.depth == c.depth);
  CHECK(lc.model.cfg.hidden == c.hidden);
  CHECK(lc.model.cfg.heads == c.heads);
  CHECK(lc.model.cfg.patch == c.patch);
  CHECK(lc.model.cfg.channels == c.channels);
  CHECK(lc.model.cfg.num_classes == c.num_classes);
  CHECK(lc.model.cfg.train_h == c.train_h);
  CHECK(lc.model.cfg.train_w == c.train_w);
  CHECK(lc.model.cfg.scan == c.scan);
  CHECK(lc.model.cfg.order == c.order);
  CHECK(lc.model.cfg.use_causal == c.use_causal);
  CHECK(lc.model.cfg.use_conv == c.use_conv);
  CHECK(lc.model.cfg.dilation.probability == 0.25);
  CHECK(lc.model.cfg.dilation.rates == std::vector<int>{2, 3});

  REQUIRE(lc.model.params.size() == m.params.size());
  for (size_t p = 0; p < m.params.size(); ++p) {
    CHECK(lc.model.params[p].first == m.params[p].first);
    CHECK(bitwise_equal(lc.model.params[p].second, m.params[p].second));
  }
  CHECK(lc.state.step == 0);
  CHECK(lc.state.rng.seed() == 9);
  CHECK(lc.state.rng.stream() == 8);
  CHECK(lc.state.rng.counter() == 7);
  CHECK(lc.state.adam.m.empty());
  CHECK(lc.state.adam.v.empty());
  CHECK(lc.state.adam.step_count == 0);
}

TEST_CASE("mid-training round trip carries optimizer moments bitwise") {
  Dataset data = generate_dataset(2, 3, 8, 8, 50);
  DiffusionSchedule sched = linear_schedule(100, 1e-4, 2e-2);
  TrainConfig tc;
  tc.batch = 2;
  RngStream r(22, 0);
  Model m = init_model(tiny_config(), r);
  TrainerState st;
  st.rng = RngStream(500, 1);
  for (int i = 0; i < 3; ++i) {
    training_step(m, st.adam, data, sched, tc, st.rng);
    st.step += 1;
  }

  const std::string path = "test_persistence_mid.bin";
  save_checkpoint(m, st, path);
  LoadedCheckpoint lc = load_checkpoint(path);

  CHECK(lc.state.step == 3);
  CHECK(lc.state.adam.step_count == 3);
  CHECK(lc.state.rng.seed() == 500);
  CHECK(lc.state.rng.counter() == st.rng.counter());
  REQUIRE(lc.state.adam.m.size() == m.params.size());
  for (size_t p = 0; p < m.params.size(); ++p) {
    CHECK(bitwise_equal(lc.model.params[p].second, m.params[p].second));
    CHECK(bitwise_equal(lc.state.adam.m[p], st.adam.m[p]));
    CHECK(bitwise_equal(lc.state.adam.v[p], st.adam.v[p]));
  }

  // a sample drawn from the loaded model reproduces the original bitwise
  SampleConfig sc;
  sc.height = 8;
  sc.width = 8;
  sc.steps = 6;
  RngStream s1(77, 0), s2(77, 0);
  Tensor before = ddpm_sample(m, sched, sc, s1);
  Tensor after = ddpm_sample(lc.model, sched, sc, s2);
  CHECK(max_abs_diff(before, after) == 0.0);
}

TEST_CASE("save/load/resume matches uninterrupted training bitwise") {
  Dataset data = generate_dataset(2, 3, 8, 8, 51);
  DiffusionSchedule sched = linear_schedule(100, 1e-4, 2e-2);
  TrainConfig tc;
  tc.batch = 2;
  RngStream r(23, 0);
  Model m = init_model(tiny_config(), r);
  TrainerState st;
  st.rng = RngStream(600, 2);

  for (int i = 0; i < 3; ++i) training_step(m, st.adam, data, sched, tc, st.rng);
  const std::string path = "test_persistence_resume.bin";
  save_checkpoint(m, st, path);

  // path A: keep going in memory
  for (int i = 0; i < 2; ++i) training_step(m, st.adam, data, sched, tc, st.rng);

  // path B: reload and do the same two steps
  LoadedCheckpoint lc = load_checkpoint(path);
  for (int i = 0; i < 2; ++i)
    training_step(lc.model, lc.state.adam, data, sched, tc, lc.state.rng);

  CHECK(lc.state.rng.counter() == st.rng.counter());
  for (size_t p = 0; p < m.params.size(); ++p)
    CHECK(bitwise_equal(lc.model.params[p].second, m.params[p].second));
}

TEST_CASE("corrupt checkpoints are rejected, each with its own diagnosis") {
  RngStream r(24, 0);
  Model m = init_model(tiny_config(), r);
  TrainerState st;
  const std::string path = "test_persistence_corrupt.bin";
  save_checkpoint(m, st, path);
  const std::string good = slurp(path);

  // sanity-check the layout assumptions before poking bytes
  REQUIRE(good.substr(0, 7) == "LEDITCK");
  REQUIRE(le32(good, kVersionOff) == 1);
  REQUIRE(le32(good, kDepthOff) == 2);
  REQUIRE(le32(good, kHiddenOff) == 16);
  const size_t count_off = count_offset(1);  // default policy: one rate
  REQUIRE(le32(good, count_off) == 33);      // 9 shared + 2*10 block + 4 head tensors
  // first tensor record: u32 len=7, "patch.w"
  REQUIRE(le32(good, count_off + 4) == 7);
  REQUIRE(good.substr(count_off + 8, 7) == "patch.w");

  CHECK(load_error("test_persistence_nonexistent.bin").find("cannot open") != std::string::npos);

  std::string bad = good;
  bad[0] = 'X';
  spit(path, bad);
  CHECK(load_error(path).find("bad magic") != std::string::npos);

  bad = good;
  poke32(bad, kVersionOff, 2);
  spit(path, bad);
  CHECK(load_error(path).find("unsupported version") != std::string::npos);

  spit(path, good.substr(0, good.size() - 1));  // drop the last byte
  CHECK(load_error(path).find("truncated") != std::string::npos);

  spit(path, good.substr(0, 20));  // mid-header
  CHECK(load_error(path).find("truncated") != std::string::npos);

  bad = good;
  poke32(bad, count_off + 4, 1u << 21);  // absurd name length
  spit(path, bad);
  CHECK(load_error(path).find("implausible string length") != std::string::npos);

  bad = good;
  poke32(bad, count_off + 4 + 4 + 7, 9);  // ndim field of the first tensor
  spit(path, bad);
  CHECK(load_error(path).find("implausible tensor rank") != std::string::npos);

  bad = good;
  bad[count_off + 8 + 6] = 'x';  // "patch.w" -> "patch.x"
  spit(path, bad);
  CHECK(load_error(path).find("unknown tensor 'patch.x'") != std::string::npos);

  bad = good;
  poke32(bad, kHiddenOff, 32);  // config says 32, stored tensors still say 16
  spit(path, bad);
  CHECK(load_error(path).find("does not match expected") != std::string::npos);

  // count lowered by one + the last tensor record removed -> a parameter is
  // simply absent rather than malformed
  bad = good;
  const std::string last_rec = std::string("\x07\x00\x00\x00", 4) + "final.b";
  size_t pos = bad.find(last_rec);
  REQUIRE(pos != std::string::npos);
  REQUIRE(bad.find(last_rec, pos + 1) == std::string::npos);  // unique match
  bad = bad.substr(0, pos);
  poke32(bad, count_off, 32);
  spit(path, bad);
  CHECK(load_error(path).find("missing model parameter 'final.b'") != std::string::npos);
}
