#pragma once
// Counter-based splittable RNG. State is the triple (seed, stream, counter); the
// k-th draw is a pure hash of the triple, so streams can be split without
// coordination and a checkpoint can restore the generator exactly by storing
// three integers. Not cryptographic; statistical quality comes from chaining
// three 64-bit finalizer rounds (full avalanche each).

#include <cstdint>
#include <cmath>

namespace ledit {

inline uint64_t mix64(uint64_t x) {
  x ^= x >> 33;
  x *= 0xff51afd7ed558ccdULL;
  x ^= x >> 33;
  x *= 0xc4ceb9fe1a85ec53ULL;
  x ^= x >> 33;
  return x;
}

class RngStream {
 public:
  RngStream() : RngStream(0, 0) {}
  RngStream(uint64_t seed, uint64_t stream, uint64_t counter = 0)
      : seed_(seed), stream_(stream), counter_(counter) {}

  uint64_t seed() const { return seed_; }
  uint64_t stream() const { return stream_; }
  uint64_t counter() const { return counter_; }

  uint64_t next_u64() {
    uint64_t h = mix64(counter_ + 0x9e3779b97f4a7c15ULL);
    h = mix64(h ^ stream_);
    h = mix64(h ^ seed_);
    ++counter_;
    return h;
  }

  // Uniform in [0, 1): top 53 bits of the hash.
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n). Modulo bias is ~n/2^64, irrelevant at toy scale.
  uint64_t uniform_int(uint64_t n) { return next_u64() % n; }

  // Standard normal via Box-Muller; always consumes exactly two draws and keeps
  // no cached spare, so the draw count per call is fixed (matters for replay).
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log1p(-u1));  // log(1-u1), safe at u1 = 0
    return r * std::cos(6.283185307179586476925287 * u2);
  }

  // Exp(1) via inversion; one draw per call.
  double exponential() { return -std::log1p(-uniform()); }

  // Derive an independent child stream. Children of distinct ids (and of
  // distinct parents) get unrelated stream words.
  RngStream split(uint64_t child_id) const {
    return RngStream(seed_, mix64(stream_ ^ mix64(child_id + 0x9e3779b97f4a7c15ULL)));
  }

 private:
  uint64_t seed_;
  uint64_t stream_;
  uint64_t counter_;
};

}  // namespace ledit
