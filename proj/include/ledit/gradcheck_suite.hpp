#pragma once
// Named finite-difference checks covering every differentiable kernel, from
// single ops up to a complete gated attention+MLP block. Shared by the
// gradcheck CLI command and the release gate so both report identical ops.

#include <cstdint>
#include <string>
#include <vector>

namespace ledit {

struct GradCheckResult {
  std::string name;
  double max_rel = 0.0;  // max |analytic - numeric| / max(1, |analytic|)
};

// One full pass with inputs drawn deterministically from `seed`.
std::vector<GradCheckResult> run_gradcheck_suite(uint64_t seed);

}  // namespace ledit
