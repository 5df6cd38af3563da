#pragma once
// Self-describing binary checkpoint. Fixed little-endian layout, written field
// by field (no struct dumping):
//   magic "LEDITCK\0" | u32 version | ModelConfig fields | u64 train step
//   | rng (seed, stream, counter) | adam (beta1, beta2, eps, u64 step_count)
//   | u32 tensor count | tensors
// Each tensor: u32 name length | name bytes | u32 ndim | i64 dims | f64 data.
// Model parameters are stored under their parameter names; Adam moments under
// "opt.m:<name>" / "opt.v:<name>". Loading rebuilds the model from the embedded
// config and requires every model parameter to be present with its exact shape.

#include <cstdint>
#include <string>

#include "ledit/diffusion.hpp"
#include "ledit/model.hpp"
#include "ledit/rng.hpp"

namespace ledit {

struct TrainerState {
  uint64_t step = 0;
  RngStream rng;
  AdamState adam;
};

void save_checkpoint(const Model& model, const TrainerState& state, const std::string& path);

struct LoadedCheckpoint {
  Model model;
  TrainerState state;
};

// Distinct IoError messages for: unreadable file, bad magic, unsupported
// version, truncated data, unknown tensor name, tensor shape mismatch,
// missing model parameter.
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace ledit
