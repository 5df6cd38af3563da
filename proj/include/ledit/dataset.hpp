#pragma once
// Synthetic class-conditioned image set. Four base patterns keyed by class id
// (blob / vertical stripes / checkerboard / radial gradient), each with small
// per-image jitter so the set isn't degenerate. Values live in [-1, 1].

#include <cstdint>
#include <string>
#include <vector>

#include "ledit/rng.hpp"
#include "ledit/tensor.hpp"

namespace ledit {

struct Dataset {
  std::vector<Tensor> images;  // each [3, H, W]
  std::vector<int> labels;
  int num_classes = 0;
  int height = 0;
  int width = 0;

  size_t size() const { return images.size(); }
};

// One image of class `cls` (pattern = cls mod 4, parameters vary with cls).
// Deterministic given the rng state.
Tensor render_class_image(int cls, int num_classes, int H, int W, RngStream& rng);

// n_per_class images per class; image (cls, k) uses stream id cls*100000 + k,
// so the set is independent of generation order.
Dataset generate_dataset(int num_classes, int n_per_class, int H, int W, uint64_t seed);

// Writes img_<class>_<index>.ppm files plus index.txt with "<relpath> <class>"
// lines. Directory is created if missing.
void write_dataset(const Dataset& ds, const std::string& dir);

// Reads a directory written by write_dataset (index.txt drives the load).
Dataset load_dataset(const std::string& dir);

}  // namespace ledit
