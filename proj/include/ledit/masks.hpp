#pragma once
// 2D causal attention masks over an h x w token grid, flattened row-major
// (token index = r*w + c). Four scan variants control which keys each query
// may see; masks are boolean here and converted to additive form (-1e30 on
// hidden entries) for the attention kernels.

#include <cstdint>
#include <string>
#include <vector>

#include "ledit/tensor.hpp"

namespace ledit {

enum class ScanVariant : uint8_t {
  // 1D raster order: key index <= query index.
  A_1D = 0,
  // Block everything at or beyond the query in both axes, except the query itself.
  B_LOWER_RIGHT = 1,
  // Variant B, plus the 8-connected (Chebyshev distance <= 1) neighborhood.
  C_UNMASK_NEIGHBORHOOD = 2,
  // Block only keys strictly below AND strictly right of the query (default).
  D_LOWER_RIGHT_CORNER = 3,
};

const char* to_string(ScanVariant v);
ScanVariant scan_variant_from_string(const std::string& s);  // throws ConfigError

struct AttentionMask {
  int height = 0;
  int width = 0;
  ScanVariant variant = ScanVariant::D_LOWER_RIGHT_CORNER;
  std::vector<uint8_t> visible;  // (h*w)*(h*w), [query*n + key], 1 = attend

  int64_t tokens() const { return static_cast<int64_t>(height) * width; }
  bool at(int64_t query, int64_t key) const { return visible[query * tokens() + key] != 0; }
};

// Build the mask for a grid; h, w >= 1 or InputError.
AttentionMask build_mask(ScanVariant v, int h, int w);

struct MaskViolation {
  int64_t query;
  std::string what;
};

// Structural checks: every query row has at least one visible key, and every
// query can see itself. Empty result = valid.
std::vector<MaskViolation> validate(const AttentionMask& m);

// 0 -> kMaskedLogit, 1 -> 0.0; shape [n, n].
Tensor to_additive(const AttentionMask& m);

// Total number of visible (query, key) pairs; equals the score-op count of a
// masked attention over this grid.
int64_t visible_count(const AttentionMask& m);

// Visible keys for one query row.
int64_t visible_count_row(const AttentionMask& m, int64_t query);

}  // namespace ledit
