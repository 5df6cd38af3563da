#include "ledit/masks.hpp"

#include <algorithm>
#include <cstdlib>

namespace ledit {

const char* to_string(ScanVariant v) {
  switch (v) {
    case ScanVariant::A_1D: return "a_1d";
    case ScanVariant::B_LOWER_RIGHT: return "b_lower_right";
    case ScanVariant::C_UNMASK_NEIGHBORHOOD: return "c_unmask_neighborhood";
    case ScanVariant::D_LOWER_RIGHT_CORNER: return "d_lower_right_corner";
  }
  throw ConfigError("unknown ScanVariant value");
}

ScanVariant scan_variant_from_string(const std::string& s) {
  if (s == "a_1d" || s == "a") return ScanVariant::A_1D;
  if (s == "b_lower_right" || s == "b") return ScanVariant::B_LOWER_RIGHT;
  if (s == "c_unmask_neighborhood" || s == "c") return ScanVariant::C_UNMASK_NEIGHBORHOOD;
  if (s == "d_lower_right_corner" || s == "d") return ScanVariant::D_LOWER_RIGHT_CORNER;
  throw ConfigError("unknown scan variant '" + s + "' (want a|b|c|d or full names)");
}

AttentionMask build_mask(ScanVariant v, int h, int w) {
  if (h < 1 || w < 1) throw InputError("build_mask: grid dims must be >= 1");
  AttentionMask m;
  m.height = h;
  m.width = w;
  m.variant = v;
  int64_t n = m.tokens();
  m.visible.assign(static_cast<size_t>(n * n), 0);
  for (int64_t q = 0; q < n; ++q) {
    int64_t rq = q / w, cq = q % w;
    for (int64_t k = 0; k < n; ++k) {
      int64_t rk = k / w, ck = k % w;
      bool vis = false;
      switch (v) {
        case ScanVariant::A_1D:
          vis = k <= q;
          break;
        case ScanVariant::B_LOWER_RIGHT:
          vis = (k == q) || !(rk >= rq && ck >= cq);
          break;
        case ScanVariant::C_UNMASK_NEIGHBORHOOD:
          vis = (k == q) || !(rk >= rq && ck >= cq) ||
                (std::max(std::llabs(rk - rq), std::llabs(ck - cq)) <= 1);
          break;
        case ScanVariant::D_LOWER_RIGHT_CORNER:
          vis = !(rk > rq && ck > cq);
          break;
      }
      if (vis) m.visible[static_cast<size_t>(q * n + k)] = 1;
    }
  }
  return m;
}

std::vector<MaskViolation> validate(const AttentionMask& m) {
  std::vector<MaskViolation> out;
  int64_t n = m.tokens();
  if (n < 1 || static_cast<int64_t>(m.visible.size()) != n * n) {
    out.push_back({-1, "mask buffer size does not match grid"});
    return out;
  }
  for (int64_t q = 0; q < n; ++q) {
    if (!m.at(q, q)) out.push_back({q, "query cannot see itself"});
    bool any = false;
    for (int64_t k = 0; k < n && !any; ++k) any = m.at(q, k);
    if (!any) out.push_back({q, "query row fully masked"});
  }
  return out;
}

Tensor to_additive(const AttentionMask& m) {
  int64_t n = m.tokens();
  Tensor t({n, n});
  for (int64_t i = 0; i < n * n; ++i) t[i] = m.visible[static_cast<size_t>(i)] ? 0.0 : kMaskedLogit;
  return t;
}

int64_t visible_count(const AttentionMask& m) {
  int64_t c = 0;
  for (uint8_t v : m.visible) c += v;
  return c;
}

int64_t visible_count_row(const AttentionMask& m, int64_t query) {
  int64_t n = m.tokens();
  if (query < 0 || query >= n) throw InputError("visible_count_row: query out of range");
  int64_t c = 0;
  for (int64_t k = 0; k < n; ++k) c += m.visible[static_cast<size_t>(query * n + k)];
  return c;
}

}  // namespace ledit
