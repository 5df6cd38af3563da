#include "ledit/locality.hpp"

namespace ledit {

void MultiDilationPolicy::validate() const {
  if (!(probability >= 0.0 && probability <= 1.0))
    throw ConfigError("multi-dilation: probability must be in [0,1]");
  if (rates.empty()) throw ConfigError("multi-dilation: rates must be nonempty");
  for (int r : rates)
    if (r < 2) throw ConfigError("multi-dilation: every rate must be >= 2, got " + std::to_string(r));
}

bool is_shape_preserving(const ConvSpec& spec) {
  return spec.kernel >= 1 && spec.kernel % 2 == 1 && spec.stride == 1 && spec.dilation >= 1 &&
         spec.pad == spec.dilation * (spec.kernel - 1) / 2;
}

ConvSpec standard_conv_spec() { return ConvSpec{3, 1, 1, 1}; }

ConvSpec dilated_conv_spec(int rate) {
  if (rate < 1) throw ConfigError("dilated_conv_spec: rate must be >= 1");
  return ConvSpec{3, rate, 1, rate};
}

ConvSpec sample_conv_spec(const MultiDilationPolicy& policy, RngStream& rng) {
  policy.validate();
  if (rng.uniform() < policy.probability) {
    int rate = policy.rates[rng.uniform_int(policy.rates.size())];
    return dilated_conv_spec(rate);
  }
  return standard_conv_spec();
}

// ---- layout indices ----------------------------------------------------------
// Patch flatten order within a token: channel-major, then ky, then kx, so a
// 1x1 patch with identity projection reproduces the pixel vector exactly.

std::shared_ptr<const std::vector<int64_t>> patch_gather_index(int C, int H, int W, int patch) {
  if (patch < 1) throw ConfigError("patchify: patch must be >= 1");
  if (H % patch != 0 || W % patch != 0)
    throw DimensionError("patchify: image " + std::to_string(H) + "x" + std::to_string(W) +
                         " not divisible by patch " + std::to_string(patch));
  int h = H / patch, w = W / patch;
  auto idx = std::make_shared<std::vector<int64_t>>();
  idx->reserve(static_cast<size_t>(C) * H * W);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      for (int ci = 0; ci < C; ++ci)
        for (int dy = 0; dy < patch; ++dy)
          for (int dx = 0; dx < patch; ++dx)
            idx->push_back((int64_t(ci) * H + (r * patch + dy)) * W + (c * patch + dx));
  return idx;
}

std::shared_ptr<const std::vector<int64_t>> unpatch_gather_index(int C, int H, int W, int patch) {
  auto fwd = patch_gather_index(C, H, W, patch);
  auto inv = std::make_shared<std::vector<int64_t>>(fwd->size());
  for (size_t i = 0; i < fwd->size(); ++i) (*inv)[static_cast<size_t>((*fwd)[i])] = static_cast<int64_t>(i);
  return inv;
}

std::shared_ptr<const std::vector<int64_t>> tokens_to_grid_index(int h, int w, int64_t dim) {
  auto idx = std::make_shared<std::vector<int64_t>>();
  idx->reserve(static_cast<size_t>(h) * w * dim);
  for (int64_t f = 0; f < dim; ++f)
    for (int64_t r = 0; r < h; ++r)
      for (int64_t c = 0; c < w; ++c) idx->push_back((r * w + c) * dim + f);
  return idx;
}

std::shared_ptr<const std::vector<int64_t>> grid_to_tokens_index(int h, int w, int64_t dim) {
  auto idx = std::make_shared<std::vector<int64_t>>();
  idx->reserve(static_cast<size_t>(h) * w * dim);
  for (int64_t r = 0; r < h; ++r)
    for (int64_t c = 0; c < w; ++c)
      for (int64_t f = 0; f < dim; ++f) idx->push_back((f * h + r) * w + c);
  return idx;
}

// ---- plain versions ---------------------------------------------------------

PatchGrid patchify(const Tensor& img, int patch, const Tensor& w, const Tensor& b) {
  if (img.ndim() != 3) throw DimensionError("patchify: img must be [C,H,W]");
  int C = int(img.shape[0]), H = int(img.shape[1]), W = int(img.shape[2]);
  auto idx = patch_gather_index(C, H, W, patch);
  int h = H / patch, wgrid = W / patch;
  int64_t n = int64_t(h) * wgrid, raw = int64_t(patch) * patch * C;
  if (w.ndim() != 2 || w.shape[0] != raw)
    throw DimensionError("patchify: w must be [" + std::to_string(raw) + ", dim], got " + shape_str(w.shape));
  if (b.numel() != w.shape[1]) throw DimensionError("patchify: b numel vs w cols");
  Tensor rawtok({n, raw});
  for (size_t i = 0; i < idx->size(); ++i) rawtok[static_cast<int64_t>(i)] = img[(*idx)[i]];
  Tensor tok = matmul(rawtok, w);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < w.shape[1]; ++j) tok.at2(i, j) += b[j];
  return PatchGrid{h, wgrid, std::move(tok)};
}

Tensor unpatchify(const PatchGrid& grid, int patch, int out_channels) {
  int64_t raw = int64_t(patch) * patch * out_channels;
  if (grid.tokens.ndim() != 2 || grid.tokens.shape[0] != grid.n() || grid.tokens.shape[1] != raw)
    throw DimensionError("unpatchify: tokens must be [" + std::to_string(grid.n()) + "," +
                         std::to_string(raw) + "], got " + shape_str(grid.tokens.shape));
  int H = grid.h * patch, W = grid.w * patch;
  auto idx = patch_gather_index(out_channels, H, W, patch);
  Tensor img({out_channels, H, W});
  for (size_t i = 0; i < idx->size(); ++i) img[(*idx)[i]] = grid.tokens[static_cast<int64_t>(i)];
  return img;
}

PatchGrid locality_conv(const PatchGrid& grid, const Tensor& w, const Tensor& b,
                        const ConvSpec& spec) {
  if (!is_shape_preserving(spec))
    throw ConfigError("locality_conv: spec (k=" + std::to_string(spec.kernel) + ",p=" +
                      std::to_string(spec.pad) + ",s=" + std::to_string(spec.stride) + ",d=" +
                      std::to_string(spec.dilation) + ") is not shape-preserving");
  int64_t dim = grid.dim();
  // tokens [n,dim] -> [dim,h,w]
  Tensor gx({dim, grid.h, grid.w});
  for (int64_t r = 0; r < grid.h; ++r)
    for (int64_t c = 0; c < grid.w; ++c)
      for (int64_t f = 0; f < dim; ++f) gx.at3(f, r, c) = grid.tokens.at2(r * grid.w + c, f);
  Tensor gy = conv2d(gx, w, b, spec);
  PatchGrid out{grid.h, grid.w, Tensor({grid.n(), dim})};
  for (int64_t r = 0; r < grid.h; ++r)
    for (int64_t c = 0; c < grid.w; ++c)
      for (int64_t f = 0; f < dim; ++f) out.tokens.at2(r * grid.w + c, f) = gy.at3(f, r, c);
  return out;
}

// ---- tape versions ------------------------------------------------------------

Var patchify_t(Tape& tape, Var img, int patch, Var w, Var b) {
  const Tensor& iv = tape.value(img);
  if (iv.ndim() != 3) throw DimensionError("patchify: img must be [C,H,W]");
  int C = int(iv.shape[0]), H = int(iv.shape[1]), W = int(iv.shape[2]);
  auto idx = patch_gather_index(C, H, W, patch);
  int64_t n = int64_t(H / patch) * (W / patch);
  int64_t raw = int64_t(patch) * patch * C;
  Var rawtok = tape.gather(img, idx, {n, raw});
  return tape.add_rowvec(tape.matmul(rawtok, w), b);
}

Var locality_conv_t(Tape& tape, Var tokens, int h, int w, Var conv_w, Var conv_b,
                    const ConvSpec& spec) {
  if (!is_shape_preserving(spec)) throw ConfigError("locality_conv: spec is not shape-preserving");
  int64_t dim = tape.value(tokens).shape[1];
  Var grid = tape.gather(tokens, tokens_to_grid_index(h, w, dim), {dim, h, w});
  Var conv = tape.conv2d(grid, conv_w, conv_b, spec);
  return tape.gather(conv, grid_to_tokens_index(h, w, dim), {int64_t(h) * w, dim});
}

Var unpatchify_t(Tape& tape, Var tokens, int patch, int out_channels, int H, int W) {
  const Tensor& tv = tape.value(tokens);
  int64_t raw = int64_t(patch) * patch * out_channels;
  int64_t n = int64_t(H / patch) * (W / patch);
  if (tv.ndim() != 2 || tv.shape[0] != n || tv.shape[1] != raw)
    throw DimensionError("unpatchify: tokens shape " + shape_str(tv.shape));
  return tape.gather(tokens, unpatch_gather_index(out_channels, H, W, patch), {out_channels, H, W});
}

}  // namespace ledit
