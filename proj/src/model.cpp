#include "ledit/model.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <tuple>

namespace ledit {

const char* to_string(BlockOrder o) {
  switch (o) {
    case BlockOrder::CA_THEN_SA: return "ca_then_sa";
    case BlockOrder::SA_THEN_CA: return "sa_then_ca";
    case BlockOrder::ALT_CA_SA: return "alt_ca_sa";
    case BlockOrder::ALT_SA_CA: return "alt_sa_ca";
  }
  throw ConfigError("unknown BlockOrder value");
}

BlockOrder block_order_from_string(const std::string& s) {
  if (s == "ca_then_sa") return BlockOrder::CA_THEN_SA;
  if (s == "sa_then_ca") return BlockOrder::SA_THEN_CA;
  if (s == "alt_ca_sa") return BlockOrder::ALT_CA_SA;
  if (s == "alt_sa_ca") return BlockOrder::ALT_SA_CA;
  throw ConfigError("unknown block order '" + s +
                    "' (want ca_then_sa|sa_then_ca|alt_ca_sa|alt_sa_ca)");
}

void ModelConfig::validate() const {
  if (depth < 2 || depth % 2 != 0)
    throw ConfigError("model: depth must be even and >= 2 (block orders are pairwise), got " +
                      std::to_string(depth));
  if (hidden < 2 || hidden % 2 != 0)
    throw ConfigError("model: hidden must be even (timestep sinusoid), got " + std::to_string(hidden));
  if (heads < 1 || hidden % heads != 0)
    throw ConfigError("model: hidden " + std::to_string(hidden) + " not divisible by heads " +
                      std::to_string(heads));
  if (patch < 1) throw ConfigError("model: patch must be >= 1");
  if (channels < 1) throw ConfigError("model: channels must be >= 1");
  if (num_classes < 1) throw ConfigError("model: num_classes must be >= 1");
  if (train_h < patch || train_w < patch || train_h % patch != 0 || train_w % patch != 0)
    throw ConfigError("model: train resolution " + std::to_string(train_h) + "x" +
                      std::to_string(train_w) + " not divisible by patch " + std::to_string(patch));
  if (train_tokens() < 2)
    throw ConfigError("model: need >= 2 train tokens for the logit-scale policy");
  dilation.validate();
}

std::vector<BlockMode> assign_block_modes(BlockOrder order, int depth) {
  if (depth < 2 || depth % 2 != 0)
    throw ConfigError("assign_block_modes: depth must be even and >= 2, got " + std::to_string(depth));
  std::vector<BlockMode> modes(static_cast<size_t>(depth));
  for (int i = 0; i < depth; ++i) {
    switch (order) {
      case BlockOrder::CA_THEN_SA: modes[i] = i < depth / 2 ? BlockMode::CA : BlockMode::SA; break;
      case BlockOrder::SA_THEN_CA: modes[i] = i < depth / 2 ? BlockMode::SA : BlockMode::CA; break;
      case BlockOrder::ALT_CA_SA: modes[i] = i % 2 == 0 ? BlockMode::CA : BlockMode::SA; break;
      case BlockOrder::ALT_SA_CA: modes[i] = i % 2 == 0 ? BlockMode::SA : BlockMode::CA; break;
    }
  }
  return modes;
}

AttentionModeSchedule make_schedule(const ModelConfig& cfg, int t_prime) {
  AttentionModeSchedule s;
  if (cfg.use_causal) {
    s.modes = assign_block_modes(cfg.order, cfg.depth);
  } else {
    s.modes.assign(static_cast<size_t>(cfg.depth), BlockMode::SA);
  }
  s.t_prime = t_prime;
  return s;
}

// ---- parameters -------------------------------------------------------------

Tensor& Model::param(const std::string& name) {
  for (auto& kv : params)
    if (kv.first == name) return kv.second;
  throw InputError("model: no parameter named '" + name + "'");
}

const Tensor& Model::param(const std::string& name) const {
  return const_cast<Model*>(this)->param(name);
}

bool Model::has_param(const std::string& name) const {
  for (auto& kv : params)
    if (kv.first == name) return true;
  return false;
}

Model init_model(const ModelConfig& cfg, RngStream& rng) {
  cfg.validate();
  Model m;
  m.cfg = cfg;
  int64_t hid = cfg.hidden;
  int64_t raw = int64_t(cfg.patch) * cfg.patch * cfg.channels;

  auto linear_init = [&](std::vector<int64_t> shape) {
    double fan_in = double(shape[0]);
    return Tensor::randn(std::move(shape), rng, 1.0 / std::sqrt(fan_in));
  };
  auto add = [&](const std::string& name, Tensor t) { m.params.emplace_back(name, std::move(t)); };

  add("patch.w", linear_init({raw, hid}));
  add("patch.b", Tensor({hid}));

  // Locality conv starts as the identity map (center tap = I): an untrained
  // model embeds tokens independently of their neighbors, and the conv can be
  // replaced by hand for equivariance experiments without retraining.
  Tensor cw({hid, hid, 3, 3});
  for (int64_t f = 0; f < hid; ++f) cw[((f * hid + f) * 3 + 1) * 3 + 1] = 1.0;
  add("conv.w", std::move(cw));
  add("conv.b", Tensor({hid}));

  add("temb.w1", linear_init({hid, hid}));
  add("temb.b1", Tensor({hid}));
  add("temb.w2", linear_init({hid, hid}));
  add("temb.b2", Tensor({hid}));

  add("label.table", Tensor::randn({int64_t(cfg.num_classes) + 1, hid}, rng, 0.02));

  for (int i = 0; i < cfg.depth; ++i) {
    std::string p = "blk" + std::to_string(i) + ".";
    add(p + "attn.wq", linear_init({hid, hid}));
    add(p + "attn.wk", linear_init({hid, hid}));
    add(p + "attn.wv", linear_init({hid, hid}));
    add(p + "attn.wo", linear_init({hid, hid}));
    add(p + "mlp.w1", linear_init({hid, 4 * hid}));
    add(p + "mlp.b1", Tensor({4 * hid}));
    add(p + "mlp.w2", linear_init({4 * hid, hid}));
    add(p + "mlp.b2", Tensor({hid}));
    // adaLN-Zero: modulation linears start at zero, so shift = scale = gate = 0
    // and the block is the identity map until training moves them.
    add(p + "mod.w", Tensor({hid, 6 * hid}));
    add(p + "mod.b", Tensor({6 * hid}));
  }

  add("final.mod.w", Tensor({hid, 2 * hid}));
  add("final.mod.b", Tensor({2 * hid}));
  add("final.w", Tensor({hid, raw}));
  add("final.b", Tensor({raw}));
  return m;
}

// ---- mask cache ---------------------------------------------------------------

const Tensor& cached_additive_mask(ScanVariant v, int h, int w) {
  static std::map<std::tuple<int, int, int>, std::unique_ptr<Tensor>> cache;
  auto key = std::make_tuple(int(v), h, w);
  auto it = cache.find(key);
  if (it == cache.end()) {
    AttentionMask m = build_mask(v, h, w);
    auto violations = validate(m);
    if (!violations.empty())
      throw NumericError("mask cache: built mask failed validation at row " +
                         std::to_string(violations[0].query));
    it = cache.emplace(key, std::make_unique<Tensor>(to_additive(m))).first;
  }
  return *it->second;
}

// ---- forward ------------------------------------------------------------------

Var TapeBinding::at(const std::string& name) const {
  for (auto& kv : vars)
    if (kv.first == name) return kv.second;
  throw InputError("tape binding: no parameter named '" + name + "'");
}

TapeBinding bind_params(Tape& tape, const Model& m, bool learnable) {
  TapeBinding b;
  b.vars.reserve(m.params.size());
  for (auto& kv : m.params) b.vars.emplace_back(kv.first, tape.leaf(kv.second, learnable));
  return b;
}

Var final_layer(Tape& tape, const Model& m, const TapeBinding& bound, Var tokens, Var cond) {
  int64_t hid = m.cfg.hidden;
  Var act = tape.silu(cond);
  Var mo = tape.add_rowvec(tape.matmul(act, bound.at("final.mod.w")), bound.at("final.mod.b"));
  Var shift = tape.slice_cols(mo, 0, hid);
  Var scale = tape.slice_cols(mo, hid, 2 * hid);
  Var zf = modulate_t(tape, tokens, shift, scale);
  return tape.add_rowvec(tape.matmul(zf, bound.at("final.w")), bound.at("final.b"));
}

Var model_forward_t(Tape& tape, const Model& m, const TapeBinding& bound, const Tensor& x_t,
                    int t, int label, const ForwardOptions& opt, Tensor* captured) {
  const ModelConfig& cfg = m.cfg;
  cfg.validate();
  if (t < 0) throw InputError("model_forward: negative timestep");
  if (x_t.ndim() != 3 || x_t.shape[0] != cfg.channels)
    throw DimensionError("model_forward: x_t must be [" + std::to_string(cfg.channels) +
                         ",H,W], got " + shape_str(x_t.shape));
  int H = int(x_t.shape[1]), W = int(x_t.shape[2]);
  if (H % cfg.patch != 0 || W % cfg.patch != 0)
    throw DimensionError("model_forward: " + std::to_string(H) + "x" + std::to_string(W) +
                         " not divisible by patch " + std::to_string(cfg.patch));
  int h = H / cfg.patch, w = W / cfg.patch;
  int64_t row = resolve_label_row(label, cfg.num_classes, 0.0, nullptr);

  // embed
  Var img = tape.constant(x_t);
  Var tok = patchify_t(tape, img, cfg.patch, bound.at("patch.w"), bound.at("patch.b"));
  if (cfg.use_conv)
    tok = locality_conv_t(tape, tok, h, w, bound.at("conv.w"), bound.at("conv.b"), opt.conv_spec);

  // conditioning vector: 2-layer map of the timestep sinusoid + label row
  Var sin = tape.constant(timestep_sinusoid(double(t), cfg.hidden));
  Var t1 = tape.silu(tape.add_rowvec(tape.matmul(sin, bound.at("temb.w1")), bound.at("temb.b1")));
  Var temb = tape.add_rowvec(tape.matmul(t1, bound.at("temb.w2")), bound.at("temb.b2"));
  Var lemb = tape.take_row(bound.at("label.table"), row);
  Var cond = tape.add(temb, lemb);
  Var cond_act = tape.silu(cond);

  AttentionModeSchedule schedule = make_schedule(cfg, opt.t_prime);
  bool switched = t < schedule.t_prime;  // below the threshold, late denoising runs unmasked
  const Tensor* ca_mask = nullptr;
  if (cfg.use_causal && !switched) {
    for (BlockMode md : schedule.modes)
      if (md == BlockMode::CA) {
        ca_mask = &cached_additive_mask(cfg.scan, h, w);
        break;
      }
  }

  if (opt.capture_block < -1 || opt.capture_block >= cfg.depth)
    throw InputError("model_forward: capture_block " + std::to_string(opt.capture_block) +
                     " out of range");

  Var z = tok;
  for (int i = 0; i < cfg.depth; ++i) {
    std::string p = "blk" + std::to_string(i) + ".";
    const Tensor* mask = (schedule.modes[static_cast<size_t>(i)] == BlockMode::CA) ? ca_mask : nullptr;

    Var mo = tape.add_rowvec(tape.matmul(cond_act, bound.at(p + "mod.w")), bound.at(p + "mod.b"));
    ModulationParams mp = split_modulation(tape, mo, cfg.hidden);

    AttentionVars av{bound.at(p + "attn.wq"), bound.at(p + "attn.wk"), bound.at(p + "attn.wv"),
                     bound.at(p + "attn.wo"), cfg.heads};
    Var attn_in = modulate_t(tape, z, mp.shift_attn, mp.scale_attn);
    Var attn = masked_attention(tape, attn_in, av, mask, opt.logit_scale);
    z = tape.add(z, tape.mul_rowvec(attn, mp.gate_attn));

    Var mlp_in = modulate_t(tape, z, mp.shift_mlp, mp.scale_mlp);
    Var mh = tape.gelu(tape.add_rowvec(tape.matmul(mlp_in, bound.at(p + "mlp.w1")),
                                       bound.at(p + "mlp.b1")));
    Var mout = tape.add_rowvec(tape.matmul(mh, bound.at(p + "mlp.w2")), bound.at(p + "mlp.b2"));
    z = tape.add(z, tape.mul_rowvec(mout, mp.gate_mlp));

    if (!tape.value(z).all_finite())
      throw NumericError("model_forward: non-finite output at block " + std::to_string(i));
    if (captured && opt.capture_block == i) *captured = tape.value(z);
  }

  Var out_tok = final_layer(tape, m, bound, z, cond);
  return unpatchify_t(tape, out_tok, cfg.patch, cfg.channels, H, W);
}

Tensor model_forward(const Model& m, const Tensor& x_t, int t, int label,
                     const ForwardOptions& opt, Tensor* captured) {
  Tape tape;
  TapeBinding bound = bind_params(tape, m, false);
  Var out = model_forward_t(tape, m, bound, x_t, t, label, opt, captured);
  return tape.value(out);
}

}  // namespace ledit
