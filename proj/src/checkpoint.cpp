#include "ledit/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace ledit {

static const char kMagic[8] = {'L', 'E', 'D', 'I', 'T', 'C', 'K', '\0'};
static constexpr uint32_t kVersion = 1;

// ---- little-endian primitives ---------------------------------------------------

static void put_u32(std::ostream& f, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  f.write(reinterpret_cast<const char*>(b), 4);
}

static void put_u64(std::ostream& f, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  f.write(reinterpret_cast<const char*>(b), 8);
}

static void put_i32(std::ostream& f, int32_t v) { put_u32(f, static_cast<uint32_t>(v)); }
static void put_i64(std::ostream& f, int64_t v) { put_u64(f, static_cast<uint64_t>(v)); }

static void put_f64(std::ostream& f, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(f, bits);
}

static void put_str(std::ostream& f, const std::string& s) {
  put_u32(f, static_cast<uint32_t>(s.size()));
  f.write(s.data(), static_cast<std::streamsize>(s.size()));
}

static void read_exact(std::istream& f, void* out, size_t bytes) {
  f.read(static_cast<char*>(out), static_cast<std::streamsize>(bytes));
  if (f.gcount() != static_cast<std::streamsize>(bytes))
    throw IoError("checkpoint: truncated data (expected " + std::to_string(bytes) + " more bytes)");
}

static uint32_t get_u32(std::istream& f) {
  unsigned char b[4];
  read_exact(f, b, 4);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= uint32_t(b[i]) << (8 * i);
  return v;
}

static uint64_t get_u64(std::istream& f) {
  unsigned char b[8];
  read_exact(f, b, 8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= uint64_t(b[i]) << (8 * i);
  return v;
}

static int32_t get_i32(std::istream& f) { return static_cast<int32_t>(get_u32(f)); }
static int64_t get_i64(std::istream& f) { return static_cast<int64_t>(get_u64(f)); }

static double get_f64(std::istream& f) {
  uint64_t bits = get_u64(f);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

static std::string get_str(std::istream& f) {
  uint32_t len = get_u32(f);
  if (len > (1u << 20)) throw IoError("checkpoint: implausible string length (corrupt file)");
  std::string s(len, '\0');
  if (len) read_exact(f, s.data(), len);
  return s;
}

// ---- save ------------------------------------------------------------------------

static void put_tensor(std::ostream& f, const std::string& name, const Tensor& t) {
  put_str(f, name);
  put_u32(f, static_cast<uint32_t>(t.ndim()));
  for (int64_t d : t.shape) put_i64(f, d);
  for (double v : t.data) put_f64(f, v);
}

void save_checkpoint(const Model& model, const TrainerState& state, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("checkpoint: cannot open '" + path + "' for writing");

  f.write(kMagic, 8);
  put_u32(f, kVersion);

  const ModelConfig& c = model.cfg;
  put_i32(f, c.depth);
  put_i32(f, c.hidden);
  put_i32(f, c.heads);
  put_i32(f, c.patch);
  put_i32(f, c.channels);
  put_i32(f, c.num_classes);
  put_i32(f, c.train_h);
  put_i32(f, c.train_w);
  put_u32(f, static_cast<uint32_t>(c.scan));
  put_u32(f, static_cast<uint32_t>(c.order));
  put_u32(f, c.use_causal ? 1 : 0);
  put_u32(f, c.use_conv ? 1 : 0);
  put_f64(f, c.dilation.probability);
  put_u32(f, static_cast<uint32_t>(c.dilation.rates.size()));
  for (int r : c.dilation.rates) put_i32(f, r);

  put_u64(f, state.step);
  put_u64(f, state.rng.seed());
  put_u64(f, state.rng.stream());
  put_u64(f, state.rng.counter());
  put_f64(f, state.adam.beta1);
  put_f64(f, state.adam.beta2);
  put_f64(f, state.adam.eps);
  put_u64(f, static_cast<uint64_t>(state.adam.step_count));

  bool with_adam = !state.adam.m.empty();
  uint32_t count = static_cast<uint32_t>(model.params.size() * (with_adam ? 3 : 1));
  put_u32(f, count);
  for (auto& kv : model.params) put_tensor(f, kv.first, kv.second);
  if (with_adam) {
    for (size_t i = 0; i < model.params.size(); ++i)
      put_tensor(f, "opt.m:" + model.params[i].first, state.adam.m[i]);
    for (size_t i = 0; i < model.params.size(); ++i)
      put_tensor(f, "opt.v:" + model.params[i].first, state.adam.v[i]);
  }
  f.flush();
  if (!f) throw IoError("checkpoint: write failed for '" + path + "'");
}

// ---- load ------------------------------------------------------------------------

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("checkpoint: cannot open '" + path + "'");

  char magic[8];
  read_exact(f, magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0) throw IoError("checkpoint: bad magic (not a checkpoint file)");
  uint32_t version = get_u32(f);
  if (version != kVersion)
    throw IoError("checkpoint: unsupported version " + std::to_string(version) + " (want " +
                  std::to_string(kVersion) + ")");

  ModelConfig c;
  c.depth = get_i32(f);
  c.hidden = get_i32(f);
  c.heads = get_i32(f);
  c.patch = get_i32(f);
  c.channels = get_i32(f);
  c.num_classes = get_i32(f);
  c.train_h = get_i32(f);
  c.train_w = get_i32(f);
  c.scan = static_cast<ScanVariant>(get_u32(f));
  c.order = static_cast<BlockOrder>(get_u32(f));
  c.use_causal = get_u32(f) != 0;
  c.use_conv = get_u32(f) != 0;
  c.dilation.probability = get_f64(f);
  uint32_t n_rates = get_u32(f);
  if (n_rates > 64) throw IoError("checkpoint: implausible dilation rate count (corrupt file)");
  c.dilation.rates.clear();
  for (uint32_t i = 0; i < n_rates; ++i) c.dilation.rates.push_back(get_i32(f));

  LoadedCheckpoint out;
  RngStream zero;  // params are overwritten below; init draws are discarded
  out.model = init_model(c, zero);

  out.state.step = get_u64(f);
  uint64_t seed = get_u64(f), stream = get_u64(f), counter = get_u64(f);
  out.state.rng = RngStream(seed, stream, counter);
  out.state.adam.beta1 = get_f64(f);
  out.state.adam.beta2 = get_f64(f);
  out.state.adam.eps = get_f64(f);
  out.state.adam.step_count = static_cast<int64_t>(get_u64(f));

  uint32_t count = get_u32(f);
  std::vector<bool> param_seen(out.model.params.size(), false);
  bool any_adam = false;
  auto ensure_adam = [&]() {
    if (!out.state.adam.m.empty()) return;
    for (auto& kv : out.model.params) {
      out.state.adam.m.emplace_back(kv.second.shape);
      out.state.adam.v.emplace_back(kv.second.shape);
    }
  };

  for (uint32_t i = 0; i < count; ++i) {
    std::string name = get_str(f);
    uint32_t ndim = get_u32(f);
    if (ndim > 8) throw IoError("checkpoint: implausible tensor rank (corrupt file)");
    std::vector<int64_t> shape;
    for (uint32_t d = 0; d < ndim; ++d) shape.push_back(get_i64(f));
    int64_t numel = Tensor::numel_of(shape);
    if (numel < 0 || numel > (int64_t(1) << 32))
      throw IoError("checkpoint: implausible tensor size (corrupt file)");

    Tensor* target = nullptr;
    std::string base = name;
    bool is_m = name.rfind("opt.m:", 0) == 0;
    bool is_v = name.rfind("opt.v:", 0) == 0;
    if (is_m || is_v) base = name.substr(6);

    size_t pidx = out.model.params.size();
    for (size_t p = 0; p < out.model.params.size(); ++p)
      if (out.model.params[p].first == base) {
        pidx = p;
        break;
      }
    if (pidx == out.model.params.size())
      throw IoError("checkpoint: unknown tensor '" + name + "' for this model config");

    if (is_m || is_v) {
      ensure_adam();
      any_adam = true;
      target = is_m ? &out.state.adam.m[pidx] : &out.state.adam.v[pidx];
    } else {
      param_seen[pidx] = true;
      target = &out.model.params[pidx].second;
    }
    if (target->shape != shape)
      throw IoError("checkpoint: tensor '" + name + "' shape " + shape_str(shape) +
                    " does not match expected " + shape_str(target->shape));
    for (int64_t k = 0; k < numel; ++k) (*target)[k] = get_f64(f);
  }
  for (size_t p = 0; p < param_seen.size(); ++p)
    if (!param_seen[p])
      throw IoError("checkpoint: missing model parameter '" + out.model.params[p].first + "'");
  if (!any_adam) {
    out.state.adam.m.clear();
    out.state.adam.v.clear();
  }
  return out;
}

}  // namespace ledit
