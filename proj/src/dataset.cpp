#include "ledit/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ledit/image_io.hpp"

namespace ledit {

namespace fs = std::filesystem;

static double clamp1(double v) { return std::max(-1.0, std::min(1.0, v)); }

Tensor render_class_image(int cls, int num_classes, int H, int W, RngStream& rng) {
  if (cls < 0 || cls >= num_classes)
    throw InputError("render_class_image: class " + std::to_string(cls) + " out of range");
  if (H < 1 || W < 1) throw InputError("render_class_image: bad resolution");
  Tensor img({3, H, W});
  int pattern = cls % 4;
  // per-channel tint so channels are distinguishable but correlated
  double tint[3] = {1.0, 0.8, 0.6};

  switch (pattern) {
    case 0: {  // axis-aligned Gaussian blob at a class-specific position
      double base_cy = 0.25 + 0.5 * (((cls / 4) * 37 % 11) / 10.0);
      double base_cx = 0.3 + 0.4 * (((cls / 4) * 53 % 7) / 6.0);
      double cy = (base_cy + 0.05 * (rng.uniform() - 0.5)) * H;
      double cx = (base_cx + 0.05 * (rng.uniform() - 0.5)) * W;
      double sy = 0.18 * H * (1.0 + 0.2 * (rng.uniform() - 0.5));
      double sx = 0.18 * W * (1.0 + 0.2 * (rng.uniform() - 0.5));
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          double dy = (y - cy) / sy, dx = (x - cx) / sx;
          double v = 2.0 * std::exp(-0.5 * (dy * dy + dx * dx)) - 1.0;
          for (int c = 0; c < 3; ++c) img.at3(c, y, x) = v * tint[c];
        }
      break;
    }
    case 1: {  // vertical stripes
      double freq = 2.0 + double(rng.uniform_int(2));  // 2 or 3 periods
      double phase = rng.uniform() * 6.283185307179586;
      for (int x = 0; x < W; ++x) {
        double v = std::sin(6.283185307179586 * freq * x / W + phase);
        for (int y = 0; y < H; ++y)
          for (int c = 0; c < 3; ++c) img.at3(c, y, x) = v * tint[c];
      }
      break;
    }
    case 2: {  // checkerboard
      int cell = 2 << int(rng.uniform_int(2));  // 2 or 4
      int oy = int(rng.uniform_int(static_cast<uint64_t>(cell)));
      int ox = int(rng.uniform_int(static_cast<uint64_t>(cell)));
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          double v = (((y + oy) / cell + (x + ox) / cell) % 2 == 0) ? 0.85 : -0.85;
          for (int c = 0; c < 3; ++c) img.at3(c, y, x) = v * tint[c];
        }
      break;
    }
    default: {  // radial gradient
      double cy = (0.5 + 0.1 * (rng.uniform() - 0.5)) * H;
      double cx = (0.5 + 0.1 * (rng.uniform() - 0.5)) * W;
      double maxd = 0.5 * std::sqrt(double(H) * H + double(W) * W);
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          double d = std::sqrt((y - cy) * (y - cy) + (x - cx) * (x - cx));
          double v = 1.0 - 2.0 * d / maxd;
          for (int c = 0; c < 3; ++c) img.at3(c, y, x) = clamp1(v) * tint[c];
        }
      break;
    }
  }
  // light additive noise, clamped back into range
  for (double& v : img.data) v = clamp1(v + 0.05 * rng.normal());
  return img;
}

Dataset generate_dataset(int num_classes, int n_per_class, int H, int W, uint64_t seed) {
  if (num_classes < 1 || n_per_class < 1) throw InputError("generate_dataset: counts must be >= 1");
  Dataset ds;
  ds.num_classes = num_classes;
  ds.height = H;
  ds.width = W;
  for (int cls = 0; cls < num_classes; ++cls)
    for (int k = 0; k < n_per_class; ++k) {
      RngStream rng(seed, uint64_t(cls) * 100000 + uint64_t(k));
      ds.images.push_back(render_class_image(cls, num_classes, H, W, rng));
      ds.labels.push_back(cls);
    }
  return ds;
}

void write_dataset(const Dataset& ds, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("write_dataset: cannot create '" + dir + "': " + ec.message());
  std::ofstream index(fs::path(dir) / "index.txt");
  if (!index) throw IoError("write_dataset: cannot open index in '" + dir + "'");
  std::vector<int> per_class_counter(static_cast<size_t>(ds.num_classes), 0);
  for (size_t i = 0; i < ds.size(); ++i) {
    int cls = ds.labels[i];
    int k = per_class_counter[static_cast<size_t>(cls)]++;
    std::string name = "img_" + std::to_string(cls) + "_" + std::to_string(k) + ".ppm";
    write_ppm((fs::path(dir) / name).string(), ds.images[i]);
    index << name << " " << cls << "\n";
  }
  if (!index) throw IoError("write_dataset: index write failed in '" + dir + "'");
}

Dataset load_dataset(const std::string& dir) {
  std::ifstream index(fs::path(dir) / "index.txt");
  if (!index) throw IoError("load_dataset: no index.txt in '" + dir + "'");
  Dataset ds;
  std::string line;
  while (std::getline(index, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string name;
    int cls = -1;
    if (!(ls >> name >> cls) || cls < 0)
      throw IoError("load_dataset: malformed index line '" + line + "'");
    Tensor img = read_ppm((fs::path(dir) / name).string());
    if (ds.images.empty()) {
      ds.height = int(img.shape[1]);
      ds.width = int(img.shape[2]);
    } else if (img.shape[1] != ds.height || img.shape[2] != ds.width) {
      throw IoError("load_dataset: mixed resolutions in '" + dir + "'");
    }
    ds.images.push_back(std::move(img));
    ds.labels.push_back(cls);
    ds.num_classes = std::max(ds.num_classes, cls + 1);
  }
  if (ds.images.empty()) throw IoError("load_dataset: empty dataset in '" + dir + "'");
  return ds;
}

}  // namespace ledit
