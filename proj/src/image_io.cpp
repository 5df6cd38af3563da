#include "ledit/image_io.hpp"

#include <cmath>
#include <fstream>

namespace ledit {

static uint8_t to_byte(double v) {
  if (v < -1.0) v = -1.0;
  if (v > 1.0) v = 1.0;
  return static_cast<uint8_t>(std::lround((v + 1.0) * 0.5 * 255.0));
}

void write_ppm(const std::string& path, const Tensor& img) {
  if (img.ndim() != 3 || img.shape[0] != 3)
    throw DimensionError("write_ppm: img must be [3,H,W], got " + shape_str(img.shape));
  if (!img.all_finite()) throw NumericError("write_ppm: non-finite pixel values");
  int64_t H = img.shape[1], W = img.shape[2];
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("write_ppm: cannot open '" + path + "' for writing");
  f << "P6\n" << W << " " << H << "\n255\n";
  std::vector<uint8_t> row(static_cast<size_t>(W) * 3);
  for (int64_t y = 0; y < H; ++y) {
    for (int64_t x = 0; x < W; ++x)
      for (int64_t c = 0; c < 3; ++c) row[static_cast<size_t>(x * 3 + c)] = to_byte(img.at3(c, y, x));
    f.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size()));
  }
  if (!f) throw IoError("write_ppm: write failed for '" + path + "'");
}

static void skip_ppm_whitespace(std::istream& in) {
  // whitespace and '#' comments per the netpbm header grammar
  int c = in.peek();
  while (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '#') {
    if (c == '#')
      while (in.peek() != '\n' && in.good()) in.get();
    else
      in.get();
    c = in.peek();
  }
}

Tensor read_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("read_ppm: cannot open '" + path + "'");
  std::string magic;
  f >> magic;
  if (magic != "P6") throw IoError("read_ppm: '" + path + "' is not a binary PPM (magic " + magic + ")");
  int64_t W = 0, H = 0, maxval = 0;
  skip_ppm_whitespace(f);
  f >> W;
  skip_ppm_whitespace(f);
  f >> H;
  skip_ppm_whitespace(f);
  f >> maxval;
  if (!f || W < 1 || H < 1) throw IoError("read_ppm: bad header in '" + path + "'");
  if (maxval != 255) throw IoError("read_ppm: only maxval 255 supported, got " + std::to_string(maxval));
  f.get();  // single whitespace after maxval
  std::vector<uint8_t> buf(static_cast<size_t>(W) * H * 3);
  f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (f.gcount() != static_cast<std::streamsize>(buf.size()))
    throw IoError("read_ppm: truncated pixel data in '" + path + "'");
  Tensor img({3, H, W});
  for (int64_t y = 0; y < H; ++y)
    for (int64_t x = 0; x < W; ++x)
      for (int64_t c = 0; c < 3; ++c)
        img.at3(c, y, x) = double(buf[static_cast<size_t>((y * W + x) * 3 + c)]) / 255.0 * 2.0 - 1.0;
  return img;
}

void write_pgm(const std::string& path, const std::vector<uint8_t>& pixels, int h, int w) {
  if (h < 1 || w < 1 || pixels.size() != static_cast<size_t>(h) * w)
    throw DimensionError("write_pgm: pixel buffer does not match dims");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("write_pgm: cannot open '" + path + "' for writing");
  f << "P5\n" << w << " " << h << "\n255\n";
  f.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  if (!f) throw IoError("write_pgm: write failed for '" + path + "'");
}

}  // namespace ledit
