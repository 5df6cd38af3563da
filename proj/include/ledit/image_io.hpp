#pragma once
// Binary PPM (P6, color) and PGM (P5, gray) read/write. Pixel values map
// linearly between byte b and real v in [-1, 1]: b = round((v+1)/2 * 255),
// v = b/255 * 2 - 1.

#include <cstdint>
#include <string>
#include <vector>

#include "ledit/tensor.hpp"

namespace ledit {

// img [3, H, W] with values clamped into [-1, 1] on write.
void write_ppm(const std::string& path, const Tensor& img);
Tensor read_ppm(const std::string& path);  // -> [3, H, W] in [-1, 1]

// pixels row-major h*w bytes, 0 = black.
void write_pgm(const std::string& path, const std::vector<uint8_t>& pixels, int h, int w);

}  // namespace ledit
