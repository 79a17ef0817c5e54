#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "medttt/errors.hpp"

namespace medttt {

// Image as channel planes, values in [0, 1]. Grayscale: 1 channel (P5),
// RGB: 3 channels (P6).
struct Image {
  std::size_t channels = 0, h = 0, w = 0;
  std::vector<double> data;  // C x H x W, row-major

  double at(std::size_t c, std::size_t y, std::size_t x) const {
    return data[(c * h + y) * w + x];
  }
};

// Binary netpbm, maxval 255 only. Parse errors carry the byte offset.
Image load_pnm(const std::string& path);
// Round-half-up quantization to 8 bits; load(save(x)) is the identity on
// already-quantized planes.
void save_pnm(const Image& img, const std::string& path);

}  // namespace medttt
