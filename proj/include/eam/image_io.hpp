#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "eam/tensor.hpp"

namespace eam {

/// 8-bit image with interleaved channels (RGB for 3, grayscale for 1).
struct ImageU8 {
  Index h = 0;
  Index w = 0;
  int channels = 3;
  std::vector<std::uint8_t> data;
};

/// Binary PPM (P6, maxval 255). Throws IoError naming the path on bad magic,
/// malformed headers, or truncated pixel data.
ImageU8 read_ppm(const std::string& path);
void write_ppm(const std::string& path, const ImageU8& img);

/// Binary PGM (P5, maxval 255).
ImageU8 read_pgm(const std::string& path);
void write_pgm(const std::string& path, const ImageU8& img);

}  // namespace eam
