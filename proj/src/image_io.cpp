#include "eam/image_io.hpp"

#include <fstream>

namespace eam {
namespace {

// Skips whitespace and '#' comment lines between header tokens.
int next_header_int(std::istream& in, const std::string& path) {
  while (true) {
    const int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  int value = -1;
  in >> value;
  if (!in || value < 0) throw IoError(path + ": malformed header");
  return value;
}

ImageU8 read_pnm(const std::string& path, const std::string& magic, int channels) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path + ": cannot open");
  std::string m(2, '\0');
  in.read(m.data(), 2);
  if (!in || m != magic)
    throw IoError(path + ": not a " + magic + " file (magic '" + m + "')");
  ImageU8 img;
  img.channels = channels;
  img.w = next_header_int(in, path);
  img.h = next_header_int(in, path);
  const int maxval = next_header_int(in, path);
  if (maxval != 255) throw IoError(path + ": unsupported maxval " + std::to_string(maxval));
  in.get();  // single whitespace after maxval
  img.data.resize(static_cast<size_t>(img.w) * img.h * channels);
  in.read(reinterpret_cast<char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
  if (static_cast<size_t>(in.gcount()) != img.data.size())
    throw IoError(path + ": truncated pixel data");
  return img;
}

void write_pnm(const std::string& path, const ImageU8& img, const std::string& magic,
               int channels) {
  if (img.channels != channels)
    throw IoError(path + ": expected " + std::to_string(channels) + "-channel image");
  if (img.data.size() != static_cast<size_t>(img.w) * img.h * channels)
    throw IoError(path + ": pixel buffer size mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path + ": cannot open for writing");
  out << magic << "\n" << img.w << " " << img.h << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.data.data()),
            static_cast<std::streamsize>(img.data.size()));
  if (!out) throw IoError(path + ": write failed");
}

}  // namespace

ImageU8 read_ppm(const std::string& path) { return read_pnm(path, "P6", 3); }
void write_ppm(const std::string& path, const ImageU8& img) { write_pnm(path, img, "P6", 3); }
ImageU8 read_pgm(const std::string& path) { return read_pnm(path, "P5", 1); }
void write_pgm(const std::string& path, const ImageU8& img) { write_pnm(path, img, "P5", 1); }

}  // namespace eam
