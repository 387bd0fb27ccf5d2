#pragma once

#include <algorithm>
#include <filesystem>
#include <string>
#include <vector>

#include "eam/image_io.hpp"
#include "eam/training.hpp"

namespace eam {

template <class S>
Tensor4<S> tensor_from_image(const ImageU8& img) {
  if (img.channels != 3) throw IoError("expected a 3-channel image");
  Tensor4<S> t({1, 3, img.h, img.w});
  for (Index y = 0; y < img.h; ++y)
    for (Index x = 0; x < img.w; ++x)
      for (int ch = 0; ch < 3; ++ch)
        t(0, ch, y, x) = static_cast<S>(img.data[(y * img.w + x) * 3 + ch]) / S(255);
  return t;
}

template <class S>
ImageU8 image_from_tensor(const Tensor4<S>& t) {
  const Shape4& s = t.shape();
  if (s.n != 1 || s.c != 3) throw ShapeError("channel", "expected (1,3,h,w), got " + s.str());
  ImageU8 img;
  img.h = s.h;
  img.w = s.w;
  img.channels = 3;
  img.data.resize(static_cast<size_t>(s.h) * s.w * 3);
  for (Index y = 0; y < s.h; ++y)
    for (Index x = 0; x < s.w; ++x)
      for (int ch = 0; ch < 3; ++ch) {
        const double v = std::clamp(static_cast<double>(t(0, ch, y, x)), 0.0, 1.0);
        img.data[(y * s.w + x) * 3 + ch] = static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
  return img;
}

/// Loads a dataset laid out as one subdirectory per class, each holding
/// binary PPM images. Labels follow the sorted subdirectory names; all
/// images must share one extent.
template <class S>
std::vector<SceneSample<S>> load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw IoError(dir + ": not a directory");
  std::vector<std::string> class_dirs;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_directory()) class_dirs.push_back(entry.path().filename().string());
  std::sort(class_dirs.begin(), class_dirs.end());
  if (class_dirs.empty()) throw IoError(dir + ": no class subdirectories (empty dataset)");

  std::vector<SceneSample<S>> out;
  Shape4 extent{};
  for (size_t cls = 0; cls < class_dirs.size(); ++cls) {
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(fs::path(dir) / class_dirs[cls]))
      if (entry.is_regular_file()) files.push_back(entry.path().string());
    std::sort(files.begin(), files.end());
    for (const std::string& file : files) {
      SceneSample<S> sample;
      sample.image = tensor_from_image<S>(read_ppm(file));
      sample.label = static_cast<int>(cls);
      if (out.empty()) {
        extent = sample.image.shape();
      } else if (!(sample.image.shape() == extent)) {
        throw IoError(file + ": extent " + sample.image.shape().str() +
                      " differs from dataset extent " + extent.str());
      }
      out.push_back(std::move(sample));
    }
  }
  if (out.empty()) throw IoError(dir + ": empty dataset (no PPM images found)");
  return out;
}

/// Writes samples as class_<label>/sample_<i>.ppm under `dir`.
template <class S>
void save_dataset(const std::string& dir, const std::vector<SceneSample<S>>& samples) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::vector<int> counter(static_cast<size_t>(count_classes(dataset_labels(samples))), 0);
  for (const auto& s : samples) {
    const fs::path cdir = fs::path(dir) / ("class_" + std::to_string(s.label));
    fs::create_directories(cdir);
    const int i = counter[static_cast<size_t>(s.label)]++;
    write_ppm((cdir / ("sample_" + std::to_string(i) + ".ppm")).string(),
              image_from_tensor(s.image));
  }
}

}  // namespace eam
