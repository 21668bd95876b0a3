#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace clip::nd {

/// Height × width × channels grid of intensities in [0, 1], row-major,
/// channels innermost.
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 3;
  std::vector<double> pixels;

  Image() = default;
  Image(std::size_t h, std::size_t w, std::size_t c = 3, double fill = 0.0)
      : height(h), width(w), channels(c), pixels(h * w * c, fill) {}

  double& at(std::size_t y, std::size_t x, std::size_t c) {
    return pixels[(y * width + x) * channels + c];
  }
  double at(std::size_t y, std::size_t x, std::size_t c) const {
    return pixels[(y * width + x) * channels + c];
  }
  bool valid() const {
    return height > 0 && width > 0 && channels > 0 && pixels.size() == height * width * channels;
  }

  friend bool operator==(const Image&, const Image&) = default;
};

}  // namespace clip::nd
