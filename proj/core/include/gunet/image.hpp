#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gunet/errors.hpp"
#include "gunet/tensor.hpp"

namespace gunet {

/// 8-bit raster image, interleaved rows; channels is 1 (gray) or 3 (RGB).
struct ImageU8 {
  std::int64_t height = 0;
  std::int64_t width = 0;
  int channels = 1;
  std::vector<std::uint8_t> pixels;

  std::uint8_t& at(std::int64_t i, std::int64_t j, int c) {
    return pixels[static_cast<std::size_t>((i * width + j) * channels + c)];
  }
  std::uint8_t at(std::int64_t i, std::int64_t j, int c) const {
    return pixels[static_cast<std::size_t>((i * width + j) * channels + c)];
  }
};

ImageU8 make_image(std::int64_t height, std::int64_t width, int channels);

/// Binary NetPBM: P6 for RGB, P5 for single channel, chosen by image.channels.
void save_image(const std::string& path, const ImageU8& image);
ImageU8 load_image(const std::string& path);

/// [C,H,W] float tensor in [0,1] from an 8-bit image (value / 255).
template <typename T>
Tensor<T> image_to_tensor(const ImageU8& img) {
  Tensor<T> t({img.channels, img.height, img.width});
  for (int c = 0; c < img.channels; ++c) {
    for (std::int64_t i = 0; i < img.height; ++i) {
      for (std::int64_t j = 0; j < img.width; ++j) {
        t[(c * img.height + i) * img.width + j] =
            static_cast<T>(img.at(i, j, c)) / static_cast<T>(255);
      }
    }
  }
  return t;
}

/// Binary {0,1} mask from a single-channel image, thresholded at 128.
Tensor<std::uint8_t> mask_from_image(const ImageU8& img);

/// Grayscale rendering of values in [lo, hi], clamped.
ImageU8 render_grayscale(const Tensor<double>& map, double lo, double hi);

}  // namespace gunet
