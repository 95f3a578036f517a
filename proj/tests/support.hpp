#pragma once

#include <string>
#include <vector>

#include "gunet/data.hpp"
#include "gunet/group.hpp"
#include "gunet/image.hpp"

namespace gunet::testsupport {

inline ImageU8 uniform_patch(int r, int g, int b, std::int64_t size = 24) {
  ImageU8 img = make_image(size, size, 3);
  for (std::int64_t p = 0; p < size * size; ++p) {
    img.pixels[static_cast<std::size_t>(3 * p)] = static_cast<std::uint8_t>(r);
    img.pixels[static_cast<std::size_t>(3 * p + 1)] = static_cast<std::uint8_t>(g);
    img.pixels[static_cast<std::size_t>(3 * p + 2)] = static_cast<std::uint8_t>(b);
  }
  return img;
}

struct TissueCase {
  std::string name;
  int r, g, b;
  bool accept;
};

/// Twelve uniform-color patches pinned against the saturation > 0.07 and
/// value > 0.1 rule (uniform color makes the blur a no-op, so the decision
/// is exact arithmetic).
inline std::vector<TissueCase> tissue_fixture() {
  return {
      {"white", 255, 255, 255, false},          // saturation of white is 0
      {"black", 0, 0, 0, false},                // value of black is 0
      {"gray", 128, 128, 128, false},           // gray has zero saturation
      {"saturated red", 255, 0, 0, true},       // S = 1, V = 1
      {"saturated green", 0, 255, 0, true},
      {"saturated blue", 0, 0, 255, true},
      {"S just above (0.08)", 200, 184, 184, true},    // S = 16/200 = 0.08
      {"S just below (0.06)", 200, 188, 188, false},   // S = 12/200 = 0.06
      {"V just above (0.11)", 28, 0, 0, true},         // V = 28/255 ~ 0.110
      {"V just below (0.09)", 23, 0, 0, false},        // V = 23/255 ~ 0.090
      {"high S, V just below", 25, 2, 2, false},       // V = 25/255 ~ 0.098
      {"both just above", 30, 27, 27, true},           // S = 0.1, V ~ 0.118
  };
}

inline ImageU8 transform_image(GroupElement g, const ImageU8& img) {
  ImageU8 out = make_image(img.height, img.width, img.channels);
  GroupElement ginv = inverse(g, GroupSpec::p4m());
  for (std::int64_t i = 0; i < img.height; ++i) {
    for (std::int64_t j = 0; j < img.width; ++j) {
      Coord src = act_on_coords(ginv, {i, j}, img.height, img.width);
      for (int c = 0; c < img.channels; ++c) {
        out.at(i, j, c) = img.at(src.row, src.col, c);
      }
    }
  }
  return out;
}

}  // namespace gunet::testsupport
