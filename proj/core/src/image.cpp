#include "gunet/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace gunet {

ImageU8 make_image(std::int64_t height, std::int64_t width, int channels) {
  if (height < 1 || width < 1 || (channels != 1 && channels != 3)) {
    throw ConfigError("images must be HxW with 1 or 3 channels");
  }
  ImageU8 img;
  img.height = height;
  img.width = width;
  img.channels = channels;
  img.pixels.assign(static_cast<std::size_t>(height * width * channels), 0);
  return img;
}

void save_image(const std::string& path, const ImageU8& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw ConfigError("can only save 1- or 3-channel images");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot open image '" + path + "' for writing");
  out << (image.channels == 3 ? "P6" : "P5") << "\n"
      << image.width << " " << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
  if (!out) throw ConfigError("failed writing image '" + path + "'");
}

namespace {

int next_token(std::ifstream& in, const std::string& path) {
  // skips whitespace and '#' comments per the NetPBM header grammar
  while (true) {
    int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
      continue;
    }
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      in.get();
      continue;
    }
    break;
  }
  int value = 0;
  if (!(in >> value)) throw CorruptFileError("bad NetPBM header in '" + path + "'", 0);
  return value;
}

}  // namespace

ImageU8 load_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open image '" + path + "'");
  char p = 0, kind = 0;
  in.get(p);
  in.get(kind);
  if (p != 'P' || (kind != '5' && kind != '6')) {
    throw CorruptFileError("unsupported raster format in '" + path + "' (expected binary P5/P6)",
                           0);
  }
  ImageU8 img;
  img.channels = kind == '6' ? 3 : 1;
  img.width = next_token(in, path);
  img.height = next_token(in, path);
  int maxval = next_token(in, path);
  if (img.width < 1 || img.height < 1 || maxval != 255) {
    throw CorruptFileError("unsupported NetPBM geometry in '" + path + "'", 0);
  }
  in.get();  // single whitespace after maxval
  img.pixels.resize(static_cast<std::size_t>(img.width * img.height * img.channels));
  in.read(reinterpret_cast<char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  if (static_cast<std::size_t>(in.gcount()) != img.pixels.size()) {
    throw CorruptFileError("truncated pixel data in '" + path + "'",
                           static_cast<std::uint64_t>(img.pixels.size()));
  }
  return img;
}

Tensor<std::uint8_t> mask_from_image(const ImageU8& img) {
  if (img.channels != 1) throw ConfigError("masks must be single-channel images");
  Tensor<std::uint8_t> mask({img.height, img.width});
  for (std::int64_t p = 0; p < img.height * img.width; ++p) {
    mask[p] = img.pixels[static_cast<std::size_t>(p)] >= 128 ? 1 : 0;
  }
  return mask;
}

ImageU8 render_grayscale(const Tensor<double>& map, double lo, double hi) {
  if (map.rank() != 2) throw ShapeError("render_grayscale expects [H,W]");
  ImageU8 img = make_image(map.dim(0), map.dim(1), 1);
  const double span = hi > lo ? hi - lo : 1.0;
  for (std::int64_t p = 0; p < map.size(); ++p) {
    double v = (map[p] - lo) / span;
    v = std::clamp(v, 0.0, 1.0);
    img.pixels[static_cast<std::size_t>(p)] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  return img;
}

}  // namespace gunet
