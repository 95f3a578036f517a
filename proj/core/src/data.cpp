#include "gunet/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "gunet/group.hpp"

namespace fs = std::filesystem;

namespace gunet {

std::string split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "train";
}

Split split_from_name(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "val") return Split::val;
  if (name == "test") return Split::test;
  throw ConfigError("unknown split '" + name + "'");
}

void save_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot open manifest '" + path + "' for writing");
  for (const auto& e : entries) {
    nlohmann::json j;
    j["image_path"] = e.image_path;
    j["mask_path"] = e.mask_path;
    j["split"] = split_name(e.split);
    j["label_balance_tag"] = e.tag;
    out << j.dump() << "\n";
  }
}

std::vector<ManifestEntry> load_manifest(const std::string& path, bool check_files) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open manifest '" + path + "'");
  std::vector<ManifestEntry> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      ManifestEntry e;
      e.image_path = j.at("image_path").get<std::string>();
      e.mask_path = j.at("mask_path").get<std::string>();
      e.split = split_from_name(j.at("split").get<std::string>());
      e.tag = j.at("label_balance_tag").get<std::string>();
      entries.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw ConfigError("manifest '" + path + "' line " + std::to_string(lineno) + ": " +
                        ex.what());
    }
  }
  if (check_files) {
    for (const auto& e : entries) {
      if (!fs::exists(e.image_path)) {
        throw ConfigError("manifest references missing image '" + e.image_path + "'");
      }
      if (!fs::exists(e.mask_path)) {
        throw ConfigError("manifest references missing mask '" + e.mask_path + "'");
      }
    }
  }
  return entries;
}

SplitRatio parse_split_ratio(const std::string& text) {
  SplitRatio r;
  int parsed = std::sscanf(text.c_str(), "%d:%d:%d", &r.parts[0], &r.parts[1], &r.parts[2]);
  if (parsed != 3 || r.parts[0] < 1 || r.parts[1] < 0 || r.parts[2] < 0) {
    throw ConfigError("split ratio must look like 8:1:1 with a positive train share");
  }
  return r;
}

std::vector<Split> assign_splits(std::int64_t count, const SplitRatio& ratio) {
  const std::int64_t total = ratio.parts[0] + ratio.parts[1] + ratio.parts[2];
  if (total < 1) throw ConfigError("split ratio must have a positive total");
  const std::int64_t n_val = count * ratio.parts[1] / total;
  const std::int64_t n_test = count * ratio.parts[2] / total;
  const std::int64_t n_train = count - n_val - n_test;
  if (n_train < 1) throw ConfigError("split ratio leaves no training samples");
  std::vector<Split> out(static_cast<std::size_t>(count), Split::train);
  for (std::int64_t i = n_train; i < n_train + n_val; ++i) out[static_cast<std::size_t>(i)] = Split::val;
  for (std::int64_t i = n_train + n_val; i < count; ++i) out[static_cast<std::size_t>(i)] = Split::test;
  return out;
}

std::string synthetic_config_to_json(const SyntheticTaskConfig& cfg) {
  nlohmann::json j;
  j["image_size"] = cfg.image_size;
  j["num_images"] = cfg.num_images;
  j["shapes_per_image"] = cfg.shapes_per_image;
  j["distractors_per_image"] = cfg.distractors_per_image;
  j["cell_pixels"] = cfg.cell_pixels;
  j["class_prior"] = cfg.class_prior;
  j["noise_level"] = cfg.noise_level;
  j["texture_contrast"] = cfg.texture_contrast;
  j["seed"] = cfg.seed;
  j["split"] = std::to_string(cfg.split.parts[0]) + ":" + std::to_string(cfg.split.parts[1]) +
               ":" + std::to_string(cfg.split.parts[2]);
  return j.dump(2);
}

SyntheticTaskConfig synthetic_config_from_json(const std::string& text) {
  SyntheticTaskConfig cfg;
  try {
    nlohmann::json j = nlohmann::json::parse(text);
    if (j.contains("image_size")) cfg.image_size = j["image_size"].get<std::int64_t>();
    if (j.contains("num_images")) cfg.num_images = j["num_images"].get<std::int64_t>();
    if (j.contains("shapes_per_image")) cfg.shapes_per_image = j["shapes_per_image"].get<int>();
    if (j.contains("distractors_per_image")) {
      cfg.distractors_per_image = j["distractors_per_image"].get<int>();
    }
    if (j.contains("cell_pixels")) cfg.cell_pixels = j["cell_pixels"].get<int>();
    if (j.contains("class_prior")) cfg.class_prior = j["class_prior"].get<double>();
    if (j.contains("noise_level")) cfg.noise_level = j["noise_level"].get<double>();
    if (j.contains("texture_contrast")) cfg.texture_contrast = j["texture_contrast"].get<double>();
    if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("split")) cfg.split = parse_split_ratio(j["split"].get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid synthetic task config: ") + e.what());
  }
  return cfg;
}

namespace {

// L-shaped polyomino on a 3x3 cell grid; chiral, so all eight
// roto-reflections are distinct.
constexpr std::array<std::array<int, 2>, 4> kForegroundCells = {{{0, 0}, {1, 0}, {2, 0}, {2, 1}}};
// square distractor, fixed under every roto-reflection
constexpr std::array<std::array<int, 2>, 4> kDistractorCells = {{{0, 0}, {0, 1}, {1, 0}, {1, 1}}};

struct Box {
  std::int64_t i0, j0, i1, j1;
  bool overlaps(const Box& o) const {
    return i0 <= o.i1 && o.i0 <= i1 && j0 <= o.j1 && o.j0 <= j1;
  }
};

template <std::size_t N>
void stamp_shape(SyntheticSample& sample, const std::array<std::array<int, 2>, N>& cells,
                 GroupElement orient, std::int64_t anchor_i, std::int64_t anchor_j,
                 std::int64_t cell_px, double value, bool foreground) {
  for (const auto& cell : cells) {
    Coord c = act_on_coords(orient, {cell[0], cell[1]}, 3, 3);
    for (std::int64_t di = 0; di < cell_px; ++di) {
      for (std::int64_t dj = 0; dj < cell_px; ++dj) {
        const std::int64_t i = anchor_i + c.row * cell_px + di;
        const std::int64_t j = anchor_j + c.col * cell_px + dj;
        for (int ch = 0; ch < 3; ++ch) {
          sample.image.at(i, j, ch) = static_cast<std::uint8_t>(std::lround(value * 255.0));
        }
        if (foreground) sample.mask[i * sample.image.width + j] = 1;
      }
    }
  }
}

}  // namespace

SyntheticSample generate_synthetic_sample(const SyntheticTaskConfig& cfg, std::int64_t index,
                                          SyntheticStats* stats) {
  if (cfg.image_size < 4 * cfg.cell_pixels) {
    throw ConfigError("synthetic image size too small for the shape templates");
  }
  Rng rng(Rng::mix(cfg.seed, static_cast<std::uint64_t>(index)));
  const std::int64_t n = cfg.image_size;
  SyntheticSample sample;
  sample.image = make_image(n, n, 3);
  sample.mask = Tensor<std::uint8_t>({n, n});

  // smooth background: a couple of random low-frequency waves around 0.55
  const double f1 = rng.uniform(0.5, 2.0), f2 = rng.uniform(0.5, 2.0);
  const double p1 = rng.uniform(0.0, 6.283), p2 = rng.uniform(0.0, 6.283);
  std::vector<double> base(static_cast<std::size_t>(n * n));
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t j = 0; j < n; ++j) {
      const double u = static_cast<double>(i) / static_cast<double>(n);
      const double v = static_cast<double>(j) / static_cast<double>(n);
      base[static_cast<std::size_t>(i * n + j)] =
          0.55 + 0.05 * std::sin(6.283 * f1 * u + p1) + 0.05 * std::sin(6.283 * f2 * v + p2);
    }
  }
  for (std::int64_t p = 0; p < n * n; ++p) {
    for (int ch = 0; ch < 3; ++ch) {
      const double v = std::clamp(base[static_cast<std::size_t>(p)], 0.0, 1.0);
      sample.image.pixels[static_cast<std::size_t>(p * 3 + ch)] =
          static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
  }

  const bool want_tumor = rng.uniform() < cfg.class_prior;
  const std::int64_t span = 3 * cfg.cell_pixels;          // shape bounding canvas
  const std::int64_t room = n - span;
  const double blob_value = std::clamp(0.55 - cfg.texture_contrast, 0.0, 1.0);
  std::vector<Box> placed;
  auto try_place = [&](bool foreground) {
    GroupElement orient = element_at(static_cast<int>(rng.uniform_int(8)), GroupSpec::p4m());
    for (int attempt = 0; attempt < 40; ++attempt) {
      const std::int64_t i0 = rng.uniform_int(room + 1);
      const std::int64_t j0 = rng.uniform_int(room + 1);
      Box box{i0 - 1, j0 - 1, i0 + span, j0 + span};
      bool clash = false;
      for (const auto& other : placed) {
        if (box.overlaps(other)) {
          clash = true;
          break;
        }
      }
      if (clash) continue;
      placed.push_back(box);
      if (foreground) {
        stamp_shape(sample, kForegroundCells, orient, i0, j0, cfg.cell_pixels, blob_value, true);
        if (stats) stats->orientation_counts[static_cast<std::size_t>(element_index(
            orient, GroupSpec::p4m()))] += 1;
      } else {
        stamp_shape(sample, kDistractorCells, orient, i0, j0, cfg.cell_pixels, blob_value, false);
      }
      return true;
    }
    return false;
  };
  // foreground first so a tumor image always carries at least one shape
  if (want_tumor) {
    int stamped = 0;
    for (int s = 0; s < cfg.shapes_per_image; ++s) stamped += try_place(true) ? 1 : 0;
    sample.tumor = stamped > 0;
  }
  for (int s = 0; s < cfg.distractors_per_image; ++s) try_place(false);

  // pixel noise, independent per channel
  for (std::int64_t p = 0; p < n * n; ++p) {
    for (int ch = 0; ch < 3; ++ch) {
      double v = static_cast<double>(sample.image.pixels[static_cast<std::size_t>(p * 3 + ch)]) / 255.0;
      v = std::clamp(v + cfg.noise_level * rng.normal(), 0.0, 1.0);
      sample.image.pixels[static_cast<std::size_t>(p * 3 + ch)] =
          static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
  }

  if (stats) {
    stats->tumor_images += sample.tumor ? 1 : 0;
    stats->total_pixels += n * n;
    for (std::int64_t p = 0; p < n * n; ++p) stats->foreground_pixels += sample.mask[p];
  }
  return sample;
}

std::vector<ManifestEntry> generate_synthetic(const SyntheticTaskConfig& cfg,
                                              const std::string& out_dir, SyntheticStats* stats) {
  if (cfg.num_images < 1) throw ConfigError("num_images must be >= 1");
  fs::create_directories(fs::path(out_dir) / "images");
  fs::create_directories(fs::path(out_dir) / "masks");
  auto splits = assign_splits(cfg.num_images, cfg.split);
  std::vector<ManifestEntry> entries;
  entries.reserve(static_cast<std::size_t>(cfg.num_images));
  for (std::int64_t i = 0; i < cfg.num_images; ++i) {
    SyntheticSample s = generate_synthetic_sample(cfg, i, stats);
    char name[32];
    std::snprintf(name, sizeof(name), "%05lld", static_cast<long long>(i));
    ManifestEntry e;
    e.image_path = (fs::path(out_dir) / "images" / (std::string(name) + ".ppm")).string();
    e.mask_path = (fs::path(out_dir) / "masks" / (std::string(name) + ".pgm")).string();
    e.split = splits[static_cast<std::size_t>(i)];
    e.tag = s.tumor ? "tumor" : "normal";
    save_image(e.image_path, s.image);
    ImageU8 mask_img = make_image(cfg.image_size, cfg.image_size, 1);
    for (std::int64_t p = 0; p < cfg.image_size * cfg.image_size; ++p) {
      mask_img.pixels[static_cast<std::size_t>(p)] = s.mask[p] ? 255 : 0;
    }
    save_image(e.mask_path, mask_img);
    entries.push_back(std::move(e));
  }
  save_manifest((fs::path(out_dir) / "manifest.jsonl").string(), entries);
  std::ofstream cfg_out(fs::path(out_dir) / "synthetic_config.json");
  cfg_out << synthetic_config_to_json(cfg) << "\n";
  return entries;
}

// ---------------------------------------------------------------------------
// Tissue filter
// ---------------------------------------------------------------------------

namespace {

std::vector<double> gaussian_kernel(double sigma, int radius) {
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = v;
    sum += v;
  }
  for (auto& v : k) v /= sum;
  return k;
}

std::int64_t reflect_index(std::int64_t i, std::int64_t n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - 1 - i;
  }
  return i;
}

// separable blur with reflected boundary
void blur_inplace(std::vector<double>& img, std::int64_t h, std::int64_t w,
                  const std::vector<double>& kernel) {
  const int radius = static_cast<int>(kernel.size() / 2);
  std::vector<double> tmp(img.size());
  for (std::int64_t i = 0; i < h; ++i) {
    for (std::int64_t j = 0; j < w; ++j) {
      double acc = 0.0;
      for (int t = -radius; t <= radius; ++t) {
        acc += kernel[static_cast<std::size_t>(t + radius)] *
               img[static_cast<std::size_t>(i * w + reflect_index(j + t, w))];
      }
      tmp[static_cast<std::size_t>(i * w + j)] = acc;
    }
  }
  for (std::int64_t j = 0; j < w; ++j) {
    for (std::int64_t i = 0; i < h; ++i) {
      double acc = 0.0;
      for (int t = -radius; t <= radius; ++t) {
        acc += kernel[static_cast<std::size_t>(t + radius)] *
               tmp[static_cast<std::size_t>(reflect_index(i + t, h) * w + j)];
      }
      img[static_cast<std::size_t>(i * w + j)] = acc;
    }
  }
}

}  // namespace

bool tissue_filter(const ImageU8& rgb_patch) {
  if (rgb_patch.channels != 3) throw ConfigError("tissue_filter expects an RGB patch");
  const std::int64_t h = rgb_patch.height, w = rgb_patch.width;
  std::vector<double> sat(static_cast<std::size_t>(h * w));
  std::vector<double> val(static_cast<std::size_t>(h * w));
  for (std::int64_t p = 0; p < h * w; ++p) {
    const double r = rgb_patch.pixels[static_cast<std::size_t>(3 * p)] / 255.0;
    const double g = rgb_patch.pixels[static_cast<std::size_t>(3 * p + 1)] / 255.0;
    const double b = rgb_patch.pixels[static_cast<std::size_t>(3 * p + 2)] / 255.0;
    const double mx = std::max({r, g, b});
    const double mn = std::min({r, g, b});
    val[static_cast<std::size_t>(p)] = mx;
    sat[static_cast<std::size_t>(p)] = mx > 0.0 ? (mx - mn) / mx : 0.0;
  }
  const auto kernel = gaussian_kernel(2.0, 8);
  blur_inplace(sat, h, w, kernel);
  blur_inplace(val, h, w, kernel);
  const double max_sat = *std::max_element(sat.begin(), sat.end());
  const double max_val = *std::max_element(val.begin(), val.end());
  return max_sat > 0.07 && max_val > 0.1;
}

std::vector<Patch> extract_patches(const ImageU8& image, const ImageU8& mask,
                                   std::int64_t patch_size, std::int64_t count,
                                   const PatchSamplerConfig& sampler, Rng& rng) {
  if (mask.channels != 1) throw ConfigError("patch mask must be single-channel");
  if (image.height != mask.height || image.width != mask.width) {
    throw ConfigError("patch image and mask sizes differ");
  }
  if (image.height < patch_size || image.width < patch_size) {
    throw ConfigError("image smaller than patch size");
  }
  std::vector<Patch> out;
  const std::int64_t room_i = image.height - patch_size;
  const std::int64_t room_j = image.width - patch_size;
  for (std::int64_t n = 0; n < count; ++n) {
    const bool want_tumor = rng.uniform() < sampler.tumor_probability;
    std::int64_t tissue_hits = 0;
    bool found = false;
    for (int draw = 0; draw < sampler.max_draws_per_patch && !found; ++draw) {
      const std::int64_t i0 = rng.uniform_int(room_i + 1);
      const std::int64_t j0 = rng.uniform_int(room_j + 1);
      Patch p;
      p.image = make_image(patch_size, patch_size, image.channels);
      ImageU8 mask_crop = make_image(patch_size, patch_size, 1);
      bool any_positive = false;
      for (std::int64_t i = 0; i < patch_size; ++i) {
        for (std::int64_t j = 0; j < patch_size; ++j) {
          for (int c = 0; c < image.channels; ++c) {
            p.image.at(i, j, c) = image.at(i0 + i, j0 + j, c);
          }
          mask_crop.at(i, j, 0) = mask.at(i0 + i, j0 + j, 0);
          any_positive = any_positive || mask_crop.at(i, j, 0) >= 128;
        }
      }
      if (!tissue_filter(p.image)) continue;
      ++tissue_hits;
      if (any_positive != want_tumor) continue;
      p.mask = mask_from_image(mask_crop);
      p.tumor = any_positive;
      out.push_back(std::move(p));
      found = true;
    }
    if (!found) {
      throw ConfigError("patch sampling exhausted for class '" +
                        std::string(want_tumor ? "tumor" : "non-tumor") + "' after " +
                        std::to_string(sampler.max_draws_per_patch) + " draws (" +
                        std::to_string(tissue_hits) + " passed the tissue filter)");
    }
  }
  return out;
}

}  // namespace gunet
