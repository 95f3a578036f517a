#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "gunet/errors.hpp"
#include "gunet/image.hpp"
#include "gunet/rng.hpp"
#include "gunet/tensor.hpp"

namespace gunet {

enum class Split { train, val, test };

std::string split_name(Split s);
Split split_from_name(const std::string& name);

struct ManifestEntry {
  std::string image_path;
  std::string mask_path;
  Split split = Split::train;
  std::string tag;  // label balance stratum, e.g. "tumor" / "normal"
};

/// JSON-lines manifest; load verifies that every referenced file exists.
void save_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> load_manifest(const std::string& path, bool check_files = true);

struct SplitRatio {
  std::array<int, 3> parts = {8, 1, 1};
};

SplitRatio parse_split_ratio(const std::string& text);

/// Deterministic contiguous split by index: the first block is train, then
/// val, then test, with remainders going to train.
std::vector<Split> assign_splits(std::int64_t count, const SplitRatio& ratio);

// ---------------------------------------------------------------------------
// Synthetic rotation-equivariant segmentation task
// ---------------------------------------------------------------------------

/// Foreground blobs are chiral L-shaped polyominoes stamped at a uniformly
/// random roto-reflection out of all eight; distractor blobs are squares of
/// the same area and intensity. Intensity alone cannot separate the classes,
/// so segmentation quality hinges on recognizing the shape in every
/// orientation.
struct SyntheticTaskConfig {
  std::int64_t image_size = 97;
  std::int64_t num_images = 400;
  int shapes_per_image = 3;       // foreground shapes in a tumor image
  int distractors_per_image = 3;  // square blobs in every image
  int cell_pixels = 5;            // polyomino cell edge length
  double class_prior = 0.5;       // fraction of images containing foreground
  double noise_level = 0.08;      // white-noise sigma on [0,1] intensities
  double texture_contrast = 0.28; // blob darkening against the background
  std::uint64_t seed = 17;
  SplitRatio split;
};

std::string synthetic_config_to_json(const SyntheticTaskConfig& cfg);
SyntheticTaskConfig synthetic_config_from_json(const std::string& text);

struct SyntheticSample {
  ImageU8 image;                 // RGB
  Tensor<std::uint8_t> mask;     // {0,1}
  bool tumor = false;
};

struct SyntheticStats {
  std::array<std::int64_t, 8> orientation_counts = {};
  std::int64_t tumor_images = 0;
  std::int64_t foreground_pixels = 0;
  std::int64_t total_pixels = 0;
};

/// One sample, fully determined by (config, index).
SyntheticSample generate_synthetic_sample(const SyntheticTaskConfig& cfg, std::int64_t index,
                                          SyntheticStats* stats = nullptr);

/// Whole dataset on disk: images/NNNNN.ppm, masks/NNNNN.pgm, manifest.jsonl
/// and the resolved config as synthetic_config.json.
std::vector<ManifestEntry> generate_synthetic(const SyntheticTaskConfig& cfg,
                                              const std::string& out_dir,
                                              SyntheticStats* stats = nullptr);

// ---------------------------------------------------------------------------
// Tissue patch selection for real images
// ---------------------------------------------------------------------------

/// Accepts a patch when, after converting to HSV and Gaussian-blurring the
/// saturation and value channels (sigma 2, radius 8, reflected boundary),
/// max saturation exceeds 0.07 and max value exceeds 0.1 (both in [0,1]).
bool tissue_filter(const ImageU8& rgb_patch);

struct PatchSamplerConfig {
  double tumor_probability = 0.5;
  int max_draws_per_patch = 2000;
};

struct Patch {
  ImageU8 image;
  Tensor<std::uint8_t> mask;
  bool tumor = false;
};

/// Uniform spatial sampling with class balancing: a patch counts as tumor
/// when any of its mask pixels is positive. Every emitted patch passes
/// tissue_filter. Throws ConfigError with draw counts when a class cannot be
/// satisfied.
std::vector<Patch> extract_patches(const ImageU8& image, const ImageU8& mask,
                                   std::int64_t patch_size, std::int64_t count,
                                   const PatchSamplerConfig& sampler, Rng& rng);

}  // namespace gunet
