#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "gunet/data.hpp"
#include "gunet/rng.hpp"
#include "support.hpp"

using namespace gunet;
namespace fs = std::filesystem;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("image round trip: P6 and P5 are lossless; masks threshold at 128") {
  Rng rng(1);
  ImageU8 img = make_image(9, 7, 3);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng.uniform_int(256));
  const auto path = (fs::temp_directory_path() / "gunet_img.ppm").string();
  save_image(path, img);
  auto back = load_image(path);
  CHECK(back.height == 9);
  CHECK(back.width == 7);
  CHECK(back.channels == 3);
  CHECK(back.pixels == img.pixels);
  fs::remove(path);

  ImageU8 gray = make_image(4, 4, 1);
  gray.pixels = {0, 10, 127, 128, 129, 200, 255, 64, 0, 0, 255, 255, 128, 127, 1, 254};
  const auto gpath = (fs::temp_directory_path() / "gunet_img.pgm").string();
  save_image(gpath, gray);
  auto gback = load_image(gpath);
  CHECK(gback.pixels == gray.pixels);
  auto mask = mask_from_image(gback);
  CHECK(mask[2] == 0);  // 127
  CHECK(mask[3] == 1);  // 128
  fs::remove(gpath);

  CHECK_THROWS_AS(load_image("/nonexistent/gunet_missing.ppm"), ConfigError);
}

TEST_CASE("manifest round trip, split partitioning and ratio parsing") {
  std::vector<ManifestEntry> entries;
  const auto dir = fs::temp_directory_path() / "gunet_manifest_test";
  fs::create_directories(dir);
  for (int i = 0; i < 10; ++i) {
    ImageU8 img = make_image(4, 4, 3);
    ImageU8 mask = make_image(4, 4, 1);
    ManifestEntry e;
    e.image_path = (dir / ("img" + std::to_string(i) + ".ppm")).string();
    e.mask_path = (dir / ("mask" + std::to_string(i) + ".pgm")).string();
    e.split = i < 8 ? Split::train : (i == 8 ? Split::val : Split::test);
    e.tag = i % 2 ? "tumor" : "normal";
    save_image(e.image_path, img);
    save_image(e.mask_path, mask);
    entries.push_back(e);
  }
  const auto mpath = (dir / "manifest.jsonl").string();
  save_manifest(mpath, entries);
  auto loaded = load_manifest(mpath);
  REQUIRE(loaded.size() == 10);
  int split_counts[3] = {0, 0, 0};
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    CHECK(loaded[i].image_path == entries[i].image_path);
    CHECK(loaded[i].tag == entries[i].tag);
    split_counts[static_cast<int>(loaded[i].split)] += 1;
  }
  CHECK(split_counts[0] == 8);
  CHECK(split_counts[1] == 1);
  CHECK(split_counts[2] == 1);

  // a missing file is caught at load
  fs::remove(entries[3].image_path);
  CHECK_THROWS_AS(load_manifest(mpath), ConfigError);
  CHECK_NOTHROW(load_manifest(mpath, false));
  fs::remove_all(dir);

  auto ratio = parse_split_ratio("8:1:1");
  CHECK(ratio.parts[0] == 8);
  CHECK_THROWS_AS(parse_split_ratio("8:1"), ConfigError);
  CHECK_THROWS_AS(parse_split_ratio("0:1:1"), ConfigError);
  auto splits = assign_splits(400, ratio);
  std::int64_t n[3] = {0, 0, 0};
  for (auto s : splits) n[static_cast<int>(s)] += 1;
  CHECK(n[0] == 320);
  CHECK(n[1] == 40);
  CHECK(n[2] == 40);
}

TEST_CASE("synthetic: zero shapes per image yields all-background masks") {
  SyntheticTaskConfig cfg;
  cfg.image_size = 21;
  cfg.cell_pixels = 3;
  cfg.shapes_per_image = 0;
  cfg.num_images = 4;
  cfg.seed = 9;
  for (std::int64_t i = 0; i < 4; ++i) {
    auto s = generate_synthetic_sample(cfg, i);
    CHECK(max_abs(s.mask.cast<float>()) == 0.0f);
  }
}

TEST_CASE("synthetic: identical seeds give bit-identical datasets") {
  SyntheticTaskConfig cfg;
  cfg.image_size = 21;
  cfg.cell_pixels = 3;
  cfg.num_images = 6;
  cfg.seed = 31;
  const auto dir_a = fs::temp_directory_path() / "gunet_synth_a";
  const auto dir_b = fs::temp_directory_path() / "gunet_synth_b";
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
  auto ea = generate_synthetic(cfg, dir_a.string());
  auto eb = generate_synthetic(cfg, dir_b.string());
  REQUIRE(ea.size() == eb.size());
  for (std::size_t i = 0; i < ea.size(); ++i) {
    CHECK(read_file(ea[i].image_path) == read_file(eb[i].image_path));
    CHECK(read_file(ea[i].mask_path) == read_file(eb[i].mask_path));
    CHECK(ea[i].tag == eb[i].tag);
    CHECK(ea[i].split == eb[i].split);
  }
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
}

TEST_CASE("synthetic: masks are binary and tumor frequency tracks the prior") {
  SyntheticTaskConfig cfg;
  cfg.image_size = 21;
  cfg.cell_pixels = 3;
  cfg.num_images = 1000;
  cfg.seed = 12;
  SyntheticStats stats;
  for (std::int64_t i = 0; i < cfg.num_images; ++i) {
    auto s = generate_synthetic_sample(cfg, i, &stats);
    for (std::int64_t p = 0; p < s.mask.size(); ++p) CHECK(s.mask[p] <= 1);
  }
  const double tumor_frac =
      static_cast<double>(stats.tumor_images) / static_cast<double>(cfg.num_images);
  CHECK(tumor_frac == doctest::Approx(cfg.class_prior).epsilon(0.04));
  CHECK(std::abs(tumor_frac - cfg.class_prior) <= 0.02);

  // foreground orientations cover all eight roto-reflections roughly uniformly
  std::int64_t total = 0;
  for (auto c : stats.orientation_counts) total += c;
  CHECK(total > 0);
  for (auto c : stats.orientation_counts) {
    CHECK(static_cast<double>(c) > 0.6 * static_cast<double>(total) / 8.0);
    CHECK(static_cast<double>(c) < 1.4 * static_cast<double>(total) / 8.0);
  }
}

TEST_CASE("synthetic: generator rejects images too small for the templates") {
  SyntheticTaskConfig cfg;
  cfg.image_size = 10;
  cfg.cell_pixels = 5;
  CHECK_THROWS_AS(generate_synthetic_sample(cfg, 0), ConfigError);
}

TEST_CASE("tissue filter: the twelve-case threshold fixture") {
  for (const auto& c : testsupport::tissue_fixture()) {
    INFO(c.name);
    CHECK(tissue_filter(testsupport::uniform_patch(c.r, c.g, c.b)) == c.accept);
  }
}

TEST_CASE("tissue filter is invariant under the eight roto-reflections") {
  Rng rng(5);
  for (int rep = 0; rep < 4; ++rep) {
    ImageU8 patch = make_image(16, 16, 3);
    for (auto& p : patch.pixels) {
      // low-intensity noise keeps some cases near the thresholds
      p = static_cast<std::uint8_t>(rng.uniform_int(rep % 2 ? 40 : 256));
    }
    const bool base = tissue_filter(patch);
    for (const auto& g : group_elements(GroupSpec::p4m())) {
      CHECK(tissue_filter(testsupport::transform_image(g, patch)) == base);
    }
  }
}

TEST_CASE("tissue filter wants RGB") {
  CHECK_THROWS_AS(tissue_filter(make_image(8, 8, 1)), ConfigError);
}

TEST_CASE("patch extraction: exhaustion, forced tumor, balance") {
  Rng rng(6);
  // colorful image, mask positive on the left half
  ImageU8 image = make_image(40, 40, 3);
  for (auto& p : image.pixels) p = static_cast<std::uint8_t>(rng.uniform_int(256));
  ImageU8 mask = make_image(40, 40, 1);
  for (std::int64_t i = 0; i < 40; ++i) {
    for (std::int64_t j = 0; j < 18; ++j) mask.at(i, j, 0) = 255;
  }

  SUBCASE("all-background image exhausts the tumor class") {
    ImageU8 empty_mask = make_image(40, 40, 1);
    PatchSamplerConfig sampler;
    sampler.tumor_probability = 1.0;
    sampler.max_draws_per_patch = 50;
    Rng r2(7);
    CHECK_THROWS_AS(extract_patches(image, empty_mask, 10, 1, sampler, r2), ConfigError);
  }

  SUBCASE("fully positive mask tags every patch tumor") {
    ImageU8 full_mask = make_image(40, 40, 1);
    for (auto& p : full_mask.pixels) p = 255;
    PatchSamplerConfig sampler;
    sampler.tumor_probability = 1.0;
    Rng r2(8);
    auto patches = extract_patches(image, full_mask, 10, 20, sampler, r2);
    CHECK(patches.size() == 20);
    for (const auto& p : patches) CHECK(p.tumor);
  }

  SUBCASE("balanced sampling over a mixed image is near half tumor") {
    PatchSamplerConfig sampler;
    Rng r2(9);
    auto patches = extract_patches(image, mask, 10, 500, sampler, r2);
    std::int64_t tumor = 0;
    for (const auto& p : patches) tumor += p.tumor ? 1 : 0;
    const double frac = static_cast<double>(tumor) / 500.0;
    CHECK(std::abs(frac - 0.5) <= 0.05);
    // every patch passes the tissue filter by construction
    for (int i = 0; i < 5; ++i) CHECK(tissue_filter(patches[static_cast<std::size_t>(i)].image));
  }

  SUBCASE("images smaller than the patch are rejected") {
    PatchSamplerConfig sampler;
    Rng r2(10);
    CHECK_THROWS_AS(extract_patches(image, mask, 64, 1, sampler, r2), ConfigError);
  }
}

TEST_CASE("synthetic config JSON round trip") {
  SyntheticTaskConfig cfg;
  cfg.image_size = 33;
  cfg.num_images = 77;
  cfg.class_prior = 0.25;
  cfg.seed = 123;
  cfg.split = parse_split_ratio("6:2:2");
  auto back = synthetic_config_from_json(synthetic_config_to_json(cfg));
  CHECK(back.image_size == 33);
  CHECK(back.num_images == 77);
  CHECK(back.class_prior == 0.25);
  CHECK(back.seed == 123);
  CHECK(back.split.parts[1] == 2);
  CHECK_THROWS_AS(synthetic_config_from_json("{nope"), ConfigError);
}
