// gunet: group-equivariant semantic segmentation toolkit.
//
// Subcommands: prepare | train | eval | equivcheck | stability.
// Exit codes: 0 success, 1 user/config error, 2 invariant-suite failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "gunet/data.hpp"
#include "gunet/equivcheck.hpp"
#include "gunet/image.hpp"
#include "gunet/model.hpp"
#include "gunet/train.hpp"
#include "gunet/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gunet;

namespace {

std::string default_out_root() {
  const char* env = std::getenv("GUNET_OUT_ROOT");
  return env && *env ? env : ".";
}

std::string resolve_out(const std::string& out, const std::string& fallback_name) {
  if (!out.empty()) return out;
  return (fs::path(default_out_root()) / fallback_name).string();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw ConfigError("cannot write '" + path + "'");
  f << text;
}

json train_config_to_json(const TrainConfig& t) {
  json j;
  j["learning_rate"] = t.learning_rate;
  j["plateau_patience_epochs"] = t.plateau_patience_epochs;
  j["lr_decay_factor"] = t.lr_decay_factor;
  j["batch_size"] = t.batch_size;
  j["epochs"] = t.epochs;
  j["batches_per_epoch"] = t.batches_per_epoch;
  j["seed"] = t.seed;
  j["data_regime_fraction"] = t.data_regime_fraction;
  j["augment_baseline"] = t.augment_baseline;
  return j;
}

void train_config_from_json(const json& j, TrainConfig& t) {
  if (j.contains("learning_rate")) t.learning_rate = j["learning_rate"].get<double>();
  if (j.contains("plateau_patience_epochs")) {
    t.plateau_patience_epochs = j["plateau_patience_epochs"].get<int>();
  }
  if (j.contains("lr_decay_factor")) t.lr_decay_factor = j["lr_decay_factor"].get<double>();
  if (j.contains("batch_size")) t.batch_size = j["batch_size"].get<int>();
  if (j.contains("epochs")) t.epochs = j["epochs"].get<int>();
  if (j.contains("batches_per_epoch")) t.batches_per_epoch = j["batches_per_epoch"].get<int>();
  if (j.contains("seed")) t.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("data_regime_fraction")) {
    t.data_regime_fraction = j["data_regime_fraction"].get<double>();
  }
  if (j.contains("augment_baseline")) t.augment_baseline = j["augment_baseline"].get<bool>();
}

struct AnyModel {
  std::optional<GUNet<float>> f32;
  std::optional<GUNet<double>> f64;

  GroupSpec group() const { return f32 ? f32->group() : f64->group(); }
  const ArchitectureConfig& config() const { return f32 ? f32->config() : f64->config(); }
};

AnyModel load_any_model(const std::string& path) {
  auto records = read_checkpoint(path);
  AnyModel out;
  for (const auto& rec : records) {
    if (rec.name == "__config__") continue;
    if (rec.dtype == DType::f32) {
      out.f32 = GUNet<float>::from_records(records);
      return out;
    }
    if (rec.dtype == DType::f64) {
      out.f64 = GUNet<double>::from_records(records);
      return out;
    }
  }
  throw StateError("checkpoint '" + path + "' holds no parameter tensors");
}

// ---------------------------------------------------------------------------
// prepare
// ---------------------------------------------------------------------------

struct PrepareArgs {
  std::string out;
  std::string config_path;
  std::string from_image, from_mask;
  std::int64_t num_images = -1;
  std::int64_t image_size = -1;
  std::int64_t patch_size = 97;
  std::int64_t patches = 64;
  int shapes = -1, distractors = -1, cell_pixels = -1;
  double class_prior = -1.0, noise = -1.0, contrast = -1.0;
  std::string split;
  std::uint64_t seed = 0;
  bool seed_set = false;
};

int cmd_prepare(const PrepareArgs& a) {
  const std::string out = resolve_out(a.out, "dataset");
  fs::create_directories(out);

  if (!a.from_image.empty()) {
    // patch-extraction mode over a real image/mask pair
    if (a.from_mask.empty()) throw ConfigError("--from-mask is required with --from-image");
    ImageU8 image = load_image(a.from_image);
    ImageU8 mask = load_image(a.from_mask);
    Rng rng(a.seed_set ? a.seed : 1);
    PatchSamplerConfig sampler;
    auto patches = extract_patches(image, mask, a.patch_size, a.patches, sampler, rng);
    fs::create_directories(fs::path(out) / "images");
    fs::create_directories(fs::path(out) / "masks");
    auto splits = assign_splits(static_cast<std::int64_t>(patches.size()),
                                a.split.empty() ? SplitRatio{} : parse_split_ratio(a.split));
    std::vector<ManifestEntry> entries;
    for (std::size_t i = 0; i < patches.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "%05zu", i);
      ManifestEntry e;
      e.image_path = (fs::path(out) / "images" / (std::string(name) + ".ppm")).string();
      e.mask_path = (fs::path(out) / "masks" / (std::string(name) + ".pgm")).string();
      e.split = splits[static_cast<std::size_t>(i)];
      e.tag = patches[i].tumor ? "tumor" : "normal";
      save_image(e.image_path, patches[i].image);
      ImageU8 m = make_image(patches[i].image.height, patches[i].image.width, 1);
      for (std::int64_t p = 0; p < m.height * m.width; ++p) {
        m.pixels[static_cast<std::size_t>(p)] = patches[i].mask[p] ? 255 : 0;
      }
      save_image(e.mask_path, m);
      entries.push_back(std::move(e));
    }
    save_manifest((fs::path(out) / "manifest.jsonl").string(), entries);
    std::cout << "wrote " << entries.size() << " patches to " << out << "\n";
    return 0;
  }

  SyntheticTaskConfig cfg;
  if (!a.config_path.empty()) {
    std::ifstream in(a.config_path);
    if (!in) throw ConfigError("cannot open config '" + a.config_path + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    cfg = synthetic_config_from_json(text);
  }
  if (a.num_images >= 0) cfg.num_images = a.num_images;
  if (a.image_size >= 0) cfg.image_size = a.image_size;
  if (a.shapes >= 0) cfg.shapes_per_image = a.shapes;
  if (a.distractors >= 0) cfg.distractors_per_image = a.distractors;
  if (a.cell_pixels >= 0) cfg.cell_pixels = a.cell_pixels;
  if (a.class_prior >= 0) cfg.class_prior = a.class_prior;
  if (a.noise >= 0) cfg.noise_level = a.noise;
  if (a.contrast >= 0) cfg.texture_contrast = a.contrast;
  if (!a.split.empty()) cfg.split = parse_split_ratio(a.split);
  if (a.seed_set) cfg.seed = a.seed;

  if (!input_size_valid(cfg.image_size, 4)) {
    std::cerr << "warning: image size " << cfg.image_size
              << " breaks the odd pooling chain at depth 4; nearest valid size is "
              << nearest_valid_input_size(cfg.image_size, 4) << "\n";
  }
  auto entries = generate_synthetic(cfg, out);
  std::cout << "wrote " << entries.size() << " images to " << out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string dataset;
  std::string out;
  std::string config_path;
  std::string group;
  int depth = -1, base_width = -1;
  int epochs = -1, batch_size = -1, batches_per_epoch = -1;
  double lr = -1.0, regime = -1.0;
  std::uint64_t seed = 0;
  bool seed_set = false;
  bool f64 = false;
  bool augment = false;
  bool no_skip = false;
};

json resolve_train_config(const TrainArgs& a, ArchitectureConfig& arch, TrainConfig& train,
                          std::string& dataset, bool& f64) {
  if (!a.config_path.empty()) {
    std::ifstream in(a.config_path);
    if (!in) throw ConfigError("cannot open config '" + a.config_path + "'");
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw ConfigError(std::string("invalid run config: ") + e.what());
    }
    if (j.contains("arch")) arch = architecture_config_from_json(j["arch"].dump());
    if (j.contains("train")) train_config_from_json(j["train"], train);
    if (j.contains("dataset")) dataset = j["dataset"].get<std::string>();
    if (j.contains("f64")) f64 = j["f64"].get<bool>();
  }
  if (!a.dataset.empty()) dataset = a.dataset;
  if (!a.group.empty()) arch.group = GroupSpec::from_name(a.group).kind;
  if (a.depth >= 0) arch.depth = a.depth;
  if (a.base_width >= 0) arch.base_width = a.base_width;
  if (a.no_skip) arch.skip_connections = false;
  if (a.epochs >= 0) train.epochs = a.epochs;
  if (a.batch_size >= 0) train.batch_size = a.batch_size;
  if (a.batches_per_epoch >= 0) train.batches_per_epoch = a.batches_per_epoch;
  if (a.lr >= 0) train.learning_rate = a.lr;
  if (a.regime >= 0) train.data_regime_fraction = a.regime;
  if (a.seed_set) train.seed = a.seed;
  if (a.f64) f64 = true;
  if (a.augment) train.augment_baseline = true;
  if (dataset.empty()) throw ConfigError("no dataset given (use --dataset or a config file)");

  json resolved;
  resolved["arch"] = json::parse(architecture_config_to_json(arch));
  resolved["train"] = train_config_to_json(train);
  resolved["dataset"] = dataset;
  resolved["f64"] = f64;
  return resolved;
}

int cmd_train(const TrainArgs& a) {
  ArchitectureConfig arch;
  TrainConfig train;
  std::string dataset;
  bool f64 = false;
  json resolved = resolve_train_config(a, arch, train, dataset, f64);

  const std::string manifest = fs::is_directory(dataset)
                                   ? (fs::path(dataset) / "manifest.jsonl").string()
                                   : dataset;
  LoadedDataset ds = load_dataset(manifest);
  if (!input_size_valid(ds.height, arch.depth) || !input_size_valid(ds.width, arch.depth)) {
    throw ConfigError("dataset size " + std::to_string(ds.height) +
                      " breaks the odd pooling chain at depth " + std::to_string(arch.depth) +
                      "; nearest valid size is " +
                      std::to_string(nearest_valid_input_size(ds.height, arch.depth)));
  }
  arch.input_channels = ds.channels;
  resolved["arch"] = json::parse(architecture_config_to_json(arch));

  const std::string out = resolve_out(a.out, "run");
  fs::create_directories(out);
  write_text((fs::path(out) / "config.json").string(), resolved.dump(2) + "\n");

  auto run = [&](auto tag) {
    using T = decltype(tag);
    auto model = GUNet<T>::build(arch, train.seed);
    auto result = train_model(model, ds, train, out, f64, &std::cout);
    std::cout << "trained on " << result.train_subset_size << " images; best epoch "
              << result.best_epoch << " (val loss " << result.best_val_loss << ")\n"
              << "checkpoints: " << result.best_path << ", " << result.last_path << "\n";
  };
  if (f64) {
    run(double{});
  } else {
    run(float{});
  }
  return 0;
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint, dataset, split = "test", out, group;
  bool oracle = false;
  int batch_size = 8;
};

int cmd_eval(const EvalArgs& a) {
  const std::string manifest = fs::is_directory(a.dataset)
                                   ? (fs::path(a.dataset) / "manifest.jsonl").string()
                                   : a.dataset;
  LoadedDataset ds = load_dataset(manifest);
  const Split split = split_from_name(a.split);
  const auto& idx = split == Split::train   ? ds.train_idx
                    : split == Split::val   ? ds.val_idx
                                            : ds.test_idx;
  if (idx.empty()) throw ConfigError("split '" + a.split + "' is empty");

  AnyModel model;
  if (!a.oracle) {
    if (a.checkpoint.empty()) throw ConfigError("--checkpoint is required without --oracle");
    model = load_any_model(a.checkpoint);
    if (!a.group.empty() && GroupSpec::from_name(a.group) != model.group()) {
      throw ConfigError("checkpoint group " + model.group().name() +
                        " does not match requested group " + a.group);
    }
  }

  DiceAccumulator micro;
  std::vector<double> per_image;
  for (auto i : idx) {
    const auto& mask = ds.masks[i];
    Tensor<std::uint8_t> pred;
    if (a.oracle) {
      pred = mask;  // ground truth as prediction: report-path plumbing check
    } else {
      std::vector<std::size_t> one = {i};
      if (model.f32) {
        Tensor<float> x({1, ds.channels, ds.height, ds.width});
        Tensor<std::uint8_t> y({1, ds.height, ds.width});
        gunet::detail::fill_batch(ds, one, 0, 1, x, y);
        pred = argmax_predictions(model.f32->forward(x, BatchNormMode::eval))
                   .reshaped({ds.height, ds.width});
      } else {
        Tensor<double> x({1, ds.channels, ds.height, ds.width});
        Tensor<std::uint8_t> y({1, ds.height, ds.width});
        gunet::detail::fill_batch(ds, one, 0, 1, x, y);
        pred = argmax_predictions(model.f64->forward(x, BatchNormMode::eval))
                   .reshaped({ds.height, ds.width});
      }
    }
    micro.add_masks(pred, mask);
    per_image.push_back(dice_coefficient(pred, mask));
  }
  double mean_image = 0.0;
  for (double d : per_image) mean_image += d;
  mean_image /= static_cast<double>(per_image.size());

  json report;
  report["split"] = a.split;
  report["images"] = per_image.size();
  report["micro_dsc"] = micro.value();
  report["mean_per_image_dsc"] = mean_image;
  report["per_image_dsc"] = per_image;
  std::cout << "split " << a.split << ": micro DSC " << micro.value() << ", mean per-image DSC "
            << mean_image << " over " << per_image.size() << " images\n";
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    write_text((fs::path(a.out) / "eval.json").string(), report.dump(2) + "\n");
    std::string txt = "split " + a.split + " micro_dsc " + std::to_string(micro.value()) +
                      " mean_per_image_dsc " + std::to_string(mean_image) + "\n";
    write_text((fs::path(a.out) / "eval.txt").string(), txt);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// equivcheck
// ---------------------------------------------------------------------------

struct EquivArgs {
  std::string checkpoint, out, group = "p4m";
  int depth = 2, base_width = 4;
  std::uint64_t seed = 1234;
  bool quick = false;
};

int cmd_equivcheck(const EquivArgs& a) {
  verify::SuiteConfig cfg;
  cfg.seed = a.seed;
  cfg.oracle_seeds = a.quick ? 1 : 3;
  cfg.grad_probes = a.quick ? 5 : 10;
  auto results = verify::run_invariant_suite(cfg);

  // network-level equivariance on the requested or loaded model
  verify::CheckResult net{"network equivariance", 0.0, 0.0, 1};
  if (!a.checkpoint.empty()) {
    AnyModel model = load_any_model(a.checkpoint);
    const std::int64_t size = nearest_valid_input_size(33, model.config().depth);
    if (model.f32) {
      net.max_err = verify::model_equivariance_error(*model.f32, size, a.seed);
      net.tol = 1e-4;
    } else {
      net.max_err = verify::model_equivariance_error(*model.f64, size, a.seed);
      net.tol = 1e-10;
    }
  } else {
    ArchitectureConfig arch;
    arch.group = GroupSpec::from_name(a.group).kind;
    arch.depth = a.depth;
    arch.base_width = a.base_width;
    auto model = GUNet<double>::build(arch, a.seed);
    const std::int64_t size = nearest_valid_input_size(17, arch.depth);
    net.max_err = verify::model_equivariance_error(model, size, a.seed);
    net.tol = 1e-10;
  }
  results.push_back(net);

  bool all_pass = true;
  json jr = json::array();
  for (const auto& r : results) {
    all_pass = all_pass && r.pass();
    std::printf("%-42s max_err %.3e  tol %.0e  cases %3d  %s\n", r.name.c_str(), r.max_err, r.tol,
                r.cases, r.pass() ? "PASS" : "FAIL");
    jr.push_back({{"name", r.name},
                  {"max_err", r.max_err},
                  {"tol", r.tol},
                  {"cases", r.cases},
                  {"pass", r.pass()}});
  }
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    write_text((fs::path(a.out) / "equivcheck.json").string(), jr.dump(2) + "\n");
  }
  return all_pass ? 0 : 2;
}

// ---------------------------------------------------------------------------
// stability
// ---------------------------------------------------------------------------

struct StabilityArgs {
  std::string checkpoint, image, out, report_group = "p4m";
  double std_scale = 1000.0;
};

int cmd_stability(const StabilityArgs& a) {
  AnyModel model = load_any_model(a.checkpoint);
  ImageU8 img = load_image(a.image);
  if (img.height != img.width) throw ConfigError("stability needs a square image");
  if (img.channels != model.config().input_channels) {
    throw ConfigError("image has " + std::to_string(img.channels) + " channels, model expects " +
                      std::to_string(model.config().input_channels));
  }
  GroupSpec report_group = GroupSpec::from_name(a.report_group);
  StabilityReport rep;
  if (model.f32) {
    rep = stability_report(*model.f32, image_to_tensor<float>(img), report_group);
  } else {
    rep = stability_report(*model.f64, image_to_tensor<double>(img), report_group);
  }
  const std::string out = resolve_out(a.out, "stability");
  fs::create_directories(out);
  save_image((fs::path(out) / "mean.pgm").string(), render_grayscale(rep.mean, 0.0, 1.0));
  Tensor<double> scaled(rep.stdev.dims());
  for (std::int64_t i = 0; i < scaled.size(); ++i) scaled[i] = rep.stdev[i] * a.std_scale;
  save_image((fs::path(out) / "std.pgm").string(), render_grayscale(scaled, 0.0, 1.0));
  write_checkpoint((fs::path(out) / "stability.gunt").string(),
                   {make_tensor_record("mean", rep.mean), make_tensor_record("std", rep.stdev)});
  json j;
  j["max_std"] = rep.max_std;
  j["mean_std"] = rep.mean_std;
  j["report_group"] = report_group.name();
  j["model_group"] = model.group().name();
  j["image"] = a.image;
  j["std_render_scale"] = a.std_scale;
  write_text((fs::path(out) / "stability.json").string(), j.dump(2) + "\n");
  std::cout << "max_std " << rep.max_std << " mean_std " << rep.mean_std << " (maps in " << out
            << ")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"group-equivariant semantic segmentation toolkit"};
  app.require_subcommand(1);

  PrepareArgs pa;
  auto* prep = app.add_subcommand("prepare", "generate or extract a dataset");
  prep->add_option("--out", pa.out, "output dataset directory");
  prep->add_option("--config", pa.config_path, "synthetic task config (JSON)");
  prep->add_option("--num-images", pa.num_images, "number of images");
  prep->add_option("--image-size", pa.image_size, "square image size");
  prep->add_option("--shapes", pa.shapes, "foreground shapes per tumor image");
  prep->add_option("--distractors", pa.distractors, "distractor blobs per image");
  prep->add_option("--cell-pixels", pa.cell_pixels, "polyomino cell edge length");
  prep->add_option("--class-prior", pa.class_prior, "fraction of images with foreground");
  prep->add_option("--noise", pa.noise, "pixel noise sigma");
  prep->add_option("--contrast", pa.contrast, "blob contrast against background");
  prep->add_option("--split", pa.split, "split ratio, e.g. 8:1:1");
  prep->add_option("--seed", pa.seed, "generator seed");
  prep->callback([&] { pa.seed_set = prep->count("--seed") > 0; });
  prep->add_option("--from-image", pa.from_image, "extract patches from this raster image");
  prep->add_option("--from-mask", pa.from_mask, "mask paired with --from-image");
  prep->add_option("--patch-size", pa.patch_size, "patch edge length");
  prep->add_option("--patches", pa.patches, "number of patches to draw");

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "optimize a model on a prepared dataset");
  tr->add_option("--dataset", ta.dataset, "dataset directory or manifest path");
  tr->add_option("--out", ta.out, "run directory");
  tr->add_option("--config", ta.config_path, "run config (JSON), overridable by flags");
  tr->add_option("--group", ta.group, "p1 | p4 | p4m");
  tr->add_option("--depth", ta.depth, "encoder depth");
  tr->add_option("--base-width", ta.base_width, "width before group correction");
  tr->add_option("--epochs", ta.epochs, "training epochs");
  tr->add_option("--batch-size", ta.batch_size, "batch size");
  tr->add_option("--batches-per-epoch", ta.batches_per_epoch, "optimizer steps per epoch");
  tr->add_option("--lr", ta.lr, "initial learning rate");
  tr->add_option("--regime", ta.regime, "training data fraction in (0,1]");
  tr->add_option("--seed", ta.seed, "training seed");
  tr->callback([&] { ta.seed_set = tr->count("--seed") > 0; });
  tr->add_flag("--f64", ta.f64, "64-bit mode: bit-reproducible runs");
  tr->add_flag("--augment", ta.augment, "roto-reflection training augmentation");
  tr->add_flag("--no-skip", ta.no_skip, "ablate skip connections");

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Dice report for a checkpoint on a split");
  ev->add_option("--checkpoint", ea.checkpoint, "model checkpoint");
  ev->add_option("--dataset", ea.dataset, "dataset directory or manifest path")->required();
  ev->add_option("--split", ea.split, "train | val | test");
  ev->add_option("--out", ea.out, "report directory");
  ev->add_option("--group", ea.group, "expected group (checked against checkpoint)");
  ev->add_option("--batch-size", ea.batch_size, "evaluation batch size");
  ev->add_flag("--oracle", ea.oracle, "score ground-truth masks as predictions");

  EquivArgs qa;
  auto* eq = app.add_subcommand("equivcheck", "run the invariant suite");
  eq->add_option("--checkpoint", qa.checkpoint, "check this trained model");
  eq->add_option("--group", qa.group, "group for the fresh-init model");
  eq->add_option("--depth", qa.depth, "depth for the fresh-init model");
  eq->add_option("--base-width", qa.base_width, "width for the fresh-init model");
  eq->add_option("--seed", qa.seed, "suite seed");
  eq->add_option("--out", qa.out, "write equivcheck.json here");
  eq->add_flag("--quick", qa.quick, "fewer fuzz repetitions");

  StabilityArgs sa;
  auto* st = app.add_subcommand("stability", "roto-reflection stability report");
  st->add_option("--checkpoint", sa.checkpoint, "model checkpoint")->required();
  st->add_option("--image", sa.image, "square input image")->required();
  st->add_option("--out", sa.out, "report directory");
  st->add_option("--report-group", sa.report_group, "transform set (default p4m)");
  st->add_option("--std-scale", sa.std_scale, "gray scaling for the std map");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (prep->parsed()) return cmd_prepare(pa);
    if (tr->parsed()) return cmd_train(ta);
    if (ev->parsed()) return cmd_eval(ea);
    if (eq->parsed()) return cmd_equivcheck(qa);
    if (st->parsed()) return cmd_stability(sa);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
