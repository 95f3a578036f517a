#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "gunet/data.hpp"
#include "gunet/model.hpp"
#include "gunet/train.hpp"

namespace gunet {

/// Whole dataset resident in memory; desk-scale corpora are small.
struct LoadedDataset {
  std::vector<ImageU8> images;
  std::vector<Tensor<std::uint8_t>> masks;
  std::vector<Split> splits;
  std::vector<std::string> tags;
  std::vector<std::size_t> train_idx, val_idx, test_idx;
  std::int64_t height = 0, width = 0;
  int channels = 0;
};

inline LoadedDataset load_dataset(const std::string& manifest_path) {
  LoadedDataset ds;
  auto entries = load_manifest(manifest_path, true);
  if (entries.empty()) throw ConfigError("manifest '" + manifest_path + "' is empty");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    ImageU8 img = load_image(entries[i].image_path);
    ImageU8 mask = load_image(entries[i].mask_path);
    if (ds.channels == 0) {
      ds.height = img.height;
      ds.width = img.width;
      ds.channels = img.channels;
    }
    if (img.height != ds.height || img.width != ds.width || img.channels != ds.channels) {
      throw ConfigError("dataset images must share one size; '" + entries[i].image_path +
                        "' differs");
    }
    if (mask.height != ds.height || mask.width != ds.width) {
      throw ConfigError("mask size mismatch for '" + entries[i].mask_path + "'");
    }
    ds.images.push_back(std::move(img));
    ds.masks.push_back(mask_from_image(mask));
    ds.splits.push_back(entries[i].split);
    ds.tags.push_back(entries[i].tag);
    switch (entries[i].split) {
      case Split::train: ds.train_idx.push_back(i); break;
      case Split::val: ds.val_idx.push_back(i); break;
      case Split::test: ds.test_idx.push_back(i); break;
    }
  }
  return ds;
}

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_dsc = 0.0;
  double lr = 0.0;
  double wall_time = 0.0;
};

struct TrainResult {
  int best_epoch = 0;
  double best_val_loss = 0.0;
  std::size_t train_subset_size = 0;
  std::string best_path, last_path, metrics_path;
  std::vector<EpochMetrics> history;
};

namespace detail {

inline std::string json_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

template <typename T>
void fill_batch(const LoadedDataset& ds, const std::vector<std::size_t>& idx, std::size_t begin,
                std::size_t n, Tensor<T>& x, Tensor<std::uint8_t>& y) {
  const std::int64_t chw = ds.channels * ds.height * ds.width;
  const std::int64_t hw = ds.height * ds.width;
  for (std::size_t b = 0; b < n; ++b) {
    const ImageU8& img = ds.images[idx[begin + b]];
    const auto& mask = ds.masks[idx[begin + b]];
    T* xp = x.data() + static_cast<std::int64_t>(b) * chw;
    for (int c = 0; c < ds.channels; ++c) {
      for (std::int64_t p = 0; p < hw; ++p) {
        xp[c * hw + p] =
            static_cast<T>(img.pixels[static_cast<std::size_t>(p * ds.channels + c)]) /
            static_cast<T>(255);
      }
    }
    std::uint8_t* yp = y.data() + static_cast<std::int64_t>(b) * hw;
    for (std::int64_t p = 0; p < hw; ++p) yp[p] = mask[p];
  }
}

/// Roto-reflect one sample inside an assembled batch (training augmentation).
template <typename T>
void augment_sample_inplace(Tensor<T>& x, Tensor<std::uint8_t>& y, std::size_t b,
                            GroupElement g) {
  const std::int64_t C = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor<T> one({1, C, h, w});
  std::copy(x.data() + static_cast<std::int64_t>(b) * C * h * w,
            x.data() + static_cast<std::int64_t>(b + 1) * C * h * w, one.data());
  Tensor<T> tx = apply_input_transform(g, one);
  std::copy(tx.data(), tx.data() + C * h * w, x.data() + static_cast<std::int64_t>(b) * C * h * w);
  auto src = gunet::detail::spatial_gather_indices(g, h, w);
  std::vector<std::uint8_t> tmp(static_cast<std::size_t>(h * w));
  const std::uint8_t* yp = y.data() + static_cast<std::int64_t>(b) * h * w;
  for (std::int64_t p = 0; p < h * w; ++p) tmp[static_cast<std::size_t>(p)] = yp[src[static_cast<std::size_t>(p)]];
  std::copy(tmp.begin(), tmp.end(), y.data() + static_cast<std::int64_t>(b) * h * w);
}

}  // namespace detail

/// Evaluation pass: mean per-image loss and micro-aggregated Dice.
template <typename T>
std::pair<double, double> evaluate_split(GUNet<T>& model, const LoadedDataset& ds,
                                         const std::vector<std::size_t>& idx, int batch_size) {
  if (idx.empty()) throw ConfigError("evaluation split is empty");
  double loss_sum = 0.0;
  DiceAccumulator dice;
  for (std::size_t begin = 0; begin < idx.size(); begin += static_cast<std::size_t>(batch_size)) {
    const std::size_t n = std::min(static_cast<std::size_t>(batch_size), idx.size() - begin);
    Tensor<T> x({static_cast<std::int64_t>(n), ds.channels, ds.height, ds.width});
    Tensor<std::uint8_t> y({static_cast<std::int64_t>(n), ds.height, ds.width});
    detail::fill_batch(ds, idx, begin, n, x, y);
    Tensor<T> logits = model.forward(x, BatchNormMode::eval);
    LossResult<T> loss = pixel_loss(logits, y);
    loss_sum += loss.value * static_cast<double>(n);
    Tensor<std::uint8_t> pred = argmax_predictions(logits);
    dice.add_masks(pred, y);
  }
  return {loss_sum / static_cast<double>(idx.size()), dice.value()};
}

/// Full optimization loop: Adam, plateau-halved learning rate, per-epoch
/// metrics log, best-validation-loss checkpointing. Deterministic for a
/// fixed (config, seed); wall_time is written as 0 when deterministic_time
/// is set so logs are bit-reproducible.
template <typename T>
TrainResult train_model(GUNet<T>& model, const LoadedDataset& ds, const TrainConfig& cfg,
                        const std::string& out_dir, bool deterministic_time = false,
                        std::ostream* console = nullptr) {
  namespace fs = std::filesystem;
  if (cfg.batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (ds.train_idx.empty()) throw ConfigError("training split is empty");
  if (ds.val_idx.empty()) throw ConfigError("validation split is empty");
  fs::create_directories(out_dir);

  // regime subsampling over the training split, stratified by tag
  std::vector<std::string> train_tags;
  train_tags.reserve(ds.train_idx.size());
  for (auto i : ds.train_idx) train_tags.push_back(ds.tags[i]);
  std::vector<std::size_t> subset = subsample_regime(train_tags, cfg.data_regime_fraction,
                                                     Rng::mix(cfg.seed, 0x5d1e));
  std::vector<std::size_t> train_idx;
  train_idx.reserve(subset.size());
  for (auto k : subset) train_idx.push_back(ds.train_idx[k]);

  TrainResult result;
  result.train_subset_size = train_idx.size();
  result.best_path = (fs::path(out_dir) / "best.gunt").string();
  result.last_path = (fs::path(out_dir) / "last.gunt").string();
  result.metrics_path = (fs::path(out_dir) / "metrics.jsonl").string();

  std::ofstream log(result.metrics_path, std::ios::trunc);
  if (!log) throw ConfigError("cannot open metrics log '" + result.metrics_path + "'");

  auto params = model.parameters();
  AdamState<T> adam = AdamState<T>::init(params);
  PlateauScheduler sched(cfg.learning_rate, cfg.plateau_patience_epochs, cfg.lr_decay_factor);
  Rng sample_rng(Rng::mix(cfg.seed, 0xba7c4));

  // epoch batches draw from a reshuffled stream over the subset
  std::vector<std::size_t> stream = train_idx;
  std::size_t cursor = stream.size();  // forces shuffle on first use
  auto next_index = [&]() {
    if (cursor >= stream.size()) {
      for (std::size_t i = stream.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(sample_rng.uniform_int(static_cast<std::int64_t>(i)));
        std::swap(stream[i - 1], stream[j]);
      }
      cursor = 0;
    }
    return stream[cursor++];
  };

  model.save(result.best_path);  // zero-epoch runs return the initialization
  result.best_val_loss = 1e300;
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&]() {
    if (deterministic_time) return 0.0;
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  ModelCache<T> cache;
  std::vector<std::size_t> batch_idx(static_cast<std::size_t>(cfg.batch_size));
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double lr = sched.lr();
    double train_loss = 0.0;
    for (int bi = 0; bi < cfg.batches_per_epoch; ++bi) {
      for (auto& ix : batch_idx) ix = next_index();
      Tensor<T> x({cfg.batch_size, ds.channels, ds.height, ds.width});
      Tensor<std::uint8_t> y({cfg.batch_size, ds.height, ds.width});
      detail::fill_batch(ds, batch_idx, 0, batch_idx.size(), x, y);
      if (cfg.augment_baseline) {
        for (std::size_t b = 0; b < batch_idx.size(); ++b) {
          detail::augment_sample_inplace(
              x, y, b, element_at(static_cast<int>(sample_rng.uniform_int(8)), GroupSpec::p4m()));
        }
      }
      Tensor<T> logits = model.forward(x, BatchNormMode::train, &cache);
      LossResult<T> loss = pixel_loss(logits, y);
      train_loss += loss.value;
      auto grads = model.backward(loss.grad, cache);
      adam_step(params, grads, adam, static_cast<T>(lr));
    }
    train_loss /= static_cast<double>(cfg.batches_per_epoch);

    auto [val_loss, val_dsc] = evaluate_split(model, ds, ds.val_idx, cfg.batch_size);
    EpochMetrics m{epoch, train_loss, val_loss, val_dsc, lr, elapsed()};
    result.history.push_back(m);
    log << "{\"epoch\":" << epoch << ",\"split\":\"train\",\"loss\":"
        << detail::json_number(train_loss) << ",\"dsc\":null,\"lr\":" << detail::json_number(lr)
        << ",\"wall_time\":" << detail::json_number(m.wall_time) << "}\n";
    log << "{\"epoch\":" << epoch << ",\"split\":\"val\",\"loss\":"
        << detail::json_number(val_loss) << ",\"dsc\":" << detail::json_number(val_dsc)
        << ",\"lr\":" << detail::json_number(lr)
        << ",\"wall_time\":" << detail::json_number(m.wall_time) << "}\n";
    log.flush();
    if (console) {
      (*console) << "epoch " << epoch << " train_loss " << train_loss << " val_loss " << val_loss
                 << " val_dsc " << val_dsc << " lr " << lr << "\n";
    }
    if (val_loss < result.best_val_loss) {
      result.best_val_loss = val_loss;
      result.best_epoch = epoch;
      model.save(result.best_path);
    }
    sched.observe(val_loss);
  }
  model.save(result.last_path);
  return result;
}

}  // namespace gunet
