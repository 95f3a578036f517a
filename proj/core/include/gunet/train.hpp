#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gunet/errors.hpp"
#include "gunet/model.hpp"
#include "gunet/ops.hpp"
#include "gunet/rng.hpp"
#include "gunet/tensor.hpp"

namespace gunet {

struct TrainConfig {
  double learning_rate = 1e-3;
  int plateau_patience_epochs = 20;
  double lr_decay_factor = 0.5;
  int batch_size = 16;
  int epochs = 30;
  int batches_per_epoch = 50;
  std::uint64_t seed = 0;
  double data_regime_fraction = 1.0;  // training subset fraction, halving steps
  bool augment_baseline = false;      // roto-reflection training augmentation (off by default)
};

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

template <typename T>
struct AdamState {
  T beta1 = static_cast<T>(0.9);
  T beta2 = static_cast<T>(0.999);
  T eps = static_cast<T>(1e-8);
  std::int64_t t = 0;
  std::vector<Tensor<T>> m, v;

  static AdamState init(const std::vector<Tensor<T>*>& params) {
    AdamState st;
    st.m.reserve(params.size());
    st.v.reserve(params.size());
    for (auto* p : params) {
      st.m.emplace_back(p->dims());
      st.v.emplace_back(p->dims());
    }
    return st;
  }
};

/// Bias-corrected Adam update, applied in place.
template <typename T>
void adam_step(const std::vector<Tensor<T>*>& params, const std::vector<Tensor<T>>& grads,
               AdamState<T>& st, T lr) {
  if (params.size() != grads.size() || params.size() != st.m.size()) {
    throw ShapeError("adam_step: parameter/gradient/moment count mismatch");
  }
  st.t += 1;
  const double b1 = static_cast<double>(st.beta1), b2 = static_cast<double>(st.beta2);
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(st.t));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(st.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<T>& p = *params[i];
    const Tensor<T>& g = grads[i];
    if (!p.same_dims(g)) throw ShapeError("adam_step: gradient dims mismatch");
    Tensor<T>& m = st.m[i];
    Tensor<T>& v = st.v[i];
    for (std::int64_t j = 0; j < p.size(); ++j) {
      const double gj = static_cast<double>(g[j]);
      const double mj = b1 * static_cast<double>(m[j]) + (1.0 - b1) * gj;
      const double vj = b2 * static_cast<double>(v[j]) + (1.0 - b2) * gj * gj;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      const double mhat = mj / bc1;
      const double vhat = vj / bc2;
      p[j] = static_cast<T>(static_cast<double>(p[j]) -
                            static_cast<double>(lr) * mhat /
                                (std::sqrt(vhat) + static_cast<double>(st.eps)));
    }
  }
}

// ---------------------------------------------------------------------------
// Loss and metric
// ---------------------------------------------------------------------------

template <typename T>
struct LossResult {
  double value = 0.0;
  Tensor<T> grad;  // d loss / d logits
};

/// Mean per-pixel softmax cross-entropy over [B,C,H,W] logits against a
/// [B,H,W] integer mask; gradient is (softmax - onehot) / (B*H*W).
template <typename T>
LossResult<T> pixel_loss(const Tensor<T>& logits, const Tensor<std::uint8_t>& target) {
  if (logits.rank() != 4 || target.rank() != 3) throw ShapeError("pixel_loss shape mismatch");
  const std::int64_t B = logits.dim(0), C = logits.dim(1);
  const std::int64_t hw = logits.dim(2) * logits.dim(3);
  if (target.dim(0) != B || target.dim(1) != logits.dim(2) || target.dim(2) != logits.dim(3)) {
    throw ShapeError("pixel_loss target dims do not match logits");
  }
  LossResult<T> r;
  r.grad = Tensor<T>(logits.dims());
  const double inv_n = 1.0 / static_cast<double>(B * hw);
  double loss = 0.0;
  const T* x = logits.data();
  T* g = r.grad.data();
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t p = 0; p < hw; ++p) {
      const std::int64_t cls = target[b * hw + p];
      if (cls < 0 || cls >= C) {
        throw ConfigError("pixel label " + std::to_string(cls) + " outside [0, " +
                          std::to_string(C) + ")");
      }
      double mx = -1e300;
      for (std::int64_t c = 0; c < C; ++c) {
        mx = std::max(mx, static_cast<double>(x[(b * C + c) * hw + p]));
      }
      double denom = 0.0;
      for (std::int64_t c = 0; c < C; ++c) {
        denom += std::exp(static_cast<double>(x[(b * C + c) * hw + p]) - mx);
      }
      for (std::int64_t c = 0; c < C; ++c) {
        const double soft = std::exp(static_cast<double>(x[(b * C + c) * hw + p]) - mx) / denom;
        g[(b * C + c) * hw + p] = static_cast<T>((soft - (c == cls ? 1.0 : 0.0)) * inv_n);
        if (c == cls) loss -= std::log(std::max(soft, 1e-300));
      }
    }
  }
  r.value = loss * inv_n;
  return r;
}

/// Micro-aggregated Dice similarity: 2|P@T| / (|P|+|T|), counted over every
/// pixel fed to add(); 1.0 when both prediction and target are empty.
class DiceAccumulator {
 public:
  void add(bool predicted, bool truth) {
    inter_ += (predicted && truth) ? 1 : 0;
    psum_ += predicted ? 1 : 0;
    tsum_ += truth ? 1 : 0;
  }

  void add_masks(const Tensor<std::uint8_t>& pred, const Tensor<std::uint8_t>& target) {
    if (pred.size() != target.size()) throw ShapeError("dice: mask size mismatch");
    for (std::int64_t i = 0; i < pred.size(); ++i) add(pred[i] != 0, target[i] != 0);
  }

  double value() const {
    if (psum_ + tsum_ == 0) return 1.0;
    return 2.0 * static_cast<double>(inter_) / static_cast<double>(psum_ + tsum_);
  }

 private:
  std::int64_t inter_ = 0, psum_ = 0, tsum_ = 0;
};

inline double dice_coefficient(const Tensor<std::uint8_t>& pred,
                               const Tensor<std::uint8_t>& target) {
  if (!pred.same_dims(target)) throw ShapeError("dice: mask dims mismatch");
  DiceAccumulator acc;
  acc.add_masks(pred, target);
  return acc.value();
}

/// argmax over the class axis of [B,C,H,W], as a [B,H,W] mask of class ids.
template <typename T>
Tensor<std::uint8_t> argmax_predictions(const Tensor<T>& logits) {
  const std::int64_t B = logits.dim(0), C = logits.dim(1);
  const std::int64_t hw = logits.dim(2) * logits.dim(3);
  Tensor<std::uint8_t> out({B, logits.dim(2), logits.dim(3)});
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t p = 0; p < hw; ++p) {
      std::int64_t best = 0;
      T bv = logits[(b * C + 0) * hw + p];
      for (std::int64_t c = 1; c < C; ++c) {
        const T v = logits[(b * C + c) * hw + p];
        if (v > bv) {
          bv = v;
          best = c;
        }
      }
      out[b * hw + p] = static_cast<std::uint8_t>(best);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Learning-rate plateau schedule
// ---------------------------------------------------------------------------

/// Halves the rate after `patience` consecutive epochs without a strictly
/// lower validation loss; the window restarts after each decay.
class PlateauScheduler {
 public:
  PlateauScheduler(double lr, int patience, double factor)
      : lr_(lr), patience_(patience), factor_(factor) {}

  double lr() const { return lr_; }

  void observe(double val_loss) {
    if (val_loss < best_) {
      best_ = val_loss;
      since_improve_ = 0;
      return;
    }
    since_improve_ += 1;
    if (since_improve_ >= patience_) {
      lr_ *= factor_;
      since_improve_ = 0;
    }
  }

 private:
  double lr_;
  int patience_;
  double factor_;
  double best_ = 1e300;
  int since_improve_ = 0;
};

// ---------------------------------------------------------------------------
// Regime subsampling
// ---------------------------------------------------------------------------

/// Deterministic stratified subset: items are grouped by tag, each stratum is
/// shuffled with a tag-derived seed and cut to round(fraction * n).
inline std::vector<std::size_t> subsample_regime(const std::vector<std::string>& tags,
                                                 double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0) || fraction > 1.0) {
    throw ConfigError("regime fraction must be in (0, 1]");
  }
  std::map<std::string, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < tags.size(); ++i) strata[tags[i]].push_back(i);
  std::vector<std::size_t> keep;
  for (auto& [tag, items] : strata) {
    std::uint64_t h = seed;
    for (char c : tag) h = Rng::mix(h, static_cast<std::uint64_t>(c));
    Rng rng(h);
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(i)));
      std::swap(items[i - 1], items[j]);
    }
    const auto take = static_cast<std::size_t>(
        std::llround(fraction * static_cast<double>(items.size())));
    for (std::size_t i = 0; i < take && i < items.size(); ++i) keep.push_back(items[i]);
  }
  if (keep.empty()) throw ConfigError("regime fraction leaves no training samples");
  std::sort(keep.begin(), keep.end());
  return keep;
}

// ---------------------------------------------------------------------------
// Roto-reflection stability report
// ---------------------------------------------------------------------------

struct StabilityReport {
  Tensor<double> mean;  // [H,W] mean foreground probability, canonical view
  Tensor<double> stdev; // [H,W] per-pixel std across the inverse-mapped transforms
  double max_std = 0.0;
  double mean_std = 0.0;
};

/// Predict on every roto-reflection of the input, inverse-map each
/// probability map back to the canonical orientation, and report per-pixel
/// mean/std across the stack. `report_group` picks the transform set and is
/// independent of the model's own group.
template <typename T>
StabilityReport stability_report(GUNet<T>& model, const Tensor<T>& image,
                                 GroupSpec report_group, int foreground_class = 1) {
  if (image.rank() != 3) throw ShapeError("stability_report expects a [C,H,W] image");
  if (image.dim(1) != image.dim(2)) throw ConfigError("stability_report needs a square image");
  const std::int64_t h = image.dim(1), w = image.dim(2);
  Tensor<T> batch({1, image.dim(0), h, w}, image.values());
  auto elems = group_elements(report_group);
  const auto S = elems.size();
  std::vector<Tensor<T>> maps;
  maps.reserve(S);
  for (const auto& g : elems) {
    Tensor<T> tx = apply_input_transform(g, batch);
    Tensor<T> logits = model.forward(tx, BatchNormMode::eval);
    Tensor<T> probs = softmax_channels(logits);
    // foreground probability plane as [1,1,H,W] for the inverse mapping
    Tensor<T> fg({1, 1, h, w});
    const std::int64_t off = foreground_class * h * w;
    for (std::int64_t p = 0; p < h * w; ++p) fg[p] = probs[off + p];
    maps.push_back(apply_input_transform(inverse(g, GroupSpec::p4m()), fg));
  }
  StabilityReport rep;
  rep.mean = Tensor<double>({h, w});
  rep.stdev = Tensor<double>({h, w});
  double std_sum = 0.0;
  for (std::int64_t p = 0; p < h * w; ++p) {
    double sum = 0.0;
    for (const auto& m : maps) sum += static_cast<double>(m[p]);
    const double mean = sum / static_cast<double>(S);
    double sq = 0.0;
    for (const auto& m : maps) {
      const double d = static_cast<double>(m[p]) - mean;
      sq += d * d;
    }
    const double sd = std::sqrt(sq / static_cast<double>(S));
    rep.mean[p] = mean;
    rep.stdev[p] = sd;
    rep.max_std = std::max(rep.max_std, sd);
    std_sum += sd;
  }
  rep.mean_std = std_sum / static_cast<double>(h * w);
  return rep;
}

}  // namespace gunet
