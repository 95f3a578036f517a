#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "gunet/checkpoint.hpp"
#include "gunet/errors.hpp"
#include "gunet/ops.hpp"
#include "gunet/rng.hpp"
#include "gunet/tensor.hpp"

namespace gunet {

struct ArchitectureConfig {
  GroupKind group = GroupKind::p4m;
  int depth = 4;
  int base_width = 16;
  int input_channels = 3;
  int num_classes = 2;
  int kernel_size = 3;
  bool skip_connections = true;

  GroupSpec group_spec() const { return {group}; }
};

std::string architecture_config_to_json(const ArchitectureConfig& cfg);
ArchitectureConfig architecture_config_from_json(const std::string& text);

/// Channel budget correction: the width is divided by the square root of the
/// group size (rounded, floor 1) so parameter counts stay matched across
/// groups at equal base width.
inline int matched_width(int base, GroupSpec group) {
  if (base < 1) throw ConfigError("base width must be >= 1");
  double corrected = static_cast<double>(base) / std::sqrt(static_cast<double>(group.stabilizer_size()));
  return std::max(1, static_cast<int>(std::llround(corrected)));
}

/// The 3x3/stride-2/pad-1 pooling chain stays roto-reflection aligned only
/// while every pooled size is odd: valid input sizes satisfy
/// size = 1 (mod 2^depth).
inline bool input_size_valid(std::int64_t size, int depth) {
  if (size < 1) return false;
  std::int64_t s = size;
  for (int l = 0; l < depth; ++l) {
    if (s % 2 == 0) return false;
    s = (s + 1) / 2;
  }
  return true;
}

inline std::int64_t nearest_valid_input_size(std::int64_t size, int depth) {
  const std::int64_t step = std::int64_t{1} << depth;
  std::int64_t down = ((size - 1) / step) * step + 1;
  std::int64_t up = down + step;
  if (down < step + 1) down = step + 1;  // smallest size with a nontrivial bottleneck
  return (size - down <= up - size) ? down : up;
}

template <typename T>
struct LiftUnit {
  LiftingFilterBank<T> bank;
  GroupBatchNormState<T> bn;
  int slot = -1;  // first of this unit's four parameter slots
};

template <typename T>
struct GUnit {
  GroupFilterBank<T> bank;
  GroupBatchNormState<T> bn;
  int slot = -1;
};

template <typename T>
struct ProjUnit {
  ProjectionFilterBank<T> bank;
  int slot = -1;
};

template <typename T>
struct UnitCache {
  GroupFeatureMap<T> conv_in;
  BatchNormCache<T> bn;
  GroupFeatureMap<T> out;  // post-relu
};

template <typename T>
struct ModelCache {
  Tensor<T> input;
  BatchNormCache<T> lift_bn;
  GroupFeatureMap<T> lift_out;
  std::vector<UnitCache<T>> enc;                 // conv units in forward order
  std::vector<Tensor<std::int32_t>> pool_argmax;  // one per level
  std::vector<std::int64_t> pool_in_h, pool_in_w;
  std::vector<UnitCache<T>> dec_up;   // transposed conv units, level depth..1
  std::vector<UnitCache<T>> dec_conv; // decoder conv pairs, level depth..1
  GroupFeatureMap<T> proj_in;
};

/// Encoder-decoder over a group: lifting conv in, two-conv blocks with
/// 3x3 max pooling down, transposed group convs with skip concatenation up,
/// projection conv out. With group = p1 this is a plain U-Net; the group is
/// the only thing that changes between the baseline and the equivariant model.
template <typename T>
class GUNet {
 public:
  GUNet() = default;

  static GUNet build(const ArchitectureConfig& cfg, std::uint64_t seed) {
    if (cfg.depth < 1) throw ConfigError("depth must be >= 1");
    if (cfg.base_width < 1) throw ConfigError("base width must be >= 1");
    if (cfg.kernel_size < 1 || cfg.kernel_size % 2 == 0) {
      throw ConfigError("kernel size must be odd and positive");
    }
    if (cfg.num_classes < 2) throw ConfigError("need at least two classes");
    GUNet net;
    net.cfg_ = cfg;
    net.spec_ = cfg.group_spec();
    const int k = cfg.kernel_size;
    const GroupSpec g = net.spec_;
    auto width = [&](int level) {
      return static_cast<std::int64_t>(matched_width(cfg.base_width << (level - 1), g));
    };

    net.lift_.bank = make_lifting_bank<T>(g, width(1), cfg.input_channels, k);
    net.lift_.bn = make_batchnorm_state<T>(width(1));
    net.enc1b_ = {make_group_bank<T>(g, width(1), width(1), k), make_batchnorm_state<T>(width(1))};
    for (int l = 2; l <= cfg.depth; ++l) {
      net.enc_.push_back({GUnit<T>{make_group_bank<T>(g, width(l), width(l - 1), k),
                                   make_batchnorm_state<T>(width(l))},
                          GUnit<T>{make_group_bank<T>(g, width(l), width(l), k),
                                   make_batchnorm_state<T>(width(l))}});
    }
    const int bot = cfg.depth + 1;
    net.bot_a_ = {make_group_bank<T>(g, width(bot), width(cfg.depth), k),
                  make_batchnorm_state<T>(width(bot))};
    net.bot_b_ = {make_group_bank<T>(g, width(bot), width(bot), k),
                  make_batchnorm_state<T>(width(bot))};
    for (int l = cfg.depth; l >= 1; --l) {
      DecLevel dl;
      // bank used in the transposed direction: consumes width(l+1), emits width(l)
      dl.up = {make_group_bank<T>(g, width(l + 1), width(l), k, true, true),
               make_batchnorm_state<T>(width(l))};
      const std::int64_t in_a = cfg.skip_connections ? 2 * width(l) : width(l);
      dl.a = {make_group_bank<T>(g, width(l), in_a, k), make_batchnorm_state<T>(width(l))};
      dl.b = {make_group_bank<T>(g, width(l), width(l), k), make_batchnorm_state<T>(width(l))};
      net.dec_.push_back(std::move(dl));
    }
    net.proj_.bank = make_projection_bank<T>(g, cfg.num_classes, width(1), k);

    net.assign_slots();
    net.init_weights(seed);
    return net;
  }

  const ArchitectureConfig& config() const { return cfg_; }
  GroupSpec group() const { return spec_; }

  /// (name, tensor) for every learnable parameter, in fixed forward order.
  void visit_parameters(const std::function<void(const std::string&, Tensor<T>&)>& f) {
    visit_units([&](const std::string& prefix, Tensor<T>& w, Tensor<T>& b,
                    GroupBatchNormState<T>* bn, int) {
      f(prefix + ".weight", w);
      f(prefix + ".bias", b);
      if (bn) {
        f(prefix + ".bn.gamma", bn->gamma);
        f(prefix + ".bn.beta", bn->beta);
      }
    });
  }

  std::vector<Tensor<T>*> parameters() {
    std::vector<Tensor<T>*> out;
    visit_parameters([&](const std::string&, Tensor<T>& t) { out.push_back(&t); });
    return out;
  }

  std::vector<std::string> parameter_names() {
    std::vector<std::string> out;
    visit_parameters([&](const std::string& n, Tensor<T>&) { out.push_back(n); });
    return out;
  }

  /// Exact element count over weights, biases, gamma and beta.
  std::int64_t count_parameters() {
    std::int64_t n = 0;
    visit_parameters([&](const std::string&, Tensor<T>& t) { n += t.size(); });
    return n;
  }

  void check_input(const Tensor<T>& x) const {
    if (x.rank() != 4) throw ShapeError("model input must be [B,C,H,W]");
    if (x.dim(1) != cfg_.input_channels) {
      throw ShapeError("model expects " + std::to_string(cfg_.input_channels) +
                       " input channels, got " + std::to_string(x.dim(1)));
    }
    for (int d = 2; d <= 3; ++d) {
      if (!input_size_valid(x.dim(d), cfg_.depth)) {
        throw ConfigError("input size " + std::to_string(x.dim(d)) + " breaks the odd pooling chain for depth " +
                          std::to_string(cfg_.depth) + "; nearest valid size is " +
                          std::to_string(nearest_valid_input_size(x.dim(d), cfg_.depth)));
      }
    }
  }

  /// Per-pixel class scores [B, num_classes, H, W].
  Tensor<T> forward(const Tensor<T>& x, BatchNormMode mode, ModelCache<T>* cache = nullptr) {
    check_input(x);
    const int pad = (cfg_.kernel_size - 1) / 2;
    if (cache) {
      cache->enc.clear();
      cache->pool_argmax.clear();
      cache->pool_in_h.clear();
      cache->pool_in_w.clear();
      cache->dec_up.clear();
      cache->dec_conv.clear();
      cache->input = x;
    }

    // encoder
    GroupFeatureMap<T> lifted = lift_conv_forward(x, lift_.bank, pad);
    GroupFeatureMap<T> a = group_batchnorm_forward(lifted, lift_.bn, mode,
                                                   cache ? &cache->lift_bn : nullptr);
    a = make_group_feature_map(relu(a.data), spec_);
    if (cache) cache->lift_out = a;
    a = run_gunit(enc1b_, a, 1, pad, mode, cache, false);
    std::vector<GroupFeatureMap<T>> skips;
    skips.push_back(a);
    for (auto& level : enc_) {
      a = run_pool(a, cache);
      a = run_gunit(level[0], a, 1, pad, mode, cache, false);
      a = run_gunit(level[1], a, 1, pad, mode, cache, false);
      skips.push_back(a);
    }
    a = run_pool(a, cache);
    a = run_gunit(bot_a_, a, 1, pad, mode, cache, false);
    a = run_gunit(bot_b_, a, 1, pad, mode, cache, false);

    // decoder
    for (std::size_t d = 0; d < dec_.size(); ++d) {
      auto& dl = dec_[d];
      GroupFeatureMap<T> up = run_up(dl.up, a, pad, mode, cache);
      const GroupFeatureMap<T>& skip = skips[skips.size() - 1 - d];
      GroupFeatureMap<T> merged =
          cfg_.skip_connections ? concat_channels(up, skip) : std::move(up);
      merged = run_gunit(dl.a, merged, 1, pad, mode, cache, true);
      a = run_gunit(dl.b, merged, 1, pad, mode, cache, true);
    }
    if (cache) cache->proj_in = a;
    return proj_conv_forward(a, proj_.bank, pad);
  }

  /// Gradients for every parameter, aligned with parameters() order.
  std::vector<Tensor<T>> backward(const Tensor<T>& grad_logits, ModelCache<T>& cache) {
    const int pad = (cfg_.kernel_size - 1) / 2;
    std::vector<Tensor<T>> grads(static_cast<std::size_t>(n_slots_));
    auto put = [&](int slot, Tensor<T>&& g0, Tensor<T>&& g1, Tensor<T>* g2 = nullptr,
                   Tensor<T>* g3 = nullptr) {
      grads[static_cast<std::size_t>(slot)] = std::move(g0);
      grads[static_cast<std::size_t>(slot) + 1] = std::move(g1);
      if (g2) grads[static_cast<std::size_t>(slot) + 2] = std::move(*g2);
      if (g3) grads[static_cast<std::size_t>(slot) + 3] = std::move(*g3);
    };

    // projection
    ConvGrads<T> pg = proj_conv_backward(grad_logits, cache.proj_in, proj_.bank, pad);
    put(proj_.slot, std::move(pg.weights), std::move(pg.bias));
    GroupFeatureMap<T> d = make_group_feature_map(std::move(pg.input), spec_);

    // decoder, reverse forward order (level 1 up to depth)
    std::vector<GroupFeatureMap<T>> dskips(dec_.size());
    for (std::size_t i = dec_.size(); i-- > 0;) {
      auto& dl = dec_[i];
      UnitCache<T>& cb = cache.dec_conv[2 * i + 1];
      UnitCache<T>& ca = cache.dec_conv[2 * i];
      d = back_gunit(dl.b, d, cb, 1, pad, grads);
      d = back_gunit(dl.a, d, ca, 1, pad, grads);
      GroupFeatureMap<T> dup = d;
      if (cfg_.skip_connections) {
        auto split = split_channels(d, dec_width(i));
        dup = std::move(split.first);
        dskips[dec_.size() - 1 - i] = std::move(split.second);  // index by encoder level order
      }
      d = back_up(dl.up, dup, cache.dec_up[i], pad, grads);
    }

    // bottleneck
    d = back_gunit(bot_b_, d, cache.enc[cache.enc.size() - 1], 1, pad, grads);
    d = back_gunit(bot_a_, d, cache.enc[cache.enc.size() - 2], 1, pad, grads);

    // encoder, reverse order (level depth down to 1); skip gradients join
    // after each pool backward
    for (std::size_t l = enc_.size() + 2; l-- > 1;) {
      d = back_pool(d, cache, l);  // gradient at encoder level l output
      if (cfg_.skip_connections && !dskips.empty()) {
        add_inplace(d.data, dskips[l - 1].data);
      }
      if (l >= 2) {
        auto& level = enc_[l - 2];
        d = back_gunit(level[1], d, cache.enc[2 * (l - 2) + 2], 1, pad, grads);
        d = back_gunit(level[0], d, cache.enc[2 * (l - 2) + 1], 1, pad, grads);
      }
    }
    d = back_gunit(enc1b_, d, cache.enc[0], 1, pad, grads);

    // lifting unit
    GroupFeatureMap<T> drelu =
        make_group_feature_map(relu_backward(d.data, cache.lift_out.data), spec_);
    BatchNormGrads<T> bng = group_batchnorm_backward(drelu, lift_.bn, cache.lift_bn);
    ConvGrads<T> lg = lift_conv_backward(make_group_feature_map(std::move(bng.input), spec_),
                                         cache.input, lift_.bank, pad);
    put(lift_.slot, std::move(lg.weights), std::move(lg.bias), &bng.gamma, &bng.beta);
    return grads;
  }

  void save(const std::string& path) {
    std::vector<CheckpointRecord> records;
    visit_parameters([&](const std::string& n, Tensor<T>& t) {
      records.push_back(make_tensor_record(n, t));
    });
    visit_bn_state([&](const std::string& n, Tensor<T>& t) {
      records.push_back(make_tensor_record(n, t));
    });
    records.push_back(make_text_record("__config__", architecture_config_to_json(cfg_)));
    write_checkpoint(path, std::move(records));
  }

  static GUNet load(const std::string& path) {
    auto records = read_checkpoint(path);
    return from_records(records);
  }

  static GUNet from_records(const std::vector<CheckpointRecord>& records) {
    const CheckpointRecord* cfg_rec = nullptr;
    std::map<std::string, const CheckpointRecord*> by_name;
    for (const auto& rec : records) {
      if (rec.name == "__config__") {
        cfg_rec = &rec;
      } else {
        by_name[rec.name] = &rec;
      }
    }
    if (!cfg_rec) throw StateError("model checkpoint is missing the __config__ record");
    GUNet net = build(architecture_config_from_json(text_from_record(*cfg_rec)), 0);
    auto restore = [&](const std::string& n, Tensor<T>& t) {
      auto it = by_name.find(n);
      if (it == by_name.end()) throw StateError("model checkpoint is missing record '" + n + "'");
      Tensor<T> loaded = tensor_from_record<T>(*it->second);
      if (!loaded.same_dims(t)) {
        throw StateError("model checkpoint record '" + n + "' has dims " +
                         dims_to_string(loaded.dims()) + ", expected " + dims_to_string(t.dims()));
      }
      t = std::move(loaded);
      by_name.erase(it);
    };
    net.visit_parameters(restore);
    net.visit_bn_state(restore);
    if (!by_name.empty()) {
      throw StateError("model checkpoint has unexpected record '" + by_name.begin()->first + "'");
    }
    return net;
  }

  /// Exact widening/narrowing of every parameter and running statistic.
  template <typename U>
  GUNet<U> cast() {
    GUNet<U> out = GUNet<U>::build(cfg_, 0);
    auto src_p = collect_all_tensors();
    std::vector<Tensor<U>*> dst_p = out.collect_all_tensors();
    for (std::size_t i = 0; i < src_p.size(); ++i) *dst_p[i] = src_p[i]->template cast<U>();
    return out;
  }

  void visit_bn_state(const std::function<void(const std::string&, Tensor<T>&)>& f) {
    visit_units([&](const std::string& prefix, Tensor<T>&, Tensor<T>&, GroupBatchNormState<T>* bn,
                    int) {
      if (bn) {
        f(prefix + ".bn.running_mean", bn->running_mean);
        f(prefix + ".bn.running_var", bn->running_var);
      }
    });
  }

  std::vector<Tensor<T>*> collect_all_tensors() {
    std::vector<Tensor<T>*> out;
    visit_parameters([&](const std::string&, Tensor<T>& t) { out.push_back(&t); });
    visit_bn_state([&](const std::string&, Tensor<T>& t) { out.push_back(&t); });
    return out;
  }

  // direct bank access for verification harnesses and fault-injection tests
  LiftUnit<T>& lift_unit() { return lift_; }
  ProjUnit<T>& proj_unit() { return proj_; }

 private:
  template <typename U>
  friend class GUNet;

  struct DecLevel {
    GUnit<T> up;
    GUnit<T> a, b;
  };

  std::int64_t dec_width(std::size_t dec_index) const {
    // dec_[i] targets level depth - i
    const int level = cfg_.depth - static_cast<int>(dec_index);
    return matched_width(cfg_.base_width << (level - 1), spec_);
  }

  void visit_units(const std::function<void(const std::string&, Tensor<T>&, Tensor<T>&,
                                            GroupBatchNormState<T>*, int)>& f) {
    f("enc1.conv1", lift_.bank.weights, lift_.bank.bias, &lift_.bn, 0);
    f("enc1.conv2", enc1b_.bank.weights, enc1b_.bank.bias, &enc1b_.bn, 1);
    int unit_id = 2;
    for (std::size_t l = 0; l < enc_.size(); ++l) {
      std::string p = "enc" + std::to_string(l + 2);
      f(p + ".conv1", enc_[l][0].bank.weights, enc_[l][0].bank.bias, &enc_[l][0].bn, unit_id++);
      f(p + ".conv2", enc_[l][1].bank.weights, enc_[l][1].bank.bias, &enc_[l][1].bn, unit_id++);
    }
    f("bottleneck.conv1", bot_a_.bank.weights, bot_a_.bank.bias, &bot_a_.bn, unit_id++);
    f("bottleneck.conv2", bot_b_.bank.weights, bot_b_.bank.bias, &bot_b_.bn, unit_id++);
    for (std::size_t i = 0; i < dec_.size(); ++i) {
      std::string p = "dec" + std::to_string(cfg_.depth - static_cast<int>(i));
      f(p + ".up", dec_[i].up.bank.weights, dec_[i].up.bank.bias, &dec_[i].up.bn, unit_id++);
      f(p + ".conv1", dec_[i].a.bank.weights, dec_[i].a.bank.bias, &dec_[i].a.bn, unit_id++);
      f(p + ".conv2", dec_[i].b.bank.weights, dec_[i].b.bank.bias, &dec_[i].b.bn, unit_id++);
    }
    f("proj", proj_.bank.weights, proj_.bank.bias, nullptr, unit_id++);
  }

  void assign_slots() {
    int slot = 0;
    visit_units([&](const std::string& name, Tensor<T>&, Tensor<T>&, GroupBatchNormState<T>* bn,
                    int) {
      int* target = slot_for(name);
      *target = slot;
      slot += bn ? 4 : 2;
    });
    n_slots_ = slot;
  }

  int* slot_for(const std::string& name) {
    if (name == "enc1.conv1") return &lift_.slot;
    if (name == "enc1.conv2") return &enc1b_.slot;
    if (name == "bottleneck.conv1") return &bot_a_.slot;
    if (name == "bottleneck.conv2") return &bot_b_.slot;
    if (name == "proj") return &proj_.slot;
    for (std::size_t l = 0; l < enc_.size(); ++l) {
      std::string p = "enc" + std::to_string(l + 2);
      if (name == p + ".conv1") return &enc_[l][0].slot;
      if (name == p + ".conv2") return &enc_[l][1].slot;
    }
    for (std::size_t i = 0; i < dec_.size(); ++i) {
      std::string p = "dec" + std::to_string(cfg_.depth - static_cast<int>(i));
      if (name == p + ".up") return &dec_[i].up.slot;
      if (name == p + ".conv1") return &dec_[i].a.slot;
      if (name == p + ".conv2") return &dec_[i].b.slot;
    }
    throw StateError("unknown unit name " + name);
  }

  void init_weights(std::uint64_t seed) {
    Rng rng(seed);
    const std::int64_t S = spec_.stabilizer_size();
    const std::int64_t kk =
        static_cast<std::int64_t>(cfg_.kernel_size) * static_cast<std::int64_t>(cfg_.kernel_size);
    auto fill = [&](Tensor<T>& w, std::int64_t fan_in) {
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
      for (std::int64_t i = 0; i < w.size(); ++i) {
        w[i] = static_cast<T>(rng.uniform(-bound, bound));
      }
    };
    fill(lift_.bank.weights, lift_.bank.cin() * kk);
    auto fill_gunit = [&](GUnit<T>& u, bool transposed) {
      // fan over the consumed side, orientation channels included
      const std::int64_t consumed = transposed ? u.bank.cout() : u.bank.cin();
      fill(u.bank.weights, consumed * S * kk);
    };
    fill_gunit(enc1b_, false);
    for (auto& level : enc_) {
      fill_gunit(level[0], false);
      fill_gunit(level[1], false);
    }
    fill_gunit(bot_a_, false);
    fill_gunit(bot_b_, false);
    for (auto& dl : dec_) {
      fill_gunit(dl.up, true);
      fill_gunit(dl.a, false);
      fill_gunit(dl.b, false);
    }
    fill(proj_.bank.weights, proj_.bank.cin() * S * kk);
  }

  GroupFeatureMap<T> run_gunit(GUnit<T>& u, const GroupFeatureMap<T>& x, int stride, int pad,
                               BatchNormMode mode, ModelCache<T>* cache, bool decoder_phase) {
    UnitCache<T>* uc = nullptr;
    if (cache) {
      auto& vec = decoder_phase ? cache->dec_conv : cache->enc;
      vec.push_back({});
      uc = &vec.back();
      uc->conv_in = x;
    }
    GroupFeatureMap<T> y = group_conv_forward(x, u.bank, stride, pad);
    y = group_batchnorm_forward(y, u.bn, mode, uc ? &uc->bn : nullptr);
    y = make_group_feature_map(relu(y.data), spec_);
    if (uc) uc->out = y;
    return y;
  }

  GroupFeatureMap<T> run_up(GUnit<T>& u, const GroupFeatureMap<T>& x, int pad, BatchNormMode mode,
                            ModelCache<T>* cache) {
    UnitCache<T>* uc = nullptr;
    if (cache) {
      cache->dec_up.push_back({});
      uc = &cache->dec_up.back();
      uc->conv_in = x;
    }
    GroupFeatureMap<T> y = group_transposed_conv_forward(x, u.bank, 2, pad);
    y = group_batchnorm_forward(y, u.bn, mode, uc ? &uc->bn : nullptr);
    y = make_group_feature_map(relu(y.data), spec_);
    if (uc) uc->out = y;
    return y;
  }

  GroupFeatureMap<T> run_pool(const GroupFeatureMap<T>& x, ModelCache<T>* cache) {
    MaxPoolResult<T> r = maxpool2d(x);
    if (cache) {
      cache->pool_argmax.push_back(std::move(r.argmax));
      cache->pool_in_h.push_back(x.height());
      cache->pool_in_w.push_back(x.width());
    }
    return std::move(r.output);
  }

  GroupFeatureMap<T> back_gunit(GUnit<T>& u, const GroupFeatureMap<T>& dy, UnitCache<T>& uc,
                                int stride, int pad, std::vector<Tensor<T>>& grads) {
    GroupFeatureMap<T> drelu = make_group_feature_map(relu_backward(dy.data, uc.out.data), spec_);
    BatchNormGrads<T> bng = group_batchnorm_backward(drelu, u.bn, uc.bn);
    ConvGrads<T> cg = group_conv_backward(make_group_feature_map(std::move(bng.input), spec_),
                                          uc.conv_in, u.bank, stride, pad);
    grads[static_cast<std::size_t>(u.slot)] = std::move(cg.weights);
    grads[static_cast<std::size_t>(u.slot) + 1] = std::move(cg.bias);
    grads[static_cast<std::size_t>(u.slot) + 2] = std::move(bng.gamma);
    grads[static_cast<std::size_t>(u.slot) + 3] = std::move(bng.beta);
    return make_group_feature_map(std::move(cg.input), spec_);
  }

  GroupFeatureMap<T> back_up(GUnit<T>& u, const GroupFeatureMap<T>& dy, UnitCache<T>& uc, int pad,
                             std::vector<Tensor<T>>& grads) {
    GroupFeatureMap<T> drelu = make_group_feature_map(relu_backward(dy.data, uc.out.data), spec_);
    BatchNormGrads<T> bng = group_batchnorm_backward(drelu, u.bn, uc.bn);
    ConvGrads<T> cg = group_transposed_conv_backward(
        make_group_feature_map(std::move(bng.input), spec_), uc.conv_in, u.bank, 2, pad);
    grads[static_cast<std::size_t>(u.slot)] = std::move(cg.weights);
    grads[static_cast<std::size_t>(u.slot) + 1] = std::move(cg.bias);
    grads[static_cast<std::size_t>(u.slot) + 2] = std::move(bng.gamma);
    grads[static_cast<std::size_t>(u.slot) + 3] = std::move(bng.beta);
    return make_group_feature_map(std::move(cg.input), spec_);
  }

  GroupFeatureMap<T> back_pool(const GroupFeatureMap<T>& dy, ModelCache<T>& cache,
                               std::size_t level) {
    const std::size_t idx = level - 1;
    return maxpool2d_backward(dy, cache.pool_argmax[idx], cache.pool_in_h[idx],
                              cache.pool_in_w[idx]);
  }

  static GroupFeatureMap<T> concat_channels(const GroupFeatureMap<T>& a,
                                            const GroupFeatureMap<T>& b) {
    if (a.batch() != b.batch() || a.orientations() != b.orientations() ||
        a.height() != b.height() || a.width() != b.width()) {
      throw StateError("skip concatenation shape mismatch (internal invariant violated)");
    }
    Tensor<T> out({a.batch(), a.channels() + b.channels(), a.orientations(), a.height(), a.width()});
    const std::int64_t plane = a.orientations() * a.height() * a.width();
    for (std::int64_t bi = 0; bi < a.batch(); ++bi) {
      T* dst = out.data() + bi * (a.channels() + b.channels()) * plane;
      const T* pa = a.data.data() + bi * a.channels() * plane;
      const T* pb = b.data.data() + bi * b.channels() * plane;
      std::copy(pa, pa + a.channels() * plane, dst);
      std::copy(pb, pb + b.channels() * plane, dst + a.channels() * plane);
    }
    return make_group_feature_map(std::move(out), a.group);
  }

  std::pair<GroupFeatureMap<T>, GroupFeatureMap<T>> split_channels(const GroupFeatureMap<T>& m,
                                                                   std::int64_t first) const {
    const std::int64_t rest = m.channels() - first;
    Tensor<T> a({m.batch(), first, m.orientations(), m.height(), m.width()});
    Tensor<T> b({m.batch(), rest, m.orientations(), m.height(), m.width()});
    const std::int64_t plane = m.orientations() * m.height() * m.width();
    for (std::int64_t bi = 0; bi < m.batch(); ++bi) {
      const T* src = m.data.data() + bi * m.channels() * plane;
      std::copy(src, src + first * plane, a.data() + bi * first * plane);
      std::copy(src + first * plane, src + m.channels() * plane, b.data() + bi * rest * plane);
    }
    return {make_group_feature_map(std::move(a), m.group),
            make_group_feature_map(std::move(b), m.group)};
  }

  static void add_inplace(Tensor<T>& dst, const Tensor<T>& src) {
    if (!dst.same_dims(src)) throw StateError("gradient accumulation shape mismatch");
    for (std::int64_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }

  ArchitectureConfig cfg_;
  GroupSpec spec_;
  LiftUnit<T> lift_;
  GUnit<T> enc1b_;
  std::vector<std::array<GUnit<T>, 2>> enc_;
  GUnit<T> bot_a_, bot_b_;
  std::vector<DecLevel> dec_;
  ProjUnit<T> proj_;
  int n_slots_ = 0;
};

}  // namespace gunet
