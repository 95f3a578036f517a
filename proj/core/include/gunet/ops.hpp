#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "gunet/conv.hpp"
#include "gunet/errors.hpp"
#include "gunet/group.hpp"
#include "gunet/tensor.hpp"

namespace gunet {

/// Feature map on a group: [batch, channels, S, H, W] with S the stabilizer
/// size of `group`. Planar maps ([B,C,H,W] tensors) are the S=1 boundary of
/// the network: the input image and the output score map.
template <typename T>
struct GroupFeatureMap {
  Tensor<T> data;
  GroupSpec group;

  std::int64_t batch() const { return data.dim(0); }
  std::int64_t channels() const { return data.dim(1); }
  std::int64_t orientations() const { return data.dim(2); }
  std::int64_t height() const { return data.dim(3); }
  std::int64_t width() const { return data.dim(4); }
};

template <typename T>
GroupFeatureMap<T> make_group_feature_map(Tensor<T> data, GroupSpec group) {
  if (data.rank() != 5) throw ShapeError("group feature map must be [B,C,S,H,W]");
  if (data.dim(2) != group.stabilizer_size()) {
    throw ShapeError("orientation axis " + std::to_string(data.dim(2)) + " does not match group " +
                     group.name());
  }
  return {std::move(data), group};
}

/// Planar filters correlated against all stabilizer-transformed copies;
/// produces a group feature map from a planar one.
template <typename T>
struct LiftingFilterBank {
  GroupSpec group;
  Tensor<T> weights;  // [Cout, Cin, k, k]
  Tensor<T> bias;     // [Cout], may be empty
  std::shared_ptr<const IndexTable> table;

  std::int64_t cout() const { return weights.dim(0); }
  std::int64_t cin() const { return weights.dim(1); }
  int kernel() const { return static_cast<int>(weights.dim(2)); }
};

/// Filters defined on the group itself; transformed per output orientation
/// by an orientation permutation plus a spatial roto-reflection.
/// The same bank drives both the strided group convolution (Cin -> Cout)
/// and its exact adjoint, the transposed group convolution (Cout -> Cin);
/// a non-empty bias must be sized for the produced channels of the
/// direction the bank is used in.
template <typename T>
struct GroupFilterBank {
  GroupSpec group;
  Tensor<T> weights;  // [Cout, Cin, S, k, k]
  Tensor<T> bias;
  std::shared_ptr<const IndexTable> table;

  std::int64_t cout() const { return weights.dim(0); }
  std::int64_t cin() const { return weights.dim(1); }
  int kernel() const { return static_cast<int>(weights.dim(3)); }
};

/// A single planar filter shared across orientation channels following the
/// group transformations; collapses a group feature map to a planar one.
template <typename T>
struct ProjectionFilterBank {
  GroupSpec group;
  Tensor<T> weights;  // [Cout, Cin, k, k]
  Tensor<T> bias;
  std::shared_ptr<const IndexTable> table;

  std::int64_t cout() const { return weights.dim(0); }
  std::int64_t cin() const { return weights.dim(1); }
  int kernel() const { return static_cast<int>(weights.dim(2)); }
};

template <typename T>
LiftingFilterBank<T> make_lifting_bank(GroupSpec group, std::int64_t cout, std::int64_t cin, int k,
                                       bool with_bias = true) {
  if (k % 2 == 0) throw ShapeError("kernel size must be odd");
  LiftingFilterBank<T> bank;
  bank.group = group;
  bank.weights = Tensor<T>({cout, cin, k, k});
  if (with_bias) bank.bias = Tensor<T>({cout});
  bank.table = shared_index_table(group, k);
  return bank;
}

template <typename T>
GroupFilterBank<T> make_group_bank(GroupSpec group, std::int64_t cout, std::int64_t cin, int k,
                                   bool with_bias = true, bool transposed_use = false) {
  if (k % 2 == 0) throw ShapeError("kernel size must be odd");
  GroupFilterBank<T> bank;
  bank.group = group;
  bank.weights = Tensor<T>({cout, cin, group.stabilizer_size(), k, k});
  if (with_bias) bank.bias = Tensor<T>({transposed_use ? cin : cout});
  bank.table = shared_index_table(group, k);
  return bank;
}

template <typename T>
ProjectionFilterBank<T> make_projection_bank(GroupSpec group, std::int64_t cout, std::int64_t cin,
                                             int k, bool with_bias = true) {
  if (k % 2 == 0) throw ShapeError("kernel size must be odd");
  ProjectionFilterBank<T> bank;
  bank.group = group;
  bank.weights = Tensor<T>({cout, cin, k, k});
  if (with_bias) bank.bias = Tensor<T>({cout});
  bank.table = shared_index_table(group, k);
  return bank;
}

namespace detail {

// Stabilizer-transformed copies of planar filters, fused over orientations:
// E[(co*S+s), ci, p] = W[co, ci, planar[s][p]]
template <typename T>
Tensor<T> fuse_lifting_filters(const LiftingFilterBank<T>& bank) {
  const std::int64_t S = bank.group.stabilizer_size();
  const std::int64_t cout = bank.cout(), cin = bank.cin();
  const std::int64_t kk = bank.kernel() * bank.kernel();
  Tensor<T> fused({cout * S, cin, bank.kernel(), bank.kernel()});
  const T* w = bank.weights.data();
  T* e = fused.data();
  for (std::int64_t co = 0; co < cout; ++co) {
    for (std::int64_t s = 0; s < S; ++s) {
      const auto& row = bank.table->planar[static_cast<std::size_t>(s)];
      for (std::int64_t ci = 0; ci < cin; ++ci) {
        T* dst = e + ((co * S + s) * cin + ci) * kk;
        const T* src = w + (co * cin + ci) * kk;
        for (std::int64_t p = 0; p < kk; ++p) dst[p] = src[row[static_cast<std::size_t>(p)]];
      }
    }
  }
  return fused;
}

template <typename T>
void scatter_lifting_filter_grad(const Tensor<T>& fused_grad, const LiftingFilterBank<T>& bank,
                                 Tensor<T>& weight_grad) {
  const std::int64_t S = bank.group.stabilizer_size();
  const std::int64_t cout = bank.cout(), cin = bank.cin();
  const std::int64_t kk = bank.kernel() * bank.kernel();
  const T* ge = fused_grad.data();
  T* gw = weight_grad.data();
  for (std::int64_t co = 0; co < cout; ++co) {
    for (std::int64_t s = 0; s < S; ++s) {
      const auto& row = bank.table->planar[static_cast<std::size_t>(s)];
      for (std::int64_t ci = 0; ci < cin; ++ci) {
        const T* src = ge + ((co * S + s) * cin + ci) * kk;
        T* dst = gw + (co * cin + ci) * kk;
        for (std::int64_t p = 0; p < kk; ++p) dst[row[static_cast<std::size_t>(p)]] += src[p];
      }
    }
  }
}

// E[(co*S+so), (ci*S+si), p] = W[co, ci, full[so][si*k*k + p]]
template <typename T>
Tensor<T> fuse_group_filters(const GroupFilterBank<T>& bank) {
  const std::int64_t S = bank.group.stabilizer_size();
  const std::int64_t cout = bank.cout(), cin = bank.cin();
  const std::int64_t kk = bank.kernel() * bank.kernel();
  Tensor<T> fused({cout * S, cin * S, bank.kernel(), bank.kernel()});
  const T* w = bank.weights.data();
  T* e = fused.data();
  for (std::int64_t co = 0; co < cout; ++co) {
    for (std::int64_t so = 0; so < S; ++so) {
      const auto& row = bank.table->full[static_cast<std::size_t>(so)];
      for (std::int64_t ci = 0; ci < cin; ++ci) {
        const T* src = w + (co * cin + ci) * S * kk;
        for (std::int64_t si = 0; si < S; ++si) {
          T* dst = e + (((co * S + so) * cin + ci) * S + si) * kk;
          const std::int32_t* idx = row.data() + si * kk;
          for (std::int64_t p = 0; p < kk; ++p) dst[p] = src[idx[p]];
        }
      }
    }
  }
  return fused;
}

template <typename T>
void scatter_group_filter_grad(const Tensor<T>& fused_grad, const GroupFilterBank<T>& bank,
                               Tensor<T>& weight_grad) {
  const std::int64_t S = bank.group.stabilizer_size();
  const std::int64_t cout = bank.cout(), cin = bank.cin();
  const std::int64_t kk = bank.kernel() * bank.kernel();
  const T* ge = fused_grad.data();
  T* gw = weight_grad.data();
  for (std::int64_t co = 0; co < cout; ++co) {
    for (std::int64_t so = 0; so < S; ++so) {
      const auto& row = bank.table->full[static_cast<std::size_t>(so)];
      for (std::int64_t ci = 0; ci < cin; ++ci) {
        T* dst = gw + (co * cin + ci) * S * kk;
        for (std::int64_t si = 0; si < S; ++si) {
          const T* src = ge + (((co * S + so) * cin + ci) * S + si) * kk;
          const std::int32_t* idx = row.data() + si * kk;
          for (std::int64_t p = 0; p < kk; ++p) dst[idx[p]] += src[p];
        }
      }
    }
  }
}

// E[co, (ci*S+s), p] = W[co, ci, planar[s][p]]
template <typename T>
Tensor<T> fuse_projection_filters(const ProjectionFilterBank<T>& bank) {
  const std::int64_t S = bank.group.stabilizer_size();
  const std::int64_t cout = bank.cout(), cin = bank.cin();
  const std::int64_t kk = bank.kernel() * bank.kernel();
  Tensor<T> fused({cout, cin * S, bank.kernel(), bank.kernel()});
  const T* w = bank.weights.data();
  T* e = fused.data();
  for (std::int64_t co = 0; co < cout; ++co) {
    for (std::int64_t ci = 0; ci < cin; ++ci) {
      const T* src = w + (co * cin + ci) * kk;
      for (std::int64_t s = 0; s < S; ++s) {
        const auto& row = bank.table->planar[static_cast<std::size_t>(s)];
        T* dst = e + ((co * cin + ci) * S + s) * kk;
        for (std::int64_t p = 0; p < kk; ++p) dst[p] = src[row[static_cast<std::size_t>(p)]];
      }
    }
  }
  return fused;
}

template <typename T>
void scatter_projection_filter_grad(const Tensor<T>& fused_grad,
                                    const ProjectionFilterBank<T>& bank, Tensor<T>& weight_grad) {
  const std::int64_t S = bank.group.stabilizer_size();
  const std::int64_t cout = bank.cout(), cin = bank.cin();
  const std::int64_t kk = bank.kernel() * bank.kernel();
  const T* ge = fused_grad.data();
  T* gw = weight_grad.data();
  for (std::int64_t co = 0; co < cout; ++co) {
    for (std::int64_t ci = 0; ci < cin; ++ci) {
      T* dst = gw + (co * cin + ci) * kk;
      for (std::int64_t s = 0; s < S; ++s) {
        const auto& row = bank.table->planar[static_cast<std::size_t>(s)];
        const T* src = ge + ((co * cin + ci) * S + s) * kk;
        for (std::int64_t p = 0; p < kk; ++p) dst[row[static_cast<std::size_t>(p)]] += src[p];
      }
    }
  }
}

template <typename T>
void add_channel_bias(Tensor<T>& map, const Tensor<T>& bias, std::int64_t channels,
                      std::int64_t per_channel) {
  if (bias.empty()) return;
  if (bias.size() != channels) throw ShapeError("bias length does not match channels");
  const std::int64_t batch = map.size() / (channels * per_channel);
  T* d = map.data();
  for (std::int64_t b = 0; b < batch; ++b) {
    for (std::int64_t c = 0; c < channels; ++c) {
      const T bv = bias[c];
      T* row = d + (b * channels + c) * per_channel;
      for (std::int64_t p = 0; p < per_channel; ++p) row[p] += bv;
    }
  }
}

template <typename T>
Tensor<T> channel_bias_grad(const Tensor<T>& grad, std::int64_t channels,
                            std::int64_t per_channel) {
  Tensor<T> db({channels});
  const std::int64_t batch = grad.size() / (channels * per_channel);
  const T* d = grad.data();
  for (std::int64_t b = 0; b < batch; ++b) {
    for (std::int64_t c = 0; c < channels; ++c) {
      const T* row = d + (b * channels + c) * per_channel;
      T acc{};
      for (std::int64_t p = 0; p < per_channel; ++p) acc += row[p];
      db[c] += acc;
    }
  }
  return db;
}

}  // namespace detail

template <typename T>
struct ConvGrads {
  Tensor<T> input;
  Tensor<T> weights;
  Tensor<T> bias;
};

// ---------------------------------------------------------------------------
// Lifting convolution (planar input -> group feature map), stride 1.
// ---------------------------------------------------------------------------

template <typename T>
GroupFeatureMap<T> lift_conv_forward(const Tensor<T>& f, const LiftingFilterBank<T>& bank,
                                     int pad) {
  if (f.rank() != 4) throw ShapeError("lifting input must be [B,Cin,H,W]");
  if (f.dim(1) != bank.cin()) throw ShapeError("lifting input channels do not match bank");
  const std::int64_t B = f.dim(0), S = bank.group.stabilizer_size();
  const std::int64_t ho = conv_out_size(f.dim(2), bank.kernel(), 1, pad);
  const std::int64_t wo = conv_out_size(f.dim(3), bank.kernel(), 1, pad);
  Tensor<T> fused = detail::fuse_lifting_filters(bank);
  Tensor<T> out({B, bank.cout(), S, ho, wo});
  for (std::int64_t b = 0; b < B; ++b) {
    detail::corr2d_accum(f.data() + b * f.dim(1) * f.dim(2) * f.dim(3), f.dim(1), f.dim(2),
                         f.dim(3), fused.data(), bank.cout() * S, bank.kernel(), 1, pad,
                         out.data() + b * bank.cout() * S * ho * wo, ho, wo);
  }
  detail::add_channel_bias(out, bank.bias, bank.cout(), S * ho * wo);
  return make_group_feature_map(std::move(out), bank.group);
}

template <typename T>
ConvGrads<T> lift_conv_backward(const GroupFeatureMap<T>& grad_out, const Tensor<T>& input,
                                const LiftingFilterBank<T>& bank, int pad) {
  const std::int64_t B = input.dim(0), S = bank.group.stabilizer_size();
  const std::int64_t h = input.dim(2), w = input.dim(3);
  const std::int64_t ho = grad_out.height(), wo = grad_out.width();
  Tensor<T> fused = detail::fuse_lifting_filters(bank);
  ConvGrads<T> g;
  g.input = Tensor<T>(input.dims());
  Tensor<T> fused_grad(fused.dims());
  for (std::int64_t b = 0; b < B; ++b) {
    const T* go = grad_out.data.data() + b * bank.cout() * S * ho * wo;
    detail::corr2d_transposed_accum(go, bank.cout() * S, ho, wo, fused.data(), bank.cin(),
                                    bank.kernel(), 1, pad,
                                    g.input.data() + b * bank.cin() * h * w, h, w);
    detail::corr2d_grad_filters_accum(input.data() + b * bank.cin() * h * w, bank.cin(), h, w, go,
                                      bank.cout() * S, ho, wo, bank.kernel(), 1, pad,
                                      fused_grad.data());
  }
  g.weights = Tensor<T>(bank.weights.dims());
  detail::scatter_lifting_filter_grad(fused_grad, bank, g.weights);
  if (!bank.bias.empty()) {
    g.bias = detail::channel_bias_grad(grad_out.data, bank.cout(), S * ho * wo);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Group convolution (group feature map -> group feature map).
// ---------------------------------------------------------------------------

template <typename T>
GroupFeatureMap<T> group_conv_forward(const GroupFeatureMap<T>& f, const GroupFilterBank<T>& bank,
                                      int stride, int pad) {
  if (f.group != bank.group) throw ShapeError("group mismatch between feature map and bank");
  if (f.channels() != bank.cin()) throw ShapeError("group conv input channels do not match bank");
  if (stride < 1) throw ShapeError("stride must be >= 1");
  const std::int64_t B = f.batch(), S = f.orientations();
  const std::int64_t ho = conv_out_size(f.height(), bank.kernel(), stride, pad);
  const std::int64_t wo = conv_out_size(f.width(), bank.kernel(), stride, pad);
  Tensor<T> fused = detail::fuse_group_filters(bank);
  Tensor<T> out({B, bank.cout(), S, ho, wo});
  const std::int64_t in_plane = f.channels() * S * f.height() * f.width();
  for (std::int64_t b = 0; b < B; ++b) {
    detail::corr2d_accum(f.data.data() + b * in_plane, f.channels() * S, f.height(), f.width(),
                         fused.data(), bank.cout() * S, bank.kernel(), stride, pad,
                         out.data() + b * bank.cout() * S * ho * wo, ho, wo);
  }
  detail::add_channel_bias(out, bank.bias, bank.cout(), S * ho * wo);
  return make_group_feature_map(std::move(out), bank.group);
}

template <typename T>
ConvGrads<T> group_conv_backward(const GroupFeatureMap<T>& grad_out, const GroupFeatureMap<T>& input,
                                 const GroupFilterBank<T>& bank, int stride, int pad) {
  const std::int64_t B = input.batch(), S = input.orientations();
  const std::int64_t h = input.height(), w = input.width();
  const std::int64_t ho = grad_out.height(), wo = grad_out.width();
  Tensor<T> fused = detail::fuse_group_filters(bank);
  ConvGrads<T> g;
  g.input = Tensor<T>(input.data.dims());
  Tensor<T> fused_grad(fused.dims());
  const std::int64_t in_plane = bank.cin() * S * h * w;
  const std::int64_t out_plane = bank.cout() * S * ho * wo;
  for (std::int64_t b = 0; b < B; ++b) {
    const T* go = grad_out.data.data() + b * out_plane;
    detail::corr2d_transposed_accum(go, bank.cout() * S, ho, wo, fused.data(), bank.cin() * S,
                                    bank.kernel(), stride, pad, g.input.data() + b * in_plane, h,
                                    w);
    detail::corr2d_grad_filters_accum(input.data.data() + b * in_plane, bank.cin() * S, h, w, go,
                                      bank.cout() * S, ho, wo, bank.kernel(), stride, pad,
                                      fused_grad.data());
  }
  g.weights = Tensor<T>(bank.weights.dims());
  detail::scatter_group_filter_grad(fused_grad, bank, g.weights);
  if (!bank.bias.empty()) {
    g.bias = detail::channel_bias_grad(grad_out.data, bank.cout(), S * ho * wo);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Projection convolution (group feature map -> planar map), stride 1.
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> proj_conv_forward(const GroupFeatureMap<T>& f, const ProjectionFilterBank<T>& bank,
                            int pad) {
  if (f.group != bank.group) throw ShapeError("group mismatch between feature map and bank");
  if (f.channels() != bank.cin()) throw ShapeError("projection input channels do not match bank");
  const std::int64_t B = f.batch(), S = f.orientations();
  const std::int64_t ho = conv_out_size(f.height(), bank.kernel(), 1, pad);
  const std::int64_t wo = conv_out_size(f.width(), bank.kernel(), 1, pad);
  Tensor<T> fused = detail::fuse_projection_filters(bank);
  Tensor<T> out({B, bank.cout(), ho, wo});
  const std::int64_t in_plane = f.channels() * S * f.height() * f.width();
  for (std::int64_t b = 0; b < B; ++b) {
    detail::corr2d_accum(f.data.data() + b * in_plane, f.channels() * S, f.height(), f.width(),
                         fused.data(), bank.cout(), bank.kernel(), 1, pad,
                         out.data() + b * bank.cout() * ho * wo, ho, wo);
  }
  detail::add_channel_bias(out, bank.bias, bank.cout(), ho * wo);
  return out;
}

template <typename T>
ConvGrads<T> proj_conv_backward(const Tensor<T>& grad_out, const GroupFeatureMap<T>& input,
                                const ProjectionFilterBank<T>& bank, int pad) {
  const std::int64_t B = input.batch(), S = input.orientations();
  const std::int64_t h = input.height(), w = input.width();
  const std::int64_t ho = grad_out.dim(2), wo = grad_out.dim(3);
  Tensor<T> fused = detail::fuse_projection_filters(bank);
  ConvGrads<T> g;
  g.input = Tensor<T>(input.data.dims());
  Tensor<T> fused_grad(fused.dims());
  const std::int64_t in_plane = bank.cin() * S * h * w;
  const std::int64_t out_plane = bank.cout() * ho * wo;
  for (std::int64_t b = 0; b < B; ++b) {
    const T* go = grad_out.data() + b * out_plane;
    detail::corr2d_transposed_accum(go, bank.cout(), ho, wo, fused.data(), bank.cin() * S,
                                    bank.kernel(), 1, pad, g.input.data() + b * in_plane, h, w);
    detail::corr2d_grad_filters_accum(input.data.data() + b * in_plane, bank.cin() * S, h, w, go,
                                      bank.cout(), ho, wo, bank.kernel(), 1, pad,
                                      fused_grad.data());
  }
  g.weights = Tensor<T>(bank.weights.dims());
  detail::scatter_projection_filter_grad(fused_grad, bank, g.weights);
  if (!bank.bias.empty()) {
    g.bias = detail::channel_bias_grad(grad_out, bank.cout(), ho * wo);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Transposed group convolution: the exact adjoint of group_conv_forward with
// the same bank and (stride, pad). Consumes bank.cout() channels, produces
// bank.cin() channels. Equivariant at every stride.
// ---------------------------------------------------------------------------

template <typename T>
GroupFeatureMap<T> group_transposed_conv_forward(const GroupFeatureMap<T>& f,
                                                 const GroupFilterBank<T>& bank, int stride,
                                                 int pad) {
  if (f.group != bank.group) throw ShapeError("group mismatch between feature map and bank");
  if (f.channels() != bank.cout()) {
    throw ShapeError("transposed group conv consumes the bank's output channels");
  }
  const std::int64_t B = f.batch(), S = f.orientations();
  const std::int64_t ho = tconv_out_size(f.height(), bank.kernel(), stride, pad);
  const std::int64_t wo = tconv_out_size(f.width(), bank.kernel(), stride, pad);
  Tensor<T> fused = detail::fuse_group_filters(bank);
  Tensor<T> out({B, bank.cin(), S, ho, wo});
  const std::int64_t in_plane = bank.cout() * S * f.height() * f.width();
  const std::int64_t out_plane = bank.cin() * S * ho * wo;
  for (std::int64_t b = 0; b < B; ++b) {
    detail::corr2d_transposed_accum(f.data.data() + b * in_plane, bank.cout() * S, f.height(),
                                    f.width(), fused.data(), bank.cin() * S, bank.kernel(), stride,
                                    pad, out.data() + b * out_plane, ho, wo);
  }
  detail::add_channel_bias(out, bank.bias, bank.cin(), S * ho * wo);
  return make_group_feature_map(std::move(out), bank.group);
}

template <typename T>
ConvGrads<T> group_transposed_conv_backward(const GroupFeatureMap<T>& grad_out,
                                            const GroupFeatureMap<T>& input,
                                            const GroupFilterBank<T>& bank, int stride, int pad) {
  const std::int64_t B = input.batch(), S = input.orientations();
  const std::int64_t h = input.height(), w = input.width();
  const std::int64_t ho = grad_out.height(), wo = grad_out.width();
  Tensor<T> fused = detail::fuse_group_filters(bank);
  ConvGrads<T> g;
  g.input = Tensor<T>(input.data.dims());
  Tensor<T> fused_grad(fused.dims());
  const std::int64_t in_plane = bank.cout() * S * h * w;
  const std::int64_t out_plane = bank.cin() * S * ho * wo;
  for (std::int64_t b = 0; b < B; ++b) {
    const T* go = grad_out.data.data() + b * out_plane;
    // adjoint of the adjoint: the strided correlation itself
    detail::corr2d_accum(go, bank.cin() * S, ho, wo, fused.data(), bank.cout() * S, bank.kernel(),
                         stride, pad, g.input.data() + b * in_plane, h, w);
    detail::corr2d_grad_filters_accum(go, bank.cin() * S, ho, wo,
                                      input.data.data() + b * in_plane, bank.cout() * S, h, w,
                                      bank.kernel(), stride, pad, fused_grad.data());
  }
  g.weights = Tensor<T>(bank.weights.dims());
  detail::scatter_group_filter_grad(fused_grad, bank, g.weights);
  if (!bank.bias.empty()) {
    g.bias = detail::channel_bias_grad(grad_out.data, bank.cin(), S * ho * wo);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Group batch normalization: moments aggregate over batch, orientation and
// spatial axes jointly, one (gamma, beta) pair per feature channel.
// ---------------------------------------------------------------------------

enum class BatchNormMode { train, eval };

template <typename T>
struct GroupBatchNormState {
  Tensor<T> gamma;
  Tensor<T> beta;
  Tensor<T> running_mean;
  Tensor<T> running_var;
  T momentum = static_cast<T>(0.1);
  T epsilon = static_cast<T>(1e-5);
};

template <typename T>
GroupBatchNormState<T> make_batchnorm_state(std::int64_t channels) {
  GroupBatchNormState<T> st;
  st.gamma = Tensor<T>::full({channels}, T{1});
  st.beta = Tensor<T>({channels});
  st.running_mean = Tensor<T>({channels});
  st.running_var = Tensor<T>::full({channels}, T{1});
  return st;
}

template <typename T>
struct BatchNormCache {
  Tensor<T> xhat;
  std::vector<double> inv_std;
};

template <typename T>
GroupFeatureMap<T> group_batchnorm_forward(const GroupFeatureMap<T>& f,
                                           GroupBatchNormState<T>& st, BatchNormMode mode,
                                           BatchNormCache<T>* cache = nullptr) {
  const std::int64_t B = f.batch(), C = f.channels();
  const std::int64_t plane = f.orientations() * f.height() * f.width();
  const std::int64_t n = B * plane;
  if (C != st.gamma.size()) throw ShapeError("batch norm channel mismatch");
  if (mode == BatchNormMode::train && n < 2) {
    throw ShapeError("batch norm training needs at least two values per channel");
  }
  Tensor<T> out(f.data.dims());
  if (cache) {
    cache->xhat = Tensor<T>(f.data.dims());
    cache->inv_std.assign(static_cast<std::size_t>(C), 0.0);
  }
  const T* x = f.data.data();
  T* y = out.data();
  for (std::int64_t c = 0; c < C; ++c) {
    double mean, var;
    if (mode == BatchNormMode::train) {
      // statistics in double regardless of storage type; four fixed-order
      // partial sums keep the reduction SIMD-friendly and deterministic
      double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
      for (std::int64_t b = 0; b < B; ++b) {
        const T* row = x + (b * C + c) * plane;
        std::int64_t p = 0;
        for (; p + 4 <= plane; p += 4) {
          s0 += static_cast<double>(row[p]);
          s1 += static_cast<double>(row[p + 1]);
          s2 += static_cast<double>(row[p + 2]);
          s3 += static_cast<double>(row[p + 3]);
        }
        for (; p < plane; ++p) s0 += static_cast<double>(row[p]);
      }
      mean = ((s0 + s1) + (s2 + s3)) / static_cast<double>(n);
      double q0 = 0.0, q1 = 0.0, q2 = 0.0, q3 = 0.0;
      for (std::int64_t b = 0; b < B; ++b) {
        const T* row = x + (b * C + c) * plane;
        std::int64_t p = 0;
        for (; p + 4 <= plane; p += 4) {
          const double d0 = static_cast<double>(row[p]) - mean;
          const double d1 = static_cast<double>(row[p + 1]) - mean;
          const double d2 = static_cast<double>(row[p + 2]) - mean;
          const double d3 = static_cast<double>(row[p + 3]) - mean;
          q0 += d0 * d0;
          q1 += d1 * d1;
          q2 += d2 * d2;
          q3 += d3 * d3;
        }
        for (; p < plane; ++p) {
          const double d = static_cast<double>(row[p]) - mean;
          q0 += d * d;
        }
      }
      var = ((q0 + q1) + (q2 + q3)) / static_cast<double>(n);
      st.running_mean[c] = static_cast<T>((1.0 - static_cast<double>(st.momentum)) *
                                              static_cast<double>(st.running_mean[c]) +
                                          static_cast<double>(st.momentum) * mean);
      st.running_var[c] = static_cast<T>((1.0 - static_cast<double>(st.momentum)) *
                                             static_cast<double>(st.running_var[c]) +
                                         static_cast<double>(st.momentum) * var);
    } else {
      mean = static_cast<double>(st.running_mean[c]);
      var = static_cast<double>(st.running_var[c]);
    }
    const double inv_std = 1.0 / std::sqrt(var + static_cast<double>(st.epsilon));
    if (cache) cache->inv_std[static_cast<std::size_t>(c)] = inv_std;
    const T g = st.gamma[c], bta = st.beta[c];
    for (std::int64_t b = 0; b < B; ++b) {
      const T* row = x + (b * C + c) * plane;
      T* yrow = y + (b * C + c) * plane;
      T* xh = cache ? cache->xhat.data() + (b * C + c) * plane : nullptr;
      for (std::int64_t p = 0; p < plane; ++p) {
        T xhat = static_cast<T>((static_cast<double>(row[p]) - mean) * inv_std);
        if (xh) xh[p] = xhat;
        yrow[p] = g * xhat + bta;
      }
    }
  }
  return make_group_feature_map(std::move(out), f.group);
}

template <typename T>
struct BatchNormGrads {
  Tensor<T> input;
  Tensor<T> gamma;
  Tensor<T> beta;
};

template <typename T>
BatchNormGrads<T> group_batchnorm_backward(const GroupFeatureMap<T>& grad_out,
                                           const GroupBatchNormState<T>& st,
                                           const BatchNormCache<T>& cache) {
  if (cache.xhat.empty()) throw StateError("batch norm backward requires a training-mode cache");
  const std::int64_t B = grad_out.batch(), C = grad_out.channels();
  const std::int64_t plane = grad_out.orientations() * grad_out.height() * grad_out.width();
  const std::int64_t n = B * plane;
  BatchNormGrads<T> g;
  g.input = Tensor<T>(grad_out.data.dims());
  g.gamma = Tensor<T>({C});
  g.beta = Tensor<T>({C});
  const T* dy = grad_out.data.data();
  const T* xh = cache.xhat.data();
  T* dx = g.input.data();
  for (std::int64_t c = 0; c < C; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::int64_t b = 0; b < B; ++b) {
      const T* dyr = dy + (b * C + c) * plane;
      const T* xhr = xh + (b * C + c) * plane;
      for (std::int64_t p = 0; p < plane; ++p) {
        sum_dy += static_cast<double>(dyr[p]);
        sum_dy_xhat += static_cast<double>(dyr[p]) * static_cast<double>(xhr[p]);
      }
    }
    g.beta[c] = static_cast<T>(sum_dy);
    g.gamma[c] = static_cast<T>(sum_dy_xhat);
    const double scale =
        static_cast<double>(st.gamma[c]) * cache.inv_std[static_cast<std::size_t>(c)];
    const double mean_dy = sum_dy / static_cast<double>(n);
    const double mean_dy_xhat = sum_dy_xhat / static_cast<double>(n);
    for (std::int64_t b = 0; b < B; ++b) {
      const T* dyr = dy + (b * C + c) * plane;
      const T* xhr = xh + (b * C + c) * plane;
      T* dxr = dx + (b * C + c) * plane;
      for (std::int64_t p = 0; p < plane; ++p) {
        dxr[p] = static_cast<T>(scale * (static_cast<double>(dyr[p]) - mean_dy -
                                         static_cast<double>(xhr[p]) * mean_dy_xhat));
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Spatial max pooling (3x3, stride 2, pad 1). Padding uses -inf semantics so
// it never wins; argmax indices feed the backward scatter. Odd spatial sizes
// keep the pooling grid roto-reflection symmetric.
// ---------------------------------------------------------------------------

template <typename T>
struct MaxPoolResult {
  GroupFeatureMap<T> output;
  Tensor<std::int32_t> argmax;  // flat i*W+j source index per pooled value
};

template <typename T>
MaxPoolResult<T> maxpool2d(const GroupFeatureMap<T>& f, int k = 3, int stride = 2, int pad = 1,
                           bool strict_odd = true) {
  const std::int64_t h = f.height(), w = f.width();
  if (strict_odd && (h % 2 == 0 || w % 2 == 0)) {
    throw ShapeError("max pooling requires odd spatial sizes for grid alignment (got " +
                     std::to_string(h) + "x" + std::to_string(w) + ")");
  }
  const std::int64_t ho = conv_out_size(h, k, stride, pad);
  const std::int64_t wo = conv_out_size(w, k, stride, pad);
  const std::int64_t maps = f.batch() * f.channels() * f.orientations();
  Tensor<T> out({f.batch(), f.channels(), f.orientations(), ho, wo});
  Tensor<std::int32_t> arg({f.batch(), f.channels(), f.orientations(), ho, wo});
  const T* x = f.data.data();
  T* y = out.data();
  std::int32_t* am = arg.data();
  for (std::int64_t m = 0; m < maps; ++m) {
    const T* plane = x + m * h * w;
    T* yp = y + m * ho * wo;
    std::int32_t* ap = am + m * ho * wo;
    for (std::int64_t i = 0; i < ho; ++i) {
      const std::int64_t i0 = std::max<std::int64_t>(0, i * stride - pad);
      const std::int64_t i1 = std::min<std::int64_t>(h - 1, i * stride - pad + k - 1);
      for (std::int64_t j = 0; j < wo; ++j) {
        const std::int64_t j0 = std::max<std::int64_t>(0, j * stride - pad);
        const std::int64_t j1 = std::min<std::int64_t>(w - 1, j * stride - pad + k - 1);
        T best = plane[i0 * w + j0];
        std::int64_t best_at = i0 * w + j0;
        for (std::int64_t ii = i0; ii <= i1; ++ii) {
          for (std::int64_t jj = j0; jj <= j1; ++jj) {
            const T v = plane[ii * w + jj];
            if (v > best) {
              best = v;
              best_at = ii * w + jj;
            }
          }
        }
        yp[i * wo + j] = best;
        ap[i * wo + j] = static_cast<std::int32_t>(best_at);
      }
    }
  }
  return {make_group_feature_map(std::move(out), f.group), std::move(arg)};
}

template <typename T>
GroupFeatureMap<T> maxpool2d_backward(const GroupFeatureMap<T>& grad_out,
                                      const Tensor<std::int32_t>& argmax, std::int64_t in_h,
                                      std::int64_t in_w) {
  const std::int64_t maps = grad_out.batch() * grad_out.channels() * grad_out.orientations();
  const std::int64_t ho = grad_out.height(), wo = grad_out.width();
  Tensor<T> dx({grad_out.batch(), grad_out.channels(), grad_out.orientations(), in_h, in_w});
  const T* dy = grad_out.data.data();
  const std::int32_t* am = argmax.data();
  T* d = dx.data();
  for (std::int64_t m = 0; m < maps; ++m) {
    const T* dyp = dy + m * ho * wo;
    const std::int32_t* ap = am + m * ho * wo;
    T* dxp = d + m * in_h * in_w;
    for (std::int64_t p = 0; p < ho * wo; ++p) dxp[ap[p]] += dyp[p];
  }
  return make_group_feature_map(std::move(dx), grad_out.group);
}

// ---------------------------------------------------------------------------
// Pointwise nonlinearity.
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> y(x.dims());
  for (std::int64_t i = 0; i < x.size(); ++i) y[i] = x[i] > T{} ? x[i] : T{};
  return y;
}

/// dx = dy where the forward output was positive, else 0.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& grad_out, const Tensor<T>& forward_out) {
  Tensor<T> dx(grad_out.dims());
  for (std::int64_t i = 0; i < grad_out.size(); ++i) {
    dx[i] = forward_out[i] > T{} ? grad_out[i] : T{};
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Roto-reflection action on feature maps.
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::int64_t> spatial_gather_indices(GroupElement g, std::int64_t h,
                                                        std::int64_t w) {
  GroupSpec p4m = GroupSpec::p4m();
  GroupElement ginv = inverse(g, p4m);
  std::vector<std::int64_t> src(static_cast<std::size_t>(h * w));
  for (std::int64_t i = 0; i < h; ++i) {
    for (std::int64_t j = 0; j < w; ++j) {
      Coord c = act_on_coords(ginv, {i, j}, h, w);
      src[static_cast<std::size_t>(i * w + j)] = c.row * w + c.col;
    }
  }
  return src;
}

}  // namespace detail

/// Planar roto-reflection: out[p] = f[g^{ -1} p], spatial axes only.
template <typename T>
Tensor<T> apply_input_transform(GroupElement g, const Tensor<T>& f) {
  if (f.rank() != 4) throw ShapeError("apply_input_transform expects [B,C,H,W]");
  const std::int64_t h = f.dim(2), w = f.dim(3);
  if (h != w) throw ShapeError("roto-reflection transforms need square spatial extent");
  auto src = detail::spatial_gather_indices(g, h, w);
  Tensor<T> out(f.dims());
  const std::int64_t maps = f.dim(0) * f.dim(1);
  for (std::int64_t m = 0; m < maps; ++m) {
    const T* xp = f.data() + m * h * w;
    T* yp = out.data() + m * h * w;
    for (std::int64_t p = 0; p < h * w; ++p) yp[p] = xp[src[static_cast<std::size_t>(p)]];
  }
  return out;
}

/// Group feature map roto-reflection: spatial transform plus the orientation
/// permutation s -> compose(g, s).
template <typename T>
GroupFeatureMap<T> apply_group_transform(GroupElement g, const GroupFeatureMap<T>& f) {
  validate_element(g, f.group);
  const std::int64_t h = f.height(), w = f.width();
  if (h != w) throw ShapeError("roto-reflection transforms need square spatial extent");
  auto src = detail::spatial_gather_indices(g, h, w);
  auto elems = group_elements(f.group);
  const std::int64_t S = f.orientations();
  std::vector<std::int64_t> dest_orient(static_cast<std::size_t>(S));
  for (std::int64_t s = 0; s < S; ++s) {
    dest_orient[static_cast<std::size_t>(s)] =
        element_index(compose(g, elems[static_cast<std::size_t>(s)], f.group), f.group);
  }
  Tensor<T> out(f.data.dims());
  const std::int64_t bc = f.batch() * f.channels();
  for (std::int64_t m = 0; m < bc; ++m) {
    for (std::int64_t s = 0; s < S; ++s) {
      const T* xp = f.data.data() + (m * S + s) * h * w;
      T* yp = out.data() + (m * S + dest_orient[static_cast<std::size_t>(s)]) * h * w;
      for (std::int64_t p = 0; p < h * w; ++p) yp[p] = xp[src[static_cast<std::size_t>(p)]];
    }
  }
  return make_group_feature_map(std::move(out), f.group);
}

/// Numerically stable per-pixel softmax over the channel axis of [B,C,H,W].
template <typename T>
Tensor<T> softmax_channels(const Tensor<T>& logits) {
  if (logits.rank() != 4) throw ShapeError("softmax expects [B,C,H,W]");
  const std::int64_t B = logits.dim(0), C = logits.dim(1), hw = logits.dim(2) * logits.dim(3);
  Tensor<T> probs(logits.dims());
  const T* x = logits.data();
  T* y = probs.data();
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t p = 0; p < hw; ++p) {
      double mx = -1e300;
      for (std::int64_t c = 0; c < C; ++c) {
        mx = std::max(mx, static_cast<double>(x[(b * C + c) * hw + p]));
      }
      double denom = 0.0;
      for (std::int64_t c = 0; c < C; ++c) {
        denom += std::exp(static_cast<double>(x[(b * C + c) * hw + p]) - mx);
      }
      for (std::int64_t c = 0; c < C; ++c) {
        y[(b * C + c) * hw + p] =
            static_cast<T>(std::exp(static_cast<double>(x[(b * C + c) * hw + p]) - mx) / denom);
      }
    }
  }
  return probs;
}

}  // namespace gunet
