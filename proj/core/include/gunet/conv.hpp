#pragma once

#include <cstdint>

#include "gunet/errors.hpp"
#include "gunet/tensor.hpp"

namespace gunet {

inline std::int64_t conv_out_size(std::int64_t in, int k, int stride, int pad) {
  if (stride < 1) throw ShapeError("stride must be >= 1");
  std::int64_t n = (in + 2 * pad - k) / stride + 1;
  if (in + 2 * pad < k || n < 1) throw ShapeError("correlation output would be empty");
  return n;
}

inline std::int64_t tconv_out_size(std::int64_t in, int k, int stride, int pad) {
  if (stride < 1) throw ShapeError("stride must be >= 1");
  std::int64_t n = (in - 1) * stride - 2 * pad + k;
  if (n < 1) throw ShapeError("transposed correlation output would be empty");
  return n;
}

#if defined(_MSC_VER)
#define GUNET_RESTRICT __restrict
#else
#define GUNET_RESTRICT __restrict__
#endif

namespace detail {

inline std::int64_t div_floor(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b, r = a % b;
  return (r != 0 && ((r < 0) != (b < 0))) ? q - 1 : q;
}

inline std::int64_t div_ceil(std::int64_t a, std::int64_t b) { return -div_floor(-a, b); }

// all nine taps of a 3x3 stride-1 kernel in one pass over each output row
template <typename T>
void corr2d_accum_3x3(const T* in, std::int64_t cin, std::int64_t h, std::int64_t w,
                      const T* filt, std::int64_t cout, int pad, T* out, std::int64_t ho,
                      std::int64_t wo) {
  std::vector<T> zero_row(static_cast<std::size_t>(w + 2), T{});
  // columns where every tap reads in bounds: pad <= j <= w - 3 + pad
  const std::int64_t body0 = std::clamp<std::int64_t>(pad, 0, wo);
  const std::int64_t body1 = std::clamp<std::int64_t>(w - 2 + pad, body0, wo);
  for (std::int64_t co = 0; co < cout; ++co) {
    T* out_c = out + co * ho * wo;
    for (std::int64_t ci = 0; ci < cin; ++ci) {
      const T* in_c = in + ci * h * w;
      const T* wk = filt + (co * cin + ci) * 9;
      for (std::int64_t i = 0; i < ho; ++i) {
        const T* r[3];
        T wv[9];
        for (int a = 0; a < 3; ++a) {
          const std::int64_t ii = i + a - pad;
          const bool valid = ii >= 0 && ii < h;
          r[a] = valid ? in_c + ii * w : zero_row.data();
          wv[a * 3] = valid ? wk[a * 3] : T{};
          wv[a * 3 + 1] = valid ? wk[a * 3 + 1] : T{};
          wv[a * 3 + 2] = valid ? wk[a * 3 + 2] : T{};
        }
        T* orow = out_c + i * wo;
        auto edge = [&](std::int64_t j) {
          T acc{};
          for (int a = 0; a < 3; ++a) {
            for (int b = 0; b < 3; ++b) {
              const std::int64_t jj = j + b - pad;
              if (jj >= 0 && jj < w) acc += wv[a * 3 + b] * r[a][jj];
            }
          }
          orow[j] += acc;
        };
        for (std::int64_t j = 0; j < body0; ++j) edge(j);
        if (body1 > body0) {
          const T* GUNET_RESTRICT r0 = r[0] + body0 - pad;
          const T* GUNET_RESTRICT r1 = r[1] + body0 - pad;
          const T* GUNET_RESTRICT r2 = r[2] + body0 - pad;
          T* GUNET_RESTRICT ob = orow + body0;
          const std::int64_t n = body1 - body0;
          for (std::int64_t t = 0; t < n; ++t) {
            ob[t] += wv[0] * r0[t] + wv[1] * r0[t + 1] + wv[2] * r0[t + 2] +
                     wv[3] * r1[t] + wv[4] * r1[t + 1] + wv[5] * r1[t + 2] +
                     wv[6] * r2[t] + wv[7] * r2[t + 1] + wv[8] * r2[t + 2];
          }
        }
        for (std::int64_t j = body1; j < wo; ++j) edge(j);
      }
    }
  }
}

/// out[co,i,j] += sum_{ci,a,b} in[ci, i*s+a-p, j*s+b-p] * w[co,ci,a,b]
/// Out-of-range input reads contribute zero. `out` is accumulated into.
template <typename T>
void corr2d_accum(const T* in, std::int64_t cin, std::int64_t h, std::int64_t w,
                  const T* filt, std::int64_t cout, int k, int stride, int pad,
                  T* out, std::int64_t ho, std::int64_t wo) {
  if (k == 3 && stride == 1 && pad <= 2 && w >= 2) {
    corr2d_accum_3x3(in, cin, h, w, filt, cout, pad, out, ho, wo);
    return;
  }
  for (std::int64_t co = 0; co < cout; ++co) {
    T* out_c = out + co * ho * wo;
    for (std::int64_t ci = 0; ci < cin; ++ci) {
      const T* in_c = in + ci * h * w;
      const T* w_c = filt + (co * cin + ci) * k * k;
      for (int a = 0; a < k; ++a) {
        for (int b = 0; b < k; ++b) {
          const T wv = w_c[a * k + b];
          if (wv == T{}) continue;
          // valid j range: 0 <= j*stride + b - pad < w
          const std::int64_t j0 = std::max<std::int64_t>(0, div_ceil(pad - b, stride));
          const std::int64_t j1 = std::min<std::int64_t>(wo - 1, div_floor(w - 1 - b + pad, stride));
          for (std::int64_t i = 0; i < ho; ++i) {
            const std::int64_t ii = i * stride + a - pad;
            if (ii < 0 || ii >= h) continue;
            const T* GUNET_RESTRICT in_row = in_c + ii * w + (b - pad);
            T* GUNET_RESTRICT out_row = out_c + i * wo;
            if (stride == 1) {
              for (std::int64_t j = j0; j <= j1; ++j) out_row[j] += wv * in_row[j];
            } else {
              for (std::int64_t j = j0; j <= j1; ++j) out_row[j] += wv * in_row[j * stride];
            }
          }
        }
      }
    }
  }
}

/// Adjoint of corr2d_accum: scatters in[ci,i,j] * w[ci,co,a,b] to
/// out[co, i*s+a-p, j*s+b-p]. Filter layout is [cin, cout, k, k] where cin
/// is the channel count of `in`.
template <typename T>
void corr2d_transposed_accum(const T* in, std::int64_t cin, std::int64_t h, std::int64_t w,
                             const T* filt, std::int64_t cout, int k, int stride, int pad,
                             T* out, std::int64_t ho, std::int64_t wo) {
  if (k == 3 && stride == 1 && pad <= 2 && w >= 2) {
    // at stride 1 the adjoint is a correlation with the flipped, transposed
    // kernel under complementary padding
    std::vector<T> flipped(static_cast<std::size_t>(cout * cin * 9));
    for (std::int64_t co = 0; co < cout; ++co) {
      for (std::int64_t ci = 0; ci < cin; ++ci) {
        const T* src = filt + (ci * cout + co) * 9;
        T* dst = flipped.data() + (co * cin + ci) * 9;
        for (int t = 0; t < 9; ++t) dst[t] = src[8 - t];
      }
    }
    corr2d_accum_3x3(in, cin, h, w, flipped.data(), cout, 2 - pad, out, ho, wo);
    return;
  }
  for (std::int64_t ci = 0; ci < cin; ++ci) {
    const T* in_c = in + ci * h * w;
    for (std::int64_t co = 0; co < cout; ++co) {
      T* out_c = out + co * ho * wo;
      const T* w_c = filt + (ci * cout + co) * k * k;
      for (int a = 0; a < k; ++a) {
        for (int b = 0; b < k; ++b) {
          const T wv = w_c[a * k + b];
          if (wv == T{}) continue;
          const std::int64_t j0 = std::max<std::int64_t>(0, div_ceil(pad - b, stride));
          const std::int64_t j1 = std::min<std::int64_t>(w - 1, div_floor(wo - 1 - b + pad, stride));
          for (std::int64_t i = 0; i < h; ++i) {
            const std::int64_t u = i * stride + a - pad;
            if (u < 0 || u >= ho) continue;
            const T* GUNET_RESTRICT in_row = in_c + i * w;
            T* GUNET_RESTRICT out_row = out_c + u * wo + (b - pad);
            if (stride == 1) {
              for (std::int64_t j = j0; j <= j1; ++j) out_row[j] += wv * in_row[j];
            } else {
              for (std::int64_t j = j0; j <= j1; ++j) out_row[j * stride] += wv * in_row[j];
            }
          }
        }
      }
    }
  }
}

/// gw[co,ci,a,b] += sum_{i,j} gout[co,i,j] * in[ci, i*s+a-p, j*s+b-p]
template <typename T>
void corr2d_grad_filters_accum(const T* in, std::int64_t cin, std::int64_t h, std::int64_t w,
                               const T* gout, std::int64_t cout, std::int64_t ho, std::int64_t wo,
                               int k, int stride, int pad, T* gw) {
  if (k == 3 && stride == 1 && pad <= 2 && w >= 2) {
    // nine running dot products per (co, ci), one pass over the gradient
    std::vector<T> zero_row(static_cast<std::size_t>(w + 2), T{});
    const std::int64_t body0 = std::clamp<std::int64_t>(pad, 0, wo);
    const std::int64_t body1 = std::clamp<std::int64_t>(w - 2 + pad, body0, wo);
    for (std::int64_t co = 0; co < cout; ++co) {
      const T* g_c = gout + co * ho * wo;
      for (std::int64_t ci = 0; ci < cin; ++ci) {
        const T* in_c = in + ci * h * w;
        T acc[9] = {};
        for (std::int64_t i = 0; i < ho; ++i) {
          const T* r[3];
          bool valid[3];
          for (int a = 0; a < 3; ++a) {
            const std::int64_t ii = i + a - pad;
            valid[a] = ii >= 0 && ii < h;
            r[a] = valid[a] ? in_c + ii * w : zero_row.data();
          }
          const T* grow = g_c + i * wo;
          for (std::int64_t j = 0; j < body0; ++j) {
            for (int a = 0; a < 3; ++a) {
              for (int b = 0; b < 3; ++b) {
                const std::int64_t jj = j + b - pad;
                if (jj >= 0 && jj < w) acc[a * 3 + b] += grow[j] * r[a][jj];
              }
            }
          }
          if (body1 > body0) {
            const T* GUNET_RESTRICT r0 = r[0] + body0 - pad;
            const T* GUNET_RESTRICT r1 = r[1] + body0 - pad;
            const T* GUNET_RESTRICT r2 = r[2] + body0 - pad;
            const T* GUNET_RESTRICT gb = grow + body0;
            const std::int64_t n = body1 - body0;
            for (std::int64_t t = 0; t < n; ++t) {
              const T g = gb[t];
              acc[0] += g * r0[t];
              acc[1] += g * r0[t + 1];
              acc[2] += g * r0[t + 2];
              acc[3] += g * r1[t];
              acc[4] += g * r1[t + 1];
              acc[5] += g * r1[t + 2];
              acc[6] += g * r2[t];
              acc[7] += g * r2[t + 1];
              acc[8] += g * r2[t + 2];
            }
          }
          for (std::int64_t j = body1; j < wo; ++j) {
            for (int a = 0; a < 3; ++a) {
              for (int b = 0; b < 3; ++b) {
                const std::int64_t jj = j + b - pad;
                if (jj >= 0 && jj < w) acc[a * 3 + b] += grow[j] * r[a][jj];
              }
            }
          }
        }
        T* gw_c = gw + (co * cin + ci) * 9;
        for (int t = 0; t < 9; ++t) gw_c[t] += acc[t];
      }
    }
    return;
  }
  for (std::int64_t co = 0; co < cout; ++co) {
    const T* g_c = gout + co * ho * wo;
    for (std::int64_t ci = 0; ci < cin; ++ci) {
      const T* in_c = in + ci * h * w;
      T* gw_c = gw + (co * cin + ci) * k * k;
      for (int a = 0; a < k; ++a) {
        for (int b = 0; b < k; ++b) {
          const std::int64_t j0 = std::max<std::int64_t>(0, div_ceil(pad - b, stride));
          const std::int64_t j1 = std::min<std::int64_t>(wo - 1, div_floor(w - 1 - b + pad, stride));
          T acc{};
          for (std::int64_t i = 0; i < ho; ++i) {
            const std::int64_t ii = i * stride + a - pad;
            if (ii < 0 || ii >= h) continue;
            const T* GUNET_RESTRICT in_row = in_c + ii * w + (b - pad);
            const T* GUNET_RESTRICT g_row = g_c + i * wo;
            if (stride == 1) {
              for (std::int64_t j = j0; j <= j1; ++j) acc += g_row[j] * in_row[j];
            } else {
              for (std::int64_t j = j0; j <= j1; ++j) acc += g_row[j] * in_row[j * stride];
            }
          }
          gw_c[a * k + b] += acc;
        }
      }
    }
  }
}

}  // namespace detail

/// Planar cross-correlation of a [Cin,H,W] input with [Cout,Cin,k,k] filters.
template <typename T>
Tensor<T> correlate2d(const Tensor<T>& input, const Tensor<T>& filters, int stride = 1,
                      int pad = 0) {
  if (input.rank() != 3) throw ShapeError("correlate2d input must be [Cin,H,W]");
  if (filters.rank() != 4) throw ShapeError("correlate2d filters must be [Cout,Cin,k,k]");
  if (filters.dim(2) != filters.dim(3)) throw ShapeError("correlate2d kernel must be square");
  const int k = static_cast<int>(filters.dim(2));
  if (k % 2 == 0) throw ShapeError("correlate2d kernel size must be odd");
  if (filters.dim(1) != input.dim(0)) {
    throw ShapeError("correlate2d channel mismatch: input " + dims_to_string(input.dims()) +
                     " filters " + dims_to_string(filters.dims()));
  }
  if (pad < 0) throw ShapeError("padding must be >= 0");
  const std::int64_t ho = conv_out_size(input.dim(1), k, stride, pad);
  const std::int64_t wo = conv_out_size(input.dim(2), k, stride, pad);
  Tensor<T> out({filters.dim(0), ho, wo});
  detail::corr2d_accum(input.data(), input.dim(0), input.dim(1), input.dim(2), filters.data(),
                       filters.dim(0), k, stride, pad, out.data(), ho, wo);
  return out;
}

/// Exact adjoint of correlate2d with the same (stride, pad). Filter layout
/// is [Cin,Cout,k,k] with Cin the channel count of `input`.
template <typename T>
Tensor<T> correlate2d_transposed(const Tensor<T>& input, const Tensor<T>& filters, int stride = 1,
                                 int pad = 0) {
  if (input.rank() != 3) throw ShapeError("correlate2d_transposed input must be [Cin,H,W]");
  if (filters.rank() != 4) throw ShapeError("correlate2d_transposed filters must be [Cin,Cout,k,k]");
  if (filters.dim(2) != filters.dim(3)) throw ShapeError("kernel must be square");
  const int k = static_cast<int>(filters.dim(2));
  if (k % 2 == 0) throw ShapeError("kernel size must be odd");
  if (filters.dim(0) != input.dim(0)) {
    throw ShapeError("correlate2d_transposed channel mismatch");
  }
  if (pad < 0) throw ShapeError("padding must be >= 0");
  const std::int64_t ho = tconv_out_size(input.dim(1), k, stride, pad);
  const std::int64_t wo = tconv_out_size(input.dim(2), k, stride, pad);
  Tensor<T> out({filters.dim(1), ho, wo});
  detail::corr2d_transposed_accum(input.data(), input.dim(0), input.dim(1), input.dim(2),
                                  filters.data(), filters.dim(1), k, stride, pad, out.data(), ho,
                                  wo);
  return out;
}

}  // namespace gunet
