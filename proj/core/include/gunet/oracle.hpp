#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <vector>

#include "gunet/errors.hpp"
#include "gunet/group.hpp"
#include "gunet/ops.hpp"
#include "gunet/tensor.hpp"

// Literal, slow evaluations of the three group-convolution sums and of the
// adjoint, iterating over explicit group elements. The group action here is
// carried by 2x2 integer matrices on centered offsets and shares no lowering
// code with the index-table path in ops.hpp; agreement between the two is
// what the equivalence tests certify. Double precision only, small shapes.
namespace gunet::oracle {

/// Column-major-free tiny integer matrix acting on (drow, dcol) offsets.
struct Mat2 {
  std::array<int, 4> m;  // [a b; c d]

  static Mat2 identity() { return {{1, 0, 0, 1}}; }
  // quarter turn: (di, dj) -> (dj, -di)
  static Mat2 rot() { return {{0, 1, -1, 0}}; }
  // mirror: (di, dj) -> (di, -dj)
  static Mat2 mirror() { return {{1, 0, 0, -1}}; }

  Mat2 times(const Mat2& o) const {
    return {{m[0] * o.m[0] + m[1] * o.m[2], m[0] * o.m[1] + m[1] * o.m[3],
             m[2] * o.m[0] + m[3] * o.m[2], m[2] * o.m[1] + m[3] * o.m[3]}};
  }

  Mat2 transposed() const { return {{m[0], m[2], m[1], m[3]}}; }

  std::array<std::int64_t, 2> apply(std::int64_t di, std::int64_t dj) const {
    return {m[0] * di + m[1] * dj, m[2] * di + m[3] * dj};
  }

  bool operator==(const Mat2& o) const { return m == o.m; }
};

inline Mat2 element_matrix(GroupElement g) {
  Mat2 a = Mat2::identity();
  for (int t = 0; t < g.rotation; ++t) a = Mat2::rot().times(a);
  if (g.mirror) a = Mat2::mirror().times(a);
  return a;
}

/// Recover (m, r) from its matrix by exhaustive pattern match.
inline GroupElement match_element(const Mat2& a) {
  for (int m = 0; m < 2; ++m) {
    for (int r = 0; r < 4; ++r) {
      if (element_matrix({m, r}) == a) return {m, r};
    }
  }
  throw InvalidElementError("matrix is not a roto-reflection of the square lattice");
}

namespace detail {

inline double tap(const Tensor<double>& w, std::int64_t base, int k, std::int64_t di,
                  std::int64_t dj) {
  const std::int64_t c = (k - 1) / 2;
  if (di < -c || di > c || dj < -c || dj > c) return 0.0;
  return w[base + (c + di) * k + (c + dj)];
}

}  // namespace detail

/// [f * psi](g) with g = (s, t): sum over all image points y of
/// f(y) * psi(s^{-1}(y - t)). Input [B,Cin,H,W], weights [Cout,Cin,k,k].
inline GroupFeatureMap<double> direct_lift(const Tensor<double>& f, const Tensor<double>& weights,
                                           GroupSpec spec, int pad) {
  if (f.rank() != 4 || weights.rank() != 4) throw ShapeError("direct_lift shape mismatch");
  if (f.dim(1) != weights.dim(1)) throw ShapeError("direct_lift channel mismatch");
  const std::int64_t B = f.dim(0), cin = f.dim(1), h = f.dim(2), w = f.dim(3);
  const std::int64_t cout = weights.dim(0);
  const int k = static_cast<int>(weights.dim(2));
  const std::int64_t c = (k - 1) / 2;
  const std::int64_t ho = h + 2 * pad - k + 1, wo = w + 2 * pad - k + 1;
  auto elems = group_elements(spec);
  const std::int64_t S = static_cast<std::int64_t>(elems.size());
  Tensor<double> out({B, cout, S, ho, wo});
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t co = 0; co < cout; ++co) {
      for (std::int64_t s = 0; s < S; ++s) {
        Mat2 sinv = element_matrix(elems[static_cast<std::size_t>(s)]).transposed();
        for (std::int64_t i = 0; i < ho; ++i) {
          for (std::int64_t j = 0; j < wo; ++j) {
            const std::int64_t ti = i + c - pad, tj = j + c - pad;
            double acc = 0.0;
            for (std::int64_t ci = 0; ci < cin; ++ci) {
              const std::int64_t wbase = (co * cin + ci) * k * k;
              for (std::int64_t yi = 0; yi < h; ++yi) {
                for (std::int64_t yj = 0; yj < w; ++yj) {
                  auto v = sinv.apply(yi - ti, yj - tj);
                  acc += f[((b * cin + ci) * h + yi) * w + yj] *
                         detail::tap(weights, wbase, k, v[0], v[1]);
                }
              }
            }
            out[(((b * cout + co) * S + s) * ho + i) * wo + j] = acc;
          }
        }
      }
    }
  }
  return make_group_feature_map(std::move(out), spec);
}

/// [f * psi](g) = sum_{h in G} f(h) psi(g^{-1} h) with h = (s_in, u) running
/// over orientations and image points. Input [B,Cin,S,H,W], weights
/// [Cout,Cin,S,k,k].
inline GroupFeatureMap<double> direct_group(const GroupFeatureMap<double>& f,
                                            const Tensor<double>& weights, int stride, int pad) {
  if (weights.rank() != 5) throw ShapeError("direct_group weights must be [Cout,Cin,S,k,k]");
  if (f.channels() != weights.dim(1)) throw ShapeError("direct_group channel mismatch");
  const std::int64_t B = f.batch(), cin = f.channels(), S = f.orientations();
  const std::int64_t h = f.height(), w = f.width();
  const std::int64_t cout = weights.dim(0);
  const int k = static_cast<int>(weights.dim(3));
  const std::int64_t c = (k - 1) / 2;
  const std::int64_t ho = (h + 2 * pad - k) / stride + 1, wo = (w + 2 * pad - k) / stride + 1;
  auto elems = group_elements(f.group);
  Tensor<double> out({B, cout, S, ho, wo});
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t co = 0; co < cout; ++co) {
      for (std::int64_t so = 0; so < S; ++so) {
        Mat2 so_inv = element_matrix(elems[static_cast<std::size_t>(so)]).transposed();
        // orientation part of g^{-1} h and the matrix applied to (u - t)
        std::vector<std::int64_t> orient(static_cast<std::size_t>(S));
        for (std::int64_t si = 0; si < S; ++si) {
          GroupElement comp =
              match_element(so_inv.times(element_matrix(elems[static_cast<std::size_t>(si)])));
          orient[static_cast<std::size_t>(si)] = comp.mirror * 4 + comp.rotation;
        }
        for (std::int64_t i = 0; i < ho; ++i) {
          for (std::int64_t j = 0; j < wo; ++j) {
            const std::int64_t ti = i * stride + c - pad, tj = j * stride + c - pad;
            double acc = 0.0;
            for (std::int64_t ci = 0; ci < cin; ++ci) {
              for (std::int64_t si = 0; si < S; ++si) {
                const std::int64_t wbase =
                    ((co * cin + ci) * S + orient[static_cast<std::size_t>(si)]) * k * k;
                for (std::int64_t yi = 0; yi < h; ++yi) {
                  for (std::int64_t yj = 0; yj < w; ++yj) {
                    auto v = so_inv.apply(yi - ti, yj - tj);
                    acc += f.data[(((b * cin + ci) * S + si) * h + yi) * w + yj] *
                           detail::tap(weights, wbase, k, v[0], v[1]);
                  }
                }
              }
            }
            out[(((b * cout + co) * S + so) * ho + i) * wo + j] = acc;
          }
        }
      }
    }
  }
  return make_group_feature_map(std::move(out), f.group);
}

/// [f * psi](y) = sum_{h in G} f(h) psi(z(y)^{-1} h): the planar filter is
/// read at group element (s, u - t) as the s-transformed filter at u - t.
/// Input [B,Cin,S,H,W], weights [Cout,Cin,k,k], planar output.
inline Tensor<double> direct_proj(const GroupFeatureMap<double>& f, const Tensor<double>& weights,
                                  int pad) {
  if (weights.rank() != 4) throw ShapeError("direct_proj weights must be [Cout,Cin,k,k]");
  if (f.channels() != weights.dim(1)) throw ShapeError("direct_proj channel mismatch");
  const std::int64_t B = f.batch(), cin = f.channels(), S = f.orientations();
  const std::int64_t h = f.height(), w = f.width();
  const std::int64_t cout = weights.dim(0);
  const int k = static_cast<int>(weights.dim(2));
  const std::int64_t c = (k - 1) / 2;
  const std::int64_t ho = h + 2 * pad - k + 1, wo = w + 2 * pad - k + 1;
  auto elems = group_elements(f.group);
  Tensor<double> out({B, cout, ho, wo});
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t co = 0; co < cout; ++co) {
      for (std::int64_t i = 0; i < ho; ++i) {
        for (std::int64_t j = 0; j < wo; ++j) {
          const std::int64_t ti = i + c - pad, tj = j + c - pad;
          double acc = 0.0;
          for (std::int64_t ci = 0; ci < cin; ++ci) {
            const std::int64_t wbase = (co * cin + ci) * k * k;
            for (std::int64_t si = 0; si < S; ++si) {
              Mat2 sinv = element_matrix(elems[static_cast<std::size_t>(si)]).transposed();
              for (std::int64_t yi = 0; yi < h; ++yi) {
                for (std::int64_t yj = 0; yj < w; ++yj) {
                  auto v = sinv.apply(yi - ti, yj - tj);
                  acc += f.data[(((b * cin + ci) * S + si) * h + yi) * w + yj] *
                         detail::tap(weights, wbase, k, v[0], v[1]);
                }
              }
            }
          }
          out[((b * cout + co) * ho + i) * wo + j] = acc;
        }
      }
    }
  }
  return out;
}

/// Dense matrix of a linear map, built by probing with basis vectors.
struct DenseMap {
  std::int64_t rows = 0, cols = 0;
  std::vector<double> a;  // row-major

  double at(std::int64_t r, std::int64_t c) const {
    return a[static_cast<std::size_t>(r * cols + c)];
  }
};

inline DenseMap materialize_linear_map(
    const std::function<Tensor<double>(const Tensor<double>&)>& f,
    const std::vector<std::int64_t>& in_dims) {
  Tensor<double> probe(in_dims);
  Tensor<double> first = f(probe);
  DenseMap m;
  m.cols = probe.size();
  m.rows = first.size();
  m.a.assign(static_cast<std::size_t>(m.rows * m.cols), 0.0);
  for (std::int64_t c = 0; c < m.cols; ++c) {
    probe[c] = 1.0;
    Tensor<double> col = f(probe);
    probe[c] = 0.0;
    for (std::int64_t r = 0; r < m.rows; ++r) m.a[static_cast<std::size_t>(r * m.cols + c)] = col[r];
  }
  return m;
}

/// y -> M^T y, the explicit transpose action used to certify adjoints.
inline Tensor<double> apply_dense_transpose(const DenseMap& m, const Tensor<double>& y,
                                            const std::vector<std::int64_t>& in_dims) {
  if (y.size() != m.rows) throw ShapeError("direct adjoint: output-space vector size mismatch");
  Tensor<double> x(in_dims);
  if (x.size() != m.cols) throw ShapeError("direct adjoint: input-space dims mismatch");
  for (std::int64_t r = 0; r < m.rows; ++r) {
    const double yv = y[r];
    if (yv == 0.0) continue;
    const double* row = m.a.data() + r * m.cols;
    for (std::int64_t c = 0; c < m.cols; ++c) x[c] += row[c] * yv;
  }
  return x;
}

}  // namespace gunet::oracle
