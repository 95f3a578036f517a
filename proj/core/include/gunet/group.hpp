#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "gunet/errors.hpp"
#include "gunet/tensor.hpp"

namespace gunet {

enum class GroupKind { p1, p4, p4m };

/// One of the discrete wallpaper groups p1, p4, p4m. Only the stabilizer
/// (the rotations/reflections fixing the origin) is represented explicitly;
/// translations are carried by array indices throughout.
struct GroupSpec {
  GroupKind kind = GroupKind::p1;

  int stabilizer_size() const {
    switch (kind) {
      case GroupKind::p1: return 1;
      case GroupKind::p4: return 4;
      case GroupKind::p4m: return 8;
    }
    return 1;
  }

  std::string name() const {
    switch (kind) {
      case GroupKind::p1: return "p1";
      case GroupKind::p4: return "p4";
      case GroupKind::p4m: return "p4m";
    }
    return "p1";
  }

  static GroupSpec p1() { return {GroupKind::p1}; }
  static GroupSpec p4() { return {GroupKind::p4}; }
  static GroupSpec p4m() { return {GroupKind::p4m}; }
  static GroupSpec from_name(const std::string& name);

  bool operator==(const GroupSpec& o) const { return kind == o.kind; }
  bool operator!=(const GroupSpec& o) const { return kind != o.kind; }
};

/// Stabilizer element g = M^m R^r: r quarter-turn rotations followed by an
/// optional horizontal mirror. Composition law:
///   (m1, r1) * (m2, r2) = (m1 ^ m2, ((-1)^m2 * r1 + r2) mod 4)
struct GroupElement {
  int mirror = 0;    // m in {0, 1}
  int rotation = 0;  // r in {0, 1, 2, 3}

  bool operator==(const GroupElement& o) const {
    return mirror == o.mirror && rotation == o.rotation;
  }
  bool operator!=(const GroupElement& o) const { return !(*this == o); }
};

inline GroupElement identity_element() { return {0, 0}; }

void validate_element(GroupElement g, GroupSpec spec);

/// Stabilizer elements in canonical order: identity first, rotations
/// r = 1, 2, 3, then (p4m only) the mirrored elements (1,0)..(1,3).
std::vector<GroupElement> group_elements(GroupSpec spec);

/// Position of g in the canonical order; this indexes orientation channels.
int element_index(GroupElement g, GroupSpec spec);
GroupElement element_at(int index, GroupSpec spec);

GroupElement compose(GroupElement g1, GroupElement g2, GroupSpec spec);
GroupElement inverse(GroupElement g, GroupSpec spec);

struct Coord {
  std::int64_t row = 0;
  std::int64_t col = 0;
  bool operator==(const Coord& o) const { return row == o.row && col == o.col; }
};

/// Image of grid point p under g acting about the array center.
/// The quarter turn maps (i, j) -> (j, W-1-i) and the mirror flips columns,
/// applied in M^m R^r order. Quarter turns require a square extent.
Coord act_on_coords(GroupElement g, Coord p, std::int64_t h, std::int64_t w);

/// Precomputed tap permutations for filter transformation.
///
/// planar[s][i*k + j] is the flat (i', j') a transformed planar filter reads
/// its (i, j) tap from, for output orientation s. full[s_out][(s_in*k + i)*k + j]
/// is the flat (s_in', i', j') source inside a stored group filter [S, k, k].
/// Every row is a permutation; the identity row is the identity map.
struct IndexTable {
  GroupSpec group;
  int kernel_size = 0;
  std::vector<std::vector<std::int32_t>> planar;
  std::vector<std::vector<std::int32_t>> full;
};

IndexTable build_index_table(GroupSpec spec, int kernel_size);

/// Process-wide cache: tables are built once and shared read-only.
std::shared_ptr<const IndexTable> shared_index_table(GroupSpec spec, int kernel_size);

/// psi transformed by g: out[p] = psi[act_on_coords(inverse(g), p)].
/// Transforming by g1 after g2 equals transforming by compose(g1, g2).
template <typename T>
Tensor<T> transform_planar_filter(const Tensor<T>& psi, GroupElement g, GroupSpec spec) {
  if (psi.rank() != 2 || psi.dim(0) != psi.dim(1)) {
    throw ShapeError("transform_planar_filter expects a square [k,k] filter");
  }
  const std::int64_t k = psi.dim(0);
  if (k % 2 == 0) throw ShapeError("filter kernel size must be odd");
  validate_element(g, spec);
  GroupElement ginv = inverse(g, spec);
  Tensor<T> out({k, k});
  for (std::int64_t i = 0; i < k; ++i) {
    for (std::int64_t j = 0; j < k; ++j) {
      Coord src = act_on_coords(ginv, {i, j}, k, k);
      out.at(i, j) = psi.at(src.row, src.col);
    }
  }
  return out;
}

}  // namespace gunet
