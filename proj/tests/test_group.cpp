#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <set>

#include "gunet/group.hpp"
#include "gunet/rng.hpp"

using namespace gunet;

namespace {

// Test-local oracle: 2x2 integer matrices over (drow, dcol) offsets.
// Quarter turn (di,dj) -> (dj,-di), mirror (di,dj) -> (di,-dj).
using IMat = std::array<int, 4>;

IMat imul(const IMat& a, const IMat& b) {
  return {a[0] * b[0] + a[1] * b[2], a[0] * b[1] + a[1] * b[3], a[2] * b[0] + a[3] * b[2],
          a[2] * b[1] + a[3] * b[3]};
}

IMat imat_of(GroupElement g) {
  IMat rot = {0, 1, -1, 0};
  IMat mir = {1, 0, 0, -1};
  IMat m = {1, 0, 0, 1};
  for (int t = 0; t < g.rotation; ++t) m = imul(rot, m);
  if (g.mirror) m = imul(mir, m);
  return m;
}

GroupElement match(const IMat& m) {
  for (int mm = 0; mm < 2; ++mm) {
    for (int r = 0; r < 4; ++r) {
      if (imat_of({mm, r}) == m) return {mm, r};
    }
  }
  FAIL("no element matches matrix");
  return {};
}

Coord act_via_matrix(GroupElement g, Coord p, std::int64_t n) {
  // centered offsets, matrix action, back to array indices
  const double c = static_cast<double>(n - 1) / 2.0;
  const double di = static_cast<double>(p.row) - c;
  const double dj = static_cast<double>(p.col) - c;
  IMat m = imat_of(g);
  const double ri = m[0] * di + m[1] * dj;
  const double rj = m[2] * di + m[3] * dj;
  return {static_cast<std::int64_t>(ri + c + 0.5), static_cast<std::int64_t>(rj + c + 0.5)};
}

}  // namespace

TEST_CASE("group specs expose the right stabilizer sizes") {
  CHECK(GroupSpec::p1().stabilizer_size() == 1);
  CHECK(GroupSpec::p4().stabilizer_size() == 4);
  CHECK(GroupSpec::p4m().stabilizer_size() == 8);
  CHECK(GroupSpec::from_name("p4m") == GroupSpec::p4m());
  CHECK_THROWS_AS(GroupSpec::from_name("p8"), ConfigError);
}

TEST_CASE("compose: fixed examples") {
  auto p4 = GroupSpec::p4();
  auto p4m = GroupSpec::p4m();
  CHECK(compose({0, 1}, {0, 3}, p4) == GroupElement{0, 0});
  CHECK(compose({1, 0}, {1, 0}, p4m) == GroupElement{0, 0});
  // derived via the integer-matrix oracle
  GroupElement expect = match(imul(imat_of({1, 1}), imat_of({0, 1})));
  CHECK(compose({1, 1}, {0, 1}, p4m) == expect);
  CHECK(compose({1, 1}, {0, 1}, p4m) == GroupElement{1, 2});
}

TEST_CASE("compose agrees with the matrix product for all pairs") {
  auto p4m = GroupSpec::p4m();
  for (const auto& g1 : group_elements(p4m)) {
    for (const auto& g2 : group_elements(p4m)) {
      CHECK(compose(g1, g2, p4m) == match(imul(imat_of(g1), imat_of(g2))));
    }
  }
}

TEST_CASE("group axioms hold exhaustively") {
  for (auto spec : {GroupSpec::p1(), GroupSpec::p4(), GroupSpec::p4m()}) {
    auto elems = group_elements(spec);
    CHECK(static_cast<int>(elems.size()) == spec.stabilizer_size());
    std::set<std::pair<int, int>> seen;
    for (const auto& g : elems) seen.insert({g.mirror, g.rotation});
    CHECK(seen.size() == elems.size());
    for (const auto& a : elems) {
      // identity and inverse
      CHECK(compose(a, identity_element(), spec) == a);
      CHECK(compose(identity_element(), a, spec) == a);
      CHECK(compose(inverse(a, spec), a, spec) == identity_element());
      CHECK(compose(a, inverse(a, spec), spec) == identity_element());
      for (const auto& b : elems) {
        // closure
        CHECK_NOTHROW(validate_element(compose(a, b, spec), spec));
        for (const auto& c : elems) {
          // associativity
          CHECK(compose(compose(a, b, spec), c, spec) == compose(a, compose(b, c, spec), spec));
        }
      }
    }
  }
}

TEST_CASE("invalid elements are rejected") {
  CHECK_THROWS_AS(validate_element({1, 0}, GroupSpec::p4()), InvalidElementError);
  CHECK_THROWS_AS(validate_element({0, 2}, GroupSpec::p1()), InvalidElementError);
  CHECK_THROWS_AS(compose({1, 0}, {0, 0}, GroupSpec::p4()), InvalidElementError);
  CHECK_THROWS_AS(inverse({0, 5}, GroupSpec::p4()), InvalidElementError);
}

TEST_CASE("inverse: fixed examples") {
  auto p4m = GroupSpec::p4m();
  CHECK(inverse({0, 1}, p4m) == GroupElement{0, 3});
  CHECK(inverse({1, 3}, p4m) == GroupElement{1, 3});
  CHECK(inverse({0, 2}, p4m) == GroupElement{0, 2});
}

TEST_CASE("act_on_coords: fixed examples") {
  CHECK(act_on_coords({0, 0}, {2, 5}, 7, 7) == Coord{2, 5});
  CHECK(act_on_coords({0, 1}, {0, 0}, 3, 3) == Coord{0, 2});
  // derived: apply R then M as matrix maps on centered coordinates
  CHECK(act_on_coords({1, 1}, {0, 0}, 3, 3) == act_via_matrix({1, 1}, {0, 0}, 3));
  CHECK(act_on_coords({1, 1}, {0, 0}, 3, 3) == Coord{0, 0});
}

TEST_CASE("act_on_coords matches the matrix oracle everywhere") {
  for (const auto& g : group_elements(GroupSpec::p4m())) {
    for (std::int64_t i = 0; i < 7; ++i) {
      for (std::int64_t j = 0; j < 7; ++j) {
        CHECK(act_on_coords(g, {i, j}, 7, 7) == act_via_matrix(g, {i, j}, 7));
      }
    }
  }
}

TEST_CASE("act_on_coords is a homomorphism and a bijection") {
  auto p4m = GroupSpec::p4m();
  for (const auto& g1 : group_elements(p4m)) {
    for (const auto& g2 : group_elements(p4m)) {
      auto g12 = compose(g1, g2, p4m);
      for (std::int64_t i = 0; i < 7; ++i) {
        for (std::int64_t j = 0; j < 7; ++j) {
          CHECK(act_on_coords(g1, act_on_coords(g2, {i, j}, 7, 7), 7, 7) ==
                act_on_coords(g12, {i, j}, 7, 7));
        }
      }
    }
    std::set<std::pair<std::int64_t, std::int64_t>> image;
    for (std::int64_t i = 0; i < 7; ++i) {
      for (std::int64_t j = 0; j < 7; ++j) {
        auto c = act_on_coords(g1, {i, j}, 7, 7);
        image.insert({c.row, c.col});
      }
    }
    CHECK(image.size() == 49);
  }
}

TEST_CASE("act_on_coords shape errors") {
  CHECK_THROWS_AS(act_on_coords({0, 1}, {0, 0}, 3, 5), ShapeError);
  CHECK_NOTHROW(act_on_coords({0, 2}, {1, 2}, 3, 5));
  CHECK_NOTHROW(act_on_coords({1, 0}, {1, 2}, 3, 5));
  CHECK_THROWS_AS(act_on_coords({0, 0}, {3, 0}, 3, 3), ShapeError);
}

TEST_CASE("transform_planar_filter: delta at center is fixed by every element") {
  Tensor<double> psi({5, 5});
  psi.at(2, 2) = 1.0;
  for (const auto& g : group_elements(GroupSpec::p4m())) {
    auto out = transform_planar_filter(psi, g, GroupSpec::p4m());
    CHECK(max_abs_diff(out, psi) == 0.0);
  }
}

TEST_CASE("transform_planar_filter: corner tap under a quarter turn") {
  Tensor<double> psi({3, 3});
  psi.at(0, 0) = 1.0;
  // with act(r=1): (i,j)->(j, W-1-i), the transformed filter reads tap (i,j)
  // from act(r=3,(i,j)), so the corner value lands at (0, 2)
  auto out = transform_planar_filter(psi, {0, 1}, GroupSpec::p4m());
  CHECK(out.at(0, 2) == 1.0);
  auto out3 = transform_planar_filter(psi, {0, 3}, GroupSpec::p4m());
  CHECK(out3.at(2, 0) == 1.0);
}

TEST_CASE("transform_planar_filter matches per-tap matrix mapping") {
  Rng rng(7);
  Tensor<double> psi({5, 5});
  for (std::int64_t i = 0; i < psi.size(); ++i) psi[i] = rng.normal();
  for (const auto& g : group_elements(GroupSpec::p4m())) {
    auto out = transform_planar_filter(psi, g, GroupSpec::p4m());
    // out[p] = psi[g^{-1} p] computed with the matrix oracle
    for (std::int64_t i = 0; i < 5; ++i) {
      for (std::int64_t j = 0; j < 5; ++j) {
        Coord src = act_via_matrix(inverse(g, GroupSpec::p4m()), {i, j}, 5);
        CHECK(out.at(i, j) == psi.at(src.row, src.col));
      }
    }
  }
}

TEST_CASE("transform_planar_filter composition law, fuzzed") {
  Rng rng(99);
  auto p4m = GroupSpec::p4m();
  for (int rep = 0; rep < 5; ++rep) {
    Tensor<double> psi({5, 5});
    for (std::int64_t i = 0; i < psi.size(); ++i) psi[i] = rng.normal();
    for (const auto& g1 : group_elements(p4m)) {
      for (const auto& g2 : group_elements(p4m)) {
        auto two_step = transform_planar_filter(transform_planar_filter(psi, g2, p4m), g1, p4m);
        auto one_step = transform_planar_filter(psi, compose(g1, g2, p4m), p4m);
        CHECK(max_abs_diff(two_step, one_step) == 0.0);
      }
    }
  }
}

TEST_CASE("transform_planar_filter rejects even kernels") {
  Tensor<double> psi({4, 4});
  CHECK_THROWS_AS(transform_planar_filter(psi, {0, 1}, GroupSpec::p4m()), ShapeError);
}

TEST_CASE("index table: p1 is the identity map") {
  auto t = build_index_table(GroupSpec::p1(), 3);
  REQUIRE(t.planar.size() == 1);
  REQUIRE(t.full.size() == 1);
  CHECK(t.planar[0].size() == 9);
  for (std::int32_t i = 0; i < 9; ++i) {
    CHECK(t.planar[0][static_cast<std::size_t>(i)] == i);
    CHECK(t.full[0][static_cast<std::size_t>(i)] == i);
  }
}

TEST_CASE("index table: p4 k=3 derived entry") {
  auto t = build_index_table(GroupSpec::p4(), 3);
  // s_out = (0,1), s_in = (0,0), tap (0,0) reads from (s_in'=(0,3), 2, 0)
  const int so = element_index({0, 1}, GroupSpec::p4());
  const std::int32_t src = t.full[static_cast<std::size_t>(so)][0];
  const int expect_orient = element_index({0, 3}, GroupSpec::p4());
  CHECK(src == expect_orient * 9 + 2 * 3 + 0);
}

TEST_CASE("index table rows are permutations and identity row is identity") {
  for (auto spec : {GroupSpec::p1(), GroupSpec::p4(), GroupSpec::p4m()}) {
    for (int k : {1, 3, 5}) {
      auto t = build_index_table(spec, k);
      const int S = spec.stabilizer_size();
      REQUIRE(static_cast<int>(t.full.size()) == S);
      for (int so = 0; so < S; ++so) {
        std::set<std::int32_t> targets(t.full[static_cast<std::size_t>(so)].begin(),
                                       t.full[static_cast<std::size_t>(so)].end());
        CHECK(targets.size() == static_cast<std::size_t>(S * k * k));
      }
      for (std::size_t p = 0; p < t.full[0].size(); ++p) {
        CHECK(t.full[0][p] == static_cast<std::int32_t>(p));
      }
    }
  }
}

TEST_CASE("index table is consistent with transform_planar_filter per orientation slice") {
  Rng rng(5);
  auto spec = GroupSpec::p4m();
  const int k = 3;
  auto t = build_index_table(spec, k);
  auto elems = group_elements(spec);
  // one stored orientation slice transformed spatially must match the
  // planar row gather
  Tensor<double> psi({k, k});
  for (std::int64_t i = 0; i < psi.size(); ++i) psi[i] = rng.normal();
  for (int so = 0; so < spec.stabilizer_size(); ++so) {
    auto direct = transform_planar_filter(psi, elems[static_cast<std::size_t>(so)], spec);
    for (std::int64_t p = 0; p < k * k; ++p) {
      CHECK(direct[p] == psi[t.planar[static_cast<std::size_t>(so)][static_cast<std::size_t>(p)]]);
    }
  }
  CHECK_THROWS_AS(build_index_table(spec, 4), ShapeError);
}

TEST_CASE("shared index tables are cached") {
  auto a = shared_index_table(GroupSpec::p4(), 3);
  auto b = shared_index_table(GroupSpec::p4(), 3);
  CHECK(a.get() == b.get());
}
