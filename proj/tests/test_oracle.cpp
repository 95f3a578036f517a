#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gunet/equivcheck.hpp"
#include "gunet/oracle.hpp"
#include "gunet/ops.hpp"
#include "gunet/rng.hpp"

using namespace gunet;

namespace {

void fill_normal(Tensor<double>& t, Rng& rng) {
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.normal();
}

}  // namespace

TEST_CASE("element matrices: orthogonal, closed, and recoverable") {
  for (const auto& g : group_elements(GroupSpec::p4m())) {
    oracle::Mat2 a = oracle::element_matrix(g);
    // orthogonal integer matrix: A A^T = I
    oracle::Mat2 prod = a.times(a.transposed());
    CHECK(prod == oracle::Mat2::identity());
    CHECK(oracle::match_element(a) == g);
  }
}

TEST_CASE("direct_lift: identity-delta filter reproduces the input in every orientation") {
  Rng rng(1);
  Tensor<double> x({1, 2, 5, 5});
  fill_normal(x, rng);
  Tensor<double> w({2, 2, 3, 3});
  w.at(0, 0, 1, 1) = 1.0;
  w.at(1, 1, 1, 1) = 1.0;
  auto out = oracle::direct_lift(x, w, GroupSpec::p4(), 1);
  for (std::int64_t c = 0; c < 2; ++c) {
    for (std::int64_t s = 0; s < 4; ++s) {
      for (std::int64_t p = 0; p < 25; ++p) {
        CHECK(out.data[((c * 4 + s) * 25) + p] == doctest::Approx(x[c * 25 + p]));
      }
    }
  }
}

TEST_CASE("direct_lift under p1 equals naive planar correlation") {
  Rng rng(2);
  Tensor<double> x({1, 2, 6, 6});
  fill_normal(x, rng);
  Tensor<double> w({3, 2, 3, 3});
  fill_normal(w, rng);
  auto slow = oracle::direct_lift(x, w, GroupSpec::p1(), 1);
  Tensor<double> xs({2, 6, 6});
  std::copy(x.data(), x.data() + x.size(), xs.data());
  auto plain = correlate2d(xs, w, 1, 1);
  CHECK(max_abs_diff(slow.data.reshaped(plain.dims()), plain) < 1e-12);
}

TEST_CASE("direct_group: identity filter reproduces the input") {
  Rng rng(3);
  auto spec = GroupSpec::p4m();
  Tensor<double> data({1, 2, 8, 5, 5});
  fill_normal(data, rng);
  auto f = make_group_feature_map(std::move(data), spec);
  Tensor<double> w({2, 2, 8, 3, 3});
  w.at(0, 0, 0, 1, 1) = 1.0;
  w.at(1, 1, 0, 1, 1) = 1.0;
  auto out = oracle::direct_group(f, w, 1, 1);
  CHECK(max_abs_diff(out.data, f.data) < 1e-12);
}

TEST_CASE("direct_proj: delta filter sums orientations; p1 reduces to planar") {
  Rng rng(4);
  auto spec = GroupSpec::p4();
  Tensor<double> data({1, 1, 4, 5, 5});
  fill_normal(data, rng);
  auto f = make_group_feature_map(std::move(data), spec);
  Tensor<double> w({1, 1, 3, 3});
  w.at(0, 0, 1, 1) = 1.0;
  auto out = oracle::direct_proj(f, w, 1);
  for (std::int64_t p = 0; p < 25; ++p) {
    double expect = 0.0;
    for (std::int64_t s = 0; s < 4; ++s) expect += f.data[s * 25 + p];
    CHECK(out[p] == doctest::Approx(expect));
  }

  auto p1 = GroupSpec::p1();
  Tensor<double> d1({1, 2, 1, 6, 6});
  fill_normal(d1, rng);
  auto f1 = make_group_feature_map(std::move(d1), p1);
  Tensor<double> w1({2, 2, 3, 3});
  fill_normal(w1, rng);
  auto o1 = oracle::direct_proj(f1, w1, 1);
  Tensor<double> xs({2, 6, 6});
  std::copy(f1.data.data(), f1.data.data() + xs.size(), xs.data());
  auto plain = correlate2d(xs, w1, 1, 1);
  CHECK(max_abs_diff(o1.reshaped(plain.dims()), plain) < 1e-12);
}

TEST_CASE("dense matrix probing: scalar map and stride-2 delta-filter orthogonality") {
  // 1x1 spatial case: the map is a plain scalar multiplication, and the
  // adjoint is the same scalar
  auto spec = GroupSpec::p1();
  Tensor<double> w({1, 1, 1, 1, 1});
  w[0] = 2.5;
  auto fwd = [&](const Tensor<double>& v) {
    return oracle::direct_group(make_group_feature_map(v, spec), w, 1, 0).data;
  };
  auto m = oracle::materialize_linear_map(fwd, {1, 1, 1, 1, 1});
  REQUIRE(m.rows == 1);
  REQUIRE(m.cols == 1);
  CHECK(m.at(0, 0) == doctest::Approx(2.5));
  Tensor<double> y({1, 1, 1, 1, 1});
  y[0] = 3.0;
  auto adj = oracle::apply_dense_transpose(m, y, {1, 1, 1, 1, 1});
  CHECK(adj[0] == doctest::Approx(7.5));

  // delta filters at stride 2 touch disjoint inputs: rows are orthogonal
  auto p4 = GroupSpec::p4();
  Tensor<double> wd({1, 1, 4, 3, 3});
  wd.at(0, 0, 0, 1, 1) = 1.0;
  auto fwd2 = [&](const Tensor<double>& v) {
    return oracle::direct_group(make_group_feature_map(v, p4), wd, 2, 0).data;
  };
  auto m2 = oracle::materialize_linear_map(fwd2, {1, 1, 4, 5, 5});
  for (std::int64_t r1 = 0; r1 < m2.rows; ++r1) {
    for (std::int64_t r2 = r1 + 1; r2 < m2.rows; ++r2) {
      double dots = 0.0;
      for (std::int64_t c = 0; c < m2.cols; ++c) dots += m2.at(r1, c) * m2.at(r2, c);
      CHECK(dots == doctest::Approx(0.0));
    }
  }
}

TEST_CASE("transposed group conv equals the explicit dense transpose") {
  for (auto spec : {GroupSpec::p1(), GroupSpec::p4(), GroupSpec::p4m()}) {
    for (int stride : {1, 2}) {
      CHECK(verify::tconv_dense_transpose_error(spec, 3, stride, 5050 + stride) < 1e-10);
    }
  }
}

TEST_CASE("oracle/optimized agreement over the full fuzz grid, a few seeds") {
  for (auto spec : {GroupSpec::p1(), GroupSpec::p4(), GroupSpec::p4m()}) {
    for (int k : {1, 3, 5}) {
      for (std::uint64_t seed : {1u, 2u}) {
        CHECK(verify::lift_oracle_error(spec, k, seed) < 1e-10);
        CHECK(verify::proj_oracle_error(spec, k, seed) < 1e-10);
        for (int stride : {1, 2}) {
          CHECK(verify::group_oracle_error(spec, k, stride, seed) < 1e-10);
        }
      }
    }
  }
}

TEST_CASE("layer equivariance stated as matrix commutation") {
  // M conjugated by the permutation matrices of T_g equals itself:
  // M P_in(g) = P_out(g) M for the stride-1 group conv
  Rng rng(6);
  auto spec = GroupSpec::p4();
  Tensor<double> w({1, 1, 4, 3, 3});
  fill_normal(w, rng);
  std::vector<std::int64_t> in_dims = {1, 1, 4, 5, 5};
  auto fwd = [&](const Tensor<double>& v) {
    return oracle::direct_group(make_group_feature_map(v, spec), w, 1, 1).data;
  };
  auto m = oracle::materialize_linear_map(fwd, in_dims);
  for (const auto& g : group_elements(spec)) {
    auto perm_in = oracle::materialize_linear_map(
        [&](const Tensor<double>& v) {
          return apply_group_transform(g, make_group_feature_map(v, spec)).data;
        },
        in_dims);
    auto perm_out = perm_in;  // same space: Cin = Cout, stride 1, pad 1
    double worst = 0.0;
    for (std::int64_t r = 0; r < m.rows; ++r) {
      for (std::int64_t c = 0; c < m.cols; ++c) {
        double mp = 0.0, pm = 0.0;
        for (std::int64_t t = 0; t < m.cols; ++t) {
          mp += m.at(r, t) * perm_in.at(t, c);
          pm += perm_out.at(r, t) * m.at(t, c);
        }
        worst = std::max(worst, std::abs(mp - pm));
      }
    }
    CHECK(worst < 1e-12);
  }
}

TEST_CASE("a corrupted index table breaks lifting equivariance") {
  auto spec = GroupSpec::p4m();
  CHECK(verify::lift_equivariance_error(spec, 3, 123) < 1e-10);
  auto good = build_index_table(spec, 3);
  auto corrupted = good;
  // swap two taps in a non-identity orientation row
  std::swap(corrupted.planar[2][0], corrupted.planar[2][5]);
  std::swap(corrupted.full[2][0], corrupted.full[2][5]);
  auto bad = std::make_shared<const IndexTable>(std::move(corrupted));
  CHECK(verify::lift_equivariance_error(spec, 3, 123, bad) > 1e-6);
}
