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

GroupFeatureMap<double> random_gmap(GroupSpec spec, std::int64_t b, std::int64_t c, std::int64_t h,
                                    Rng& rng) {
  Tensor<double> t({b, c, spec.stabilizer_size(), h, h});
  fill_normal(t, rng);
  return make_group_feature_map(std::move(t), spec);
}

}  // namespace

TEST_CASE("lifting with center-delta filters copies the channel mix into every orientation") {
  Rng rng(1);
  auto spec = GroupSpec::p4();
  Tensor<double> x({1, 2, 5, 5});
  fill_normal(x, rng);
  auto bank = make_lifting_bank<double>(spec, 1, 2, 3, false);
  bank.weights.at(0, 0, 1, 1) = 0.5;
  bank.weights.at(0, 1, 1, 1) = 2.0;
  auto out = lift_conv_forward(x, bank, 1);
  REQUIRE(out.orientations() == 4);
  for (std::int64_t s = 0; s < 4; ++s) {
    for (std::int64_t i = 0; i < 5; ++i) {
      for (std::int64_t j = 0; j < 5; ++j) {
        CHECK(out.data.at(0, 0, s, i, j) ==
              doctest::Approx(0.5 * x.at(0, 0, i, j) + 2.0 * x.at(0, 1, i, j)));
      }
    }
  }
}

TEST_CASE("lifting under p1 is exactly a planar correlation") {
  Rng rng(2);
  Tensor<double> x({2, 3, 7, 7});
  fill_normal(x, rng);
  auto bank = make_lifting_bank<double>(GroupSpec::p1(), 4, 3, 3);
  fill_normal(bank.weights, rng);
  fill_normal(bank.bias, rng);
  auto out = lift_conv_forward(x, bank, 1);
  REQUIRE(out.orientations() == 1);
  for (std::int64_t b = 0; b < 2; ++b) {
    Tensor<double> xb({3, 7, 7});
    std::copy(x.data() + b * 3 * 49, x.data() + (b + 1) * 3 * 49, xb.data());
    auto plain = correlate2d(xb, bank.weights, 1, 1);
    for (std::int64_t c = 0; c < 4; ++c) {
      for (std::int64_t p = 0; p < 49; ++p) {
        CHECK(out.data[((b * 4 + c) * 1) * 49 + p] ==
              doctest::Approx(plain[c * 49 + p] + bank.bias[c]).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("lifting matches the direct sum on random p4m cases") {
  for (std::uint64_t seed : {10u, 11u, 12u}) {
    CHECK(verify::lift_oracle_error(GroupSpec::p4m(), 3, seed) < 1e-10);
    CHECK(verify::lift_oracle_error(GroupSpec::p4m(), 5, seed) < 1e-10);
  }
}

TEST_CASE("group conv with the identity filter is the identity") {
  Rng rng(3);
  auto spec = GroupSpec::p4m();
  auto f = random_gmap(spec, 2, 3, 5, rng);
  auto bank = make_group_bank<double>(spec, 3, 3, 3, false);
  for (std::int64_t c = 0; c < 3; ++c) {
    bank.weights.at(c, c, 0, 1, 1) = 1.0;  // identity orientation, center tap
  }
  auto out = group_conv_forward(f, bank, 1, 1);
  CHECK(max_abs_diff(out.data, f.data) < 1e-15);
}

TEST_CASE("group conv under p1 reduces to planar correlation") {
  Rng rng(4);
  auto spec = GroupSpec::p1();
  auto f = random_gmap(spec, 1, 2, 7, rng);
  auto bank = make_group_bank<double>(spec, 3, 2, 3, false);
  fill_normal(bank.weights, rng);
  auto out = group_conv_forward(f, bank, 1, 1);
  Tensor<double> x({2, 7, 7});
  std::copy(f.data.data(), f.data.data() + 2 * 49, x.data());
  Tensor<double> w({3, 2, 3, 3});
  std::copy(bank.weights.data(), bank.weights.data() + w.size(), w.data());
  auto plain = correlate2d(x, w, 1, 1);
  CHECK(max_abs_diff(out.data.reshaped(plain.dims()), plain) < 1e-15);
}

TEST_CASE("group conv matches the direct sum across groups, kernels, strides") {
  for (auto spec : {GroupSpec::p1(), GroupSpec::p4(), GroupSpec::p4m()}) {
    for (int k : {1, 3}) {
      for (int stride : {1, 2}) {
        CHECK(verify::group_oracle_error(spec, k, stride, 77) < 1e-10);
      }
    }
  }
  CHECK(verify::group_oracle_error(GroupSpec::p4(), 5, 1, 78) < 1e-10);
}

TEST_CASE("projection with a center-delta filter sums the orientation channels") {
  Rng rng(5);
  auto spec = GroupSpec::p4m();
  auto f = random_gmap(spec, 1, 2, 5, rng);
  auto bank = make_projection_bank<double>(spec, 1, 2, 3, false);
  bank.weights.at(0, 0, 1, 1) = 1.0;
  bank.weights.at(0, 1, 1, 1) = 1.0;
  auto out = proj_conv_forward(f, bank, 1);
  for (std::int64_t i = 0; i < 5; ++i) {
    for (std::int64_t j = 0; j < 5; ++j) {
      double expect = 0.0;
      for (std::int64_t c = 0; c < 2; ++c) {
        for (std::int64_t s = 0; s < 8; ++s) expect += f.data.at(0, c, s, i, j);
      }
      CHECK(out.at(0, 0, i, j) == doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("projection matches the direct sum on random cases") {
  for (std::uint64_t seed : {20u, 21u, 22u}) {
    CHECK(verify::proj_oracle_error(GroupSpec::p4m(), 3, seed) < 1e-10);
  }
  CHECK(verify::proj_oracle_error(GroupSpec::p1(), 3, 23) < 1e-10);
  CHECK(verify::proj_oracle_error(GroupSpec::p4(), 5, 24) < 1e-10);
}

TEST_CASE("transposed group conv: stride-1 identity filter is the identity") {
  Rng rng(6);
  auto spec = GroupSpec::p4();
  auto f = random_gmap(spec, 1, 2, 5, rng);
  auto bank = make_group_bank<double>(spec, 2, 2, 3, false);
  for (std::int64_t c = 0; c < 2; ++c) bank.weights.at(c, c, 0, 1, 1) = 1.0;
  auto out = group_transposed_conv_forward(f, bank, 1, 1);
  CHECK(max_abs_diff(out.data, f.data) < 1e-15);
}

TEST_CASE("transposed group conv size formula and adjoint identity") {
  Rng rng(7);
  auto spec = GroupSpec::p4();
  auto f = random_gmap(spec, 1, 2, 7, rng);
  auto bank = make_group_bank<double>(spec, 2, 3, 3, false);
  fill_normal(bank.weights, rng);
  auto out = group_transposed_conv_forward(f, bank, 2, 1);
  CHECK(out.height() == 13);
  CHECK(out.channels() == 3);
  for (int stride : {1, 2}) {
    for (auto g : {GroupSpec::p1(), GroupSpec::p4(), GroupSpec::p4m()}) {
      CHECK(verify::tconv_adjoint_error(g, 3, stride, 90 + stride) < 1e-10);
    }
  }
}

TEST_CASE("transposed group conv consumes the bank's output channels") {
  Rng rng(8);
  auto spec = GroupSpec::p4();
  auto f = random_gmap(spec, 1, 3, 5, rng);  // 3 channels
  auto bank = make_group_bank<double>(spec, 2, 4, 3, false);
  CHECK_THROWS_AS(group_transposed_conv_forward(f, bank, 1, 1), ShapeError);
}

TEST_CASE("group mismatch raises") {
  Rng rng(9);
  auto f = random_gmap(GroupSpec::p4(), 1, 2, 5, rng);
  auto bank = make_group_bank<double>(GroupSpec::p4m(), 2, 2, 3);
  CHECK_THROWS_AS(group_conv_forward(f, bank, 1, 1), ShapeError);
  auto pbank = make_projection_bank<double>(GroupSpec::p4m(), 2, 2, 3);
  CHECK_THROWS_AS(proj_conv_forward(f, pbank, 1), ShapeError);
}

TEST_CASE("batch norm: constant input with unit gamma and zero beta gives zeros") {
  auto spec = GroupSpec::p4();
  auto f = make_group_feature_map(Tensor<double>::full({2, 3, 4, 5, 5}, 2.5), spec);
  auto st = make_batchnorm_state<double>(3);
  auto out = group_batchnorm_forward(f, st, BatchNormMode::train);
  CHECK(max_abs(out.data) == 0.0);
}

TEST_CASE("batch norm statistics aggregate over the orientation axis") {
  Rng rng(10);
  auto spec = GroupSpec::p4();
  auto f = random_gmap(spec, 2, 2, 5, rng);
  // an orientation-permuted copy of the batch must produce the same moments
  auto permuted = apply_group_transform({0, 1}, f);
  auto st_a = make_batchnorm_state<double>(2);
  auto st_b = make_batchnorm_state<double>(2);
  group_batchnorm_forward(f, st_a, BatchNormMode::train);
  group_batchnorm_forward(permuted, st_b, BatchNormMode::train);
  CHECK(max_abs_diff(st_a.running_mean, st_b.running_mean) < 1e-14);
  CHECK(max_abs_diff(st_a.running_var, st_b.running_var) < 1e-14);
}

TEST_CASE("batch norm matches a two-pass oracle and eval uses running stats") {
  Rng rng(11);
  auto spec = GroupSpec::p4m();
  auto f = random_gmap(spec, 2, 2, 4, rng);
  auto st = make_batchnorm_state<double>(2);
  fill_normal(st.gamma, rng);
  fill_normal(st.beta, rng);
  st.momentum = 1.0;  // running stats become the batch stats
  auto out = group_batchnorm_forward(f, st, BatchNormMode::train);
  const std::int64_t plane = 8 * 4 * 4;
  for (std::int64_t c = 0; c < 2; ++c) {
    double sum = 0.0;
    std::int64_t n = 0;
    for (std::int64_t b = 0; b < 2; ++b) {
      for (std::int64_t p = 0; p < plane; ++p) {
        sum += f.data[(b * 2 + c) * plane + p];
        ++n;
      }
    }
    const double mean = sum / static_cast<double>(n);
    double sq = 0.0;
    for (std::int64_t b = 0; b < 2; ++b) {
      for (std::int64_t p = 0; p < plane; ++p) {
        const double d = f.data[(b * 2 + c) * plane + p] - mean;
        sq += d * d;
      }
    }
    const double var = sq / static_cast<double>(n);
    CHECK(st.running_mean[c] == doctest::Approx(mean).epsilon(1e-12));
    CHECK(st.running_var[c] == doctest::Approx(var).epsilon(1e-12));
    for (std::int64_t b = 0; b < 2; ++b) {
      for (std::int64_t p = 0; p < plane; ++p) {
        const double xhat = (f.data[(b * 2 + c) * plane + p] - mean) / std::sqrt(var + 1e-5);
        CHECK(out.data[(b * 2 + c) * plane + p] ==
              doctest::Approx(st.gamma[c] * xhat + st.beta[c]).epsilon(1e-10));
      }
    }
  }
  // eval mode applies the stored statistics verbatim
  auto out_eval = group_batchnorm_forward(f, st, BatchNormMode::eval);
  CHECK(max_abs_diff(out_eval.data, out.data) < 1e-10);
}

TEST_CASE("batch norm never divides by zero") {
  auto spec = GroupSpec::p1();
  auto f = make_group_feature_map(Tensor<double>::full({2, 1, 1, 2, 2}, 7.0), spec);
  auto st = make_batchnorm_state<double>(1);
  auto out = group_batchnorm_forward(f, st, BatchNormMode::train);
  for (std::int64_t i = 0; i < out.data.size(); ++i) CHECK(std::isfinite(out.data[i]));
}

TEST_CASE("max pooling: constants, size chain, window dominance") {
  auto spec = GroupSpec::p1();
  auto f = make_group_feature_map(Tensor<double>::full({1, 1, 1, 9, 9}, 3.0), spec);
  auto pooled = maxpool2d(f);
  CHECK(max_abs_diff(pooled.output.data, Tensor<double>::full({1, 1, 1, 5, 5}, 3.0)) == 0.0);

  std::int64_t h = 97;
  for (std::int64_t expect : {49, 25, 13, 7}) {
    h = conv_out_size(h, 3, 2, 1);
    CHECK(h == expect);
  }

  Rng rng(12);
  auto g = random_gmap(spec, 1, 1, 9, rng);
  auto r = maxpool2d(g);
  for (std::int64_t i = 0; i < 5; ++i) {
    for (std::int64_t j = 0; j < 5; ++j) {
      const double v = r.output.data.at(0, 0, 0, i, j);
      for (std::int64_t ii = std::max<std::int64_t>(0, 2 * i - 1);
           ii <= std::min<std::int64_t>(8, 2 * i + 1); ++ii) {
        for (std::int64_t jj = std::max<std::int64_t>(0, 2 * j - 1);
             jj <= std::min<std::int64_t>(8, 2 * j + 1); ++jj) {
          CHECK(v >= g.data.at(0, 0, 0, ii, jj));
        }
      }
    }
  }
}

TEST_CASE("max pooling rejects even sizes in strict mode") {
  auto spec = GroupSpec::p1();
  auto f = make_group_feature_map(Tensor<double>({1, 1, 1, 8, 8}), spec);
  CHECK_THROWS_AS(maxpool2d(f), ShapeError);
  CHECK_NOTHROW(maxpool2d(f, 3, 2, 1, false));
}

TEST_CASE("relu basics") {
  Tensor<double> x({3}, {-1.0, 0.0, 2.5});
  auto y = relu(x);
  CHECK(y[0] == 0.0);
  CHECK(y[1] == 0.0);
  CHECK(y[2] == 2.5);
}

TEST_CASE("feature-map transforms: identity, order, composition law") {
  Rng rng(13);
  auto spec = GroupSpec::p4m();
  auto f = random_gmap(spec, 2, 2, 5, rng);
  CHECK(max_abs_diff(apply_group_transform({0, 0}, f).data, f.data) == 0.0);

  auto g1 = apply_group_transform({0, 1}, f);
  auto g2 = apply_group_transform({0, 1}, g1);
  auto g3 = apply_group_transform({0, 1}, g2);
  auto g4 = apply_group_transform({0, 1}, g3);
  CHECK(max_abs_diff(g4.data, f.data) == 0.0);

  for (const auto& a : group_elements(spec)) {
    for (const auto& b : group_elements(spec)) {
      auto two = apply_group_transform(a, apply_group_transform(b, f));
      auto one = apply_group_transform(compose(a, b, spec), f);
      CHECK(max_abs_diff(two.data, one.data) == 0.0);
    }
  }

  Tensor<double> planar({1, 2, 5, 5});
  fill_normal(planar, rng);
  for (const auto& a : group_elements(spec)) {
    for (const auto& b : group_elements(spec)) {
      auto two = apply_input_transform(a, apply_input_transform(b, planar));
      auto one = apply_input_transform(compose(a, b, spec), planar);
      CHECK(max_abs_diff(two, one) == 0.0);
    }
  }
  Tensor<double> rect({1, 1, 3, 5});
  CHECK_THROWS_AS(apply_input_transform({0, 1}, rect), ShapeError);
}

TEST_CASE("every layer type commutes with every group element") {
  for (auto spec : {GroupSpec::p1(), GroupSpec::p4(), GroupSpec::p4m()}) {
    for (int k : {1, 3, 5}) {
      CHECK(verify::lift_equivariance_error(spec, k, 40) < 1e-10);
      CHECK(verify::gconv_equivariance_error(spec, k, 41) < 1e-10);
      CHECK(verify::proj_equivariance_error(spec, k, 42) < 1e-10);
      for (int stride : {1, 2, 3}) {
        CHECK(verify::tconv_equivariance_error(spec, k, stride, 43) < 1e-10);
      }
    }
    CHECK(verify::batchnorm_equivariance_error(spec, 44) < 1e-10);
    CHECK(verify::maxpool_equivariance_error(spec, 45) < 1e-10);
    CHECK(verify::relu_equivariance_error(spec, 46) < 1e-10);
  }
}
