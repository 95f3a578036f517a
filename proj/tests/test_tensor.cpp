#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "gunet/checkpoint.hpp"
#include "gunet/conv.hpp"
#include "gunet/rng.hpp"
#include "gunet/tensor.hpp"

using namespace gunet;
namespace fs = std::filesystem;

namespace {

// naive quintuple-loop correlation oracle
Tensor<double> naive_correlate(const Tensor<double>& in, const Tensor<double>& w, int stride,
                               int pad) {
  const std::int64_t cin = in.dim(0), h = in.dim(1), ww = in.dim(2);
  const std::int64_t cout = w.dim(0);
  const int k = static_cast<int>(w.dim(2));
  const std::int64_t ho = (h + 2 * pad - k) / stride + 1;
  const std::int64_t wo = (ww + 2 * pad - k) / stride + 1;
  Tensor<double> out({cout, ho, wo});
  for (std::int64_t co = 0; co < cout; ++co) {
    for (std::int64_t i = 0; i < ho; ++i) {
      for (std::int64_t j = 0; j < wo; ++j) {
        double acc = 0.0;
        for (std::int64_t ci = 0; ci < cin; ++ci) {
          for (int a = 0; a < k; ++a) {
            for (int b = 0; b < k; ++b) {
              const std::int64_t ii = i * stride + a - pad;
              const std::int64_t jj = j * stride + b - pad;
              if (ii < 0 || ii >= h || jj < 0 || jj >= ww) continue;
              acc += in.at(ci, ii, jj) * w.at(co, ci, a, b);
            }
          }
        }
        out.at(co, i, j) = acc;
      }
    }
  }
  return out;
}

Tensor<double> random_tensor(std::vector<std::int64_t> dims, Rng& rng) {
  Tensor<double> t(std::move(dims));
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.normal();
  return t;
}

std::string temp_path(const char* name) {
  return (fs::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("tensor basics") {
  Tensor<double> t({2, 3});
  CHECK(t.size() == 6);
  t.at(1, 2) = 5.0;
  CHECK(t[5] == 5.0);
  CHECK_THROWS_AS(t.at(2, 0), ShapeError);
  CHECK_THROWS_AS(Tensor<double>({2}, {1.0, 2.0, 3.0}), ShapeError);
  auto r = t.reshaped({3, 2});
  CHECK(r.dim(0) == 3);
  auto f = t.cast<float>();
  CHECK(f.at(1, 2) == 5.0f);
}

TEST_CASE("correlate2d: identity kernel reproduces the input") {
  Rng rng(1);
  Tensor<double> in = random_tensor({1, 4, 4}, rng);
  Tensor<double> w({1, 1, 3, 3});
  w.at(0, 0, 1, 1) = 1.0;
  auto out = correlate2d(in, w, 1, 1);
  CHECK(max_abs_diff(out, in) == 0.0);
}

TEST_CASE("correlate2d: all-ones 3x3 against all-ones filter gives 9") {
  Tensor<double> in = Tensor<double>::full({1, 3, 3}, 1.0);
  Tensor<double> w = Tensor<double>::full({1, 1, 3, 3}, 1.0);
  auto out = correlate2d(in, w, 1, 0);
  CHECK(out.size() == 1);
  CHECK(out[0] == doctest::Approx(9.0));
}

TEST_CASE("correlate2d matches the naive loop oracle") {
  Rng rng(42);
  Tensor<double> in = random_tensor({2, 5, 5}, rng);
  Tensor<double> w = random_tensor({3, 2, 3, 3}, rng);
  for (int stride : {1, 2}) {
    for (int pad : {0, 1, 2}) {
      auto fast = correlate2d(in, w, stride, pad);
      auto slow = naive_correlate(in, w, stride, pad);
      CHECK(max_abs_diff(fast, slow) < 1e-12);
    }
  }
}

TEST_CASE("correlate2d is linear in input and filters") {
  Rng rng(3);
  Tensor<double> x = random_tensor({2, 5, 5}, rng);
  Tensor<double> y = random_tensor({2, 5, 5}, rng);
  Tensor<double> w = random_tensor({2, 2, 3, 3}, rng);
  Tensor<double> v = random_tensor({2, 2, 3, 3}, rng);
  const double a = 0.7, b = -1.3;
  Tensor<double> xy(x.dims());
  for (std::int64_t i = 0; i < x.size(); ++i) xy[i] = a * x[i] + b * y[i];
  auto lhs = correlate2d(xy, w, 1, 1);
  auto rx = correlate2d(x, w, 1, 1);
  auto ry = correlate2d(y, w, 1, 1);
  double worst = 0.0;
  for (std::int64_t i = 0; i < lhs.size(); ++i) {
    worst = std::max(worst, std::abs(lhs[i] - (a * rx[i] + b * ry[i])));
  }
  CHECK(worst < 1e-12);
  Tensor<double> wv(w.dims());
  for (std::int64_t i = 0; i < w.size(); ++i) wv[i] = a * w[i] + b * v[i];
  auto lhs2 = correlate2d(x, wv, 1, 1);
  auto rw = correlate2d(x, w, 1, 1);
  auto rv = correlate2d(x, v, 1, 1);
  for (std::int64_t i = 0; i < lhs2.size(); ++i) {
    worst = std::max(worst, std::abs(lhs2[i] - (a * rw[i] + b * rv[i])));
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("correlate2d shape errors") {
  Tensor<double> in({2, 5, 5});
  CHECK_THROWS_AS(correlate2d(in, Tensor<double>({1, 3, 3, 3})), ShapeError);  // channel mismatch
  CHECK_THROWS_AS(correlate2d(in, Tensor<double>({1, 2, 2, 2})), ShapeError);  // even kernel
  CHECK_THROWS_AS(correlate2d(in, Tensor<double>({1, 2, 7, 7}), 1, 0), ShapeError);  // empty out
}

TEST_CASE("correlate2d_transposed: adjoint of the identity") {
  Tensor<double> in({1, 1, 1});
  in[0] = 3.25;
  Tensor<double> w({1, 1, 3, 3});
  w.at(0, 0, 1, 1) = 1.0;
  auto out = correlate2d_transposed(in, w, 1, 1);
  CHECK(out.size() == 1);
  CHECK(out[0] == 3.25);
}

TEST_CASE("transposed output size formula") {
  CHECK(tconv_out_size(7, 3, 2, 1) == 13);
  Tensor<double> in({1, 7, 7});
  Tensor<double> w({1, 1, 3, 3});
  auto out = correlate2d_transposed(in, w, 2, 1);
  CHECK(out.dim(1) == 13);
  CHECK(out.dim(2) == 13);
}

TEST_CASE("adjoint identity over strides, pads and kernels") {
  Rng rng(11);
  for (int stride : {1, 2, 3}) {
    for (int pad : {0, 1}) {
      for (int k : {1, 3, 5}) {
        // size the pair from the small side so the strided conv inverts exactly
        const std::int64_t hy = 4;
        if ((hy - 1) * stride - 2 * pad + k < 1) continue;
        const std::int64_t hx = tconv_out_size(hy, k, stride, pad);
        Tensor<double> x = random_tensor({2, hx, hx}, rng);
        Tensor<double> w = random_tensor({3, 2, k, k}, rng);
        auto fx = correlate2d(x, w, stride, pad);
        REQUIRE(fx.dim(1) == hy);
        Tensor<double> y = random_tensor(fx.dims(), rng);
        // filters viewed from the output side: [Cout, Cin, k, k] feeds the
        // transposed op as its [Cin_t = Cout, Cout_t = Cin] layout
        auto fty = correlate2d_transposed(y, w, stride, pad);
        CHECK(fty.dim(0) == 2);
        CHECK(fty.dim(1) == hx);
        const double lhs = dot(fx, y);
        const double rhs = dot(x, fty);
        CHECK(std::abs(lhs - rhs) / std::max({1.0, std::abs(lhs), std::abs(rhs)}) < 1e-12);
      }
    }
  }
}

TEST_CASE("checkpoint: empty record list round-trips") {
  auto path = temp_path("gunet_ckpt_empty.gunt");
  write_checkpoint(path, {});
  auto records = read_checkpoint(path);
  CHECK(records.empty());
  CHECK(fs::file_size(path) == 8);  // magic + version
  fs::remove(path);
}

TEST_CASE("checkpoint: exact file size for one [2,2] tensor") {
  auto path = temp_path("gunet_ckpt_one.gunt");
  Tensor<float> t({2, 2}, {1.f, 2.f, 3.f, 4.f});
  write_checkpoint(path, {make_tensor_record("w", t)});
  // header 8 + name_len 4 + name 1 + dtype 1 + rank 1 + dims 8 + payload 16
  CHECK(fs::file_size(path) == 8u + 4u + 1u + 1u + 1u + 8u + 16u);
  Tensor<double> td({2, 2}, {1., 2., 3., 4.});
  write_checkpoint(path, {make_tensor_record("w", td)});
  CHECK(fs::file_size(path) == 8u + 4u + 1u + 1u + 1u + 8u + 32u);
  fs::remove(path);
}

TEST_CASE("checkpoint: 50 random tensors round-trip bit-exactly in both dtypes") {
  Rng rng(123);
  auto path = temp_path("gunet_ckpt_many.gunt");
  std::vector<CheckpointRecord> records;
  std::vector<Tensor<double>> tensors64;
  std::vector<Tensor<float>> tensors32;
  for (int i = 0; i < 25; ++i) {
    auto dims = std::vector<std::int64_t>{1 + rng.uniform_int(4), 1 + rng.uniform_int(5)};
    auto t = random_tensor(dims, rng);
    tensors64.push_back(t);
    records.push_back(make_tensor_record("f64_" + std::to_string(i), t));
    auto tf = t.cast<float>();
    tensors32.push_back(tf);
    records.push_back(make_tensor_record("f32_" + std::to_string(i), tf));
  }
  write_checkpoint(path, records);
  auto loaded = read_checkpoint(path);
  REQUIRE(loaded.size() == 50);
  // stored sorted by name
  for (std::size_t i = 1; i < loaded.size(); ++i) CHECK(loaded[i - 1].name < loaded[i].name);
  int matched = 0;
  for (const auto& rec : loaded) {
    if (rec.name.rfind("f64_", 0) == 0) {
      auto t = tensor_from_record<double>(rec);
      auto& orig = tensors64[static_cast<std::size_t>(std::stoi(rec.name.substr(4)))];
      REQUIRE(t.same_dims(orig));
      CHECK(t.values() == orig.values());
      ++matched;
    } else {
      auto t = tensor_from_record<float>(rec);
      auto& orig = tensors32[static_cast<std::size_t>(std::stoi(rec.name.substr(4)))];
      CHECK(t.values() == orig.values());
      ++matched;
    }
  }
  CHECK(matched == 50);
  fs::remove(path);
}

TEST_CASE("checkpoint: corruption is rejected with a byte offset") {
  auto path = temp_path("gunet_ckpt_corrupt.gunt");
  Tensor<float> t({2}, {1.f, 2.f});
  write_checkpoint(path, {make_tensor_record("ab", t)});

  SUBCASE("bad magic") {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.put('X');
    f.close();
    CHECK_THROWS_AS(read_checkpoint(path), CorruptFileError);
  }
  SUBCASE("bad version") {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(4);
    f.put(static_cast<char>(9));
    f.close();
    try {
      read_checkpoint(path);
      FAIL("expected CorruptFileError");
    } catch (const CorruptFileError& e) {
      CHECK(e.offset() == 4);
    }
  }
  SUBCASE("unknown dtype code") {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(8 + 4 + 2);  // header + name length + name
    f.put(static_cast<char>(7));
    f.close();
    try {
      read_checkpoint(path);
      FAIL("expected CorruptFileError");
    } catch (const CorruptFileError& e) {
      CHECK(e.offset() == 14);
    }
  }
  SUBCASE("truncation") {
    auto size = fs::file_size(path);
    fs::resize_file(path, size - 3);
    CHECK_THROWS_AS(read_checkpoint(path), CorruptFileError);
  }
  fs::remove(path);
}

TEST_CASE("checkpoint: duplicate and empty names are rejected") {
  auto path = temp_path("gunet_ckpt_dups.gunt");
  Tensor<float> t({1}, {1.f});
  CHECK_THROWS_AS(
      write_checkpoint(path, {make_tensor_record("a", t), make_tensor_record("a", t)}),
      ConfigError);
  CHECK_THROWS_AS(write_checkpoint(path, {make_tensor_record("", t)}), ConfigError);
}

TEST_CASE("checkpoint: text records round-trip") {
  auto path = temp_path("gunet_ckpt_text.gunt");
  write_checkpoint(path, {make_text_record("__config__", "{\"x\":1}")});
  auto records = read_checkpoint(path);
  REQUIRE(records.size() == 1);
  CHECK(text_from_record(records[0]) == "{\"x\":1}");
  fs::remove(path);
}
