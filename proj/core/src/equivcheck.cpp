#include "gunet/equivcheck.hpp"

#include <cmath>
#include <functional>

#include "gunet/oracle.hpp"
#include "gunet/rng.hpp"
#include "gunet/train.hpp"

namespace gunet::verify {

namespace {

void fill_normal(Tensor<double>& t, Rng& rng, double scale = 1.0) {
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = scale * rng.normal();
}

GroupFeatureMap<double> random_gmap(GroupSpec spec, std::int64_t b, std::int64_t c, std::int64_t h,
                                    Rng& rng) {
  Tensor<double> t({b, c, spec.stabilizer_size(), h, h});
  fill_normal(t, rng);
  return make_group_feature_map(std::move(t), spec);
}

}  // namespace

// ---------------------------------------------------------------------------
// Oracle agreement
// ---------------------------------------------------------------------------

double lift_oracle_error(GroupSpec spec, int k, std::uint64_t seed) {
  Rng rng(seed);
  const std::int64_t h = 7, cin = 2, cout = 3;
  const int pad = static_cast<int>(rng.uniform_int(2));
  Tensor<double> x({1, cin, h, h});
  fill_normal(x, rng);
  auto bank = make_lifting_bank<double>(spec, cout, cin, k, false);
  fill_normal(bank.weights, rng);
  if (h + 2 * pad < k) return 0.0;
  auto fast = lift_conv_forward(x, bank, pad);
  auto slow = oracle::direct_lift(x, bank.weights, spec, pad);
  return max_abs_diff(fast.data, slow.data);
}

double group_oracle_error(GroupSpec spec, int k, int stride, std::uint64_t seed) {
  Rng rng(seed);
  const std::int64_t h = 7, cin = 2, cout = 2;
  const int pad = static_cast<int>(rng.uniform_int(2));
  if (h + 2 * pad < k) return 0.0;
  auto f = random_gmap(spec, 1, cin, h, rng);
  auto bank = make_group_bank<double>(spec, cout, cin, k, false);
  fill_normal(bank.weights, rng);
  auto fast = group_conv_forward(f, bank, stride, pad);
  auto slow = oracle::direct_group(f, bank.weights, stride, pad);
  return max_abs_diff(fast.data, slow.data);
}

double proj_oracle_error(GroupSpec spec, int k, std::uint64_t seed) {
  Rng rng(seed);
  const std::int64_t h = 7, cin = 2, cout = 3;
  const int pad = static_cast<int>(rng.uniform_int(2));
  if (h + 2 * pad < k) return 0.0;
  auto f = random_gmap(spec, 1, cin, h, rng);
  auto bank = make_projection_bank<double>(spec, cout, cin, k, false);
  fill_normal(bank.weights, rng);
  auto fast = proj_conv_forward(f, bank, pad);
  auto slow = oracle::direct_proj(f, bank.weights, pad);
  return max_abs_diff(fast, slow);
}

// ---------------------------------------------------------------------------
// Adjoint identities
// ---------------------------------------------------------------------------

double tconv_adjoint_error(GroupSpec spec, int k, int stride, std::uint64_t seed) {
  Rng rng(seed);
  const std::int64_t h = 7, cin = 2, cout = 2;
  const int pad = static_cast<int>(rng.uniform_int(2));
  if (h + 2 * pad < k) return 0.0;
  auto bank = make_group_bank<double>(spec, cout, cin, k, false);
  fill_normal(bank.weights, rng);
  auto x = random_gmap(spec, 1, cin, h, rng);
  auto fx = group_conv_forward(x, bank, stride, pad);
  auto y = make_group_feature_map(Tensor<double>(fx.data.dims()), spec);
  fill_normal(y.data, rng);
  auto fty = group_transposed_conv_forward(y, bank, stride, pad);
  const double lhs = dot(fx.data, y.data);
  const double rhs = dot(x.data, fty.data);
  const double scale = std::max({1.0, std::abs(lhs), std::abs(rhs)});
  return std::abs(lhs - rhs) / scale;
}

double tconv_dense_transpose_error(GroupSpec spec, int k, int stride, std::uint64_t seed) {
  Rng rng(seed);
  const std::int64_t h = 5, cin = 1, cout = 2;
  const int pad = static_cast<int>(rng.uniform_int(2));
  if (h + 2 * pad < k) return 0.0;
  auto bank = make_group_bank<double>(spec, cout, cin, k, false);
  fill_normal(bank.weights, rng);
  const std::int64_t S = spec.stabilizer_size();
  std::vector<std::int64_t> in_dims = {1, cin, S, h, h};
  auto fwd = [&](const Tensor<double>& v) {
    return group_conv_forward(make_group_feature_map(v, spec), bank, stride, pad).data;
  };
  oracle::DenseMap m = oracle::materialize_linear_map(fwd, in_dims);
  // probe the adjoint on a few random output-space vectors
  const std::int64_t ho = conv_out_size(h, k, stride, pad);
  double worst = 0.0;
  for (int rep = 0; rep < 3; ++rep) {
    Tensor<double> y({1, cout, S, ho, ho});
    fill_normal(y, rng);
    Tensor<double> via_matrix = oracle::apply_dense_transpose(m, y, in_dims);
    auto via_op = group_transposed_conv_forward(make_group_feature_map(y, spec), bank, stride, pad);
    worst = std::max(worst, max_abs_diff(via_matrix, via_op.data));
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Layer equivariance
// ---------------------------------------------------------------------------

double lift_equivariance_error(GroupSpec spec, int k, std::uint64_t seed,
                               std::shared_ptr<const IndexTable> table_override) {
  Rng rng(seed);
  const std::int64_t h = 9, cin = 2, cout = 3;
  const int pad = (k - 1) / 2;
  Tensor<double> x({2, cin, h, h});
  fill_normal(x, rng);
  auto bank = make_lifting_bank<double>(spec, cout, cin, k);
  fill_normal(bank.weights, rng);
  fill_normal(bank.bias, rng);
  if (table_override) bank.table = std::move(table_override);
  auto base = lift_conv_forward(x, bank, pad);
  double worst = 0.0;
  for (const auto& g : group_elements(spec)) {
    auto lhs = lift_conv_forward(apply_input_transform(g, x), bank, pad);
    auto rhs = apply_group_transform(g, base);
    worst = std::max(worst, max_abs_diff(lhs.data, rhs.data));
  }
  return worst;
}

double gconv_equivariance_error(GroupSpec spec, int k, std::uint64_t seed) {
  Rng rng(seed);
  const std::int64_t h = 9, cin = 2, cout = 3;
  const int pad = (k - 1) / 2;
  auto f = random_gmap(spec, 2, cin, h, rng);
  auto bank = make_group_bank<double>(spec, cout, cin, k);
  fill_normal(bank.weights, rng);
  fill_normal(bank.bias, rng);
  auto base = group_conv_forward(f, bank, 1, pad);
  double worst = 0.0;
  for (const auto& g : group_elements(spec)) {
    auto lhs = group_conv_forward(apply_group_transform(g, f), bank, 1, pad);
    auto rhs = apply_group_transform(g, base);
    worst = std::max(worst, max_abs_diff(lhs.data, rhs.data));
  }
  return worst;
}

double proj_equivariance_error(GroupSpec spec, int k, std::uint64_t seed) {
  Rng rng(seed);
  const std::int64_t h = 9, cin = 2, cout = 2;
  const int pad = (k - 1) / 2;
  auto f = random_gmap(spec, 2, cin, h, rng);
  auto bank = make_projection_bank<double>(spec, cout, cin, k);
  fill_normal(bank.weights, rng);
  fill_normal(bank.bias, rng);
  auto base = proj_conv_forward(f, bank, pad);
  double worst = 0.0;
  for (const auto& g : group_elements(spec)) {
    auto lhs = proj_conv_forward(apply_group_transform(g, f), bank, pad);
    auto rhs = apply_input_transform(g, base);
    worst = std::max(worst, max_abs_diff(lhs, rhs));
  }
  return worst;
}

double tconv_equivariance_error(GroupSpec spec, int k, int stride, std::uint64_t seed) {
  Rng rng(seed);
  const std::int64_t h = 7, cin = 2, cout = 2;
  const int pad = (k - 1) / 2;
  if ((h - 1) * stride - 2 * pad + k < 1) return 0.0;
  auto f = random_gmap(spec, 2, cout, h, rng);
  auto bank = make_group_bank<double>(spec, cout, cin, k, true, true);
  fill_normal(bank.weights, rng);
  fill_normal(bank.bias, rng);
  auto base = group_transposed_conv_forward(f, bank, stride, pad);
  double worst = 0.0;
  for (const auto& g : group_elements(spec)) {
    auto lhs = group_transposed_conv_forward(apply_group_transform(g, f), bank, stride, pad);
    auto rhs = apply_group_transform(g, base);
    worst = std::max(worst, max_abs_diff(lhs.data, rhs.data));
  }
  return worst;
}

double batchnorm_equivariance_error(GroupSpec spec, std::uint64_t seed) {
  Rng rng(seed);
  auto f = random_gmap(spec, 3, 2, 9, rng);
  auto st = make_batchnorm_state<double>(2);
  fill_normal(st.gamma, rng);
  fill_normal(st.beta, rng);
  double worst = 0.0;
  for (const auto& g : group_elements(spec)) {
    auto st_a = st;
    auto st_b = st;
    auto lhs = group_batchnorm_forward(apply_group_transform(g, f), st_a, BatchNormMode::train);
    auto base = group_batchnorm_forward(f, st_b, BatchNormMode::train);
    auto rhs = apply_group_transform(g, base);
    worst = std::max(worst, max_abs_diff(lhs.data, rhs.data));
    worst = std::max(worst, max_abs_diff(st_a.running_mean, st_b.running_mean));
    worst = std::max(worst, max_abs_diff(st_a.running_var, st_b.running_var));
  }
  return worst;
}

double maxpool_equivariance_error(GroupSpec spec, std::uint64_t seed) {
  Rng rng(seed);
  auto f = random_gmap(spec, 2, 2, 9, rng);
  auto base = maxpool2d(f).output;
  double worst = 0.0;
  for (const auto& g : group_elements(spec)) {
    auto lhs = maxpool2d(apply_group_transform(g, f)).output;
    auto rhs = apply_group_transform(g, base);
    worst = std::max(worst, max_abs_diff(lhs.data, rhs.data));
  }
  return worst;
}

double relu_equivariance_error(GroupSpec spec, std::uint64_t seed) {
  Rng rng(seed);
  auto f = random_gmap(spec, 2, 2, 9, rng);
  auto base = make_group_feature_map(relu(f.data), spec);
  double worst = 0.0;
  for (const auto& g : group_elements(spec)) {
    auto lhs = relu(apply_group_transform(g, f).data);
    auto rhs = apply_group_transform(g, base);
    worst = std::max(worst, max_abs_diff(lhs, rhs.data));
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Finite-difference gradient checks
// ---------------------------------------------------------------------------

namespace {

struct FdProblem {
  std::function<double()> loss;
  std::vector<Tensor<double>*> leaves;
  std::vector<Tensor<double>> analytic;
};

double fd_probe(FdProblem& prob, Rng& rng, int probes, double step = 1e-5) {
  double worst = 0.0;
  for (int p = 0; p < probes; ++p) {
    const auto leaf =
        static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(prob.leaves.size())));
    Tensor<double>& t = *prob.leaves[leaf];
    if (t.size() == 0) continue;
    const std::int64_t ix = rng.uniform_int(t.size());
    const double keep = t[ix];
    t[ix] = keep + step;
    const double up = prob.loss();
    t[ix] = keep - step;
    const double down = prob.loss();
    t[ix] = keep;
    const double fd = (up - down) / (2.0 * step);
    const double an = prob.analytic[leaf][ix];
    const double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
    worst = std::max(worst, std::abs(fd - an) / denom);
  }
  return worst;
}

Tensor<double> random_like(const std::vector<std::int64_t>& dims, Rng& rng) {
  Tensor<double> t(dims);
  fill_normal(t, rng);
  return t;
}

}  // namespace

std::vector<std::string> gradient_layer_names() {
  return {"lift", "gconv", "gconv_s2", "proj", "tconv", "batchnorm", "relu", "maxpool", "loss",
          "stack3"};
}

double layer_gradient_error(const std::string& layer, std::uint64_t seed, int probes) {
  Rng rng(seed);
  GroupSpec spec = GroupSpec::p4();
  const int k = 3, pad = 1;
  const std::int64_t h = 7, cin = 2, cout = 2;

  if (layer == "lift") {
    Tensor<double> x = random_like({1, cin, h, h}, rng);
    auto bank = make_lifting_bank<double>(spec, cout, cin, k);
    fill_normal(bank.weights, rng);
    fill_normal(bank.bias, rng);
    Tensor<double> u = random_like(lift_conv_forward(x, bank, pad).data.dims(), rng);
    FdProblem prob;
    prob.loss = [&]() { return dot(lift_conv_forward(x, bank, pad).data, u); };
    auto g = lift_conv_backward(make_group_feature_map(u, spec), x, bank, pad);
    prob.leaves = {&x, &bank.weights, &bank.bias};
    prob.analytic = {std::move(g.input), std::move(g.weights), std::move(g.bias)};
    return fd_probe(prob, rng, probes);
  }
  if (layer == "gconv" || layer == "gconv_s2") {
    const int stride = layer == "gconv" ? 1 : 2;
    auto f = random_gmap(spec, 1, cin, h, rng);
    auto bank = make_group_bank<double>(spec, cout, cin, k);
    fill_normal(bank.weights, rng);
    fill_normal(bank.bias, rng);
    Tensor<double> u = random_like(group_conv_forward(f, bank, stride, pad).data.dims(), rng);
    FdProblem prob;
    prob.loss = [&]() { return dot(group_conv_forward(f, bank, stride, pad).data, u); };
    auto g = group_conv_backward(make_group_feature_map(u, spec), f, bank, stride, pad);
    prob.leaves = {&f.data, &bank.weights, &bank.bias};
    prob.analytic = {std::move(g.input), std::move(g.weights), std::move(g.bias)};
    return fd_probe(prob, rng, probes);
  }
  if (layer == "proj") {
    auto f = random_gmap(spec, 1, cin, h, rng);
    auto bank = make_projection_bank<double>(spec, cout, cin, k);
    fill_normal(bank.weights, rng);
    fill_normal(bank.bias, rng);
    Tensor<double> u = random_like(proj_conv_forward(f, bank, pad).dims(), rng);
    FdProblem prob;
    prob.loss = [&]() { return dot(proj_conv_forward(f, bank, pad), u); };
    auto g = proj_conv_backward(u, f, bank, pad);
    prob.leaves = {&f.data, &bank.weights, &bank.bias};
    prob.analytic = {std::move(g.input), std::move(g.weights), std::move(g.bias)};
    return fd_probe(prob, rng, probes);
  }
  if (layer == "tconv") {
    auto f = random_gmap(spec, 1, cout, h, rng);
    auto bank = make_group_bank<double>(spec, cout, cin, k, true, true);
    fill_normal(bank.weights, rng);
    fill_normal(bank.bias, rng);
    Tensor<double> u =
        random_like(group_transposed_conv_forward(f, bank, 2, pad).data.dims(), rng);
    FdProblem prob;
    prob.loss = [&]() { return dot(group_transposed_conv_forward(f, bank, 2, pad).data, u); };
    auto g = group_transposed_conv_backward(make_group_feature_map(u, spec), f, bank, 2, pad);
    prob.leaves = {&f.data, &bank.weights, &bank.bias};
    prob.analytic = {std::move(g.input), std::move(g.weights), std::move(g.bias)};
    return fd_probe(prob, rng, probes);
  }
  if (layer == "batchnorm") {
    auto f = random_gmap(spec, 2, cin, 5, rng);
    auto st = make_batchnorm_state<double>(cin);
    fill_normal(st.gamma, rng);
    fill_normal(st.beta, rng);
    Tensor<double> u = random_like(f.data.dims(), rng);
    FdProblem prob;
    prob.loss = [&]() {
      auto st_copy = st;  // running stats must not drift across evaluations
      return dot(group_batchnorm_forward(f, st_copy, BatchNormMode::train).data, u);
    };
    auto st_copy = st;
    BatchNormCache<double> cache;
    group_batchnorm_forward(f, st_copy, BatchNormMode::train, &cache);
    auto g = group_batchnorm_backward(make_group_feature_map(u, spec), st, cache);
    prob.leaves = {&f.data, &st.gamma, &st.beta};
    prob.analytic = {std::move(g.input), std::move(g.gamma), std::move(g.beta)};
    return fd_probe(prob, rng, probes);
  }
  if (layer == "relu") {
    Tensor<double> x = random_like({2, 3, 5, 5}, rng);
    Tensor<double> u = random_like(x.dims(), rng);
    FdProblem prob;
    prob.loss = [&]() { return dot(relu(x), u); };
    Tensor<double> fwd = relu(x);
    Tensor<double> g = relu_backward(u, fwd);
    prob.leaves = {&x};
    prob.analytic = {std::move(g)};
    return fd_probe(prob, rng, probes);
  }
  if (layer == "maxpool") {
    auto f = random_gmap(spec, 1, cin, 9, rng);
    auto base = maxpool2d(f);
    Tensor<double> u = random_like(base.output.data.dims(), rng);
    FdProblem prob;
    prob.loss = [&]() { return dot(maxpool2d(f).output.data, u); };
    auto g = maxpool2d_backward(make_group_feature_map(u, spec), base.argmax, 9, 9);
    prob.leaves = {&f.data};
    prob.analytic = {std::move(g.data)};
    return fd_probe(prob, rng, probes);
  }
  if (layer == "loss") {
    Tensor<double> logits = random_like({2, 2, 5, 5}, rng);
    Tensor<std::uint8_t> target({2, 5, 5});
    for (std::int64_t i = 0; i < target.size(); ++i) {
      target[i] = static_cast<std::uint8_t>(rng.uniform_int(2));
    }
    FdProblem prob;
    prob.loss = [&]() { return pixel_loss(logits, target).value; };
    auto base = pixel_loss(logits, target);
    prob.leaves = {&logits};
    prob.analytic = {std::move(base.grad)};
    return fd_probe(prob, rng, probes, 1e-6);
  }
  if (layer == "stack3") {
    // lifting -> group conv -> projection, probed end to end
    auto lift_bank = make_lifting_bank<double>(spec, 2, 2, k);
    auto mid_bank = make_group_bank<double>(spec, 2, 2, k);
    auto proj_bank = make_projection_bank<double>(spec, 2, 2, k);
    fill_normal(lift_bank.weights, rng);
    fill_normal(lift_bank.bias, rng);
    fill_normal(mid_bank.weights, rng);
    fill_normal(mid_bank.bias, rng);
    fill_normal(proj_bank.weights, rng);
    fill_normal(proj_bank.bias, rng);
    Tensor<double> x = random_like({1, 2, h, h}, rng);
    auto run = [&]() {
      auto a = lift_conv_forward(x, lift_bank, pad);
      auto b = group_conv_forward(a, mid_bank, 1, pad);
      return proj_conv_forward(b, proj_bank, pad);
    };
    Tensor<double> u = random_like(run().dims(), rng);
    FdProblem prob;
    prob.loss = [&]() { return dot(run(), u); };
    auto a = lift_conv_forward(x, lift_bank, pad);
    auto b = group_conv_forward(a, mid_bank, 1, pad);
    auto g3 = proj_conv_backward(u, b, proj_bank, pad);
    auto g2 = group_conv_backward(make_group_feature_map(std::move(g3.input), spec), a, mid_bank,
                                  1, pad);
    auto g1 = lift_conv_backward(make_group_feature_map(std::move(g2.input), spec), x, lift_bank,
                                 pad);
    prob.leaves = {&x, &lift_bank.weights, &mid_bank.weights, &proj_bank.weights,
                   &lift_bank.bias, &mid_bank.bias, &proj_bank.bias};
    prob.analytic = {std::move(g1.input),   std::move(g1.weights), std::move(g2.weights),
                     std::move(g3.weights), std::move(g1.bias),    std::move(g2.bias),
                     std::move(g3.bias)};
    return fd_probe(prob, rng, probes);
  }
  throw ConfigError("unknown gradient check layer '" + layer + "'");
}

double model_gradient_error(std::uint64_t seed, int probes) {
  Rng rng(seed);
  ArchitectureConfig cfg;
  cfg.group = GroupKind::p4;
  cfg.depth = 2;
  cfg.base_width = 2;
  cfg.input_channels = 2;
  cfg.num_classes = 2;
  auto model = GUNet<double>::build(cfg, seed);
  Tensor<double> x = random_like({1, 2, 13, 13}, rng);
  Tensor<std::uint8_t> y({1, 13, 13});
  for (std::int64_t i = 0; i < y.size(); ++i) y[i] = static_cast<std::uint8_t>(rng.uniform_int(2));

  auto params = model.parameters();
  FdProblem prob;
  prob.loss = [&]() {
    Tensor<double> logits = model.forward(x, BatchNormMode::train);
    return pixel_loss(logits, y).value;
  };
  ModelCache<double> cache;
  Tensor<double> logits = model.forward(x, BatchNormMode::train, &cache);
  auto loss = pixel_loss(logits, y);
  auto grads = model.backward(loss.grad, cache);
  for (auto* p : params) prob.leaves.push_back(p);
  prob.analytic = std::move(grads);
  return fd_probe(prob, rng, probes);
}

// ---------------------------------------------------------------------------
// Suite
// ---------------------------------------------------------------------------

std::vector<CheckResult> run_invariant_suite(const SuiteConfig& cfg) {
  std::vector<CheckResult> out;
  const std::vector<GroupSpec> groups = {GroupSpec::p1(), GroupSpec::p4(), GroupSpec::p4m()};
  const std::vector<int> kernels = {1, 3, 5};
  const std::vector<int> strides = {1, 2};

  {
    CheckResult r{"oracle lift/group/proj agreement", 0.0, cfg.oracle_tol, 0};
    for (const auto& g : groups) {
      for (int k : kernels) {
        for (int s = 0; s < cfg.oracle_seeds; ++s) {
          const std::uint64_t seed = Rng::mix(cfg.seed, static_cast<std::uint64_t>(
                                                            k * 100 + s * 10 + static_cast<int>(g.kind)));
          r.max_err = std::max(r.max_err, lift_oracle_error(g, k, seed));
          r.max_err = std::max(r.max_err, proj_oracle_error(g, k, seed + 1));
          r.cases += 2;
          for (int stride : strides) {
            r.max_err = std::max(r.max_err, group_oracle_error(g, k, stride, seed + stride));
            r.cases += 1;
          }
        }
      }
    }
    out.push_back(r);
  }
  {
    CheckResult r{"transposed conv adjoint identity", 0.0, cfg.oracle_tol, 0};
    for (const auto& g : groups) {
      for (int k : kernels) {
        for (int stride : strides) {
          for (int s = 0; s < cfg.oracle_seeds; ++s) {
            const std::uint64_t seed =
                Rng::mix(cfg.seed + 77, static_cast<std::uint64_t>(k * 100 + stride * 10 + s));
            r.max_err = std::max(r.max_err, tconv_adjoint_error(g, k, stride, seed));
            r.cases += 1;
          }
        }
      }
    }
    out.push_back(r);
  }
  {
    CheckResult r{"transposed conv vs dense transpose", 0.0, cfg.oracle_tol, 0};
    for (const auto& g : groups) {
      for (int stride : strides) {
        r.max_err = std::max(
            r.max_err, tconv_dense_transpose_error(g, 3, stride, Rng::mix(cfg.seed, 991 + stride)));
        r.cases += 1;
      }
    }
    out.push_back(r);
  }
  {
    CheckResult r{"layer equivariance (all elements of p4m)", 0.0, cfg.equiv_tol, 0};
    for (const auto& g : groups) {
      for (int k : kernels) {
        const std::uint64_t seed = Rng::mix(cfg.seed + 33, static_cast<std::uint64_t>(k));
        r.max_err = std::max(r.max_err, lift_equivariance_error(g, k, seed));
        r.max_err = std::max(r.max_err, gconv_equivariance_error(g, k, seed + 1));
        r.max_err = std::max(r.max_err, proj_equivariance_error(g, k, seed + 2));
        r.cases += 3;
        for (int stride : {1, 2, 3}) {
          r.max_err = std::max(r.max_err, tconv_equivariance_error(g, k, stride, seed + 3));
          r.cases += 1;
        }
      }
      r.max_err = std::max(r.max_err, batchnorm_equivariance_error(g, Rng::mix(cfg.seed, 5)));
      r.max_err = std::max(r.max_err, maxpool_equivariance_error(g, Rng::mix(cfg.seed, 6)));
      r.max_err = std::max(r.max_err, relu_equivariance_error(g, Rng::mix(cfg.seed, 7)));
      r.cases += 3;
    }
    out.push_back(r);
  }
  {
    CheckResult r{"gradient checks vs central differences", 0.0, cfg.grad_tol, 0};
    for (const auto& name : gradient_layer_names()) {
      r.max_err = std::max(r.max_err,
                           layer_gradient_error(name, Rng::mix(cfg.seed, 17), cfg.grad_probes));
      r.cases += 1;
    }
    r.max_err = std::max(r.max_err, model_gradient_error(Rng::mix(cfg.seed, 18), cfg.grad_probes));
    r.cases += 1;
    out.push_back(r);
  }
  return out;
}

}  // namespace gunet::verify
