#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gunet/group.hpp"
#include "gunet/model.hpp"
#include "gunet/ops.hpp"

// Runnable invariants: oracle agreement, layer and network equivariance,
// adjoint identities and finite-difference gradient checks. The CLI's
// equivcheck command, the unit tests and the acceptance suite all call in
// here so there is exactly one implementation of each check.
namespace gunet::verify {

struct CheckResult {
  std::string name;
  double max_err = 0.0;
  double tol = 0.0;
  int cases = 0;
  bool pass() const { return max_err < tol; }
};

// --- oracle agreement (64-bit) ---------------------------------------------
double lift_oracle_error(GroupSpec spec, int k, std::uint64_t seed);
double group_oracle_error(GroupSpec spec, int k, int stride, std::uint64_t seed);
double proj_oracle_error(GroupSpec spec, int k, std::uint64_t seed);

// --- adjoint identities -----------------------------------------------------
double tconv_adjoint_error(GroupSpec spec, int k, int stride, std::uint64_t seed);
double tconv_dense_transpose_error(GroupSpec spec, int k, int stride, std::uint64_t seed);

// --- layer equivariance over every element of `spec` ------------------------
double lift_equivariance_error(GroupSpec spec, int k, std::uint64_t seed,
                               std::shared_ptr<const IndexTable> table_override = nullptr);
double gconv_equivariance_error(GroupSpec spec, int k, std::uint64_t seed);
double proj_equivariance_error(GroupSpec spec, int k, std::uint64_t seed);
double tconv_equivariance_error(GroupSpec spec, int k, int stride, std::uint64_t seed);
double batchnorm_equivariance_error(GroupSpec spec, std::uint64_t seed);
double maxpool_equivariance_error(GroupSpec spec, std::uint64_t seed);
double relu_equivariance_error(GroupSpec spec, std::uint64_t seed);

// --- gradients vs central finite differences --------------------------------
// layer is one of: lift, gconv, gconv_s2, proj, tconv, batchnorm, relu,
// maxpool, loss, stack3
double layer_gradient_error(const std::string& layer, std::uint64_t seed, int probes);
std::vector<std::string> gradient_layer_names();
double model_gradient_error(std::uint64_t seed, int probes);

// --- network-level equivariance ---------------------------------------------
// max |forward(T_g x) - T_g forward(x)| over all g in the model's group
template <typename T>
double model_equivariance_error(GUNet<T>& model, std::int64_t size, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<T> x({1, model.config().input_channels, size, size});
  for (std::int64_t i = 0; i < x.size(); ++i) x[i] = static_cast<T>(rng.uniform());
  Tensor<T> base = model.forward(x, BatchNormMode::eval);
  double worst = 0.0;
  for (const auto& g : group_elements(model.group())) {
    Tensor<T> out_t = model.forward(apply_input_transform(g, x), BatchNormMode::eval);
    Tensor<T> t_out = apply_input_transform(g, base);
    worst = std::max(worst, max_abs_diff(out_t, t_out));
  }
  return worst;
}

// --- bundled suites ----------------------------------------------------------
struct SuiteConfig {
  std::uint64_t seed = 1234;
  int oracle_seeds = 3;  // random repetitions per (group, kernel, stride) cell
  int grad_probes = 10;
  double oracle_tol = 1e-10;
  double equiv_tol = 1e-10;
  double grad_tol = 1e-4;
};

std::vector<CheckResult> run_invariant_suite(const SuiteConfig& cfg);

}  // namespace gunet::verify
