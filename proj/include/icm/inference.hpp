#pragma once

#include "icm/dataset.hpp"
#include "icm/kernels.hpp"
#include "icm/random.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace icm {

/// Multiplicative wild-bootstrap weights; both have mean 0 and variance 1.
enum class WeightScheme { mammen, rademacher };

std::string to_string(WeightScheme scheme);
WeightScheme parse_weight_scheme(const std::string& name);

/// n independent draws of the wild weights.
Eigen::VectorXd draw_wild_weights(Eigen::Index n, WeightScheme scheme, Engine& gen);

struct BootTestResult {
  double stat = 0.0;                ///< n * MDD_n^2 of the residuals on Z
  std::vector<double> boot_stats;   ///< successful draws only, in draw order
  double pvalue = 1.0;
  int B = 0;                        ///< requested draws
  int failed_draws = 0;
  std::uint64_t seed = 0;
  WeightScheme weights = WeightScheme::mammen;
  std::string interpretation;
};

inline constexpr int kMinBootstrapDraws = 99;

/// Wild-bootstrap ICM specification test of E[U | Z] = 0 with statistic
/// n * mdd_sq(residuals, Z). Each draw re-estimates theta on
/// y* = X theta_hat + u_hat * v. Draw b uses the child seed derive_seed(seed, b),
/// so the result does not depend on the thread count.
BootTestResult spec_test(const Dataset& ds, const KernelSpec& spec, int B, std::uint64_t seed,
                         WeightScheme weights = WeightScheme::mammen);

/// Linear-completeness relevance test for the single endogenous column
/// `endog`: regresses it on the remaining covariates with Z as instruments
/// and runs spec_test on that auxiliary model. Rejection is evidence that the
/// ICM relevance condition holds.
BootTestResult lc_test(const Dataset& ds, Eigen::Index endog, const KernelSpec& spec, int B,
                       std::uint64_t seed, WeightScheme weights = WeightScheme::mammen);

/// The auxiliary dataset (y = D, X = X without D, same Z) used by lc_test.
Dataset lc_auxiliary_dataset(const Dataset& ds, Eigen::Index endog);

}  // namespace icm
