#pragma once

#include "icm/dataset.hpp"
#include "icm/kernels.hpp"

#include <Eigen/Dense>

#include <string>

namespace icm {

/// Constructed instruments: row i is h_n(Z_i).
struct InstrumentMatrix {
  Eigen::MatrixXd H;
  KernelSpec kernel;
};

/// Linear IV fit with the sandwich covariance A^{-1} B A^{-1} / n.
struct EstimateResult {
  std::string estimator;  ///< kernel name, or "tsls"
  KernelSpec kernel;
  Eigen::VectorXd theta;
  Eigen::MatrixXd A_hat;  ///< -E_n[h_n(Z_i)' X_i]
  Eigen::MatrixXd B_hat;  ///< E_n[u_i^2 h_n(Z_i)' h_n(Z_i)]
  Eigen::MatrixXd vcov;
  Eigen::VectorXd se;
  Eigen::VectorXd residuals;
  Eigen::MatrixXd instruments;  ///< the n x p_x instrument matrix used
  double cond_A = 0.0;
  double min_singular_value = 0.0;

  Eigen::Index n() const noexcept { return residuals.size(); }
};

/// Refusal threshold on the condition number of E_n[h_n' X].
inline constexpr double kMaxConditionNumber = 1e12;

/// H = k X / (n - 1) where k_ij = ||Z_i - Z_j|| for MMD and K_ij otherwise.
Eigen::MatrixXd build_instruments(const Eigen::MatrixXd& X, const KernelMatrix& K);
InstrumentMatrix build_instruments(const Dataset& ds, const KernelMatrix& K);

/// Exactly identified IV solve theta = (H'X)^{-1} H'y with a column-pivoted QR.
/// Throws IdentificationError when H'X is singular or cond >= 1e12.
EstimateResult iv_estimate(const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
                           const Eigen::MatrixXd& H);

/// Kernel matrix for `ds` (WMD gets the [y, X] block).
KernelMatrix kernel_matrix(const Dataset& ds, const KernelSpec& spec);

EstimateResult estimate(const Dataset& ds, const KernelSpec& spec);
EstimateResult estimate(const Dataset& ds, const KernelMatrix& K);

/// Q_n(theta) = -E_n[||Z_i - Z_j|| (y_i - X_i theta)(y_j - X_j theta)],
/// evaluated by a direct double loop.
double mmd_objective(const Dataset& ds, const Eigen::VectorXd& theta);

struct OracleConfig {
  int max_restarts = 8;
  int max_iterations = 20000;
  double simplex_tolerance = 1e-10;
};

/// Locates the stationary point of Q_n using function values only.
///
/// Q_n is concave along the intercept (the kernel is of negative type and the
/// intercept shifts every residual equally), so the closed-form estimator is
/// the saddle point min over slopes of max over the intercept. The inner
/// maximum is found by exact three-point parabolic interpolation; the outer
/// minimum by Nelder-Mead restarts followed by a finite-difference Newton
/// polish. Limited to n <= 200 and p_x <= 3.
Eigen::VectorXd minimize_objective_oracle(const Dataset& ds, const OracleConfig& config = {});

struct TTestResult {
  double t = 0.0;
  double pvalue = 1.0;
  bool reject = false;
};

/// Two-sided normal t-test of theta_k = theta0; rejects iff |t| > z_{1 - level/2}.
TTestResult t_test(const EstimateResult& res, Eigen::Index k, double theta0, double level = 0.05);

struct IdentificationDiagnostics {
  double min_eig = 0.0;
  Eigen::VectorXd tau_star;
  double gmdc_strength = 0.0;
  Eigen::Index rank_h = 0;
  Eigen::Index rank_z = 0;
};

/// Smallest eigenpair of the centered kernel-weighted Gram matrix of the
/// non-intercept covariates, the GMDC of the corresponding combination, and
/// numerical ranks of E_n[h_n' X] and E_n[[1, Z]' X].
IdentificationDiagnostics identification_diagnostics(const Dataset& ds, const KernelSpec& spec);
IdentificationDiagnostics identification_diagnostics(const Dataset& ds, const KernelMatrix& K);

/// Numerical rank with singular values above 1e-8 times the largest.
Eigen::Index numerical_rank(const Eigen::MatrixXd& M);

/// Two-stage least squares with instruments [1, exogenous X, Z] (duplicate
/// columns dropped) and the heteroskedasticity-robust sandwich covariance.
EstimateResult tsls_estimate(const Dataset& ds);

}  // namespace icm
