#pragma once

#include "icm/dataset.hpp"
#include "icm/random.hpp"

#include <Eigen/Dense>

#include <random>
#include <string>
#include <vector>

namespace icm::testing {

inline Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, Engine& gen) {
  std::normal_distribution<double> normal;
  Eigen::MatrixXd M(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) M(i, j) = normal(gen);
  return M;
}

/// Haar-ish orthonormal matrix from the QR of a Gaussian matrix.
inline Eigen::MatrixXd random_orthonormal(Eigen::Index p, Engine& gen) {
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(gaussian(p, p, gen));
  return qr.householderQ() * Eigen::MatrixXd::Identity(p, p);
}

inline double uniform(double lo, double hi, Engine& gen) {
  return std::uniform_real_distribution<double>(lo, hi)(gen);
}

/// Non-zero scale in [-3, -0.2] U [0.2, 3].
inline double random_scale(Engine& gen) {
  const double mag = uniform(0.2, 3.0, gen);
  return uniform(0.0, 1.0, gen) < 0.5 ? -mag : mag;
}

/// Dataset with generated names; X gets the intercept prepended.
inline Dataset make_dataset(const Eigen::VectorXd& y, const Eigen::MatrixXd& covariates,
                            const Eigen::MatrixXd& Z, std::vector<bool> endog = {}) {
  const Eigen::Index n = y.size();
  Eigen::MatrixXd X(n, covariates.cols() + 1);
  X << Eigen::VectorXd::Ones(n), covariates;
  std::vector<std::string> xn{kInterceptName}, zn;
  for (Eigen::Index k = 0; k < covariates.cols(); ++k) xn.push_back("x" + std::to_string(k + 1));
  for (Eigen::Index k = 0; k < Z.cols(); ++k) zn.push_back("z" + std::to_string(k + 1));
  if (endog.empty()) endog.assign(xn.size(), false);
  return Dataset(y, std::move(X), Z, std::move(xn), std::move(zn), std::move(endog));
}

/// Small endogenous design: d = z1 + z1^2 + v, y = 1 + d + u, corr(u, v) = 0.5.
inline Dataset random_iv_dataset(Eigen::Index n, Eigen::Index p_z, Engine& gen) {
  const Eigen::MatrixXd Z = gaussian(n, p_z, gen);
  const Eigen::MatrixXd e = gaussian(n, 2, gen);
  const Eigen::VectorXd u = e.col(0);
  const Eigen::VectorXd v = 0.5 * e.col(0) + std::sqrt(0.75) * e.col(1);
  const Eigen::VectorXd d = (Z.col(0).array() + Z.col(0).array().square()).matrix() + v;
  const Eigen::VectorXd y = (1.0 + d.array()).matrix() + u;
  return make_dataset(y, d, Z, {false, true});
}

}  // namespace icm::testing
