#pragma once

#include "icm/error.hpp"
#include "icm/kernels.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>

namespace icm {

/// Sample martingale difference divergence -E_n[||Z_i - Z_j|| Wc_i Wc_j] with
/// Wc = W - mean(W), as a V-statistic over all n^2 ordered pairs.
///
/// Pairs are accumulated column by column in a fixed order, so results are
/// bit-reproducible.
template <typename DerivedW, typename DerivedZ>
typename DerivedW::Scalar mdd_sq(const Eigen::MatrixBase<DerivedW>& W,
                                 const Eigen::MatrixBase<DerivedZ>& Z) {
  using Scalar = typename DerivedW::Scalar;
  const Eigen::Index n = W.size();
  if (n < 2) throw ArgumentError("mdd_sq needs at least two observations");
  if (Z.rows() != n) throw ArgumentError("mdd_sq: W and Z have different row counts");
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> wc = W.derived().reshaped().array() - W.mean();

  Scalar total(0);
  for (Eigen::Index j = 0; j < n; ++j) {
    Scalar column(0);
    for (Eigen::Index i = j + 1; i < n; ++i) column += (Z.row(i) - Z.row(j)).norm() * wc(i);
    total += column * wc(j);
  }
  // Strict lower triangle counted twice; the diagonal contributes zero.
  return -Scalar(2) * total / (Scalar(n) * Scalar(n));
}

/// Kernel-weighted analogue E_n[Wc_i Wc_j K_ij]. With the MMD kernel
/// (K = -distance) it equals mdd_sq.
template <typename DerivedW, typename DerivedK>
typename DerivedW::Scalar gmdd_sq(const Eigen::MatrixBase<DerivedW>& W,
                                  const Eigen::MatrixBase<DerivedK>& K) {
  using Scalar = typename DerivedW::Scalar;
  const Eigen::Index n = W.size();
  if (K.rows() != n || K.cols() != n)
    throw ArgumentError("gmdd_sq: kernel is " + std::to_string(K.rows()) + "x" +
                        std::to_string(K.cols()) + " but W has " + std::to_string(n) + " entries");
  const Eigen::Matrix<Scalar, Eigen::Dynamic, 1> wc = W.derived().reshaped().array() - W.mean();
  return wc.dot(K * wc) / (Scalar(n) * Scalar(n));
}

inline double gmdd_sq(const Eigen::VectorXd& W, const KernelMatrix& K) {
  return gmdd_sq(W, K.values);
}

/// Root mean square of the entries of K - mean(K) over all ordered pairs.
template <typename DerivedK>
typename DerivedK::Scalar kernel_sd(const Eigen::MatrixBase<DerivedK>& K) {
  using Scalar = typename DerivedK::Scalar;
  const Scalar mean = K.mean();
  return std::sqrt((K.array() - mean).square().mean());
}

/// Double-centered kernel J K J with J = I - 11'/n.
template <typename DerivedK>
Eigen::Matrix<typename DerivedK::Scalar, Eigen::Dynamic, Eigen::Dynamic> double_center(
    const Eigen::MatrixBase<DerivedK>& K) {
  const auto row_means = K.rowwise().mean().eval();
  const auto col_means = K.colwise().mean().eval();
  const auto grand = K.mean();
  auto centered = K.eval();
  centered.colwise() -= row_means;
  centered.rowwise() -= col_means;
  centered.array() += grand;
  return centered;
}

/// Correlation analogue of gmdd_sq, in [0, 1]:
///   gmdd_sq(W, K) / (E_n[Wc^2] * sqrt(E_n[Kc_ij^2]))
/// where Kc is the double-centered kernel. Because Wc sums to zero,
/// Wc' K Wc = Wc' Kc Wc and Cauchy-Schwarz bounds the ratio by one.
template <typename DerivedW, typename DerivedK>
typename DerivedW::Scalar gmdc(const Eigen::MatrixBase<DerivedW>& W,
                               const Eigen::MatrixBase<DerivedK>& K) {
  using Scalar = typename DerivedW::Scalar;
  const Scalar num = gmdd_sq(W, K);
  const Scalar w_var = (W.array() - W.mean()).square().mean();
  const Scalar k_scale = std::sqrt(double_center(K).array().square().mean());
  if (!(w_var > Scalar(0))) throw DegenerateError("gmdc: W has zero variance");
  if (!(k_scale > Scalar(1e-300))) throw DegenerateError("gmdc: kernel has no variation");
  const Scalar raw = num / (w_var * k_scale);
  if (raw < Scalar(-1e-8))
    throw DiagnosticError("gmdc: negative GMDD^2 (" + std::to_string(double(raw)) +
                          "); kernel is not of positive type on this sample");
  return std::clamp(raw, Scalar(0), Scalar(1));
}

inline double gmdc(const Eigen::VectorXd& W, const KernelMatrix& K) { return gmdc(W, K.values); }

struct DependenceReport {
  double gmdd_sq = 0.0;
  double gmdc = 0.0;
  KernelSpec kernel;
  Eigen::Index n = 0;
};

inline DependenceReport dependence_report(const Eigen::VectorXd& W, const KernelMatrix& K) {
  return {gmdd_sq(W, K), gmdc(W, K), K.spec, W.size()};
}

}  // namespace icm
