#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace icm {

enum class KernelId { mmd, iiv_gauss, dl, esc6, wmd };

struct KernelSpec {
  KernelId id = KernelId::mmd;
  /// Bandwidth of the WMD base density; ignored by other kernels.
  double bandwidth = 1.0;
};

/// Lower-case CLI name: mmd, iiv, dl, esc6, wmd.
std::string to_string(KernelId id);
KernelId parse_kernel_id(const std::string& name);

/// DL, ESC6 and WMD need the whole sample to evaluate a single entry.
constexpr bool is_data_dependent(KernelId id) noexcept {
  return id == KernelId::dl || id == KernelId::esc6 || id == KernelId::wmd;
}

/// Symmetric n x n kernel evaluated on the rows of Z, with the scaling that
/// was used to build it.
struct KernelMatrix {
  Eigen::MatrixXd values;
  KernelSpec spec;
  /// Sample covariance of Z for IIV_GAUSS, empty otherwise.
  Eigen::MatrixXd scaling;
  /// lambda-tilde for WMD, NaN otherwise.
  double wmd_lambda = std::nan("");

  Eigen::Index size() const noexcept { return values.rows(); }
};

/// Euclidean distances between the rows of Z. Each pair is evaluated once,
/// so the result is exactly symmetric with a zero diagonal.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> pairwise_distances(
    const Eigen::MatrixBase<Derived>& Z) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index n = Z.rows();
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> D(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    D(j, j) = Scalar(0);
    for (Eigen::Index i = j + 1; i < n; ++i) {
      const Scalar d = (Z.row(i) - Z.row(j)).norm();
      D(i, j) = d;
      D(j, i) = d;
    }
  }
  return D;
}

/// Squared Euclidean distances between rows, exactly symmetric.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> pairwise_squared_distances(
    const Eigen::MatrixBase<Derived>& Z) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index n = Z.rows();
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> D(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    D(j, j) = Scalar(0);
    for (Eigen::Index i = j + 1; i < n; ++i) {
      const Scalar d = (Z.row(i) - Z.row(j)).squaredNorm();
      D(i, j) = d;
      D(j, i) = d;
    }
  }
  return D;
}

/// Normalizing constant pi^{p/2 - 1} / Gamma(p/2 + 1) of the ESC6 kernel.
inline double esc6_constant(Eigen::Index p_z) {
  const double half = 0.5 * static_cast<double>(p_z);
  return std::pow(M_PI, half - 1.0) / std::tgamma(half + 1.0);
}

/// Angle term |pi - arccos(cos_angle(Z_i - Z_l, Z_j - Z_l))| for three points,
/// with the exact tie values (pi when exactly two points coincide, 2 pi when
/// all three do).
double esc6_angle_term(const Eigen::Ref<const Eigen::RowVectorXd>& zi,
                       const Eigen::Ref<const Eigen::RowVectorXd>& zj,
                       const Eigen::Ref<const Eigen::RowVectorXd>& zl);

/// Kernel matrix for kernels that need only Z (MMD, IIV_GAUSS, DL, ESC6).
/// Throws ArgumentError for WMD, which also needs [y, X].
KernelMatrix kernel_matrix(const Eigen::MatrixXd& Z, const KernelSpec& spec);

/// Kernel matrix with the auxiliary [y, X] block used by WMD.
KernelMatrix kernel_matrix(const Eigen::MatrixXd& Z, const KernelSpec& spec,
                           const Eigen::MatrixXd& aux);

/// Product of normal densities of the coordinate differences for i != j,
/// zero on the diagonal.
Eigen::MatrixXd wmd_base_kernel(const Eigen::MatrixXd& Z, double bandwidth);

/// Smallest real eigenvalue of (E_n[Y*' Y*])^{-1} E_n[Ktilde_ij Y*_i' Y*_j]
/// with Y* = aux.
double wmd_lambda(const Eigen::MatrixXd& aux, const Eigen::MatrixXd& ktilde);

struct KernelSdEstimate {
  double sd = 0.0;
  double stderr_sd = 0.0;
  std::int64_t draws = 0;
  std::uint64_t seed = 0;
};

/// Monte Carlo standard deviation of K(Z, Z') over independent pairs with
/// Z, Z' ~ N(0, I_{p_z}). IIV_GAUSS uses identity scaling; DL uses its
/// population limit; ESC6 averages the angle term over a fixed reference
/// sample; WMD uses its off-diagonal base density.
KernelSdEstimate kernel_sd_mc(const KernelSpec& spec, int p_z, std::int64_t draws,
                              std::uint64_t seed);

}  // namespace icm
