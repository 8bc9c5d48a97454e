#include "icm/kernels.hpp"

#include "icm/error.hpp"
#include "icm/normal.hpp"
#include "icm/parallel.hpp"
#include "icm/random.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <random>

namespace icm {

std::string to_string(KernelId id) {
  switch (id) {
    case KernelId::mmd: return "mmd";
    case KernelId::iiv_gauss: return "iiv";
    case KernelId::dl: return "dl";
    case KernelId::esc6: return "esc6";
    case KernelId::wmd: return "wmd";
  }
  return "?";
}

KernelId parse_kernel_id(const std::string& name) {
  if (name == "mmd") return KernelId::mmd;
  if (name == "iiv" || name == "iiv_gauss" || name == "gauss") return KernelId::iiv_gauss;
  if (name == "dl") return KernelId::dl;
  if (name == "esc6") return KernelId::esc6;
  if (name == "wmd") return KernelId::wmd;
  throw ConfigError("unknown kernel '" + name + "' (expected mmd|iiv|dl|esc6|wmd)");
}

namespace {

constexpr double kPi = M_PI;

// Rows with identical coordinates share an id.
std::vector<Eigen::Index> duplicate_groups(const Eigen::MatrixXd& Z) {
  const Eigen::Index n = Z.rows();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  auto row_less = [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index k = 0; k < Z.cols(); ++k) {
      if (Z(a, k) < Z(b, k)) return true;
      if (Z(b, k) < Z(a, k)) return false;
    }
    return false;
  };
  std::sort(order.begin(), order.end(), row_less);
  std::vector<Eigen::Index> group(static_cast<std::size_t>(n));
  Eigen::Index current = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (k > 0 && row_less(order[k - 1], order[k])) ++current;
    group[static_cast<std::size_t>(order[k])] = current;
  }
  return group;
}

double clamped_angle_term(double dot, double ri, double rj) {
  const double c = std::clamp(dot / (ri * rj), -1.0, 1.0);
  return std::abs(kPi - std::acos(c));
}

Eigen::MatrixXd mmd_values(const Eigen::MatrixXd& Z) { return -pairwise_distances(Z); }

KernelMatrix iiv_gauss_matrix(const Eigen::MatrixXd& Z, const KernelSpec& spec) {
  const Eigen::Index n = Z.rows();
  if (n < 2) throw ArgumentError("IIV kernel needs at least two rows");
  const Eigen::MatrixXd centered = Z.rowwise() - Z.colwise().mean();
  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n - 1);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov, Eigen::EigenvaluesOnly);
  const double top = eig.eigenvalues().maxCoeff();
  if (!(top > 0.0) || eig.eigenvalues().minCoeff() <= 1e-12 * top)
    throw ScalingError(
        "sample covariance of Z is singular; drop collinear instruments before using the "
        "IIV kernel");

  const Eigen::LLT<Eigen::MatrixXd> llt(cov);
  // Rows of `white` are L^{-1} z_i, so squared distances are Mahalanobis.
  const Eigen::MatrixXd white = llt.matrixL().solve(Z.transpose()).transpose();
  KernelMatrix km;
  km.values = (-0.5 * pairwise_squared_distances(white).array()).exp().matrix();
  km.spec = spec;
  km.scaling = cov;
  return km;
}

Eigen::MatrixXd dl_values(const Eigen::MatrixXd& Z) {
  const Eigen::Index n = Z.rows();
  Eigen::MatrixXd below(n, n);
  for (Eigen::Index l = 0; l < n; ++l)
    for (Eigen::Index i = 0; i < n; ++i)
      below(i, l) = (Z.row(i).array() <= Z.row(l).array()).all() ? 1.0 : 0.0;
  // Integer counts: any summation order gives the same exact values.
  Eigen::MatrixXd counts = below * below.transpose();
  return counts / static_cast<double>(n);
}

Eigen::MatrixXd esc6_values(const Eigen::MatrixXd& Z) {
  const Eigen::Index n = Z.rows();
  const auto group = duplicate_groups(Z);
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd diff(n, Z.cols());
  Eigen::MatrixXd gram(n, n);
  Eigen::VectorXd radius(n);

  for (Eigen::Index l = 0; l < n; ++l) {
    diff = Z.rowwise() - Z.row(l);
    radius = diff.rowwise().norm();
    gram.noalias() = diff * diff.transpose();
    const auto gl = group[static_cast<std::size_t>(l)];
    for (Eigen::Index j = 0; j < n; ++j) {
      const bool lj = group[static_cast<std::size_t>(j)] == gl;
      for (Eigen::Index i = j; i < n; ++i) {
        const bool li = group[static_cast<std::size_t>(i)] == gl;
        double a;
        if (li && lj)
          a = 2.0 * kPi;
        else if (li || lj || group[static_cast<std::size_t>(i)] == group[static_cast<std::size_t>(j)])
          a = kPi;
        else
          a = clamped_angle_term(gram(i, j), radius(i), radius(j));
        acc(i, j) += a;
      }
    }
  }
  const double scale = esc6_constant(Z.cols()) / static_cast<double>(n);
  Eigen::MatrixXd K(n, n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = j; i < n; ++i) K(i, j) = K(j, i) = scale * acc(i, j);
  return K;
}

double base_density(const Eigen::Ref<const Eigen::RowVectorXd>& diff, double bandwidth) {
  double value = 1.0;
  for (Eigen::Index k = 0; k < diff.size(); ++k) value *= normal_pdf(diff(k) / bandwidth) / bandwidth;
  return value;
}

}  // namespace

double esc6_angle_term(const Eigen::Ref<const Eigen::RowVectorXd>& zi,
                       const Eigen::Ref<const Eigen::RowVectorXd>& zj,
                       const Eigen::Ref<const Eigen::RowVectorXd>& zl) {
  const bool li = (zi.array() == zl.array()).all();
  const bool lj = (zj.array() == zl.array()).all();
  if (li && lj) return 2.0 * kPi;
  if (li || lj || (zi.array() == zj.array()).all()) return kPi;
  const Eigen::RowVectorXd a = zi - zl;
  const Eigen::RowVectorXd b = zj - zl;
  return clamped_angle_term(a.dot(b), a.norm(), b.norm());
}

Eigen::MatrixXd wmd_base_kernel(const Eigen::MatrixXd& Z, double bandwidth) {
  if (!(bandwidth > 0.0)) throw ArgumentError("WMD bandwidth must be positive");
  const Eigen::Index n = Z.rows();
  Eigen::MatrixXd K(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    K(j, j) = 0.0;
    for (Eigen::Index i = j + 1; i < n; ++i) K(i, j) = K(j, i) = base_density(Z.row(i) - Z.row(j), bandwidth);
  }
  return K;
}

double wmd_lambda(const Eigen::MatrixXd& aux, const Eigen::MatrixXd& ktilde) {
  const Eigen::Index n = aux.rows();
  if (ktilde.rows() != n || ktilde.cols() != n)
    throw ArgumentError("WMD base kernel must be n x n with n = rows of [y, X]");
  const double nd = static_cast<double>(n);
  const Eigen::MatrixXd M = aux.transpose() * aux / nd;
  const Eigen::MatrixXd N = aux.transpose() * ktilde * aux / (nd * nd);

  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(M);
  if (!qr.isInvertible() || qr.rank() < M.rows())
    throw ScalingError("E_n[Y*' Y*] is singular; the WMD weighting is undefined");
  const Eigen::MatrixXd product = qr.solve(N);

  const Eigen::EigenSolver<Eigen::MatrixXd> eig(product, false);
  if (eig.info() != Eigen::Success) throw DiagnosticError("eigen decomposition for WMD lambda failed");
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < eig.eigenvalues().size(); ++k) {
    const auto ev = eig.eigenvalues()(k);
    if (std::abs(ev.imag()) < 1e-8 * std::abs(ev.real()) + 1e-12) best = std::min(best, ev.real());
  }
  if (!std::isfinite(best))
    throw DiagnosticError("no admissible real eigenvalue for WMD lambda");
  return best;
}

KernelMatrix kernel_matrix(const Eigen::MatrixXd& Z, const KernelSpec& spec) {
  if (!Z.allFinite()) throw ArgumentError("Z has non-finite entries");
  switch (spec.id) {
    case KernelId::mmd: return {mmd_values(Z), spec, {}, std::nan("")};
    case KernelId::iiv_gauss: return iiv_gauss_matrix(Z, spec);
    case KernelId::dl: return {dl_values(Z), spec, {}, std::nan("")};
    case KernelId::esc6: return {esc6_values(Z), spec, {}, std::nan("")};
    case KernelId::wmd:
      throw ArgumentError("the WMD kernel needs the [y, X] block; use the overload taking aux");
  }
  throw ConfigError("unhandled kernel id");
}

KernelMatrix kernel_matrix(const Eigen::MatrixXd& Z, const KernelSpec& spec,
                           const Eigen::MatrixXd& aux) {
  if (spec.id != KernelId::wmd) return kernel_matrix(Z, spec);
  if (!Z.allFinite()) throw ArgumentError("Z has non-finite entries");
  if (aux.rows() != Z.rows()) throw ArgumentError("[y, X] block must have the same rows as Z");
  KernelMatrix km;
  km.values = wmd_base_kernel(Z, spec.bandwidth);
  km.wmd_lambda = wmd_lambda(aux, km.values);
  km.values.diagonal().setConstant(-km.wmd_lambda);
  km.spec = spec;
  return km;
}

KernelSdEstimate kernel_sd_mc(const KernelSpec& spec, int p_z, std::int64_t draws,
                              std::uint64_t seed) {
  if (p_z < 1) throw ArgumentError("kernel_sd_mc needs p_z >= 1");
  if (draws < 1000) throw ArgumentError("kernel_sd_mc needs at least 1000 draws");

  constexpr std::int64_t kChunk = 4096;
  constexpr Eigen::Index kEsc6Reference = 128;
  const auto chunks = static_cast<std::size_t>((draws + kChunk - 1) / kChunk);

  Eigen::MatrixXd reference;
  if (spec.id == KernelId::esc6) {
    // Chunk indices never reach 2^63, so this child seed is reserved.
    auto gen = make_engine(seed, ~std::uint64_t{0});
    std::normal_distribution<double> normal;
    reference.resize(kEsc6Reference, p_z);
    for (Eigen::Index i = 0; i < reference.rows(); ++i)
      for (Eigen::Index k = 0; k < p_z; ++k) reference(i, k) = normal(gen);
  }
  const double esc6_scale = esc6_constant(p_z) / static_cast<double>(kEsc6Reference);

  std::vector<double> values(static_cast<std::size_t>(draws));
  parallel_for(chunks, [&](std::size_t c) {
    auto gen = make_engine(seed, c);
    std::normal_distribution<double> normal;
    Eigen::RowVectorXd z(p_z), zd(p_z);
    const auto begin = static_cast<std::int64_t>(c) * kChunk;
    const auto end = std::min(draws, begin + kChunk);
    for (auto d = begin; d < end; ++d) {
      for (int k = 0; k < p_z; ++k) z(k) = normal(gen);
      for (int k = 0; k < p_z; ++k) zd(k) = normal(gen);
      double v = 0.0;
      switch (spec.id) {
        case KernelId::mmd: v = -(z - zd).norm(); break;
        case KernelId::iiv_gauss: v = std::exp(-0.5 * (z - zd).squaredNorm()); break;
        case KernelId::dl: {
          v = 1.0;
          for (int k = 0; k < p_z; ++k) v *= 1.0 - normal_cdf(std::max(z(k), zd(k)));
          break;
        }
        case KernelId::esc6: {
          double acc = 0.0;
          for (Eigen::Index l = 0; l < reference.rows(); ++l)
            acc += esc6_angle_term(z, zd, reference.row(l));
          v = esc6_scale * acc;
          break;
        }
        case KernelId::wmd: v = base_density(z - zd, spec.bandwidth); break;
      }
      values[static_cast<std::size_t>(d)] = v;
    }
  });

  const double nd = static_cast<double>(draws);
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= nd;
  double m2 = 0.0, m4 = 0.0;
  for (double v : values) {
    const double e = (v - mean) * (v - mean);
    m2 += e;
    m4 += e * e;
  }
  m4 /= nd;
  const double var = m2 / (nd - 1.0);

  KernelSdEstimate out;
  out.sd = std::sqrt(var);
  out.draws = draws;
  out.seed = seed;
  // Delta method: var(s) ~ (mu4 - sigma^4) / (4 sigma^2 N).
  out.stderr_sd = var > 0.0 ? std::sqrt(std::max(0.0, m4 - var * var) / (4.0 * var * nd)) : 0.0;
  return out;
}

}  // namespace icm
