#include "icm/inference.hpp"

#include "icm/error.hpp"
#include "icm/estimator.hpp"
#include "icm/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

namespace icm {

std::string to_string(WeightScheme scheme) {
  return scheme == WeightScheme::mammen ? "mammen" : "rademacher";
}

WeightScheme parse_weight_scheme(const std::string& name) {
  if (name == "mammen") return WeightScheme::mammen;
  if (name == "rademacher") return WeightScheme::rademacher;
  throw ConfigError("unknown weight scheme '" + name + "' (expected mammen|rademacher)");
}

Eigen::VectorXd draw_wild_weights(Eigen::Index n, WeightScheme scheme, Engine& gen) {
  static const double sqrt5 = std::sqrt(5.0);
  static const double low = 0.5 * (1.0 - sqrt5);
  static const double high = 0.5 * (1.0 + sqrt5);
  static const double p_low = (sqrt5 + 1.0) / (2.0 * sqrt5);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double u = unif(gen);
    if (scheme == WeightScheme::mammen)
      v(i) = u < p_low ? low : high;
    else
      v(i) = u < 0.5 ? -1.0 : 1.0;
  }
  return v;
}

namespace {

// n * MDD_n^2 of u on Z given the distance matrix of Z.
double scaled_mdd(const Eigen::VectorXd& u, const Eigen::MatrixXd& dist) {
  const Eigen::VectorXd uc = u.array() - u.mean();
  return -uc.dot(dist * uc) / static_cast<double>(u.size());
}

// Re-estimates theta for a new outcome vector, reusing everything that does
// not depend on y. WMD is the exception: its kernel diagonal depends on y.
class Refitter {
 public:
  Refitter(const Dataset& ds, const KernelSpec& spec) : ds_(ds), spec_(spec) {
    if (spec.id == KernelId::wmd) {
      ktilde_ = wmd_base_kernel(ds.Z(), spec.bandwidth);
    } else {
      const auto K = kernel_matrix(ds, spec);
      fit_ = iv_estimate(ds.y(), ds.X(), build_instruments(ds.X(), K));
      qr_.compute(-fit_->A_hat);
      ht_ = fit_->instruments.transpose() / static_cast<double>(ds.n());
    }
  }

  EstimateResult initial() const {
    if (fit_) return *fit_;
    return estimate(ds_, spec_);
  }

  /// Residuals of the refit on y_star; throws IdentificationError on failure.
  Eigen::VectorXd residuals(const Eigen::VectorXd& y_star) const {
    if (spec_.id != KernelId::wmd) return y_star - ds_.X() * qr_.solve(ht_ * y_star);
    Eigen::MatrixXd aux(ds_.n(), ds_.p_x() + 1);
    aux << y_star, ds_.X();
    KernelMatrix K;
    K.spec = spec_;
    K.values = ktilde_;
    K.wmd_lambda = wmd_lambda(aux, ktilde_);
    K.values.diagonal().setConstant(-K.wmd_lambda);
    return iv_estimate(y_star, ds_.X(), build_instruments(ds_.X(), K)).residuals;
  }

 private:
  const Dataset& ds_;
  KernelSpec spec_;
  std::optional<EstimateResult> fit_;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr_;
  Eigen::MatrixXd ht_;
  Eigen::MatrixXd ktilde_;
};

}  // namespace

BootTestResult spec_test(const Dataset& ds, const KernelSpec& spec, int B, std::uint64_t seed,
                         WeightScheme weights) {
  if (B < kMinBootstrapDraws)
    throw ArgumentError("bootstrap needs B >= " + std::to_string(kMinBootstrapDraws));

  const Refitter refit(ds, spec);
  const EstimateResult fit = refit.initial();
  const Eigen::MatrixXd dist = pairwise_distances(ds.Z());
  const Eigen::VectorXd fitted = ds.X() * fit.theta;

  BootTestResult out;
  out.stat = scaled_mdd(fit.residuals, dist);
  out.B = B;
  out.seed = seed;
  out.weights = weights;

  std::vector<double> draws(static_cast<std::size_t>(B), std::nan(""));
  parallel_for(static_cast<std::size_t>(B), [&](std::size_t b) {
    auto gen = make_engine(seed, b);
    const Eigen::VectorXd v = draw_wild_weights(ds.n(), weights, gen);
    const Eigen::VectorXd y_star = fitted + fit.residuals.cwiseProduct(v);
    try {
      draws[b] = scaled_mdd(refit.residuals(y_star), dist);
    } catch (const IdentificationError&) {
      // Recorded as failed below.
    }
  });

  int exceed = 0;
  for (double s : draws) {
    if (std::isnan(s)) {
      ++out.failed_draws;
      continue;
    }
    out.boot_stats.push_back(s);
    if (s >= out.stat) ++exceed;
  }
  if (out.failed_draws > 0.05 * B)
    throw DiagnosticError(std::to_string(out.failed_draws) + " of " + std::to_string(B) +
                          " bootstrap draws failed to re-estimate (more than 5%)");
  out.pvalue = (1.0 + exceed) / (static_cast<double>(out.boot_stats.size()) + 1.0);
  out.interpretation = out.pvalue <= 0.05
                           ? "E[U|Z] = 0 rejected at 5%: evidence of misspecification"
                           : "E[U|Z] = 0 not rejected at 5%: no evidence of misspecification";
  return out;
}

Dataset lc_auxiliary_dataset(const Dataset& ds, Eigen::Index endog) {
  if (endog <= 0 || endog >= ds.p_x())
    throw ArgumentError("endogenous column index must name a non-intercept covariate");
  const auto flagged = ds.endogenous_columns();
  if (flagged.size() > 1)
    throw InfeasibleError(
        "the linear-completeness test covers a single endogenous covariate; it does not "
        "generalise to multiple endogenous covariates in an obvious way");
  if (flagged.size() == 1 && flagged.front() != endog)
    throw ArgumentError("endogenous column index disagrees with the dataset's endogenous flag");

  const Eigen::Index p = ds.p_x();
  Eigen::MatrixXd X(ds.n(), p - 1);
  std::vector<std::string> names;
  for (Eigen::Index k = 0, out = 0; k < p; ++k) {
    if (k == endog) continue;
    X.col(out++) = ds.X().col(k);
    names.push_back(ds.x_names()[static_cast<std::size_t>(k)]);
  }
  std::vector<bool> mask(names.size(), false);
  return Dataset(ds.X().col(endog), std::move(X), ds.Z(), std::move(names), ds.z_names(),
                 std::move(mask), ds.x_names()[static_cast<std::size_t>(endog)]);
}

BootTestResult lc_test(const Dataset& ds, Eigen::Index endog, const KernelSpec& spec, int B,
                       std::uint64_t seed, WeightScheme weights) {
  auto out = spec_test(lc_auxiliary_dataset(ds, endog), spec, B, seed, weights);
  out.interpretation =
      out.pvalue <= 0.05
          ? "linear completeness null rejected at 5%: evidence of ICM identification"
          : "linear completeness null not rejected at 5%: no evidence of ICM identification";
  return out;
}

}  // namespace icm
