#include "icm/simulate.hpp"

#include "icm/error.hpp"
#include "icm/estimator.hpp"
#include "icm/mdd.hpp"
#include "icm/normal.hpp"
#include "icm/parallel.hpp"
#include "icm/random.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <random>
#include <sstream>

namespace icm {

std::string to_string(DgpId id) {
  switch (id) {
    case DgpId::dgp0a: return "0A";
    case DgpId::dgp0b: return "0B";
    case DgpId::dgp1a: return "1A";
    case DgpId::dgp1b: return "1B";
    case DgpId::dgp4: return "4";
  }
  return "?";
}

DgpId parse_dgp_id(const std::string& name) {
  std::string key;
  for (char c : name) key.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  if (key.rfind("DGP", 0) == 0) key.erase(0, 3);
  if (!key.empty() && key.front() == '_') key.erase(0, 1);
  if (key == "0A") return DgpId::dgp0a;
  if (key == "0B") return DgpId::dgp0b;
  if (key == "1A") return DgpId::dgp1a;
  if (key == "1B") return DgpId::dgp1b;
  if (key == "4") return DgpId::dgp4;
  throw ConfigError("unknown DGP '" + name + "' (expected 0A|0B|1A|1B|4)");
}

int default_p_z(DgpId id) {
  switch (id) {
    case DgpId::dgp0a:
    case DgpId::dgp0b: return 1;
    case DgpId::dgp1a:
    case DgpId::dgp1b: return 2;
    case DgpId::dgp4: return 8;
  }
  return 1;
}

void validate(const DgpConfig& cfg) {
  if ((cfg.id == DgpId::dgp0a || cfg.id == DgpId::dgp0b) && cfg.p_z != 1)
    throw ConfigError("DGP_" + to_string(cfg.id) + " uses a single instrument (p_z = 1)");
  if ((cfg.id == DgpId::dgp1a || cfg.id == DgpId::dgp1b) && cfg.p_z != 2)
    throw ConfigError("DGP_" + to_string(cfg.id) + " uses two instruments (p_z = 2)");
  if (cfg.p_z < 1) throw ConfigError("p_z must be at least 1");
  if (cfg.n < 5) throw ConfigError("n must be at least 5");
  if (!(cfg.delta >= 0.0)) throw ConfigError("delta must be non-negative");
  if (!(cfg.rho > -1.0 && cfg.rho < 1.0)) throw ConfigError("rho must lie in (-1, 1)");
}

Eigen::MatrixXd instrument_covariance(int p_z) {
  Eigen::MatrixXd omega(p_z, p_z);
  for (int k = 0; k < p_z; ++k)
    for (int l = 0; l < p_z; ++l) omega(k, l) = std::exp(-std::abs(k - l));
  return omega;
}

Dataset gen_dgp(const DgpConfig& cfg, std::uint64_t rep) {
  validate(cfg);
  const int n = cfg.n;
  const int p = cfg.p_z;
  auto gen = make_engine(cfg.seed, rep);
  std::normal_distribution<double> normal;

  const Eigen::MatrixXd chol = instrument_covariance(p).llt().matrixL();
  Eigen::MatrixXd Z(n, p);
  Eigen::VectorXd U(n), V(n);
  Eigen::VectorXd e(p);
  const double rho_c = std::sqrt(1.0 - cfg.rho * cfg.rho);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < p; ++k) e(k) = normal(gen);
    Z.row(i) = (chol * e).transpose();
    const double e1 = normal(gen);
    const double e2 = normal(gen);
    U(i) = e1;
    V(i) = cfg.rho * e1 + rho_c * e2;
  }

  const double sd = std::sqrt(cfg.delta);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
  std::vector<std::string> z_names;
  for (int k = 0; k < p; ++k) z_names.push_back("Z" + std::to_string(k + 1));

  switch (cfg.id) {
    case DgpId::dgp0a: {
      const Eigen::ArrayXd z = Z.col(0).array();
      const Eigen::VectorXd D = (0.25 + z + sd * z.square() + V.array()).matrix();
      const Eigen::VectorXd y = cfg.alpha * ones + cfg.beta * D + cfg.gamma * Z.col(0) + U;
      Eigen::MatrixXd X(n, 3);
      X << ones, D, Z.col(0);
      return Dataset(y, std::move(X), std::move(Z), {kInterceptName, "D", "Z1"}, z_names,
                     {false, true, false});
    }
    case DgpId::dgp0b: {
      const Eigen::ArrayXd z = Z.col(0).array();
      const Eigen::VectorXd D1 = (0.25 + z + sd * z.square() + V.array() / M_SQRT2).matrix();
      const Eigen::VectorXd D2 = (z + U.array() / M_SQRT2).matrix();
      const Eigen::VectorXd y = cfg.alpha * ones + cfg.beta * D1 + cfg.gamma * D2 + U;
      Eigen::MatrixXd X(n, 3);
      X << ones, D1, D2;
      return Dataset(y, std::move(X), std::move(Z), {kInterceptName, "D1", "D2"}, z_names,
                     {false, true, true});
    }
    case DgpId::dgp1a:
    case DgpId::dgp1b: {
      Eigen::VectorXd D(n);
      if (cfg.id == DgpId::dgp1a) {
        const double threshold = -normal_quantile(0.25);
        for (int i = 0; i < n; ++i) {
          const double f1 = 2.0 / std::sqrt(static_cast<double>(p)) *
                            static_cast<double>((Z.row(i).array().abs() < threshold).count());
          D(i) = 2.0 * cfg.delta * normal_cdf(Z.row(i).sum()) + f1 + V(i);
        }
      } else {
        const double scale = (1.0 - std::exp(-2.0)) / 4.0;
        D = (sd * Z.col(0).array().sin() * Z.col(1).array().sin() / scale + V.array()).matrix();
      }
      const Eigen::VectorXd y = cfg.alpha * ones + cfg.beta * D + cfg.gamma * Z.col(1) + U;
      Eigen::MatrixXd X(n, 3);
      X << ones, D, Z.col(1);
      return Dataset(y, std::move(X), std::move(Z), {kInterceptName, "D", "Z2"}, z_names,
                     {false, true, false});
    }
    case DgpId::dgp4: {
      const Eigen::VectorXd D = Z.rowwise().sum() / std::sqrt(static_cast<double>(p)) + V;
      const Eigen::VectorXd y = cfg.alpha * ones + cfg.beta * D + U;
      Eigen::MatrixXd X(n, 2);
      X << ones, D;
      return Dataset(y, std::move(X), std::move(Z), {kInterceptName, "D"}, z_names,
                     {false, true});
    }
  }
  throw ConfigError("unhandled DGP id");
}

std::string to_string(EstimatorId id) {
  switch (id) {
    case EstimatorId::mmd: return "mmd";
    case EstimatorId::iiv: return "iiv";
    case EstimatorId::dl: return "dl";
    case EstimatorId::esc6: return "esc6";
    case EstimatorId::wmd: return "wmd";
    case EstimatorId::tsls: return "tsls";
  }
  return "?";
}

EstimatorId parse_estimator_id(const std::string& name) {
  if (name == "tsls") return EstimatorId::tsls;
  switch (parse_kernel_id(name)) {
    case KernelId::mmd: return EstimatorId::mmd;
    case KernelId::iiv_gauss: return EstimatorId::iiv;
    case KernelId::dl: return EstimatorId::dl;
    case KernelId::esc6: return EstimatorId::esc6;
    case KernelId::wmd: return EstimatorId::wmd;
  }
  throw ConfigError("unknown estimator '" + name + "'");
}

std::vector<EstimatorId> parse_estimator_list(const std::string& comma_separated) {
  std::vector<EstimatorId> out;
  std::stringstream in(comma_separated);
  std::string item;
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(parse_estimator_id(item));
  if (out.empty()) throw ConfigError("estimator list is empty");
  return out;
}

namespace {

KernelSpec kernel_for(EstimatorId id) {
  switch (id) {
    case EstimatorId::iiv: return {KernelId::iiv_gauss};
    case EstimatorId::dl: return {KernelId::dl};
    case EstimatorId::esc6: return {KernelId::esc6};
    case EstimatorId::wmd: return {KernelId::wmd};
    default: return {KernelId::mmd};
  }
}

}  // namespace

McRow summarize(EstimatorId id, const std::vector<McDraw>& draws) {
  McRow row;
  row.estimator = id;
  row.reps = static_cast<int>(draws.size());
  std::vector<double> abs_err;
  double sum = 0.0, sum_sq = 0.0, rejections = 0.0;
  for (const auto& d : draws) {
    if (d.failed) {
      ++row.failures;
      continue;
    }
    sum += d.error;
    sum_sq += d.error * d.error;
    rejections += d.reject ? 1.0 : 0.0;
    abs_err.push_back(std::abs(d.error));
  }
  const auto ok = static_cast<double>(abs_err.size());
  row.valid = row.failures <= 0.01 * row.reps && !abs_err.empty();
  if (abs_err.empty()) {
    row.mb = row.mad = row.rmse = row.rej = std::nan("");
    return row;
  }
  row.mb = sum / ok;
  row.rmse = std::sqrt(sum_sq / ok);
  row.rej = rejections / ok;
  std::sort(abs_err.begin(), abs_err.end());
  const std::size_t m = abs_err.size();
  row.mad = m % 2 == 1 ? abs_err[m / 2] : 0.5 * (abs_err[m / 2 - 1] + abs_err[m / 2]);
  return row;
}

McSummary run_mc(const DgpConfig& cfg, int reps, const std::vector<EstimatorId>& estimators,
                 Eigen::Index target, double level) {
  validate(cfg);
  if (reps < 1) throw ArgumentError("reps must be at least 1");
  if (estimators.empty()) throw ArgumentError("no estimators requested");
  const bool no_excluded = cfg.id == DgpId::dgp0a || cfg.id == DgpId::dgp0b;
  for (auto e : estimators)
    if (e == EstimatorId::tsls && no_excluded)
      throw InfeasibleError("TSLS is infeasible under DGP_" + to_string(cfg.id) +
                            ": fewer instruments than covariates");

  const double truth = target == 1 ? cfg.beta : (target == 0 ? cfg.alpha : cfg.gamma);
  const std::size_t m = estimators.size();
  std::vector<std::vector<McDraw>> draws(m, std::vector<McDraw>(static_cast<std::size_t>(reps)));

  parallel_for(static_cast<std::size_t>(reps), [&](std::size_t r) {
    const Dataset ds = gen_dgp(cfg, r);
    for (std::size_t e = 0; e < m; ++e) {
      McDraw& d = draws[e][r];
      try {
        const EstimateResult res = estimators[e] == EstimatorId::tsls
                                       ? tsls_estimate(ds)
                                       : estimate(ds, kernel_for(estimators[e]));
        d.error = res.theta(target) - truth;
        d.reject = t_test(res, target, truth, level).reject;
      } catch (const IdentificationError&) {
        d.failed = true;
      } catch (const ScalingError&) {
        d.failed = true;
      } catch (const DegenerateError&) {
        d.failed = true;
      } catch (const DiagnosticError&) {
        d.failed = true;
      }
    }
  });

  McSummary summary;
  summary.config = cfg;
  summary.reps = reps;
  summary.target = target;
  summary.level = level;
  for (std::size_t e = 0; e < m; ++e) summary.rows.push_back(summarize(estimators[e], draws[e]));
  return summary;
}

std::pair<Eigen::VectorXd, Eigen::MatrixXd> mean_dependence_sample(int p_z, int n,
                                                                   std::uint64_t seed,
                                                                   std::uint64_t rep,
                                                                   double noise_sd) {
  if (p_z < 1 || n < 3) throw ArgumentError("mean-dependence design needs p_z >= 1 and n >= 3");
  auto gen = make_engine(seed, rep);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd Z(n, p_z);
  Eigen::VectorXd W(n);
  const double scale = 1.0 / std::sqrt(static_cast<double>(p_z));
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < p_z; ++k) Z(i, k) = normal(gen);
    W(i) = scale * Z.row(i).sum() + noise_sd * normal(gen);
  }
  return {std::move(W), std::move(Z)};
}

double gmdc_design(const KernelSpec& kernel, int p_z, int n, std::uint64_t seed, int reps,
                   double noise_sd) {
  if (reps < 1) throw ArgumentError("reps must be at least 1");
  std::vector<double> values(static_cast<std::size_t>(reps));
  parallel_for(values.size(), [&](std::size_t r) {
    const auto [W, Z] = mean_dependence_sample(p_z, n, seed, r, noise_sd);
    KernelMatrix K;
    if (kernel.id == KernelId::wmd) {
      Eigen::MatrixXd aux(n, 2);
      aux << W, Eigen::VectorXd::Ones(n);
      K = kernel_matrix(Z, kernel, aux);
    } else {
      K = kernel_matrix(Z, kernel);
    }
    values[r] = gmdc(W, K);
  });
  double total = 0.0;
  for (double v : values) total += v;
  return total / static_cast<double>(reps);
}

}  // namespace icm
