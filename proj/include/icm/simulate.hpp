#pragma once

#include "icm/dataset.hpp"
#include "icm/kernels.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace icm {

enum class DgpId { dgp0a, dgp0b, dgp1a, dgp1b, dgp4 };

std::string to_string(DgpId id);
/// Accepts 0A, 0b, dgp_1a, DGP4, 4, ...
DgpId parse_dgp_id(const std::string& name);

struct DgpConfig {
  DgpId id = DgpId::dgp0a;
  int n = 250;
  int p_z = 1;
  double delta = 1.0;
  double rho = 0.5;
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = 1.0;
  std::uint64_t seed = 0;
};

/// Instrument count the simulation designs use for `id` (8 for DGP_4).
int default_p_z(DgpId id);

/// Throws ConfigError if cfg breaks a design invariant.
void validate(const DgpConfig& cfg);

/// Omega_kl = exp(-|k - l|).
Eigen::MatrixXd instrument_covariance(int p_z);

/// One simulated sample; deterministic in (cfg.seed, rep).
Dataset gen_dgp(const DgpConfig& cfg, std::uint64_t rep);

enum class EstimatorId { mmd, iiv, dl, esc6, wmd, tsls };

std::string to_string(EstimatorId id);
EstimatorId parse_estimator_id(const std::string& name);
std::vector<EstimatorId> parse_estimator_list(const std::string& comma_separated);

struct McRow {
  EstimatorId estimator = EstimatorId::mmd;
  double mb = 0.0;
  double mad = 0.0;
  double rmse = 0.0;
  double rej = 0.0;
  int reps = 0;
  int failures = 0;
  bool valid = true;  ///< false when failures exceed 1% of reps
};

struct McSummary {
  DgpConfig config;
  int reps = 0;
  Eigen::Index target = 1;
  double level = 0.05;
  std::vector<McRow> rows;
};

/// Per-replication outcome for one estimator; `failed` when estimation threw.
struct McDraw {
  double error = 0.0;
  bool reject = false;
  bool failed = false;
};

/// Summarizes replication draws: MB, MAD (about the truth), RMSE, Rej.
McRow summarize(EstimatorId id, const std::vector<McDraw>& draws);

/// Monte Carlo over `reps` replications of cfg; replication r uses
/// derive_seed(cfg.seed, r). The target is the coefficient on D (index 1).
McSummary run_mc(const DgpConfig& cfg, int reps, const std::vector<EstimatorId>& estimators,
                 Eigen::Index target = 1, double level = 0.05);

/// Mean-dependence design: Z ~ N(0, I_{p_z}), W = sum(Z)/sqrt(p_z) + noise_sd * e.
std::pair<Eigen::VectorXd, Eigen::MatrixXd> mean_dependence_sample(int p_z, int n,
                                                                   std::uint64_t seed,
                                                                   std::uint64_t rep = 0,
                                                                   double noise_sd = 1.0);

/// Average GMDC of `kernel` over `reps` samples of the mean-dependence design.
double gmdc_design(const KernelSpec& kernel, int p_z, int n, std::uint64_t seed, int reps = 1,
                   double noise_sd = 1.0);

}  // namespace icm
