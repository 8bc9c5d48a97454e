#include "icm/error.hpp"
#include "icm/normal.hpp"
#include "icm/parallel.hpp"
#include "icm/simulate.hpp"

#include <doctest.h>

#include <cmath>

using namespace icm;

namespace {

double corr(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const Eigen::ArrayXd ac = a.array() - a.mean(), bc = b.array() - b.mean();
  return (ac * bc).sum() / std::sqrt(ac.square().sum() * bc.square().sum());
}

Eigen::MatrixXd sample_cov(const Eigen::MatrixXd& Z) {
  const Eigen::MatrixXd c = Z.rowwise() - Z.colwise().mean();
  return c.transpose() * c / static_cast<double>(Z.rows() - 1);
}

}  // namespace

TEST_CASE("DGP names and validation") {
  CHECK(parse_dgp_id("0a") == DgpId::dgp0a);
  CHECK(parse_dgp_id("DGP_1B") == DgpId::dgp1b);
  CHECK(parse_dgp_id("dgp4") == DgpId::dgp4);
  CHECK(parse_dgp_id(to_string(DgpId::dgp0b)) == DgpId::dgp0b);
  CHECK_THROWS_AS(parse_dgp_id("2"), ConfigError);
  CHECK(default_p_z(DgpId::dgp4) == 8);

  DgpConfig cfg;
  CHECK_NOTHROW(validate(cfg));
  cfg.p_z = 2;
  CHECK_THROWS_AS(validate(cfg), ConfigError);
  cfg = DgpConfig{DgpId::dgp1a, 250, 1};
  CHECK_THROWS_AS(validate(cfg), ConfigError);
  cfg = DgpConfig{};
  cfg.rho = 1.0;
  CHECK_THROWS_AS(validate(cfg), ConfigError);
  cfg = DgpConfig{};
  cfg.delta = -0.5;
  CHECK_THROWS_AS(validate(cfg), ConfigError);
  cfg = DgpConfig{};
  cfg.n = 4;
  CHECK_THROWS_AS(gen_dgp(cfg, 0), ConfigError);
}

TEST_CASE("instrument covariance") {
  const auto omega = instrument_covariance(3);
  CHECK(omega(0, 0) == 1.0);
  CHECK(omega(0, 2) == doctest::Approx(std::exp(-2.0)));
  CHECK(omega(2, 1) == doctest::Approx(std::exp(-1.0)));
}

TEST_CASE("gen_dgp is deterministic in (seed, rep) and has the documented layout") {
  for (auto id : {DgpId::dgp0a, DgpId::dgp0b, DgpId::dgp1a, DgpId::dgp1b, DgpId::dgp4}) {
    DgpConfig cfg{id, 50, default_p_z(id)};
    cfg.seed = 99;
    const auto a = gen_dgp(cfg, 3);
    const auto b = gen_dgp(cfg, 3);
    const auto c = gen_dgp(cfg, 4);
    CHECK(a.y() == b.y());
    CHECK(a.Z() == b.Z());
    CHECK(a.y() != c.y());
    CHECK(a.p_z() == cfg.p_z);
    CHECK(a.p_x() == (id == DgpId::dgp4 ? 2 : 3));
    CHECK(a.endog_mask()[1]);
  }
  DgpConfig cfg{DgpId::dgp0a, 50, 1};
  const auto ds = gen_dgp(cfg, 0);
  CHECK(ds.X().col(2) == ds.Z().col(0));
}

TEST_CASE("DGP_4 instruments and errors have the stated moments") {
  DgpConfig cfg{DgpId::dgp4, 40000, 8};
  cfg.seed = 5;
  const auto ds = gen_dgp(cfg, 0);
  CHECK((sample_cov(ds.Z()) - instrument_covariance(8)).cwiseAbs().maxCoeff() < 0.04);
  const Eigen::VectorXd U = ds.y() - ds.X() * Eigen::Vector2d(1, 1);
  const Eigen::VectorXd V = ds.X().col(1) - ds.Z().rowwise().sum() / std::sqrt(8.0);
  CHECK(corr(U, V) == doctest::Approx(0.5).epsilon(0.04));
  CHECK(U.array().square().mean() == doctest::Approx(1.0).epsilon(0.03));
  CHECK(V.array().square().mean() == doctest::Approx(1.0).epsilon(0.03));
}

TEST_CASE("DGP_1A threshold indicator has mean sqrt(p_z)") {
  CHECK(-normal_quantile(0.25) == doctest::Approx(0.6745).epsilon(1e-4));
  DgpConfig cfg{DgpId::dgp1a, 40000, 2};
  cfg.delta = 0.0;
  cfg.seed = 6;
  const auto ds = gen_dgp(cfg, 0);
  // With delta = 0, D = f1 + V and V has mean zero.
  CHECK(ds.X().col(1).mean() == doctest::Approx(std::sqrt(2.0)).epsilon(0.02));
}

TEST_CASE("DGP_1B first stage is uncorrelated with the instruments") {
  DgpConfig cfg{DgpId::dgp1b, 40000, 2};
  cfg.seed = 7;
  const auto ds = gen_dgp(cfg, 0);
  const Eigen::VectorXd D = ds.X().col(1);
  CHECK(std::abs(corr(D, ds.Z().col(0))) < 0.02);
  CHECK(std::abs(corr(D, ds.Z().col(1))) < 0.02);
  // The nonlinear signal is there: sin(Z1) sin(Z2) correlates with D.
  const Eigen::VectorXd s = (ds.Z().col(0).array().sin() * ds.Z().col(1).array().sin()).matrix();
  CHECK(corr(D, s) > 0.3);
}

TEST_CASE("estimator lists") {
  const auto ids = parse_estimator_list("mmd,iiv,tsls");
  REQUIRE(ids.size() == 3);
  CHECK(ids[1] == EstimatorId::iiv);
  CHECK(ids[2] == EstimatorId::tsls);
  CHECK(parse_estimator_id("iiv_gauss") == EstimatorId::iiv);
  CHECK_THROWS_AS(parse_estimator_list(""), ConfigError);
  CHECK_THROWS_AS(parse_estimator_list("mmd,ols"), ConfigError);
}

TEST_CASE("summarize") {
  std::vector<McDraw> draws{{0.1, false, false}, {-0.3, true, false}, {0.2, false, false},
                            {0.0, false, true}};
  const auto row = summarize(EstimatorId::dl, draws);
  CHECK(row.reps == 4);
  CHECK(row.failures == 1);
  CHECK_FALSE(row.valid);
  CHECK(row.mb == doctest::Approx(0.0));
  CHECK(row.mad == doctest::Approx(0.2));
  CHECK(row.rmse == doctest::Approx(std::sqrt(0.14 / 3)));
  CHECK(row.rej == doctest::Approx(1.0 / 3));
  const auto all_failed = summarize(EstimatorId::mmd, {{0, false, true}});
  CHECK(std::isnan(all_failed.mb));
  CHECK_FALSE(all_failed.valid);
}

TEST_CASE("run_mc") {
  DgpConfig cfg{DgpId::dgp1a, 100, 2};
  cfg.seed = 11;
  SUBCASE("a single replication gives MAD = |MB| = RMSE") {
    const auto s = run_mc(cfg, 1, {EstimatorId::mmd, EstimatorId::tsls});
    for (const auto& row : s.rows) {
      CHECK(row.mad == doctest::Approx(std::abs(row.mb)));
      CHECK(row.rmse == doctest::Approx(std::abs(row.mb)));
    }
  }
  SUBCASE("RMSE bounds |MB| and results do not depend on the thread count") {
    set_num_threads(1);
    const auto a = run_mc(cfg, 20, {EstimatorId::mmd, EstimatorId::esc6, EstimatorId::wmd});
    set_num_threads(3);
    const auto b = run_mc(cfg, 20, {EstimatorId::mmd, EstimatorId::esc6, EstimatorId::wmd});
    set_num_threads(0);
    for (std::size_t k = 0; k < a.rows.size(); ++k) {
      CHECK(a.rows[k].rmse >= std::abs(a.rows[k].mb));
      CHECK(a.rows[k].mb == b.rows[k].mb);
      CHECK(a.rows[k].rej == b.rows[k].rej);
      CHECK(a.rows[k].reps == 20);
    }
  }
  SUBCASE("TSLS is refused without an excluded instrument") {
    DgpConfig zero{DgpId::dgp0a, 100, 1};
    CHECK_THROWS_AS(run_mc(zero, 5, {EstimatorId::mmd, EstimatorId::tsls}), InfeasibleError);
    zero.id = DgpId::dgp0b;
    CHECK_THROWS_AS(run_mc(zero, 5, {EstimatorId::tsls}), InfeasibleError);
  }
  CHECK_THROWS_AS(run_mc(cfg, 0, {EstimatorId::mmd}), ArgumentError);
}

TEST_CASE("mean-dependence design") {
  const auto [W, Z] = mean_dependence_sample(4, 30, 1, 2);
  CHECK(W.size() == 30);
  CHECK(Z.cols() == 4);
  const auto again = mean_dependence_sample(4, 30, 1, 2);
  CHECK(again.first == W);
  const double g = gmdc_design(KernelSpec{KernelId::mmd}, 2, 200, 3, 2);
  CHECK(g > 0);
  CHECK(g < 1);
  CHECK(g == gmdc_design(KernelSpec{KernelId::mmd}, 2, 200, 3, 2));
  CHECK(gmdc_design(KernelSpec{KernelId::wmd}, 2, 100, 3) >= 0);
  CHECK_THROWS_AS(mean_dependence_sample(0, 30, 1), ArgumentError);
}
