#include "icm/error.hpp"
#include "icm/estimator.hpp"
#include "icm/inference.hpp"
#include "icm/mdd.hpp"
#include "icm/parallel.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <set>

using namespace icm;

TEST_CASE("wild weights have mean zero and unit variance") {
  for (auto scheme : {WeightScheme::mammen, WeightScheme::rademacher}) {
    icm::Engine gen(41);
    const auto v = draw_wild_weights(400000, scheme, gen);
    const double m1 = v.mean();
    const double m2 = v.array().square().mean();
    const double m3 = v.array().cube().mean();
    CHECK(std::abs(m1) < 0.01);
    CHECK(std::abs(m2 - 1) < 0.01);
    CHECK(std::abs(m3 - (scheme == WeightScheme::mammen ? 1.0 : 0.0)) < 0.03);
    std::set<double> support(v.data(), v.data() + v.size());
    CHECK(support.size() == 2);
  }
  CHECK(parse_weight_scheme(to_string(WeightScheme::rademacher)) == WeightScheme::rademacher);
  CHECK_THROWS_AS(parse_weight_scheme("webb"), ConfigError);
}

TEST_CASE("spec_test statistic and p-value") {
  icm::Engine gen(42);
  const auto ds = testing::random_iv_dataset(60, 1, gen);
  const auto out = spec_test(ds, KernelSpec{}, 99, 7);
  const auto fit = estimate(ds, KernelSpec{});
  CHECK(out.stat == doctest::Approx(60.0 * mdd_sq(fit.residuals, ds.Z())).epsilon(1e-12));
  CHECK(out.B == 99);
  CHECK(out.failed_draws == 0);
  CHECK(out.boot_stats.size() == 99);
  CHECK(out.pvalue > 0);
  CHECK(out.pvalue <= 1);
  int exceed = 0;
  for (double s : out.boot_stats) exceed += s >= out.stat;
  CHECK(out.pvalue == doctest::Approx((1.0 + exceed) / 100.0));
  CHECK_FALSE(out.interpretation.empty());
  CHECK_THROWS_AS(spec_test(ds, KernelSpec{}, 98, 7), ArgumentError);
}

TEST_CASE("spec_test is reproducible and independent of the thread count") {
  icm::Engine gen(43);
  const auto ds = testing::random_iv_dataset(50, 2, gen);
  for (auto id : {KernelId::mmd, KernelId::wmd}) {
    set_num_threads(1);
    const auto a = spec_test(ds, KernelSpec{id}, 99, 123, WeightScheme::rademacher);
    set_num_threads(4);
    const auto b = spec_test(ds, KernelSpec{id}, 99, 123, WeightScheme::rademacher);
    set_num_threads(0);
    CHECK(a.boot_stats == b.boot_stats);
    CHECK(a.pvalue == b.pvalue);
    const auto c = spec_test(ds, KernelSpec{id}, 99, 124, WeightScheme::rademacher);
    CHECK(a.boot_stats != c.boot_stats);
  }
}

TEST_CASE("spec_test has size near nominal and power against a neglected nonlinearity") {
  icm::Engine gen(44);
  const int runs = 60;
  int rejections_null = 0, rejections_alt = 0;
  for (int r = 0; r < runs; ++r) {
    const auto Z = testing::gaussian(100, 1, gen);
    const auto e = testing::gaussian(100, 1, gen);
    const Eigen::VectorXd x = Z.col(0);
    const Eigen::VectorXd y0 = (1.0 + x.array()).matrix() + e;
    const Eigen::VectorXd y1 = y0 + (x.array().square() - 1.0).matrix();
    rejections_null += spec_test(testing::make_dataset(y0, x, Z), KernelSpec{}, 99, r).pvalue <= 0.05;
    rejections_alt += spec_test(testing::make_dataset(y1, x, Z), KernelSpec{}, 99, r).pvalue <= 0.05;
  }
  CHECK(rejections_null <= 9);
  CHECK(rejections_alt >= 50);
}

TEST_CASE("lc_auxiliary_dataset and lc_test") {
  icm::Engine gen(45);
  const auto ds = testing::random_iv_dataset(80, 1, gen);
  const auto aux = lc_auxiliary_dataset(ds, 1);
  CHECK(aux.y() == ds.X().col(1));
  CHECK(aux.p_x() == 1);
  CHECK(aux.Z() == ds.Z());
  CHECK(aux.y_name() == "x1");
  CHECK_THROWS_AS(lc_auxiliary_dataset(ds, 0), ArgumentError);
  CHECK_THROWS_AS(lc_auxiliary_dataset(ds, 2), ArgumentError);

  // d = z + z^2 + v is not linear in z, so the completeness null is false.
  const auto out = lc_test(ds, 1, KernelSpec{}, 199, 3);
  CHECK(out.pvalue <= 0.05);
  CHECK(out.interpretation.find("evidence of ICM identification") != std::string::npos);

  SUBCASE("two endogenous covariates") {
    Eigen::MatrixXd cov = testing::gaussian(30, 2, gen);
    const auto two = testing::make_dataset(testing::gaussian(30, 1, gen), cov,
                                           testing::gaussian(30, 2, gen), {false, true, true});
    CHECK_THROWS_AS(lc_test(two, 1, KernelSpec{}, 99, 1), InfeasibleError);
  }
}
