#include "icm/estimator.hpp"

#include "icm/error.hpp"
#include "icm/mdd.hpp"
#include "icm/normal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace icm {

Eigen::MatrixXd build_instruments(const Eigen::MatrixXd& X, const KernelMatrix& K) {
  const Eigen::Index n = X.rows();
  if (K.size() != n) throw ArgumentError("kernel matrix and X are not row-aligned");
  if (n < 2) throw ArgumentError("need at least two observations");
  const double scale = 1.0 / static_cast<double>(n - 1);
  // The MMD kernel stores -||Z_i - Z_j||; the instruments use the distance itself.
  const double sign = K.spec.id == KernelId::mmd ? -1.0 : 1.0;
  return (sign * scale) * (K.values * X);
}

InstrumentMatrix build_instruments(const Dataset& ds, const KernelMatrix& K) {
  return {build_instruments(ds.X(), K), K.spec};
}

EstimateResult iv_estimate(const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
                           const Eigen::MatrixXd& H) {
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();
  if (y.size() != n || H.rows() != n || H.cols() != p)
    throw ArgumentError("iv_estimate: y, X and H must be n x 1, n x p and n x p");
  const double nd = static_cast<double>(n);

  const Eigen::MatrixXd S = H.transpose() * X / nd;
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(S);
  const auto& sv = svd.singularValues();
  const double smax = sv(0);
  const double smin = sv(sv.size() - 1);
  const double cond = smin > 0.0 ? smax / smin : std::numeric_limits<double>::infinity();
  if (!S.allFinite() || !(smax > 0.0) || !(cond < kMaxConditionNumber)) {
    std::ostringstream msg;
    msg << "identification failure: E_n[h_n' X] is singular or ill-conditioned (cond = " << cond
        << ", smallest singular value = " << smin << ")";
    throw IdentificationError(msg.str(), cond, smin);
  }

  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(S);
  EstimateResult res;
  res.theta = qr.solve(H.transpose() * y / nd);
  res.residuals = y - X * res.theta;
  res.A_hat = -S;
  const Eigen::MatrixXd weighted = H.array().colwise() * res.residuals.array();
  res.B_hat = weighted.transpose() * weighted / nd;

  // S^{-1} B S^{-T}; the sign of A cancels.
  const Eigen::MatrixXd left = qr.solve(res.B_hat);
  const Eigen::MatrixXd sandwich = qr.solve(left.transpose()).transpose();
  res.vcov = (0.5 / nd) * (sandwich + sandwich.transpose());
  res.se = res.vcov.diagonal().cwiseMax(0.0).cwiseSqrt();
  res.instruments = H;
  res.cond_A = cond;
  res.min_singular_value = smin;
  return res;
}

KernelMatrix kernel_matrix(const Dataset& ds, const KernelSpec& spec) {
  if (spec.id != KernelId::wmd) return kernel_matrix(ds.Z(), spec);
  Eigen::MatrixXd aux(ds.n(), ds.p_x() + 1);
  aux << ds.y(), ds.X();
  return kernel_matrix(ds.Z(), spec, aux);
}

EstimateResult estimate(const Dataset& ds, const KernelMatrix& K) {
  auto res = iv_estimate(ds.y(), ds.X(), build_instruments(ds.X(), K));
  res.kernel = K.spec;
  res.estimator = to_string(K.spec.id);
  return res;
}

EstimateResult estimate(const Dataset& ds, const KernelSpec& spec) {
  return estimate(ds, kernel_matrix(ds, spec));
}

double mmd_objective(const Dataset& ds, const Eigen::VectorXd& theta) {
  if (theta.size() != ds.p_x()) throw ArgumentError("theta has the wrong length");
  const Eigen::Index n = ds.n();
  const Eigen::VectorXd r = ds.y() - ds.X() * theta;
  const auto& Z = ds.Z();
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) total += (Z.row(i) - Z.row(j)).norm() * r(i) * r(j);
  return -total / (static_cast<double>(n) * static_cast<double>(n));
}

namespace {

// theta = [c, slopes]; returns the argmax over c of Q_n(c, slopes).
double best_intercept(const Dataset& ds, const Eigen::VectorXd& slopes) {
  Eigen::VectorXd theta(ds.p_x());
  theta.tail(slopes.size()) = slopes;
  auto q = [&](double c) {
    theta(0) = c;
    return mmd_objective(ds, theta);
  };
  const Eigen::VectorXd base = ds.y() - ds.X().rightCols(slopes.size()) * slopes;
  double c = base.mean();
  for (int pass = 0; pass < 2; ++pass) {
    const double step = std::max(1.0, std::abs(c));
    const double lo = q(c - step), mid = q(c), hi = q(c + step);
    const double curvature = lo - 2.0 * mid + hi;
    if (!(curvature < 0.0))
      throw DiagnosticError("objective oracle: Q_n is not concave along the intercept");
    c += 0.5 * step * (lo - hi) / curvature;
  }
  return c;
}

double profiled_objective(const Dataset& ds, const Eigen::VectorXd& slopes) {
  Eigen::VectorXd theta(ds.p_x());
  theta(0) = best_intercept(ds, slopes);
  theta.tail(slopes.size()) = slopes;
  return mmd_objective(ds, theta);
}

template <typename F>
Eigen::VectorXd nelder_mead(F&& f, Eigen::VectorXd start, double initial_step,
                            const OracleConfig& config) {
  const Eigen::Index d = start.size();
  std::vector<Eigen::VectorXd> simplex(static_cast<std::size_t>(d + 1), start);
  std::vector<double> values(static_cast<std::size_t>(d + 1));
  for (Eigen::Index k = 0; k < d; ++k) simplex[static_cast<std::size_t>(k + 1)](k) += initial_step;
  for (std::size_t k = 0; k < simplex.size(); ++k) values[k] = f(simplex[k]);

  std::vector<std::size_t> order(simplex.size());
  for (int it = 0; it < config.max_iterations; ++it) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
    const auto best = order.front(), worst = order.back(), second = order[order.size() - 2];

    double diameter = 0.0;
    for (const auto& v : simplex) diameter = std::max(diameter, (v - simplex[best]).lpNorm<Eigen::Infinity>());
    if (diameter < config.simplex_tolerance) return simplex[best];

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(d);
    for (std::size_t k = 0; k < simplex.size(); ++k)
      if (k != worst) centroid += simplex[k];
    centroid /= static_cast<double>(d);

    const Eigen::VectorXd reflected = centroid + (centroid - simplex[worst]);
    const double fr = f(reflected);
    if (fr < values[best]) {
      const Eigen::VectorXd expanded = centroid + 2.0 * (centroid - simplex[worst]);
      const double fe = f(expanded);
      if (fe < fr) {
        simplex[worst] = expanded;
        values[worst] = fe;
      } else {
        simplex[worst] = reflected;
        values[worst] = fr;
      }
      continue;
    }
    if (fr < values[second]) {
      simplex[worst] = reflected;
      values[worst] = fr;
      continue;
    }
    const bool outside = fr < values[worst];
    const Eigen::VectorXd contracted =
        outside ? Eigen::VectorXd(centroid + 0.5 * (reflected - centroid))
                : Eigen::VectorXd(centroid + 0.5 * (simplex[worst] - centroid));
    const double fc = f(contracted);
    if (fc < std::min(fr, values[worst])) {
      simplex[worst] = contracted;
      values[worst] = fc;
      continue;
    }
    for (std::size_t k = 0; k < simplex.size(); ++k) {
      if (k == best) continue;
      simplex[k] = simplex[best] + 0.5 * (simplex[k] - simplex[best]);
      values[k] = f(simplex[k]);
    }
  }
  throw DiagnosticError("objective oracle: Nelder-Mead did not converge");
}

// One Newton step on a quadratic model fitted from central differences.
template <typename F>
Eigen::VectorXd newton_polish(F&& f, const Eigen::VectorXd& x, double h) {
  const Eigen::Index d = x.size();
  const double f0 = f(x);
  Eigen::VectorXd grad(d);
  Eigen::MatrixXd hess(d, d);
  auto at = [&](Eigen::Index a, double sa, Eigen::Index b, double sb) {
    Eigen::VectorXd p = x;
    p(a) += sa;
    p(b) += sb;
    return f(p);
  };
  for (Eigen::Index a = 0; a < d; ++a) {
    const double fp = at(a, h, a, 0.0), fm = at(a, -h, a, 0.0);
    grad(a) = (fp - fm) / (2.0 * h);
    hess(a, a) = (fp - 2.0 * f0 + fm) / (h * h);
    for (Eigen::Index b = 0; b < a; ++b) {
      const double v = (at(a, h, b, h) - at(a, h, b, -h) - at(a, -h, b, h) + at(a, -h, b, -h)) /
                       (4.0 * h * h);
      hess(a, b) = hess(b, a) = v;
    }
  }
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(hess);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
    throw DiagnosticError("objective oracle: profiled objective is not convex at the optimum");
  return x - ldlt.solve(grad);
}

}  // namespace

Eigen::VectorXd minimize_objective_oracle(const Dataset& ds, const OracleConfig& config) {
  if (ds.n() > 200 || ds.p_x() > 3)
    throw ArgumentError("objective oracle is limited to n <= 200 and p_x <= 3");
  const Eigen::Index slopes = ds.p_x() - 1;
  Eigen::VectorXd theta(ds.p_x());
  if (slopes == 0) {
    theta(0) = best_intercept(ds, Eigen::VectorXd());
    return theta;
  }

  auto f = [&](const Eigen::VectorXd& s) { return profiled_objective(ds, s); };
  // Least-squares slopes as a neutral starting point.
  Eigen::VectorXd start = ds.X().colPivHouseholderQr().solve(ds.y()).tail(slopes);
  double step = 0.1 * std::max(1.0, start.lpNorm<Eigen::Infinity>());
  Eigen::VectorXd best = start;
  double best_value = f(best);
  for (int r = 0; r < config.max_restarts; ++r) {
    Eigen::VectorXd candidate = nelder_mead(f, best, step, config);
    const double value = f(candidate);
    const double moved = (candidate - best).lpNorm<Eigen::Infinity>();
    if (value <= best_value) {
      best = candidate;
      best_value = value;
    }
    if (moved < 1e-9) break;
    step = std::max(1e-4, 10.0 * moved);
  }
  for (int k = 0; k < 2; ++k) best = newton_polish(f, best, 1e-2 * std::max(1.0, best.lpNorm<Eigen::Infinity>()));

  theta(0) = best_intercept(ds, best);
  theta.tail(slopes) = best;
  if (!theta.allFinite()) throw DiagnosticError("objective oracle produced a non-finite minimizer");
  return theta;
}

TTestResult t_test(const EstimateResult& res, Eigen::Index k, double theta0, double level) {
  if (!(level > 0.0 && level < 1.0)) throw ArgumentError("t_test level must lie in (0, 1)");
  if (k < 0 || k >= res.theta.size()) throw ArgumentError("t_test coefficient index out of range");
  const double se = res.se(k);
  if (!(se > 0.0)) throw DegenerateError("t_test: standard error is zero");
  TTestResult out;
  out.t = (res.theta(k) - theta0) / se;
  out.pvalue = std::erfc(std::abs(out.t) / M_SQRT2);
  out.reject = std::abs(out.t) > normal_quantile(1.0 - 0.5 * level);
  return out;
}

Eigen::Index numerical_rank(const Eigen::MatrixXd& M) {
  if (M.size() == 0) return 0;
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(M);
  const auto& sv = svd.singularValues();
  if (!(sv(0) > 0.0)) return 0;
  return (sv.array() > 1e-8 * sv(0)).count();
}

IdentificationDiagnostics identification_diagnostics(const Dataset& ds, const KernelMatrix& K) {
  if (ds.p_x() < 2) throw ArgumentError("identification diagnostics need a non-intercept covariate");
  const double nd = static_cast<double>(ds.n());
  const Eigen::MatrixXd rest = ds.X().rightCols(ds.p_x() - 1);
  const Eigen::MatrixXd centered = rest.rowwise() - rest.colwise().mean();
  Eigen::MatrixXd gram = centered.transpose() * K.values * centered / (nd * nd);
  gram = 0.5 * (gram + gram.transpose());

  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  IdentificationDiagnostics out;
  out.min_eig = eig.eigenvalues()(0);
  out.tau_star = eig.eigenvectors().col(0);
  try {
    out.gmdc_strength = gmdc(Eigen::VectorXd(centered * out.tau_star), K.values);
  } catch (const Error&) {
    out.gmdc_strength = std::nan("");
  }

  const Eigen::MatrixXd H = build_instruments(ds.X(), K);
  out.rank_h = numerical_rank(H.transpose() * ds.X() / nd);
  Eigen::MatrixXd Z1(ds.n(), ds.p_z() + 1);
  Z1 << Eigen::VectorXd::Ones(ds.n()), ds.Z();
  out.rank_z = numerical_rank(Z1.transpose() * ds.X() / nd);
  return out;
}

IdentificationDiagnostics identification_diagnostics(const Dataset& ds, const KernelSpec& spec) {
  return identification_diagnostics(ds, kernel_matrix(ds, spec));
}

EstimateResult tsls_estimate(const Dataset& ds) {
  const Eigen::Index n = ds.n();
  std::vector<Eigen::VectorXd> cols;
  auto add = [&](const Eigen::VectorXd& c) {
    for (const auto& existing : cols)
      if (existing == c) return;
    cols.push_back(c);
  };
  add(Eigen::VectorXd::Ones(n));
  for (Eigen::Index k = 1; k < ds.p_x(); ++k)
    if (!ds.endog_mask()[static_cast<std::size_t>(k)]) add(ds.X().col(k));
  for (Eigen::Index k = 0; k < ds.p_z(); ++k) add(ds.Z().col(k));

  const auto m = static_cast<Eigen::Index>(cols.size());
  if (m < ds.p_x())
    throw InfeasibleError("TSLS is infeasible: " + std::to_string(m) +
                          " distinct instruments for " + std::to_string(ds.p_x()) +
                          " coefficients (order condition fails)");
  Eigen::MatrixXd W(n, m);
  for (Eigen::Index k = 0; k < m; ++k) W.col(k) = cols[static_cast<std::size_t>(k)];

  const Eigen::MatrixXd fitted = W * W.colPivHouseholderQr().solve(ds.X());
  auto res = iv_estimate(ds.y(), ds.X(), fitted);
  res.estimator = "tsls";
  return res;
}

}  // namespace icm
