#pragma once

// Linear quantile regression. The check-loss LP is solved with a Frisch-Newton
// primal-dual interior point method (Mehrotra predictor-corrector), then moved
// to an optimal vertex by simplex-style edge pivots so the result is an exact
// basic solution. Inference uses the Hall-Sheather bandwidth with a kernel
// smoothed sparsity estimate and either iid or Huber sandwich covariance.

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "panelcrypt/core/error.hpp"
#include "panelcrypt/core/linalg.hpp"
#include "panelcrypt/estimators.hpp"

namespace panelcrypt::quantreg {

using estimators::DesignMatrix;

enum class QrCovariance { iid, sandwich };

struct QuantileOptions {
  QrCovariance covariance = QrCovariance::sandwich;
  double bandwidth_alpha = 0.05;  // test size in the Hall-Sheather rule
  int max_iterations = 200;
};

struct SolveResult {
  Eigen::VectorXd beta;
  int iterations = 0;
  int pivots = 0;
  double gap = 0.0;
};

struct SparsityEstimate {
  double value = 0.0;
  double bandwidth = 0.0;  // in probability units, after any clamping
  bool clamped = false;
};

struct QuantileFit {
  double tau = 0.5;
  std::vector<std::string> names;
  Eigen::VectorXd coef;
  Eigen::MatrixXd cov;
  Eigen::VectorXd se;
  Eigen::VectorXd residuals;
  double check_loss = 0.0;
  double restricted_loss = 0.0;  // intercept-only
  double pseudo_r2 = 0.0;
  double bandwidth = 0.0;
  double sparsity = 0.0;
  std::size_t nobs = 0;
  int iterations = 0;
  std::vector<std::string> flags;

  std::optional<std::size_t> index(std::string_view name) const {
    for (std::size_t j = 0; j < names.size(); ++j)
      if (names[j] == name) return j;
    return std::nullopt;
  }
  double coefficient(std::string_view name) const {
    if (auto j = index(name)) return coef(static_cast<Eigen::Index>(*j));
    throw DomainError("quantile fit has no coefficient '" + std::string(name) + "'");
  }
  double std_error(std::string_view name) const {
    if (auto j = index(name)) return se(static_cast<Eigen::Index>(*j));
    throw DomainError("quantile fit has no coefficient '" + std::string(name) + "'");
  }
};

inline void check_tau(double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw DomainError("quantile level must lie in (0, 1)");
}

inline double check_loss(const Eigen::VectorXd& residuals, double tau) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < residuals.size(); ++i) {
    const double u = residuals(i);
    s += u * (u < 0.0 ? tau - 1.0 : tau);
  }
  return s;
}

// tau-quantile of y under the midpoint convention: when n*tau is an integer m
// every value in [y_(m), y_(m+1)] is optimal and the midpoint is returned.
inline double sample_quantile_midpoint(std::vector<double> y, double tau) {
  check_tau(tau);
  if (y.empty()) throw DomainError("quantile of an empty sample");
  std::sort(y.begin(), y.end());
  const double nt = tau * static_cast<double>(y.size());
  const double m = std::round(nt);
  if (std::abs(nt - m) <= 1e-12 * std::max(1.0, nt) && m >= 1.0 &&
      m < static_cast<double>(y.size())) {
    const auto k = static_cast<std::size_t>(m);
    return 0.5 * (y[k - 1] + y[k]);
  }
  return y[static_cast<std::size_t>(std::ceil(nt)) - 1];
}

// Empirical quantile function linearly interpolated through the Rankit
// plotting positions (i - 3/8) / (n + 1/4) of the sorted sample; flat beyond
// the first and last positions.
inline double rankit_position(std::size_t i, std::size_t n) {
  return (static_cast<double>(i) + 1.0 - 0.375) / (static_cast<double>(n) + 0.25);
}

inline double rankit_quantile(const std::vector<double>& sorted, double p) {
  const std::size_t n = sorted.size();
  if (n == 0) throw DomainError("rankit_quantile: empty sample");
  if (n == 1 || p <= rankit_position(0, n)) return sorted.front();
  if (p >= rankit_position(n - 1, n)) return sorted.back();
  const double pos = p * (static_cast<double>(n) + 0.25) - 0.625;  // fractional index
  const auto i = static_cast<std::size_t>(std::floor(pos));
  const double f = pos - static_cast<double>(i);
  return sorted[i] + f * (sorted[i + 1] - sorted[i]);
}

inline double hall_sheather_bandwidth(std::size_t n, double tau, double alpha = 0.05) {
  check_tau(tau);
  if (n == 0) throw DomainError("hall_sheather_bandwidth: n must be positive");
  const boost::math::normal_distribution<double> nd;
  const double x = boost::math::quantile(nd, tau);
  const double f = boost::math::pdf(nd, x);
  const double z = boost::math::quantile(nd, 1.0 - alpha / 2.0);
  return std::pow(static_cast<double>(n), -1.0 / 3.0) * std::pow(z, 2.0 / 3.0) *
         std::cbrt(1.5 * f * f / (2.0 * x * x + 1.0));
}

namespace detail {

// Integrated Epanechnikov kernel on [-1, 1].
inline double epanechnikov_cdf(double u) {
  if (u <= -1.0) return 0.0;
  if (u >= 1.0) return 1.0;
  return 0.5 + 0.75 * u - 0.25 * u * u * u;
}

inline double epanechnikov(double u) { return std::abs(u) < 1.0 ? 0.75 * (1.0 - u * u) : 0.0; }

}  // namespace detail

// Derivative of the Rankit-interpolated quantile function of the residuals,
// smoothed with an Epanechnikov kernel of half-width h around tau. The
// integral is exact per linear segment. h shrinks to fit inside the range of
// plotting positions; `clamped` records that.
inline SparsityEstimate sparsity_hall_sheather(const Eigen::VectorXd& residuals, double tau,
                                               std::optional<double> bandwidth = std::nullopt,
                                               double alpha = 0.05) {
  check_tau(tau);
  const auto n = static_cast<std::size_t>(residuals.size());
  if (n < 3) throw DomainError("sparsity: need at least 3 residuals");
  std::vector<double> r(residuals.data(), residuals.data() + residuals.size());
  std::sort(r.begin(), r.end());
  SparsityEstimate out;
  double h = bandwidth ? *bandwidth : hall_sheather_bandwidth(n, tau, alpha);
  if (!(h > 0.0)) throw DomainError("sparsity: bandwidth must be positive");
  const double p_lo = rankit_position(0, n), p_hi = rankit_position(n - 1, n);
  const double room = std::min(tau - p_lo, p_hi - tau);
  if (!(room > 0.0)) throw DomainError("sparsity: quantile level outside the plotting positions");
  if (h > room) {
    h = room;
    out.clamped = true;
  }
  out.bandwidth = h;
  double s = 0.0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const double p0 = rankit_position(i, n), p1 = rankit_position(i + 1, n);
    if (p1 <= tau - h || p0 >= tau + h) continue;
    const double slope = (r[i + 1] - r[i]) / (p1 - p0);
    s += slope * (detail::epanechnikov_cdf((p1 - tau) / h) - detail::epanechnikov_cdf((p0 - tau) / h));
  }
  out.value = s;
  return out;
}

namespace detail {

inline double step_bound(const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
  double b = 1e20;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (dv(i) < 0.0) b = std::min(b, -v(i) / dv(i));
  return b;
}

struct LineMin {
  double t = 0.0;
  Eigen::Index row = -1;
};

// argmin_t sum_i rho_tau(r_i - t a_i): walks the sorted breakpoints until the
// convex slope turns nonnegative.
inline LineMin line_minimum(const Eigen::VectorXd& r, const Eigen::VectorXd& a, double tau) {
  const double amax = a.cwiseAbs().maxCoeff();
  std::vector<std::pair<double, Eigen::Index>> bp;
  double slope = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (std::abs(a(i)) <= 1e-14 * amax) continue;
    bp.emplace_back(r(i) / a(i), i);
    slope += a(i) > 0.0 ? -tau * a(i) : (1.0 - tau) * a(i);
  }
  std::sort(bp.begin(), bp.end());
  for (const auto& [t, i] : bp) {
    slope += std::abs(a(i));
    if (slope >= 0.0) return {t, i};
  }
  return {};
}

// Exact basic solution reached from `basis` by improving edge pivots.
inline Eigen::VectorXd polish_vertex(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double tau,
                                     std::vector<Eigen::Index> basis, int max_pivots, int& pivots) {
  const Eigen::Index p = X.cols();
  Eigen::VectorXd beta;
  for (pivots = 0;; ++pivots) {
    Eigen::MatrixXd XB(p, p);
    Eigen::VectorXd yB(p);
    for (Eigen::Index j = 0; j < p; ++j) {
      XB.row(j) = X.row(basis[static_cast<std::size_t>(j)]);
      yB(j) = y(basis[static_cast<std::size_t>(j)]);
    }
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(XB);
    beta = lu.solve(yB);
    if (pivots >= max_pivots) break;
    const Eigen::MatrixXd Binv = lu.inverse();
    Eigen::VectorXd r = y - X * beta;
    for (auto b : basis) r(b) = 0.0;
    const double f0 = check_loss(r, tau);
    bool improved = false;
    for (Eigen::Index j = 0; j < p && !improved; ++j) {
      Eigen::VectorXd a = X * Binv.col(j);
      for (Eigen::Index m = 0; m < p; ++m) a(basis[static_cast<std::size_t>(m)]) = m == j ? 1.0 : 0.0;
      const auto lm = line_minimum(r, a, tau);
      if (lm.row < 0 || lm.row == basis[static_cast<std::size_t>(j)]) continue;
      const double f1 = check_loss(r - lm.t * a, tau);
      if (f1 < f0 - 1e-13 * (1.0 + std::abs(f0))) {
        basis[static_cast<std::size_t>(j)] = lm.row;
        improved = true;
      }
    }
    if (!improved) break;
  }
  return beta;
}

// p rows with the smallest |residual| whose covariate vectors are linearly
// independent.
inline std::vector<Eigen::Index> nearest_basis(const Eigen::MatrixXd& X, const Eigen::VectorXd& r) {
  const Eigen::Index n = X.rows(), p = X.cols();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return std::abs(r(a)) < std::abs(r(b)); });
  std::vector<Eigen::Index> basis;
  Eigen::MatrixXd Q(p, p);
  Eigen::Index q = 0;
  for (auto i : order) {
    Eigen::VectorXd v = X.row(i).transpose();
    const double norm = v.norm();
    if (!(norm > 0.0)) continue;
    for (int pass = 0; pass < 2; ++pass)
      for (Eigen::Index c = 0; c < q; ++c) v -= Q.col(c).dot(v) * Q.col(c);
    if (v.norm() > 1e-9 * norm) {
      Q.col(q++) = v.normalized();
      basis.push_back(i);
      if (q == p) break;
    }
  }
  if (q < p) throw RankDeficiencyError("quantile regression: design has deficient rank", {});
  return basis;
}

}  // namespace detail

// Solves min_beta sum rho_tau(y - X beta) on a full-column-rank X.
inline SolveResult solve_quantile(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double tau,
                                  int max_iterations = 200) {
  check_tau(tau);
  const Eigen::Index n = X.rows(), p = X.cols();
  if (y.size() != n) throw DomainError("quantile regression: dimension mismatch");
  if (p == 0) throw DomainError("quantile regression: no columns");
  if (n < p) throw DomainError("quantile regression: fewer rows than columns");
  SolveResult out;

  // Dual LP in bounded form: max y'a s.t. X'a = (1-tau) X'1, 0 <= a <= 1,
  // written as min c'x with c = -y; the returned multipliers give -beta.
  const Eigen::VectorXd c = -y;
  const Eigen::VectorXd b = (1.0 - tau) * X.transpose() * Eigen::VectorXd::Ones(n);
  Eigen::VectorXd x = Eigen::VectorXd::Constant(n, 1.0 - tau);
  Eigen::VectorXd s = Eigen::VectorXd::Ones(n) - x;
  Eigen::VectorXd dual = X.colPivHouseholderQr().solve(c);
  Eigen::VectorXd r = c - X * dual;
  for (Eigen::Index i = 0; i < n; ++i)
    if (r(i) == 0.0) r(i) = 1e-3;
  Eigen::VectorXd z = r.cwiseMax(0.0);
  Eigen::VectorXd w = z - r;
  auto duality_gap = [&] { return c.dot(x) - dual.dot(b) + w.sum(); };
  double gap = duality_gap();
  const double beta_step = 0.9995;
  int it = 0;
  while (gap > 1e-9 * (1.0 + std::abs(c.dot(x))) && it < max_iterations) {
    ++it;
    const Eigen::VectorXd q = (z.cwiseQuotient(x) + w.cwiseQuotient(s)).cwiseInverse();
    r = z - w;
    const Eigen::MatrixXd AQA = X.transpose() * q.asDiagonal() * X;
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(AQA);
    Eigen::VectorXd rhs = q.cwiseProduct(r);
    Eigen::VectorXd dy = ldlt.solve(X.transpose() * rhs);
    Eigen::VectorXd dx = q.cwiseProduct(X * dy - r);
    Eigen::VectorXd ds = -dx;
    Eigen::VectorXd dz = -z.cwiseProduct(dx.cwiseQuotient(x) + Eigen::VectorXd::Ones(n));
    Eigen::VectorXd dw = -w.cwiseProduct(ds.cwiseQuotient(s) + Eigen::VectorXd::Ones(n));
    double fp = std::min(1.0, beta_step * std::min(detail::step_bound(x, dx), detail::step_bound(s, ds)));
    double fd = std::min(1.0, beta_step * std::min(detail::step_bound(w, dw), detail::step_bound(z, dz)));
    if (std::min(fp, fd) < 1.0) {
      double mu = z.dot(x) + w.dot(s);
      const double g = (z + fd * dz).dot(x + fp * dx) + (w + fd * dw).dot(s + fp * ds);
      mu = mu * std::pow(g / mu, 3) / (2.0 * static_cast<double>(n));
      const Eigen::VectorXd dxdz = dx.cwiseProduct(dz);
      const Eigen::VectorXd dsdw = ds.cwiseProduct(dw);
      const Eigen::VectorXd xinv = x.cwiseInverse();
      const Eigen::VectorXd sinv = s.cwiseInverse();
      const Eigen::VectorXd xi = mu * (xinv - sinv);
      rhs += q.cwiseProduct(dxdz - dsdw - xi);
      dy = ldlt.solve(X.transpose() * rhs);
      dx = q.cwiseProduct(X * dy + xi - r - dxdz + dsdw);
      ds = -dx;
      dz = mu * xinv - z - xinv.cwiseProduct(z).cwiseProduct(dx) - dxdz;
      dw = mu * sinv - w - sinv.cwiseProduct(w).cwiseProduct(ds) - dsdw;
      fp = std::min(1.0, beta_step * std::min(detail::step_bound(x, dx), detail::step_bound(s, ds)));
      fd = std::min(1.0, beta_step * std::min(detail::step_bound(w, dw), detail::step_bound(z, dz)));
    }
    x += fp * dx;
    s += fp * ds;
    dual += fd * dy;
    w += fd * dw;
    z += fd * dz;
    gap = duality_gap();
    if (!std::isfinite(gap)) throw ConvergenceError("quantile regression: interior point diverged");
  }
  out.iterations = it;
  out.gap = gap;
  const Eigen::VectorXd interior = -dual;

  const auto basis = detail::nearest_basis(X, y - X * interior);
  int pivots = 0;
  const Eigen::VectorXd vertex =
      detail::polish_vertex(X, y, tau, basis, 50 * static_cast<int>(p) + 1000, pivots);
  out.pivots = pivots;
  out.beta = check_loss(y - X * vertex, tau) <= check_loss(y - X * interior, tau) ? vertex : interior;
  return out;
}

// Huber sandwich tau(1-tau) H^{-1} X'X H^{-1} with H = sum k_c(u_i) x_i x_i'.
// The residual-space kernel width c is half the interquantile distance of
// the residuals across tau +/- h.
inline std::optional<Eigen::MatrixXd> sandwich_cov_qr(const Eigen::MatrixXd& X,
                                                      const Eigen::VectorXd& residuals, double tau,
                                                      double h) {
  std::vector<double> r(residuals.data(), residuals.data() + residuals.size());
  std::sort(r.begin(), r.end());
  const double width = 0.5 * (rankit_quantile(r, tau + h) - rankit_quantile(r, tau - h));
  if (!(width > 0.0)) return std::nullopt;
  Eigen::VectorXd k(residuals.size());
  for (Eigen::Index i = 0; i < k.size(); ++i) k(i) = detail::epanechnikov(residuals(i) / width) / width;
  const Eigen::MatrixXd H = X.transpose() * k.asDiagonal() * X;
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(H);
  if (!lu.isInvertible()) return std::nullopt;
  const Eigen::MatrixXd Hinv = lu.inverse();
  return linalg::symmetrize(tau * (1.0 - tau) * Hinv * (X.transpose() * X) * Hinv);
}

namespace detail {

inline Eigen::MatrixXd with_constant(const DesignMatrix& d) {
  Eigen::MatrixXd X(d.rows(), d.cols() + 1);
  X.col(0).setOnes();
  X.rightCols(d.cols()) = d.regressors;
  return X;
}

inline double intercept_only_loss(const Eigen::VectorXd& y, double tau) {
  const double q = sample_quantile_midpoint(std::vector<double>(y.data(), y.data() + y.size()), tau);
  return check_loss(y.array() - q, tau);
}

}  // namespace detail

// Koenker-Machado goodness of fit: 1 - V(tau) / V~(tau), the restricted loss
// being that of the intercept-only model.
inline double pseudo_r2(double full_loss, double restricted_loss) {
  if (!(restricted_loss > 0.0)) return full_loss > 0.0 ? 0.0 : 1.0;
  return 1.0 - full_loss / restricted_loss;
}

// Quantile regression of the design's response on an intercept plus its
// regressors. Design weights are ignored.
inline QuantileFit fit_quantile(const DesignMatrix& design, double tau, const QuantileOptions& opt = {}) {
  check_tau(tau);
  design.validate();
  const Eigen::MatrixXd X = detail::with_constant(design);
  QuantileFit fit;
  fit.tau = tau;
  fit.names = estimators::detail::with_intercept(design.names);
  fit.nobs = static_cast<std::size_t>(design.rows());
  linalg::least_squares(X, design.response, fit.names);  // rank check

  const bool intercept_only = design.cols() == 0;
  if (intercept_only) {
    fit.coef = Eigen::VectorXd::Constant(
        1, sample_quantile_midpoint(
               std::vector<double>(design.response.data(), design.response.data() + design.rows()),
               tau));
  } else {
    const auto sol = solve_quantile(X, design.response, tau, opt.max_iterations);
    fit.coef = sol.beta;
    fit.iterations = sol.iterations;
  }
  fit.residuals = design.response - X * fit.coef;
  fit.check_loss = check_loss(fit.residuals, tau);
  fit.restricted_loss = detail::intercept_only_loss(design.response, tau);
  fit.pseudo_r2 = pseudo_r2(fit.check_loss, fit.restricted_loss);

  SparsityEstimate sp;
  try {
    sp = sparsity_hall_sheather(fit.residuals, tau, std::nullopt, opt.bandwidth_alpha);
  } catch (const DomainError& e) {
    const auto k = fit.coef.size();
    fit.cov = Eigen::MatrixXd::Constant(k, k, std::numeric_limits<double>::quiet_NaN());
    fit.se = Eigen::VectorXd::Constant(k, std::numeric_limits<double>::quiet_NaN());
    fit.flags.push_back(std::string("no covariance: ") + e.what());
    return fit;
  }
  fit.bandwidth = sp.bandwidth;
  fit.sparsity = sp.value;
  if (sp.clamped) fit.flags.push_back("bandwidth clamped to the plotting-position range");

  std::optional<Eigen::MatrixXd> cov;
  if (opt.covariance == QrCovariance::sandwich) {
    cov = sandwich_cov_qr(X, fit.residuals, tau, sp.bandwidth);
    if (!cov) fit.flags.push_back("sandwich covariance singular; iid covariance used");
  }
  if (!cov) {
    const auto xtx = linalg::least_squares(X, design.response, fit.names).xtx_inv;
    cov = linalg::symmetrize(tau * (1.0 - tau) * sp.value * sp.value * xtx);
  }
  fit.cov = *cov;
  fit.se = fit.cov.diagonal().cwiseMax(0.0).cwiseSqrt();
  return fit;
}

struct QuasiLrResult {
  double statistic = 0.0;
  int df = 0;
  double p_value = 1.0;
  double sparsity = 0.0;
};

// Koenker-Machado quasi-likelihood ratio 2 (V_r - V_f) / (tau (1-tau) s)
// for dropping `restricted` columns, with the sparsity s estimated from the
// restricted fit's residuals. `full` must be the fit of `design` at `tau`.
inline QuasiLrResult quasi_lr(const QuantileFit& full, const DesignMatrix& design,
                              const std::vector<std::string>& restricted,
                              const QuantileOptions& opt = {}) {
  if (restricted.empty()) throw DomainError("quasi_lr: no restrictions");
  for (const auto& nm : restricted)
    if (design.column(nm) < 0) throw DomainError("quasi_lr: unknown column " + nm);
  QuantileOptions o = opt;
  o.covariance = QrCovariance::iid;
  const auto reduced = fit_quantile(design.without_columns(restricted), full.tau, o);
  QuasiLrResult out;
  out.df = static_cast<int>(full.coef.size() - reduced.coef.size());
  out.sparsity = reduced.sparsity;
  if (!(out.sparsity > 0.0)) throw DomainError("quasi_lr: sparsity estimate is not positive");
  out.statistic = std::max(0.0, 2.0 * (reduced.check_loss - full.check_loss) /
                                    (full.tau * (1.0 - full.tau) * out.sparsity));
  out.p_value = estimators::chi2_survival(out.statistic, out.df);
  return out;
}

inline QuasiLrResult quasi_lr(const DesignMatrix& design, double tau,
                              const std::vector<std::string>& restricted,
                              const QuantileOptions& opt = {}) {
  QuantileOptions o = opt;
  o.covariance = QrCovariance::iid;
  return quasi_lr(fit_quantile(design, tau, o), design, restricted, opt);
}

}  // namespace panelcrypt::quantreg
