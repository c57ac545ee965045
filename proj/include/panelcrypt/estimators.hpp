#pragma once

// Panel regression machinery: pooled OLS, within (fixed-effects) and
// Swamy-Arora random-effects estimators, cross-section weighted EGLS, dynamic
// panels with a gap-aware lagged response, White covariance and the Hausman
// test.
//
// Every estimator consumes a DesignMatrix whose regressor columns exclude the
// intercept; estimators that report one add it themselves and name it
// "Intercept".

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "panelcrypt/core/date.hpp"
#include "panelcrypt/core/error.hpp"
#include "panelcrypt/core/linalg.hpp"

namespace panelcrypt::estimators {

inline constexpr std::string_view kIntercept = "Intercept";

struct DesignMatrix {
  std::string response_name = "y";
  Eigen::VectorXd response;
  Eigen::MatrixXd regressors;  // rows x columns, no intercept
  std::vector<std::string> names;
  std::vector<int> entity;  // index into entity_names, one per row
  std::vector<std::string> entity_names;
  std::vector<Date> dates;
  Eigen::VectorXd weights;  // empty means unit weights

  Eigen::Index rows() const noexcept { return response.size(); }
  Eigen::Index cols() const noexcept { return regressors.cols(); }

  int column(std::string_view name) const {
    for (std::size_t j = 0; j < names.size(); ++j)
      if (names[j] == name) return static_cast<int>(j);
    return -1;
  }

  Eigen::VectorXd row_weights() const {
    return weights.size() ? weights : Eigen::VectorXd::Ones(rows());
  }

  void validate() const {
    const auto n = rows();
    if (regressors.rows() != n) throw DomainError("design: regressor rows differ from response");
    if (static_cast<Eigen::Index>(names.size()) != regressors.cols())
      throw DomainError("design: one name per regressor column required");
    std::set<std::string> seen;
    for (const auto& nm : names) {
      if (nm == kIntercept) throw DomainError("design: 'Intercept' is reserved");
      if (!seen.insert(nm).second) throw DomainError("design: duplicate column name " + nm);
    }
    if (!entity.empty() && static_cast<Eigen::Index>(entity.size()) != n)
      throw DomainError("design: entity ids must cover every row");
    for (int e : entity)
      if (e < 0 || e >= static_cast<int>(entity_names.size()))
        throw DomainError("design: entity id out of range");
    if (!dates.empty() && static_cast<Eigen::Index>(dates.size()) != n)
      throw DomainError("design: dates must cover every row");
    if (weights.size() && weights.size() != n) throw DomainError("design: weight length mismatch");
    for (Eigen::Index i = 0; i < weights.size(); ++i)
      if (!(weights(i) > 0.0) || !std::isfinite(weights(i)))
        throw DomainError("design: weights must be positive");
    if (!response.allFinite() || !regressors.allFinite())
      throw DomainError("design: non-finite values present");
  }

  DesignMatrix select_rows(const std::vector<Eigen::Index>& keep) const {
    DesignMatrix out;
    out.response_name = response_name;
    out.names = names;
    out.entity_names = entity_names;
    const auto m = static_cast<Eigen::Index>(keep.size());
    out.response.resize(m);
    out.regressors.resize(m, cols());
    if (weights.size()) out.weights.resize(m);
    for (Eigen::Index r = 0; r < m; ++r) {
      const auto i = keep[static_cast<std::size_t>(r)];
      out.response(r) = response(i);
      out.regressors.row(r) = regressors.row(i);
      if (weights.size()) out.weights(r) = weights(i);
      if (!entity.empty()) out.entity.push_back(entity[static_cast<std::size_t>(i)]);
      if (!dates.empty()) out.dates.push_back(dates[static_cast<std::size_t>(i)]);
    }
    return out;
  }

  DesignMatrix with_column(std::string name, const Eigen::VectorXd& values) const {
    DesignMatrix out = *this;
    out.regressors.conservativeResize(Eigen::NoChange, cols() + 1);
    out.regressors.col(cols()) = values;
    out.names.push_back(std::move(name));
    return out;
  }

  DesignMatrix without_columns(const std::vector<std::string>& drop) const {
    DesignMatrix out = *this;
    std::vector<Eigen::Index> keep;
    out.names.clear();
    for (Eigen::Index j = 0; j < cols(); ++j) {
      if (std::find(drop.begin(), drop.end(), names[static_cast<std::size_t>(j)]) == drop.end()) {
        keep.push_back(j);
        out.names.push_back(names[static_cast<std::size_t>(j)]);
      }
    }
    out.regressors.resize(rows(), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t c = 0; c < keep.size(); ++c)
      out.regressors.col(static_cast<Eigen::Index>(c)) = regressors.col(keep[c]);
    return out;
  }

  std::size_t entity_count() const {
    std::set<int> s(entity.begin(), entity.end());
    return s.size();
  }

  std::size_t period_count() const {
    std::set<Date> s(dates.begin(), dates.end());
    return s.size();
  }
};

enum class Effects { pooled, fixed, random };
enum class Weights { none, cross_section_egls };
enum class Covariance { classical, white };

inline std::string_view to_string(Effects e) {
  switch (e) {
    case Effects::pooled: return "pooled";
    case Effects::fixed: return "fixed";
    case Effects::random: return "random";
  }
  return "?";
}

struct ModelSpec {
  Effects effects = Effects::fixed;
  Weights weights = Weights::none;
  bool dynamic = false;
  Covariance covariance = Covariance::white;
  // Term names used when building a design; "A*B" denotes an interaction.
  std::vector<std::string> regressors;
  int egls_iterations = 1;
  bool ar1 = false;  // AR(1) quasi-differencing before weighting (EGLS only)
  bool sur = false;  // cross-section SUR whitening instead of variance weights
};

struct VarianceComponents {
  double sigma_alpha = 0.0;
  double sigma_eps = 0.0;
  double rho_cross = 0.0;  // sigma_alpha^2 / (sigma_alpha^2 + sigma_eps^2)
  double rho_idio = 0.0;
  bool clamped = false;  // negative sigma_alpha^2 estimate set to zero
};

struct FitResult {
  std::string estimator;
  std::vector<std::string> names;
  Eigen::VectorXd coef;
  Eigen::MatrixXd cov;
  Eigen::VectorXd se;
  Covariance covariance = Covariance::classical;
  double r2 = 0.0;
  double adj_r2 = 0.0;
  double ssr = 0.0;
  double sigma = 0.0;  // standard error of regression
  Eigen::VectorXd residuals;
  std::size_t nobs = 0;
  std::size_t n_entities = 0;
  std::size_t n_periods = 0;
  std::optional<VarianceComponents> components;
  std::vector<std::pair<std::string, double>> entity_intercepts;
  std::vector<std::string> absorbed;
  std::optional<double> phi;
  std::vector<std::string> flags;

  std::optional<std::size_t> index(std::string_view name) const {
    for (std::size_t j = 0; j < names.size(); ++j)
      if (names[j] == name) return j;
    return std::nullopt;
  }

  double coefficient(std::string_view name) const {
    if (auto j = index(name)) return coef(static_cast<Eigen::Index>(*j));
    throw DomainError("fit has no coefficient '" + std::string(name) + "'");
  }

  double std_error(std::string_view name) const {
    if (auto j = index(name)) return se(static_cast<Eigen::Index>(*j));
    throw DomainError("fit has no coefficient '" + std::string(name) + "'");
  }
};

// P(chi2_df > x), through the regularized upper incomplete gamma function.
inline double chi2_survival(double x, double df) {
  if (!(df >= 1.0)) throw DomainError("chi2_survival: degrees of freedom must be >= 1");
  if (!(x >= 0.0)) throw DomainError("chi2_survival: statistic must be nonnegative");
  if (x == 0.0) return 1.0;
  return boost::math::gamma_q(0.5 * df, 0.5 * x);
}

// Two-sided normal p-value of estimate/se.
inline double normal_p_value(double estimate, double se) {
  if (!(se > 0.0)) return estimate == 0.0 ? 1.0 : 0.0;
  const boost::math::normal_distribution<double> nd;
  return 2.0 * boost::math::cdf(boost::math::complement(nd, std::abs(estimate / se)));
}

inline std::string significance_stars(double p_value) {
  if (p_value < 0.01) return "***";
  if (p_value < 0.05) return "**";
  if (p_value < 0.10) return "*";
  return "";
}

inline double long_run_effect(double short_run, double phi) {
  if (!(std::abs(phi) < 1.0))
    throw DomainError("long_run_effect: |phi| must be below 1 (non-stationary persistence)");
  return short_run / (1.0 - phi);
}

// (X'X)^{-1} (sum_i e_i^2 x_i x_i') (X'X)^{-1}
inline Eigen::MatrixXd white_cov(const Eigen::MatrixXd& X, const Eigen::VectorXd& residuals,
                                 const std::vector<std::string>& names = {}) {
  if (X.rows() != residuals.size()) throw DomainError("white_cov: dimension mismatch");
  const auto ls = linalg::least_squares(X, Eigen::VectorXd::Zero(X.rows()), names);
  const Eigen::MatrixXd meat = X.transpose() * residuals.array().square().matrix().asDiagonal() * X;
  return linalg::symmetrize(ls.xtx_inv * meat * ls.xtx_inv);
}

// Design-level form; the intercept column is prepended when requested.
inline Eigen::MatrixXd white_cov(const DesignMatrix& design, const Eigen::VectorXd& residuals,
                                 bool intercept = true) {
  if (design.rows() != residuals.size()) throw DomainError("white_cov: dimension mismatch");
  Eigen::MatrixXd X(design.rows(), design.cols() + (intercept ? 1 : 0));
  if (intercept) X.col(0).setOnes();
  X.rightCols(design.cols()) = design.regressors;
  return white_cov(X, residuals);
}

namespace detail {

inline std::vector<std::string> with_intercept(const std::vector<std::string>& names) {
  std::vector<std::string> out{std::string(kIntercept)};
  out.insert(out.end(), names.begin(), names.end());
  return out;
}

// Fills coefficients, covariance and SEs from a least-squares solve on the
// already transformed (weighted / demeaned) problem.
inline void fill_inference(FitResult& fit, const Eigen::MatrixXd& Xt, const linalg::LeastSquares& ls,
                           double df_resid, Covariance covariance) {
  if (!(df_resid > 0.0)) throw DomainError("no residual degrees of freedom");
  fit.coef = ls.beta;
  fit.ssr = ls.ssr;
  fit.sigma = std::sqrt(ls.ssr / df_resid);
  fit.covariance = covariance;
  if (covariance == Covariance::white) {
    const Eigen::MatrixXd meat =
        Xt.transpose() * ls.residuals.array().square().matrix().asDiagonal() * Xt;
    fit.cov = linalg::symmetrize(ls.xtx_inv * meat * ls.xtx_inv);
  } else {
    fit.cov = linalg::symmetrize(ls.xtx_inv * (ls.ssr / df_resid));
  }
  fit.se = fit.cov.diagonal().cwiseMax(0.0).cwiseSqrt();
}

struct Groups {
  std::vector<std::vector<Eigen::Index>> rows;  // per entity id
  std::vector<int> present;                     // entity ids with rows
};

inline Groups group_rows(const DesignMatrix& d) {
  Groups g;
  if (d.entity.empty()) throw DomainError("panel estimator needs entity ids");
  g.rows.resize(d.entity_names.size());
  for (Eigen::Index i = 0; i < d.rows(); ++i)
    g.rows[static_cast<std::size_t>(d.entity[static_cast<std::size_t>(i)])].push_back(i);
  for (std::size_t e = 0; e < g.rows.size(); ++e)
    if (!g.rows[e].empty()) g.present.push_back(static_cast<int>(e));
  return g;
}

// Weighted within transformation. Returns demeaned copies plus group means.
struct Within {
  Eigen::VectorXd y;
  Eigen::MatrixXd X;
  Eigen::VectorXd ybar;  // per present group
  Eigen::MatrixXd xbar;  // per present group, one row each
};

inline Within within_transform(const Eigen::VectorXd& y, const Eigen::MatrixXd& X,
                               const Eigen::VectorXd& w, const Groups& g) {
  Within out{y, X, Eigen::VectorXd(static_cast<Eigen::Index>(g.present.size())),
             Eigen::MatrixXd(static_cast<Eigen::Index>(g.present.size()), X.cols())};
  for (std::size_t gi = 0; gi < g.present.size(); ++gi) {
    const auto& rows = g.rows[static_cast<std::size_t>(g.present[gi])];
    double sw = 0.0, sy = 0.0;
    Eigen::RowVectorXd sx = Eigen::RowVectorXd::Zero(X.cols());
    for (auto i : rows) {
      sw += w(i);
      sy += w(i) * y(i);
      sx += w(i) * X.row(i);
    }
    const double ym = sy / sw;
    const Eigen::RowVectorXd xm = sx / sw;
    out.ybar(static_cast<Eigen::Index>(gi)) = ym;
    out.xbar.row(static_cast<Eigen::Index>(gi)) = xm;
    for (auto i : rows) {
      out.y(i) -= ym;
      out.X.row(i) -= xm;
    }
  }
  return out;
}

inline double centered_ss(const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
  const double mean = (w.array() * y.array()).sum() / w.sum();
  return (w.array() * (y.array() - mean).square()).sum();
}

inline void fill_panel_counts(FitResult& fit, const DesignMatrix& d) {
  fit.nobs = static_cast<std::size_t>(d.rows());
  fit.n_entities = d.entity.empty() ? 0 : d.entity_count();
  fit.n_periods = d.period_count();
}

}  // namespace detail

// OLS (WLS when the design carries weights), optionally with an intercept.
inline FitResult fit_pooled_ols(const DesignMatrix& design,
                                Covariance covariance = Covariance::classical,
                                bool intercept = true) {
  design.validate();
  const Eigen::Index n = design.rows();
  const Eigen::Index k = design.cols() + (intercept ? 1 : 0);
  if (n < k) throw DomainError("pooled OLS: fewer rows than columns");
  const Eigen::VectorXd w = design.row_weights();
  const Eigen::VectorXd sw = w.cwiseSqrt();
  Eigen::MatrixXd X(n, k);
  if (intercept) X.col(0).setOnes();
  X.rightCols(design.cols()) = design.regressors;
  const Eigen::MatrixXd Xt = sw.asDiagonal() * X;
  const Eigen::VectorXd yt = sw.asDiagonal() * design.response;

  FitResult fit;
  fit.estimator = "pooled";
  fit.names = intercept ? detail::with_intercept(design.names) : design.names;
  const auto ls = linalg::least_squares(Xt, yt, fit.names);
  const double df = static_cast<double>(n - k);
  detail::fill_inference(fit, Xt, ls, df, covariance);
  const double sst = intercept ? detail::centered_ss(design.response, w)
                               : (w.array() * design.response.array().square()).sum();
  fit.r2 = sst > 0.0 ? 1.0 - ls.ssr / sst : 1.0;
  fit.adj_r2 = 1.0 - (1.0 - fit.r2) * (static_cast<double>(n) - (intercept ? 1.0 : 0.0)) / df;
  fit.residuals = design.response - X * fit.coef;
  detail::fill_panel_counts(fit, design);
  return fit;
}

// Within estimator. Regressors constant inside every entity are absorbed by
// the entity effects; they are removed and listed in `absorbed`. The reported
// intercept is the weighted grand mean of y minus that of X times beta, and
// per-entity intercepts are ybar_i - xbar_i' beta.
inline FitResult fit_fixed_effects(const DesignMatrix& design, const ModelSpec& spec = {}) {
  design.validate();
  const auto g = detail::group_rows(design);
  for (int e : g.present)
    if (g.rows[static_cast<std::size_t>(e)].size() < 2)
      throw DomainError("fixed effects: entity " + design.entity_names[static_cast<std::size_t>(e)] +
                        " has fewer than 2 rows");
  const Eigen::VectorXd w = design.row_weights();
  const auto wt = detail::within_transform(design.response, design.regressors, w, g);

  FitResult fit;
  fit.estimator = "fixed";
  std::vector<Eigen::Index> kept;
  std::vector<std::string> kept_names;
  for (Eigen::Index j = 0; j < design.cols(); ++j) {
    const double scale = std::max(1.0, design.regressors.col(j).cwiseAbs().maxCoeff());
    if (wt.X.col(j).cwiseAbs().maxCoeff() <= 1e-10 * scale) {
      fit.absorbed.push_back(design.names[static_cast<std::size_t>(j)]);
      fit.flags.push_back("absorbed by entity effects: " + design.names[static_cast<std::size_t>(j)]);
    } else {
      kept.push_back(j);
      kept_names.push_back(design.names[static_cast<std::size_t>(j)]);
    }
  }
  if (kept.empty()) throw DomainError("fixed effects: every regressor is absorbed by entity effects");

  const Eigen::Index n = design.rows();
  const auto k = static_cast<Eigen::Index>(kept.size());
  const auto groups = static_cast<Eigen::Index>(g.present.size());
  const double wsum = w.sum();
  const double ygrand = w.dot(design.response) / wsum;
  Eigen::MatrixXd Xa(n, k + 1);
  Xa.col(0).setOnes();
  for (Eigen::Index c = 0; c < k; ++c) {
    const auto j = kept[static_cast<std::size_t>(c)];
    const double xgrand = w.dot(design.regressors.col(j)) / wsum;
    Xa.col(c + 1) = wt.X.col(j).array() + xgrand;
  }
  const Eigen::VectorXd ya = wt.y.array() + ygrand;
  const Eigen::VectorXd sw = w.cwiseSqrt();
  const Eigen::MatrixXd Xt = sw.asDiagonal() * Xa;
  const Eigen::VectorXd yt = sw.asDiagonal() * ya;

  fit.names = detail::with_intercept(kept_names);
  const auto ls = linalg::least_squares(Xt, yt, fit.names);
  const double df = static_cast<double>(n - groups - k);
  detail::fill_inference(fit, Xt, ls, df, spec.covariance);
  const double sst = detail::centered_ss(design.response, w);
  fit.r2 = sst > 0.0 ? 1.0 - ls.ssr / sst : 1.0;
  fit.adj_r2 = 1.0 - (1.0 - fit.r2) * (static_cast<double>(n) - 1.0) / df;
  fit.residuals = ya - Xa * fit.coef;

  const Eigen::VectorXd slopes = fit.coef.tail(k);
  for (std::size_t gi = 0; gi < g.present.size(); ++gi) {
    double xb = 0.0;
    for (Eigen::Index c = 0; c < k; ++c)
      xb += wt.xbar(static_cast<Eigen::Index>(gi), kept[static_cast<std::size_t>(c)]) * slopes(c);
    fit.entity_intercepts.emplace_back(design.entity_names[static_cast<std::size_t>(g.present[gi])],
                                       wt.ybar(static_cast<Eigen::Index>(gi)) - xb);
  }
  detail::fill_panel_counts(fit, design);
  return fit;
}

// Swamy-Arora random effects for unbalanced panels. sigma_eps^2 comes from the
// within regression; sigma_alpha^2 from the between regression on entity means
// replicated per row (Baltagi-Chang form, which reduces to the textbook
// SSR_b/(N-K) - sigma_eps^2/T when balanced). Each entity is quasi-demeaned by
// theta_i = 1 - sigma_eps / sqrt(T_i sigma_alpha^2 + sigma_eps^2).
inline FitResult fit_random_effects(const DesignMatrix& design, const ModelSpec& spec = {}) {
  design.validate();
  const auto g = detail::group_rows(design);
  for (int e : g.present)
    if (g.rows[static_cast<std::size_t>(e)].size() < 2)
      throw DomainError("random effects: entity " +
                        design.entity_names[static_cast<std::size_t>(e)] + " has fewer than 2 rows");
  const Eigen::Index n = design.rows();
  const Eigen::Index K = design.cols() + 1;
  const auto groups = static_cast<Eigen::Index>(g.present.size());
  const Eigen::VectorXd sw = design.row_weights().cwiseSqrt();

  Eigen::MatrixXd Z(n, K);
  Z.col(0) = sw;
  Z.rightCols(design.cols()) = sw.asDiagonal() * design.regressors;
  const Eigen::VectorXd y = sw.asDiagonal() * design.response;
  const auto names = detail::with_intercept(design.names);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);

  FitResult fit;
  fit.estimator = "random";

  // Within step.
  const auto wt = detail::within_transform(y, Z, ones, g);
  std::vector<Eigen::Index> varying;
  for (Eigen::Index j = 0; j < K; ++j) {
    const double scale = std::max(1.0, Z.col(j).cwiseAbs().maxCoeff());
    if (wt.X.col(j).cwiseAbs().maxCoeff() > 1e-10 * scale) varying.push_back(j);
  }
  Eigen::MatrixXd Xw(n, static_cast<Eigen::Index>(varying.size()));
  std::vector<std::string> wnames;
  for (std::size_t c = 0; c < varying.size(); ++c) {
    Xw.col(static_cast<Eigen::Index>(c)) = wt.X.col(varying[c]);
    wnames.push_back(names[static_cast<std::size_t>(varying[c])]);
  }
  const auto lsw = linalg::least_squares(Xw, wt.y, wnames);
  const double df_w = static_cast<double>(n - groups - Xw.cols());
  if (!(df_w > 0.0)) throw DomainError("random effects: no within degrees of freedom");
  const double s2_eps = lsw.ssr / df_w;

  // Between step on replicated group means. Columns whose entity means are
  // collinear (e.g. market-wide series on a balanced panel) do not change the
  // between residuals and are left out.
  std::vector<Eigen::Index> kept;
  {
    Eigen::MatrixXd M(groups, 0);
    for (Eigen::Index j = 0; j < K; ++j) {
      Eigen::VectorXd c(groups);
      for (std::size_t gi = 0; gi < g.present.size(); ++gi)
        c(static_cast<Eigen::Index>(gi)) =
            std::sqrt(static_cast<double>(g.rows[static_cast<std::size_t>(g.present[gi])].size())) *
            wt.xbar(static_cast<Eigen::Index>(gi), j);
      Eigen::VectorXd r = c;
      if (M.cols() > 0) r -= M * M.colPivHouseholderQr().solve(c);
      if (r.norm() > linalg::kRankTolerance * std::max(1.0, c.norm())) {
        M.conservativeResize(Eigen::NoChange, M.cols() + 1);
        M.col(M.cols() - 1) = c;
        kept.push_back(j);
      } else {
        fit.flags.push_back("between regression: entity means of " + names[static_cast<std::size_t>(j)] +
                            " are collinear and were left out");
      }
    }
  }
  const auto Kb = static_cast<Eigen::Index>(kept.size());
  if (groups <= Kb)
    throw DomainError("random effects: between regression needs more entities than coefficients");
  Eigen::MatrixXd PZ(n, Kb);
  Eigen::VectorXd Py(n);
  std::vector<std::string> bnames;
  for (auto j : kept) bnames.push_back(names[static_cast<std::size_t>(j)]);
  for (std::size_t gi = 0; gi < g.present.size(); ++gi)
    for (auto i : g.rows[static_cast<std::size_t>(g.present[gi])]) {
      for (Eigen::Index c = 0; c < Kb; ++c) PZ(i, c) = wt.xbar(static_cast<Eigen::Index>(gi), kept[static_cast<std::size_t>(c)]);
      Py(i) = wt.ybar(static_cast<Eigen::Index>(gi));
    }
  const auto lsb = linalg::least_squares(PZ, Py, bnames);
  Eigen::MatrixXd ZZ = Eigen::MatrixXd::Zero(Kb, Kb);
  for (std::size_t gi = 0; gi < g.present.size(); ++gi) {
    const double Ti = static_cast<double>(g.rows[static_cast<std::size_t>(g.present[gi])].size());
    Eigen::VectorXd zb(Kb);
    for (Eigen::Index c = 0; c < Kb; ++c) zb(c) = wt.xbar(static_cast<Eigen::Index>(gi), kept[static_cast<std::size_t>(c)]);
    ZZ += Ti * Ti * zb * zb.transpose();
  }
  const double trace_term = (lsb.xtx_inv * ZZ).trace();
  const double denom = static_cast<double>(n) - trace_term;
  double s2_alpha = denom > 0.0
                        ? (lsb.ssr - static_cast<double>(groups - Kb) * s2_eps) / denom
                        : 0.0;
  VarianceComponents vc;
  if (!(s2_alpha > 0.0)) {
    vc.clamped = s2_alpha < 0.0;
    if (vc.clamped) fit.flags.push_back("negative cross-section variance clamped to zero");
    s2_alpha = 0.0;
  }
  vc.sigma_alpha = std::sqrt(s2_alpha);
  vc.sigma_eps = std::sqrt(s2_eps);
  const double tot = s2_alpha + s2_eps;
  vc.rho_cross = tot > 0.0 ? s2_alpha / tot : 0.0;
  vc.rho_idio = tot > 0.0 ? 1.0 - vc.rho_cross : 0.0;
  fit.components = vc;

  // Quasi-demeaned GLS.
  Eigen::MatrixXd Zs = Z;
  Eigen::VectorXd ys = y;
  for (std::size_t gi = 0; gi < g.present.size(); ++gi) {
    const auto& rows = g.rows[static_cast<std::size_t>(g.present[gi])];
    const double Ti = static_cast<double>(rows.size());
    const double v = Ti * s2_alpha + s2_eps;
    const double theta = v > 0.0 ? 1.0 - std::sqrt(s2_eps / v) : 0.0;
    for (auto i : rows) {
      Zs.row(i) -= theta * wt.xbar.row(static_cast<Eigen::Index>(gi));
      ys(i) -= theta * wt.ybar(static_cast<Eigen::Index>(gi));
    }
  }
  fit.names = names;
  const auto ls = linalg::least_squares(Zs, ys, names);
  const double df = static_cast<double>(n - K);
  detail::fill_inference(fit, Zs, ls, df, spec.covariance);
  const double sst = detail::centered_ss(ys, ones);
  fit.r2 = sst > 0.0 ? 1.0 - ls.ssr / sst : 1.0;
  fit.adj_r2 = 1.0 - (1.0 - fit.r2) * (static_cast<double>(n) - 1.0) / df;
  Eigen::MatrixXd X1(n, K);
  X1.col(0).setOnes();
  X1.rightCols(design.cols()) = design.regressors;
  fit.residuals = design.response - X1 * fit.coef;
  detail::fill_panel_counts(fit, design);
  return fit;
}

inline FitResult fit_effects(const DesignMatrix& design, const ModelSpec& spec) {
  switch (spec.effects) {
    case Effects::pooled: return fit_pooled_ols(design, spec.covariance, true);
    case Effects::fixed: return fit_fixed_effects(design, spec);
    case Effects::random: return fit_random_effects(design, spec);
  }
  throw DomainError("unknown effects specification");
}

namespace detail {

// Rows whose previous calendar day exists for the same entity, paired with
// that row's index.
inline std::vector<std::pair<Eigen::Index, Eigen::Index>> lag_pairs(const DesignMatrix& d) {
  if (d.dates.empty() || d.entity.empty())
    throw DomainError("lag construction needs entity ids and dates");
  std::map<std::pair<int, int>, Eigen::Index> at;
  for (Eigen::Index i = 0; i < d.rows(); ++i)
    at[{d.entity[static_cast<std::size_t>(i)], d.dates[static_cast<std::size_t>(i)].days()}] = i;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> out;
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    auto it = at.find({d.entity[static_cast<std::size_t>(i)],
                       d.dates[static_cast<std::size_t>(i)].days() - 1});
    if (it != at.end()) out.emplace_back(i, it->second);
  }
  return out;
}

// Per-entity error variances from residuals; entities with fewer rows than
// `min_rows` (or zero variance) fall back to the pooled variance.
inline Eigen::VectorXd entity_variance_weights(const DesignMatrix& d, const Eigen::VectorXd& resid,
                                               bool demean, std::size_t min_rows,
                                               std::vector<std::string>& flags) {
  const auto g = group_rows(d);
  std::vector<double> var(d.entity_names.size(), 0.0);
  std::vector<bool> fallback(d.entity_names.size(), false);
  double pooled_ss = 0.0;
  std::size_t pooled_n = 0;
  for (int e : g.present) {
    const auto& rows = g.rows[static_cast<std::size_t>(e)];
    double mean = 0.0;
    if (demean) {
      for (auto i : rows) mean += resid(i);
      mean /= static_cast<double>(rows.size());
    }
    double ss = 0.0;
    for (auto i : rows) ss += (resid(i) - mean) * (resid(i) - mean);
    pooled_ss += ss;
    pooled_n += rows.size();
    var[static_cast<std::size_t>(e)] = ss / static_cast<double>(rows.size());
    if (rows.size() < min_rows || !(var[static_cast<std::size_t>(e)] > 0.0))
      fallback[static_cast<std::size_t>(e)] = true;
  }
  const double pooled = pooled_n ? pooled_ss / static_cast<double>(pooled_n) : 1.0;
  for (int e : g.present) {
    if (fallback[static_cast<std::size_t>(e)]) {
      var[static_cast<std::size_t>(e)] = pooled > 0.0 ? pooled : 1.0;
      flags.push_back("pooled variance used for entity " +
                      d.entity_names[static_cast<std::size_t>(e)]);
    }
  }
  Eigen::VectorXd w(d.rows());
  for (Eigen::Index i = 0; i < d.rows(); ++i)
    w(i) = 1.0 / var[static_cast<std::size_t>(d.entity[static_cast<std::size_t>(i)])];
  return w;
}

// AR(1) quasi-differencing with a common rho estimated from consecutive
// residual pairs. Rows without a predecessor are dropped.
inline DesignMatrix ar1_transform(const DesignMatrix& d, const Eigen::VectorXd& resid, double& rho) {
  const auto pairs = lag_pairs(d);
  double num = 0.0, den = 0.0;
  for (auto [i, j] : pairs) {
    num += resid(i) * resid(j);
    den += resid(j) * resid(j);
  }
  rho = den > 0.0 ? num / den : 0.0;
  rho = std::clamp(rho, -0.99, 0.99);
  std::vector<Eigen::Index> keep;
  for (auto [i, j] : pairs) keep.push_back(i);
  DesignMatrix out = d.select_rows(keep);
  for (std::size_t r = 0; r < pairs.size(); ++r) {
    const auto [i, j] = pairs[r];
    const auto rr = static_cast<Eigen::Index>(r);
    out.response(rr) = d.response(i) - rho * d.response(j);
    out.regressors.row(rr) = d.regressors.row(i) - rho * d.regressors.row(j);
  }
  return out;
}

// Undoes the (1 - rho) scaling of the intercept after quasi-differencing.
inline void rescale_intercept(FitResult& fit, double rho) {
  auto j = fit.index(kIntercept);
  if (!j) return;
  const auto jj = static_cast<Eigen::Index>(*j);
  const double s = 1.0 / (1.0 - rho);
  fit.coef(jj) *= s;
  fit.cov.row(jj) *= s;
  fit.cov.col(jj) *= s;
  fit.se = fit.cov.diagonal().cwiseMax(0.0).cwiseSqrt();
}

// Cross-section SUR: whitens each date's cross-section by the Cholesky factor
// of the residual covariance among the entities present that day.
inline FitResult fit_sur(const DesignMatrix& d, const ModelSpec& spec, const Eigen::VectorXd& resid) {
  if (spec.effects == Effects::random)
    throw DomainError("SUR weighting is available for pooled and fixed effects only");
  const auto g = group_rows(d);
  const auto N = static_cast<Eigen::Index>(d.entity_names.size());
  std::map<int, std::vector<Eigen::Index>> by_date;
  for (Eigen::Index i = 0; i < d.rows(); ++i)
    by_date[d.dates[static_cast<std::size_t>(i)].days()].push_back(i);
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(N, N), C = Eigen::MatrixXd::Zero(N, N);
  for (const auto& [day, rows] : by_date)
    for (auto a : rows)
      for (auto b : rows) {
        const int ea = d.entity[static_cast<std::size_t>(a)], eb = d.entity[static_cast<std::size_t>(b)];
        S(ea, eb) += resid(a) * resid(b);
        C(ea, eb) += 1.0;
      }
  for (Eigen::Index a = 0; a < N; ++a)
    for (Eigen::Index b = 0; b < N; ++b) S(a, b) = C(a, b) > 0.0 ? S(a, b) / C(a, b) : 0.0;
  // Pairwise estimates need not be positive definite; lift small eigenvalues.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
  const double floor = 1e-8 * std::max(1e-300, es.eigenvalues().cwiseAbs().maxCoeff());
  S = es.eigenvectors() * es.eigenvalues().cwiseMax(floor).asDiagonal() *
      es.eigenvectors().transpose();

  const Eigen::Index n = d.rows();
  const Eigen::Index k = d.cols();
  Eigen::MatrixXd Xa(n, k + 1);
  Eigen::VectorXd ya(n);
  std::vector<std::string> names = with_intercept(d.names);
  Eigen::Index absorbed_df = 0;
  if (spec.effects == Effects::fixed) {
    const auto wt = within_transform(d.response, d.regressors, Eigen::VectorXd::Ones(n), g);
    Xa.col(0).setOnes();
    for (Eigen::Index j = 0; j < k; ++j) Xa.col(j + 1) = wt.X.col(j).array() + d.regressors.col(j).mean();
    ya = wt.y.array() + d.response.mean();
    absorbed_df = static_cast<Eigen::Index>(g.present.size()) - 1;
  } else {
    Xa.col(0).setOnes();
    Xa.rightCols(k) = d.regressors;
    ya = d.response;
  }
  Eigen::MatrixXd Xt = Xa;
  Eigen::VectorXd yt = ya;
  for (const auto& [day, rows] : by_date) {
    const auto m = static_cast<Eigen::Index>(rows.size());
    Eigen::MatrixXd Ss(m, m);
    for (Eigen::Index a = 0; a < m; ++a)
      for (Eigen::Index b = 0; b < m; ++b)
        Ss(a, b) = S(d.entity[static_cast<std::size_t>(rows[static_cast<std::size_t>(a)])],
                     d.entity[static_cast<std::size_t>(rows[static_cast<std::size_t>(b)])]);
    const Eigen::LLT<Eigen::MatrixXd> llt(Ss);
    Eigen::MatrixXd Xb(m, k + 1);
    Eigen::VectorXd yb(m);
    for (Eigen::Index a = 0; a < m; ++a) {
      Xb.row(a) = Xa.row(rows[static_cast<std::size_t>(a)]);
      yb(a) = ya(rows[static_cast<std::size_t>(a)]);
    }
    Xb = llt.matrixL().solve(Xb);
    yb = llt.matrixL().solve(yb);
    for (Eigen::Index a = 0; a < m; ++a) {
      Xt.row(rows[static_cast<std::size_t>(a)]) = Xb.row(a);
      yt(rows[static_cast<std::size_t>(a)]) = yb(a);
    }
  }
  FitResult fit;
  fit.estimator = std::string(to_string(spec.effects)) + "+sur";
  fit.names = names;
  const auto ls = linalg::least_squares(Xt, yt, names);
  fill_inference(fit, Xt, ls, static_cast<double>(n - k - 1 - absorbed_df), spec.covariance);
  const double sst = centered_ss(yt, Eigen::VectorXd::Ones(n));
  fit.r2 = sst > 0.0 ? 1.0 - ls.ssr / sst : 1.0;
  fit.adj_r2 = 1.0 - (1.0 - fit.r2) * (static_cast<double>(n) - 1.0) /
                         static_cast<double>(n - k - 1 - absorbed_df);
  fit.residuals = ya - Xa * fit.coef;
  fill_panel_counts(fit, d);
  return fit;
}

}  // namespace detail

// Two-step feasible GLS. Stage 1 fits the model per spec.effects without
// weights; stage 2 refits with row weights 1/sigma_i^2 from per-entity
// residual variances (idiosyncratic part for random effects). Extra
// iterations re-estimate the variances from the latest residuals.
inline FitResult fit_egls_cross_section(const DesignMatrix& design, const ModelSpec& spec) {
  design.validate();
  std::vector<std::string> flags;
  DesignMatrix base = design;
  base.weights.resize(0);
  ModelSpec stage_spec = spec;
  stage_spec.covariance = Covariance::classical;

  double rho = 0.0;
  if (spec.ar1) {
    const auto first = fit_effects(base, stage_spec);
    base = detail::ar1_transform(base, first.residuals, rho);
    flags.push_back("ar1 rho=" + std::to_string(rho));
  }

  FitResult current = fit_effects(base, stage_spec);
  if (spec.sur) {
    FitResult fit = detail::fit_sur(base, spec, current.residuals);
    if (spec.ar1) detail::rescale_intercept(fit, rho);
    fit.flags.insert(fit.flags.begin(), flags.begin(), flags.end());
    return fit;
  }
  const bool demean = spec.effects == Effects::random;
  const auto min_rows = static_cast<std::size_t>(current.coef.size());
  const int iterations = std::max(1, spec.egls_iterations);
  for (int it = 0; it < iterations; ++it) {
    std::vector<std::string> wflags;
    DesignMatrix weighted = base;
    weighted.weights =
        detail::entity_variance_weights(base, current.residuals, demean, min_rows, wflags);
    ModelSpec s = spec;
    if (it + 1 < iterations) s.covariance = Covariance::classical;
    current = fit_effects(weighted, s);
    if (it + 1 == iterations) flags.insert(flags.end(), wflags.begin(), wflags.end());
  }
  if (spec.ar1) detail::rescale_intercept(current, rho);
  current.estimator += "+egls";
  current.flags.insert(current.flags.end(), flags.begin(), flags.end());
  return current;
}

// Appends the gap-aware lag of the response as column "<response>(-1)".
// Rows whose previous calendar day is absent for the entity are dropped;
// `dropped` receives their count.
inline DesignMatrix add_lagged_response(const DesignMatrix& design, std::size_t* dropped = nullptr) {
  const auto pairs = detail::lag_pairs(design);
  std::vector<Eigen::Index> keep;
  Eigen::VectorXd lag(static_cast<Eigen::Index>(pairs.size()));
  for (std::size_t r = 0; r < pairs.size(); ++r) {
    keep.push_back(pairs[r].first);
    lag(static_cast<Eigen::Index>(r)) = design.response(pairs[r].second);
  }
  if (dropped) *dropped = static_cast<std::size_t>(design.rows()) - keep.size();
  return design.select_rows(keep).with_column(design.response_name + "(-1)", lag);
}

inline std::string lag_column_name(const DesignMatrix& design) {
  return design.response_name + "(-1)";
}

// Static estimator per spec with the lagged response added. A design that
// already carries the lag column is used as is.
inline FitResult fit_dynamic(const DesignMatrix& design, const ModelSpec& spec) {
  design.validate();
  const std::string lag = lag_column_name(design);
  DesignMatrix d = design;
  std::size_t dropped = 0;
  if (design.column(lag) < 0) d = add_lagged_response(design, &dropped);
  if (spec.effects != Effects::pooled) {
    const auto g = detail::group_rows(d);
    for (std::size_t e = 0; e < d.entity_names.size(); ++e) {
      const bool had = std::find(design.entity.begin(), design.entity.end(), static_cast<int>(e)) !=
                       design.entity.end();
      if (had && g.rows[e].size() < 2)
        throw DomainError("dynamic panel: entity " + d.entity_names[e] +
                          " has fewer than 2 usable rows after lagging");
    }
  }
  FitResult fit = spec.weights == Weights::cross_section_egls ? fit_egls_cross_section(d, spec)
                                                              : fit_effects(d, spec);
  fit.phi = fit.coefficient(lag);
  fit.estimator += "+dynamic";
  if (dropped) fit.flags.push_back("rows dropped without a lagged response: " + std::to_string(dropped));
  return fit;
}

// Entry point used by the pipeline: static or dynamic, weighted or not.
inline FitResult fit_model(const DesignMatrix& design, const ModelSpec& spec) {
  if (spec.dynamic) return fit_dynamic(design, spec);
  if (spec.weights == Weights::cross_section_egls) return fit_egls_cross_section(design, spec);
  return fit_effects(design, spec);
}

struct HausmanResult {
  double statistic = 0.0;
  int df = 0;
  double p_value = 1.0;
  std::vector<std::string> columns;
  bool pseudo_inverse = false;  // V_FE - V_RE was not positive definite
  bool clamped = false;         // negative quadratic form set to zero
};

// H = q' (V_FE - V_RE)^{-1} q over the shared slope columns. Columns default to
// every non-intercept coefficient present in both fits.
inline HausmanResult hausman(const FitResult& fe, const FitResult& re,
                             std::vector<std::string> columns = {}) {
  if (columns.empty()) {
    for (const auto& nm : fe.names)
      if (nm != kIntercept && re.index(nm)) columns.push_back(nm);
  }
  if (columns.empty()) throw DomainError("hausman: no shared columns");
  const auto m = static_cast<Eigen::Index>(columns.size());
  Eigen::VectorXd q(m);
  Eigen::MatrixXd V(m, m);
  for (Eigen::Index a = 0; a < m; ++a) {
    const auto ia = fe.index(columns[static_cast<std::size_t>(a)]);
    const auto ja = re.index(columns[static_cast<std::size_t>(a)]);
    if (!ia || !ja) throw DomainError("hausman: column missing from a fit: " + columns[static_cast<std::size_t>(a)]);
    q(a) = fe.coef(static_cast<Eigen::Index>(*ia)) - re.coef(static_cast<Eigen::Index>(*ja));
    for (Eigen::Index b = 0; b < m; ++b) {
      const auto ib = *fe.index(columns[static_cast<std::size_t>(b)]);
      const auto jb = *re.index(columns[static_cast<std::size_t>(b)]);
      V(a, b) = fe.cov(static_cast<Eigen::Index>(*ia), static_cast<Eigen::Index>(ib)) -
                re.cov(static_cast<Eigen::Index>(*ja), static_cast<Eigen::Index>(jb));
    }
  }
  V = linalg::symmetrize(V);
  HausmanResult out;
  out.columns = columns;
  out.df = static_cast<int>(m);
  const Eigen::LLT<Eigen::MatrixXd> llt(V);
  bool pd = llt.info() == Eigen::Success;
  if (pd) {
    const Eigen::VectorXd diag = llt.matrixL().toDenseMatrix().diagonal();
    pd = diag.minCoeff() > 1e-12 * std::max(1e-300, diag.maxCoeff());
  }
  double h;
  if (pd) {
    h = q.dot(llt.solve(q));
  } else {
    out.pseudo_inverse = true;
    h = q.dot(linalg::pseudo_inverse_symmetric(V) * q);
  }
  if (h < 0.0) {
    out.clamped = true;
    h = 0.0;
  }
  out.statistic = h;
  out.p_value = chi2_survival(h, static_cast<double>(out.df));
  return out;
}

}  // namespace panelcrypt::estimators
