#include <gtest/gtest.h>

#include <cmath>

#include "oracles/oracles.hpp"
#include "panelcrypt/estimators.hpp"

using namespace panelcrypt;
using namespace panelcrypt::estimators;

namespace {

struct PanelShape {
  int entities = 4;
  int periods = 6;
  int k = 2;
  double sigma_alpha = 1.0;
  bool unbalanced = false;
  double coupling = 0.3;  // loading of alpha on every regressor
};

// y = 1 + X b + alpha_i + e with b = (0.5, -1, 2, ...), N(0,1) regressors.
DesignMatrix random_panel(oracle::Gen& g, const PanelShape& s, std::vector<double> sigma = {}) {
  DesignMatrix d;
  d.response_name = "y";
  for (int j = 0; j < s.k; ++j) d.names.push_back("x" + std::to_string(j + 1));
  std::vector<std::vector<double>> rows;
  std::vector<double> ys;
  for (int e = 0; e < s.entities; ++e) {
    d.entity_names.push_back("E" + std::to_string(e));
    const double alpha = g.normal(0, s.sigma_alpha);
    const double sd = sigma.empty() ? 1.0 : sigma[static_cast<std::size_t>(e)];
    const int T = s.unbalanced ? g.integer(2, s.periods) : s.periods;
    for (int t = 0; t < T; ++t) {
      std::vector<double> x;
      double y = 1.0 + alpha + g.normal(0, sd);
      for (int j = 0; j < s.k; ++j) {
        x.push_back(g.normal() + s.coupling * alpha);
        y += (j == 0 ? 0.5 : j == 1 ? -1.0 : 2.0) * x.back();
      }
      rows.push_back(x);
      ys.push_back(y);
      d.entity.push_back(e);
      d.dates.push_back(Date(t));
    }
  }
  const auto n = static_cast<Eigen::Index>(ys.size());
  d.response = Eigen::Map<Eigen::VectorXd>(ys.data(), n);
  d.regressors.resize(n, s.k);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int j = 0; j < s.k; ++j) d.regressors(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  return d;
}

Eigen::VectorXd slopes(const FitResult& f, const DesignMatrix& d) {
  Eigen::VectorXd b(d.cols());
  for (Eigen::Index j = 0; j < d.cols(); ++j) b(j) = f.coefficient(d.names[static_cast<std::size_t>(j)]);
  return b;
}

ModelSpec classical(Effects e) {
  ModelSpec s;
  s.effects = e;
  s.covariance = Covariance::classical;
  return s;
}

}  // namespace

TEST(FixedEffects, EqualsDummyRegressionOnRandomPanels) {
  oracle::Gen g(31);
  for (int c = 0; c < 200; ++c) {
    PanelShape s{g.integer(1, 5), g.integer(3, 8), g.integer(1, 2), 1.0, true};
    auto d = random_panel(g, s);
    if (d.rows() <= s.entities + s.k) continue;
    const auto fe = fit_fixed_effects(d, classical(Effects::fixed));
    const Eigen::VectorXd ref = oracle::lsdv_slopes(d.regressors, d.response, d.entity, s.entities);
    EXPECT_LT((slopes(fe, d) - ref).cwiseAbs().maxCoeff(), 1e-8) << "case " << c;
  }
}

TEST(FixedEffects, InvariantToEntityConstantsInResponse) {
  oracle::Gen g(32);
  auto d = random_panel(g, {5, 8, 2});
  const auto base = fit_fixed_effects(d);
  for (Eigen::Index i = 0; i < d.rows(); ++i) d.response(i) += 10.0 * d.entity[static_cast<std::size_t>(i)] - 3.0;
  const auto shifted = fit_fixed_effects(d);
  EXPECT_LT((slopes(base, d) - slopes(shifted, d)).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(FixedEffects, SingleEntityEqualsPooledOls) {
  oracle::Gen g(33);
  const auto d = random_panel(g, {1, 12, 2});
  const auto fe = fit_fixed_effects(d), ols = fit_pooled_ols(d);
  EXPECT_LT((slopes(fe, d) - slopes(ols, d)).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_NEAR(fe.coefficient("Intercept"), ols.coefficient("Intercept"), 1e-10);
}

TEST(FixedEffects, TimeInvariantColumnIsReportedAbsorbed) {
  oracle::Gen g(34);
  auto d = random_panel(g, {4, 6, 1});
  Eigen::VectorXd hyfi(d.rows());
  for (Eigen::Index i = 0; i < d.rows(); ++i) hyfi(i) = d.entity[static_cast<std::size_t>(i)] < 2 ? 1.0 : 0.0;
  const auto fe = fit_fixed_effects(d.with_column("HyFi", hyfi));
  ASSERT_EQ(fe.absorbed.size(), 1u);
  EXPECT_EQ(fe.absorbed[0], "HyFi");
  EXPECT_FALSE(fe.index("HyFi"));
}

TEST(FixedEffects, EntityIntercepts) {
  oracle::Gen g(35);
  const auto d = random_panel(g, {3, 4, 2});
  const auto fe = fit_fixed_effects(d);
  ASSERT_EQ(fe.entity_intercepts.size(), 3u);
  for (int e = 0; e < 3; ++e) {
    double ybar = 0, n = 0;
    Eigen::VectorXd xbar = Eigen::VectorXd::Zero(2);
    for (Eigen::Index i = 0; i < d.rows(); ++i)
      if (d.entity[static_cast<std::size_t>(i)] == e) {
        ybar += d.response(i);
        xbar += d.regressors.row(i).transpose();
        n += 1;
      }
    EXPECT_NEAR(fe.entity_intercepts[static_cast<std::size_t>(e)].second, ybar / n - xbar.dot(slopes(fe, d)) / n, 1e-10);
  }
}

TEST(Ols, ExactLinearFitHasZeroResiduals) {
  DesignMatrix d;
  d.names = {"x"};
  d.regressors.resize(5, 1);
  d.regressors << 0, 1, 2, 3, 4;
  d.response = (1.0 + 2.0 * d.regressors.col(0).array()).matrix();
  const auto f = fit_pooled_ols(d);
  EXPECT_NEAR(f.r2, 1.0, 1e-12);
  EXPECT_LT(f.residuals.cwiseAbs().maxCoeff(), 1e-12);
}

TEST(WhiteCov, MatchesElementwiseOracleAndConstantResidualForm) {
  Eigen::MatrixXd X(3, 2);
  X << 1, 0.5, 1, 1.5, 1, 4.0;
  const Eigen::VectorXd c = Eigen::VectorXd::Constant(3, 0.7);
  const Eigen::MatrixXd classical_part = (X.transpose() * X).inverse();
  EXPECT_LT((white_cov(X, c) - 0.49 * classical_part).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT(white_cov(X, Eigen::VectorXd::Zero(3)).cwiseAbs().maxCoeff(), 1e-15);
  oracle::Gen g(36);
  for (int rep = 0; rep < 20; ++rep) {
    Eigen::MatrixXd Z(15, 3);
    for (Eigen::Index i = 0; i < 15; ++i) Z.row(i) << 1.0, g.normal(), g.normal();
    const Eigen::VectorXd e = g.normals(15);
    EXPECT_LT((white_cov(Z, e) - oracle::white_elementwise(Z, e)).cwiseAbs().maxCoeff(), 1e-10);
  }
  EXPECT_THROW(white_cov(X, Eigen::VectorXd::Zero(4)), DomainError);
}

TEST(WhiteCov, EqualsScaledClassicalUnderConstantResidualMagnitude) {
  Eigen::MatrixXd X(6, 2);
  X << 1, 1, 1, 2, 1, 3, 1, 4, 1, 5, 1, 6;
  Eigen::VectorXd e(6);
  e << 0.3, -0.3, 0.3, -0.3, 0.3, -0.3;
  const double n = 6, k = 2;
  const double s2 = e.squaredNorm() / (n - k);
  const Eigen::MatrixXd classical_cov = s2 * (X.transpose() * X).inverse();
  EXPECT_LT((white_cov(X, e) - classical_cov * (n - k) / n).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(RandomEffects, ZeroBetweenVarianceReducesToPooledOls) {
  // Every entity holds a permutation of the same (x, y) rows, so entity means
  // coincide and the between variance estimate is clamped to zero.
  DesignMatrix d;
  d.names = {"x"};
  const std::vector<std::pair<double, double>> base{{0, 1.0}, {1, 2.5}, {2, 2.0}, {3, 4.5}, {4, 4.0}};
  oracle::Gen g(37);
  std::vector<double> xs, ys;
  for (int e = 0; e < 4; ++e) {
    auto rows = base;
    std::shuffle(rows.begin(), rows.end(), g.rng);
    for (auto [x, y] : rows) {
      xs.push_back(x);
      ys.push_back(y);
      d.entity.push_back(e);
    }
    d.entity_names.push_back("E" + std::to_string(e));
  }
  d.regressors = Eigen::Map<Eigen::MatrixXd>(xs.data(), 20, 1);
  d.response = Eigen::Map<Eigen::VectorXd>(ys.data(), 20);
  const auto re = fit_random_effects(d, classical(Effects::random));
  const auto ols = fit_pooled_ols(d, Covariance::classical);
  ASSERT_TRUE(re.components);
  EXPECT_EQ(re.components->sigma_alpha, 0.0);
  EXPECT_LT((re.coef - ols.coef).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(RandomEffects, MatchesHandBuiltQuasiDemeanedOracleOnBalancedPanel) {
  oracle::Gen g(38);
  const PanelShape s{8, 10, 2, 1.5};
  const auto d = random_panel(g, s);
  const auto re = fit_random_effects(d, classical(Effects::random));
  const double G = s.entities, T = s.periods, K = 3, n = G * T;

  // sigma_eps^2 from dummy-regression residuals.
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(d.rows(), 2 + s.entities);
  D.leftCols(2) = d.regressors;
  for (Eigen::Index i = 0; i < d.rows(); ++i) D(i, 2 + d.entity[static_cast<std::size_t>(i)]) = 1;
  const double s2e = (d.response - D * oracle::ols(D, d.response)).squaredNorm() / (n - G - 2);
  // Textbook balanced between estimator on entity means.
  Eigen::MatrixXd M(s.entities, 3);
  Eigen::VectorXd ym(s.entities);
  M.setZero();
  ym.setZero();
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    const auto e = d.entity[static_cast<std::size_t>(i)];
    M.row(e) += Eigen::RowVector3d(1.0, d.regressors(i, 0), d.regressors(i, 1)) / T;
    ym(e) += d.response(i) / T;
  }
  const double ssr_b = (ym - M * oracle::ols(M, ym)).squaredNorm();
  const double s2a = std::max(0.0, ssr_b / (G - K) - s2e / T);
  ASSERT_TRUE(re.components);
  EXPECT_NEAR(re.components->sigma_eps, std::sqrt(s2e), 1e-10);
  EXPECT_NEAR(re.components->sigma_alpha, std::sqrt(s2a), 1e-10);
  EXPECT_NEAR(re.components->rho_cross + re.components->rho_idio, 1.0, 1e-15);

  const double theta = 1.0 - std::sqrt(s2e / (T * s2a + s2e));
  Eigen::MatrixXd Z(d.rows(), 3);
  Eigen::VectorXd yz(d.rows());
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    const auto e = d.entity[static_cast<std::size_t>(i)];
    Z.row(i) = Eigen::RowVector3d(1.0, d.regressors(i, 0), d.regressors(i, 1)) - theta * M.row(e);
    yz(i) = d.response(i) - theta * ym(e);
  }
  EXPECT_LT((re.coef - oracle::ols(Z, yz)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(RandomEffects, ApproachesFixedEffectsAsEntityVarianceGrows) {
  oracle::Gen g(39);
  const auto d = random_panel(g, {10, 30, 2, 1000.0, false, 0.0});
  const auto re = fit_random_effects(d), fe = fit_fixed_effects(d);
  EXPECT_LT((slopes(re, d) - slopes(fe, d)).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(Hausman, IdentityAndHandCaseAndOrderInvariance) {
  FitResult fe, re;
  fe.names = re.names = {"Intercept", "a", "b"};
  fe.coef = Eigen::Vector3d(0.0, 1.0, 0.0);
  re.coef = Eigen::Vector3d(5.0, 0.0, 0.0);
  fe.cov = 2.0 * Eigen::Matrix3d::Identity();
  re.cov = Eigen::Matrix3d::Identity();
  const auto h = hausman(fe, re);
  EXPECT_NEAR(h.statistic, 1.0, 1e-14);
  EXPECT_EQ(h.df, 2);
  auto twin = re;
  twin.coef = fe.coef;
  const auto same = hausman(fe, twin);
  EXPECT_EQ(same.statistic, 0.0);
  EXPECT_EQ(same.p_value, 1.0);

  oracle::Gen g(40);
  for (int rep = 0; rep < 20; ++rep) {
    Eigen::MatrixXd A = Eigen::MatrixXd::Random(3, 3);
    fe.cov = A * A.transpose() + 2.0 * Eigen::Matrix3d::Identity();
    re.cov = 0.5 * Eigen::Matrix3d::Identity();
    fe.coef = g.normals(3);
    re.coef = g.normals(3);
    EXPECT_NEAR(hausman(fe, re, {"a", "b"}).statistic, hausman(fe, re, {"b", "a"}).statistic, 1e-12);
  }
}

TEST(Hausman, IndefiniteDifferenceUsesPseudoInverse) {
  FitResult fe, re;
  fe.names = re.names = {"Intercept", "a", "b"};
  fe.coef = Eigen::Vector3d(0, 1, 1);
  re.coef = Eigen::Vector3d(0, 0, 0);
  fe.cov = Eigen::Vector3d(1, 1, 0.5).asDiagonal();
  re.cov = Eigen::Vector3d(1, 0.5, 1).asDiagonal();
  const auto h = hausman(fe, re);
  EXPECT_TRUE(h.pseudo_inverse);
  EXPECT_GE(h.statistic, 0.0);
}

TEST(ChiSquare, SurvivalValues) {
  EXPECT_EQ(chi2_survival(0.0, 3), 1.0);
  const double x = 6.4912;
  EXPECT_NEAR(chi2_survival(x, 6), std::exp(-x / 2) * (1 + x / 2 + x * x / 8), 1e-14);
  EXPECT_NEAR(chi2_survival(x, 6), 0.3705, 5e-4);
  EXPECT_LT(chi2_survival(3434.23, 10), 1e-300);
  EXPECT_THROW(chi2_survival(1.0, 0), DomainError);
}

TEST(LongRun, Examples) {
  EXPECT_EQ(long_run_effect(0.25, 0.0), 0.25);
  EXPECT_NEAR(long_run_effect(-0.2778, 0.2918), -0.3923, 5e-4);
  EXPECT_NEAR(long_run_effect(0.3728, 0.2918), 0.5264, 5e-4);
  EXPECT_THROW(long_run_effect(1.0, 1.0), DomainError);
  EXPECT_THROW(long_run_effect(1.0, -1.2), DomainError);
}

TEST(Stars, Thresholds) {
  EXPECT_EQ(significance_stars(0.005), "***");
  EXPECT_EQ(significance_stars(0.03), "**");
  EXPECT_EQ(significance_stars(0.07), "*");
  EXPECT_EQ(significance_stars(0.2), "");
}

TEST(Egls, LowerSamplingVarianceUnderHeteroskedasticity) {
  oracle::Gen g(41);
  std::vector<double> sig;
  for (int e = 0; e < 8; ++e) sig.push_back(0.25 * (e + 1));
  ModelSpec ols = classical(Effects::fixed), egls = ols;
  egls.weights = Weights::cross_section_egls;
  Eigen::VectorXd s1 = Eigen::VectorXd::Zero(2), s2 = s1, q1 = s1, q2 = s1;
  const int reps = 200;
  for (int r = 0; r < reps; ++r) {
    const auto d = random_panel(g, {8, 40, 2, 1.0}, sig);
    const Eigen::VectorXd a = slopes(fit_model(d, ols), d), b = slopes(fit_model(d, egls), d);
    s1 += a;
    q1 += a.cwiseProduct(a);
    s2 += b;
    q2 += b.cwiseProduct(b);
  }
  for (Eigen::Index j = 0; j < 2; ++j) {
    const double v_ols = q1(j) / reps - std::pow(s1(j) / reps, 2);
    const double v_egls = q2(j) / reps - std::pow(s2(j) / reps, 2);
    EXPECT_LT(v_egls, v_ols) << "slope " << j;
  }
}

TEST(Egls, HomoskedasticDataGivesNearlyUnweightedEstimates) {
  oracle::Gen g(42);
  const auto d = random_panel(g, {6, 200, 2});
  ModelSpec s = classical(Effects::fixed);
  const auto ols = fit_model(d, s);
  s.weights = Weights::cross_section_egls;
  const auto w = fit_model(d, s);
  for (Eigen::Index j = 0; j < 2; ++j) {
    const auto& nm = d.names[static_cast<std::size_t>(j)];
    EXPECT_LT(std::abs(w.coefficient(nm) - ols.coefficient(nm)), 0.5 * ols.std_error(nm));
  }
}

TEST(Egls, IteratedWeightsAreStable) {
  oracle::Gen g(43);
  const auto d = random_panel(g, {6, 300, 2}, {0.5, 1, 1.5, 2, 2.5, 3});
  ModelSpec s = classical(Effects::fixed);
  s.weights = Weights::cross_section_egls;
  s.egls_iterations = 2;
  const auto two = fit_model(d, s);
  s.egls_iterations = 3;
  const auto three = fit_model(d, s);
  EXPECT_LT((slopes(two, d) - slopes(three, d)).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(Egls, ThinEntityFallsBackToPooledVariance) {
  oracle::Gen g(44);
  auto d = random_panel(g, {4, 20, 2});
  std::vector<Eigen::Index> keep;
  int seen = 0;
  for (Eigen::Index i = 0; i < d.rows(); ++i)
    if (d.entity[static_cast<std::size_t>(i)] != 0 || seen++ < 2) keep.push_back(i);
  ModelSpec s = classical(Effects::fixed);
  s.weights = Weights::cross_section_egls;
  const auto f = fit_model(d.select_rows(keep), s);
  bool flagged = false;
  for (const auto& fl : f.flags) flagged |= fl.find("pooled") != std::string::npos;
  EXPECT_TRUE(flagged);
}

namespace {

DesignMatrix ar1_panel(oracle::Gen& g, int N, int T, double phi, double beta) {
  DesignMatrix d;
  d.response_name = "y";
  d.names = {"x"};
  std::vector<double> xs, ys;
  for (int e = 0; e < N; ++e) {
    d.entity_names.push_back("E" + std::to_string(e));
    const double alpha = g.normal(0, 0.5);
    double y = alpha / (1 - phi);
    for (int t = -50; t < T; ++t) {
      const double x = g.normal();
      y = alpha + phi * y + beta * x + g.normal();
      if (t < 0) continue;
      xs.push_back(x);
      ys.push_back(y);
      d.entity.push_back(e);
      d.dates.push_back(Date(t));
    }
  }
  const auto n = static_cast<Eigen::Index>(ys.size());
  d.regressors = Eigen::Map<Eigen::MatrixXd>(xs.data(), n, 1);
  d.response = Eigen::Map<Eigen::VectorXd>(ys.data(), n);
  return d;
}

}  // namespace

TEST(Dynamic, RecoversPersistenceWithinMonteCarloError) {
  oracle::Gen g(45);
  ModelSpec s = classical(Effects::fixed);
  s.dynamic = true;
  const int reps = 10;
  double sum = 0, sq = 0;
  for (int r = 0; r < reps; ++r) {
    const auto f = fit_model(ar1_panel(g, 18, 500, 0.3, 1.0), s);
    ASSERT_TRUE(f.phi);
    sum += *f.phi;
    sq += *f.phi * *f.phi;
  }
  const double mean = sum / reps, sd = std::sqrt((sq - reps * mean * mean) / (reps - 1));
  EXPECT_LT(std::abs(mean - 0.3), 3 * sd / std::sqrt(reps) + 1e-12);
}

TEST(Dynamic, NoPersistenceMatchesStaticSlopes) {
  oracle::Gen g(46);
  const auto d = ar1_panel(g, 10, 300, 0.0, 1.0);
  ModelSpec s = classical(Effects::fixed);
  const auto stat = fit_model(d, s);
  s.dynamic = true;
  const auto dyn = fit_model(d, s);
  EXPECT_LT(std::abs(stat.coefficient("x") - dyn.coefficient("x")), 3 * stat.std_error("x"));
  EXPECT_LT(std::abs(*dyn.phi), 3 * dyn.std_error("y(-1)"));
}

TEST(Dynamic, LagIsGapAware) {
  oracle::Gen g(47);
  auto d = ar1_panel(g, 2, 10, 0.2, 1.0);
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < d.rows(); ++i)
    if (!(d.entity[static_cast<std::size_t>(i)] == 1 && d.dates[static_cast<std::size_t>(i)] == Date(5))) keep.push_back(i);
  std::size_t dropped = 0;
  const auto lagged = add_lagged_response(d.select_rows(keep), &dropped);
  EXPECT_EQ(dropped, 3u);  // first row of each entity plus the row after the gap
  const int lag = lagged.column("y(-1)");
  ASSERT_GE(lag, 0);
  EXPECT_DOUBLE_EQ(lagged.regressors(1, lag), d.response(1));
}
