// Acceptance checks. Each criterion prints one "criterion N: PASS|FAIL" line;
// the exit status is nonzero if any selected criterion fails.

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include "oracles/fixtures.hpp"
#include "oracles/oracles.hpp"
#include "panelcrypt/panelcrypt.hpp"

using namespace panelcrypt;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(10);
  s << v;
  return s.str();
}

// --- shared generators ---------------------------------------------------

estimators::DesignMatrix random_panel(oracle::Gen& g, int N, int Tmax, int k) {
  estimators::DesignMatrix d;
  for (int j = 0; j < k; ++j) d.names.push_back("x" + std::to_string(j + 1));
  std::vector<double> xs, ys;
  for (int e = 0; e < N; ++e) {
    d.entity_names.push_back("E" + std::to_string(e));
    const double alpha = g.normal();
    const int T = g.integer(2, Tmax);
    for (int t = 0; t < T; ++t) {
      double y = alpha + g.normal();
      for (int j = 0; j < k; ++j) {
        const double x = g.normal() + 0.5 * alpha;
        xs.push_back(x);
        y += (j + 1) * 0.5 * x;
      }
      ys.push_back(y);
      d.entity.push_back(e);
      d.dates.push_back(Date(t));
    }
  }
  const auto n = static_cast<Eigen::Index>(ys.size());
  d.response = Eigen::Map<Eigen::VectorXd>(ys.data(), n);
  d.regressors = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(xs.data(), n, k);
  return d;
}

estimators::DesignMatrix cross_section(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  estimators::DesignMatrix d;
  d.response = y;
  d.regressors = X;
  for (Eigen::Index j = 0; j < X.cols(); ++j) d.names.push_back("x" + std::to_string(j + 1));
  d.entity.assign(static_cast<std::size_t>(y.size()), 0);
  d.entity_names = {"E"};
  return d;
}

estimators::DesignMatrix heteroskedastic_cross_section(oracle::Gen& g, Eigen::Index n, bool x2_relevant) {
  Eigen::MatrixXd X(n, 2);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    X(i, 0) = g.normal();
    X(i, 1) = g.normal();
    y(i) = 1.0 + 0.5 * X(i, 0) + (x2_relevant ? X(i, 1) : 0.0) + (1.0 + 0.3 * std::abs(X(i, 0))) * g.normal();
  }
  return cross_section(X, y);
}

Series daily(const std::vector<double>& v) {
  Series s;
  const Date d0(2021, 1, 1);
  for (std::size_t i = 0; i < v.size(); ++i) s.push(d0 + static_cast<int>(i), v[i]);
  return s;
}

std::map<std::string, std::vector<std::string>> read_rows(const fs::path& file, std::size_t key_cols) {
  std::map<std::string, std::vector<std::string>> out;
  std::ifstream in(file);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    const auto cells = csv::split(line);
    std::string key;
    for (std::size_t i = 0; i < key_cols; ++i) key += (i ? "|" : "") + cells[i];
    out[key] = cells;
  }
  return out;
}

// --- criteria ------------------------------------------------------------

Outcome parkinson_accuracy() {
  Outcome o;
  oracle::Gen g(1001);
  std::vector<std::array<double, 3>> triples;
  for (int i = 0; i < 10000; ++i) {
    const double l = g.uniform(1e-4, 1e5), h = l * g.uniform(1.0, 3.0), c = g.uniform(l, h);
    triples.push_back({h, l, c});
  }
  const auto t0 = Clock::now();
  std::vector<double> got;
  got.reserve(triples.size());
  for (const auto& [h, l, c] : triples) got.push_back(riskmetrics::parkinson(h, l, c));
  const double elapsed = seconds_since(t0);
  double worst = 0.0;
  for (std::size_t i = 0; i < triples.size(); ++i) {
    const double ref = oracle::parkinson(triples[i][0], triples[i][1], triples[i][2]);
    if (ref > 0) worst = std::max(worst, std::abs(got[i] - ref) / ref);
  }
  o.require(worst <= 1e-12, "max relative error " + fmt(worst));
  o.require(riskmetrics::parkinson(5.0, 5.0, 5.0) == 0.0, "H = L is not zero");
  o.require(elapsed < 1.0, "runtime " + fmt(elapsed) + " s");
  o.detail += (o.detail.empty() ? "" : "; ") + std::string("max rel err ") + fmt(worst);
  return o;
}

Outcome gini_accuracy() {
  Outcome o;
  oracle::Gen g(1002);
  double worst = 0.0;
  for (int c = 0; c < 1000; ++c) {
    std::vector<double> x(static_cast<std::size_t>(g.integer(1, 12)));
    for (auto& v : x) v = g.uniform(0.0, 100.0);
    worst = std::max(worst, std::abs(decentralization::gini(x) - oracle::gini_pairwise(x)));
  }
  o.require(worst <= 1e-12, "max abs error " + fmt(worst));
  o.require(decentralization::gini(std::vector<double>{0, 0, 0, 1}) == 0.75, "{0,0,0,1} is not 0.75");
  if (o.pass) o.detail = "max abs err " + fmt(worst);
  return o;
}

Outcome composite_rows() {
  Outcome o;
  std::ifstream in(fs::path(PANELCRYPT_DATA_DIR) / "published_gini_components.csv");
  std::string line;
  std::getline(in, line);
  int rows = 0;
  while (std::getline(in, line)) {
    const auto c = csv::split(line);
    std::array<double, 5> comp{};
    for (std::size_t i = 0; i < 5; ++i) comp[i] = std::stod(c[i + 1]);
    const double got = decentralization::composite_index(comp), want = std::stod(c[6]);
    ++rows;
    if (std::abs(got - want) > 5e-5) o.require(false, c[0] + " " + fmt(got) + " vs " + c[6]);
  }
  o.require(rows == 18, "expected 18 rows, read " + std::to_string(rows));
  if (o.pass) o.detail = "18 rows within 5e-5";
  return o;
}

Outcome fixed_effects_equals_dummies() {
  Outcome o;
  oracle::Gen g(1004);
  double worst = 0.0;
  int cases = 0;
  while (cases < 200) {
    const int N = g.integer(1, 5), k = g.integer(1, 3);
    const auto d = random_panel(g, N, 8, k);
    if (d.rows() <= N + k) continue;
    ++cases;
    estimators::ModelSpec s;
    s.covariance = estimators::Covariance::classical;
    const auto fe = estimators::fit_fixed_effects(d, s);
    const Eigen::VectorXd ref = oracle::lsdv_slopes(d.regressors, d.response, d.entity, N);
    for (Eigen::Index j = 0; j < k; ++j)
      worst = std::max(worst, std::abs(fe.coefficient(d.names[static_cast<std::size_t>(j)]) - ref(j)));
  }
  o.require(worst <= 1e-8, "max abs error " + fmt(worst));
  if (o.pass) o.detail = "200 panels, max abs err " + fmt(worst);
  return o;
}

Outcome parameter_recovery() {
  Outcome o;
  const auto t0 = Clock::now();
  auto params = pipeline::parse_synth_params(fs::path(PANELCRYPT_DATA_DIR) / "synthetic_params.conf");
  params.entities = 18;
  params.periods = 1789;
  const int reps = 50;
  estimators::ModelSpec ols;
  ols.effects = estimators::Effects::fixed;
  ols.covariance = estimators::Covariance::classical;
  auto egls = ols;
  egls.weights = estimators::Weights::cross_section_egls;

  std::vector<std::string> names;
  std::vector<std::vector<double>> a, b;
  for (int r = 0; r < reps; ++r) {
    params.seed = 5000 + static_cast<std::uint64_t>(r);
    const auto sim = pipeline::simulate_dgp(params);
    const auto f1 = estimators::fit_model(sim.design, ols);
    const auto f2 = estimators::fit_model(sim.design, egls);
    if (names.empty()) {
      for (const auto& n : sim.design.names)
        if (f1.index(n) && params.beta.count(n)) names.push_back(n);
      a.assign(names.size(), {});
      b.assign(names.size(), {});
    }
    for (std::size_t j = 0; j < names.size(); ++j) {
      a[j].push_back(f1.coefficient(names[j]));
      b[j].push_back(f2.coefficient(names[j]));
    }
  }
  auto moments = [](const std::vector<double>& v) {
    double m = 0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return std::pair{m, s / static_cast<double>(v.size() - 1)};
  };
  for (std::size_t j = 0; j < names.size(); ++j) {
    const double truth = params.beta.at(names[j]);
    const auto [m1, v1] = moments(a[j]);
    const auto [m2, v2] = moments(b[j]);
    o.require(std::abs(m1 - truth) <= 3.0 * std::sqrt(v1 / reps),
              names[j] + " OLS mean " + fmt(m1) + " vs " + fmt(truth));
    o.require(std::abs(m2 - truth) <= 3.0 * std::sqrt(v2 / reps),
              names[j] + " EGLS mean " + fmt(m2) + " vs " + fmt(truth));
    o.require(v2 < v1, names[j] + " EGLS variance " + fmt(v2) + " not below OLS " + fmt(v1));
  }
  const double elapsed = seconds_since(t0);
  o.require(elapsed < 120.0, "runtime " + fmt(elapsed) + " s");
  if (o.pass) o.detail = std::to_string(names.size()) + " slopes, " + fmt(elapsed) + " s";
  return o;
}

Outcome long_run_arithmetic() {
  Outcome o;
  const auto book = pipeline::load_coefficients(fs::path(PANELCRYPT_DATA_DIR) / "published_coefficients.csv");
  const double phi = pipeline::lookup(book, "fe_dynamic", "PriceRisk(-1)")->estimate;
  const double mv = pipeline::lookup(book, "fe_dynamic", "MarketVolatility")->estimate;
  const double inter = pipeline::lookup(book, "fe_dynamic", "HyFi*MarketVolatility")->estimate;
  const double lr_int = estimators::long_run_effect(inter, phi), lr_mv = estimators::long_run_effect(mv, phi);
  o.require(std::abs(lr_int + 0.3923) <= 5e-4, "interaction long run " + fmt(lr_int));
  o.require(std::abs(lr_mv - 0.5264) <= 5e-4, "volatility long run " + fmt(lr_mv));
  o.require(std::abs((mv + inter) - 0.0950) <= 5e-4, "hyfi net slope " + fmt(mv + inter));
  if (o.pass) o.detail = fmt(lr_int) + ", " + fmt(lr_mv) + ", " + fmt(mv + inter);
  return o;
}

Outcome chi_square_tail() {
  Outcome o;
  const double p = estimators::chi2_survival(6.4912, 6);
  o.require(std::abs(p - 0.3705) <= 5e-4, "p = " + fmt(p));
  if (o.pass) o.detail = "p = " + fmt(p);
  return o;
}

Outcome quantile_solver() {
  Outcome o;
  oracle::Gen g(1008);
  double worst = -1e300;
  for (int c = 0; c < 500; ++c) {
    const int k = g.integer(1, 3), n = g.integer(k + 1, 12);
    Eigen::MatrixXd X(n, k);
    X.col(0).setOnes();
    for (int i = 0; i < n; ++i)
      for (int j = 1; j < k; ++j) X(i, j) = g.normal();
    const Eigen::VectorXd y = g.normals(n);
    const double tau = g.uniform(0.05, 0.95);
    const auto sol = quantreg::solve_quantile(X, y, tau);
    const double gap = oracle::check_loss(y - X * sol.beta, tau) - oracle::min_basic_loss(X, y, tau);
    worst = std::max(worst, gap);
  }
  o.require(worst <= 1e-8, "loss above best basic solution by " + fmt(worst));
  for (int n = 1; n <= 12; ++n) {
    for (int rep = 0; rep < 20; ++rep) {
      std::vector<double> v(static_cast<std::size_t>(n));
      for (auto& x : v) x = std::round(g.uniform(-10, 10) * 2) / 2;
      estimators::DesignMatrix d;
      d.response = Eigen::Map<Eigen::VectorXd>(v.data(), n);
      d.regressors.resize(n, 0);
      d.entity.assign(static_cast<std::size_t>(n), 0);
      d.entity_names = {"E"};
      const auto fit = quantreg::fit_quantile(d, 0.5);
      double best = 1e300;
      for (double cand : v) best = std::min(best, oracle::check_loss(d.response.array() - cand, 0.5));
      if (fit.coef(0) != oracle::midpoint_median(v) || fit.check_loss > best + 1e-12) {
        o.require(false, "median mismatch at n = " + std::to_string(n));
        return o;
      }
    }
  }
  if (o.pass) o.detail = "worst gap " + fmt(worst);
  return o;
}

Outcome quantile_inference() {
  Outcome o;
  oracle::Gen g(1009);
  const Eigen::VectorXd r = g.normals(1000);
  for (double c : {1e-3, 0.5, 7.0, 1e4}) {
    const double a = quantreg::sparsity_hall_sheather(r, 0.3).value;
    const double b = quantreg::sparsity_hall_sheather(c * r, 0.3).value;
    o.require(std::abs(b - c * a) <= 1e-10 * c * a, "sparsity not homogeneous at c = " + fmt(c));
  }

  quantreg::QuantileOptions opt;
  std::map<Eigen::Index, double> mean_se;
  const int se_reps = 20;
  for (Eigen::Index n : {200, 800, 3200}) {
    double s = 0;
    for (int rep = 0; rep < se_reps; ++rep) s += quantreg::fit_quantile(heteroskedastic_cross_section(g, n, true), 0.5, opt).se(1);
    mean_se[n] = s / se_reps;
  }
  for (auto [small, large] : {std::pair<Eigen::Index, Eigen::Index>{200, 800}, {800, 3200}}) {
    const double ratio = mean_se[small] / mean_se[large];
    o.require(std::abs(ratio / 2.0 - 1.0) <= 0.15, "SE ratio " + std::to_string(small) + "/" +
                                                         std::to_string(large) + " = " + fmt(ratio));
  }

  const int reps = 500;
  int rejections = 0;
  for (int rep = 0; rep < reps; ++rep) {
    const auto d = heteroskedastic_cross_section(g, 300, false);
    if (quantreg::quasi_lr(d, 0.5, {"x2"}, opt).p_value < 0.05) ++rejections;
  }
  const double size = static_cast<double>(rejections) / reps;
  o.require(std::abs(size - 0.05) <= 0.02, "quasi-LR size " + fmt(size));
  o.detail += (o.detail.empty() ? "" : "; ") + std::string("SE ratios ") + fmt(mean_se[200] / mean_se[800]) + ", " +
              fmt(mean_se[800] / mean_se[3200]) + "; QLR size " + fmt(size);
  return o;
}

Outcome cips_truncation() {
  Outcome o;
  const auto low = diagnostics::cips_from_cadf(std::vector<double>(18, -9.5), 1789);
  o.require(std::abs(low.truncated_statistic + 6.19) <= 1e-12, "truncated CIPS " + fmt(low.truncated_statistic));
  oracle::Gen g(1010);
  std::vector<Series> panel;
  for (int e = 0; e < 6; ++e) {
    std::vector<double> w{0.0};
    for (int t = 1; t < 300; ++t) w.push_back(w.back() + g.normal());
    panel.push_back(daily(w));
  }
  const auto c = diagnostics::cips(panel);
  double mean = 0;
  for (double t : c.cadf) mean += t;
  mean /= static_cast<double>(c.cadf.size());
  o.require(std::abs(c.statistic - mean) <= 1e-12, "CIPS " + fmt(c.statistic) + " vs CADF mean " + fmt(mean));
  if (o.pass) o.detail = "truncated " + fmt(low.truncated_statistic);
  return o;
}

Outcome dependence_tests() {
  Outcome o;
  oracle::Gen g(1011);
  std::vector<double> e;
  for (int t = 0; t < 100; ++t) e.push_back(g.normal());
  const auto same = diagnostics::dependence_tests({daily(e), daily(e)});
  for (const auto& r : same) {
    if (r.test == "Pesaran-CD") o.require(std::abs(r.statistic - 10.0) <= 1e-9, "CD " + fmt(r.statistic));
    if (r.test == "BP-LM") o.require(std::abs(r.statistic - 100.0) <= 1e-9, "LM " + fmt(r.statistic));
  }
  const int reps = 500;
  int rejections = 0;
  for (int rep = 0; rep < reps; ++rep) {
    std::vector<Series> panel;
    for (int i = 0; i < 18; ++i) {
      std::vector<double> v(500);
      for (auto& x : v) x = g.normal();
      panel.push_back(daily(v));
    }
    for (const auto& r : diagnostics::dependence_tests(panel))
      if (r.test == "Pesaran-CD" && r.p_value < 0.05) ++rejections;
  }
  const double size = static_cast<double>(rejections) / reps;
  o.require(std::abs(size - 0.05) <= 0.02, "CD size " + fmt(size));
  if (o.pass) o.detail = "CD size " + fmt(size);
  return o;
}

Outcome bernoulli_moments() {
  Outcome o;
  for (int ones : {1, 50, 174, 300, 500, 900}) {
    std::vector<double> v(1000, 0.0);
    std::fill(v.begin(), v.begin() + ones, 1.0);
    const double p = ones / 1000.0;
    const auto d = diagnostics::describe(v);
    o.require(std::abs(*d.skewness - oracle::bernoulli_skewness(p)) <= 1e-10, "skewness at p = " + fmt(p));
    o.require(std::abs(*d.kurtosis - oracle::bernoulli_kurtosis(p)) <= 1e-10, "kurtosis at p = " + fmt(p));
    if (ones == 174) {
      o.require(std::abs(*d.skewness / 1.724 - 1.0) <= 0.005, "HyFi skewness " + fmt(*d.skewness));
      o.require(std::abs(*d.kurtosis / 3.972 - 1.0) <= 0.005, "HyFi kurtosis " + fmt(*d.kurtosis));
      if (o.pass) o.detail = "p = 0.174: " + fmt(*d.skewness) + ", " + fmt(*d.kurtosis);
    }
  }
  return o;
}

Outcome figure_identities() {
  Outcome o;
  const auto book = pipeline::load_coefficients(fs::path(PANELCRYPT_DATA_DIR) / "published_coefficients.csv");
  const auto dir = fixture::scratch("acceptance_figures");
  const auto files = pipeline::emit_figures(pipeline::figure_inputs_from_book(book), dir);
  o.require(files.skipped.empty(), "figures skipped");

  std::ifstream in(dir / "fig4_volatility_response.csv");
  std::string line;
  std::getline(in, line);
  std::map<std::string, std::map<std::string, double>> groups;
  while (std::getline(in, line)) {
    const auto c = csv::split(line);
    groups[c[0] + "|" + c[3]][c[2]] = std::stod(c[4]);
  }
  double worst = 0.0;
  for (const auto& [k, v] : groups)
    worst = std::max(worst, std::abs(v.at("hyfi") - v.at("non_hyfi") - v.at("difference")));
  o.require(!groups.empty() && worst <= 1e-12, "fig4 identity off by " + fmt(worst));

  const auto fig6 = read_rows(dir / "fig6_quantile_path.csv", 2);
  auto q = [&](const std::string& tau) { return std::stod(fig6.at("HyFi|" + tau)[2]); };
  o.require(std::abs(q("0.1") + 0.0074) <= 5e-5 && std::abs(q("0.9") + 0.0167) <= 5e-5,
            "fig6 HyFi path " + fmt(q("0.1")) + " .. " + fmt(q("0.9")));
  const auto fig7 = read_rows(dir / "fig7_attenuation.csv", 1);
  const double pre = std::stod(fig7.at("pre")[1]), post = std::stod(fig7.at("post")[1]);
  o.require(std::abs(pre + 0.3191) <= 5e-5 && std::abs(post + 0.2869) <= 5e-5,
            "fig7 " + fmt(pre) + ", " + fmt(post));
  if (o.pass) o.detail = "fig4 identity " + fmt(worst) + "; fig7 " + fmt(pre) + " -> " + fmt(post);
  return o;
}

Outcome report_determinism() {
  Outcome o;
  const auto dir = fixture::scratch("acceptance_report");
  const fs::path data = PANELCRYPT_DATA_DIR;
  auto write_config = [&](const std::string& name) {
    const auto file = dir / (name + ".conf");
    std::ifstream in(data / "example_report.conf");
    std::ofstream out(file);
    std::string line;
    while (std::getline(in, line)) {
      if (line.rfind("simulate_params", 0) == 0) line = "simulate_params = " + (data / "synthetic_params.conf").string();
      if (line.rfind("published_coefficients", 0) == 0)
        line = "published_coefficients = " + (data / "published_coefficients.csv").string();
      if (line.rfind("output_dir", 0) == 0) line = "output_dir = " + (dir / name).string();
      out << line << '\n';
    }
    return file;
  };
  const auto t0 = Clock::now();
  for (const char* name : {"first", "second"}) {
    const std::string cmd = std::string(PANELCRYPT_CLI) + " report --config " + write_config(name).string() + " > " +
                            (dir / (std::string(name) + ".log")).string() + " 2>&1";
    if (std::system(cmd.c_str()) != 0) {
      o.require(false, std::string(name) + " run failed: " + fixture::slurp(dir / (std::string(name) + ".log")));
      return o;
    }
  }
  const double elapsed = seconds_since(t0);
  const auto a = pipeline::detail::list_files(dir / "first"), b = pipeline::detail::list_files(dir / "second");
  o.require(a == b && !a.empty(), "file lists differ");
  for (const auto& f : a)
    if (fixture::slurp(dir / "first" / f) != fixture::slurp(dir / "second" / f)) o.require(false, f + " differs");
  o.require(elapsed < 300.0, "runtime " + fmt(elapsed) + " s");
  if (o.pass) o.detail = std::to_string(a.size()) + " files identical, " + fmt(elapsed) + " s for two runs";
  return o;
}

const std::vector<std::pair<std::string, std::function<Outcome()>>> kCriteria{
    {"Parkinson estimator accuracy", parkinson_accuracy},
    {"Gini coefficient accuracy", gini_accuracy},
    {"Composite decentralization rows", composite_rows},
    {"Fixed effects equal dummy-variable regression", fixed_effects_equals_dummies},
    {"Synthetic parameter recovery", parameter_recovery},
    {"Long-run effect arithmetic", long_run_arithmetic},
    {"Chi-square tail probability", chi_square_tail},
    {"Quantile solver optimality", quantile_solver},
    {"Quantile inference", quantile_inference},
    {"CIPS truncation", cips_truncation},
    {"Cross-sectional dependence tests", dependence_tests},
    {"Descriptive moments", bernoulli_moments},
    {"Figure data identities", figure_identities},
    {"Report determinism", report_determinism},
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"panelcrypt acceptance checks"};
  int only = 0;
  app.add_option("--criterion", only, "Run a single criterion (1-based)")
      ->check(CLI::Range(1, static_cast<int>(kCriteria.size())));
  CLI11_PARSE(app, argc, argv);

  bool all_pass = true;
  for (std::size_t i = 0; i < kCriteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (only && only != id) continue;
    Outcome out;
    try {
      out = kCriteria[i].second();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    all_pass &= out.pass;
    std::cout << "criterion " << id << ": " << (out.pass ? "PASS" : "FAIL") << " " << kCriteria[i].first;
    if (!out.detail.empty()) std::cout << " (" << out.detail << ")";
    std::cout << std::endl;
  }
  return all_pass ? 0 : 1;
}
