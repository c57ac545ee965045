#pragma once

// End-to-end report: load or synthesize a panel, then run the diagnostics,
// baseline, quantile and split fragments, writing CSV tables, figure data and
// a manifest. A failing fragment is recorded and the others still run.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "panelcrypt/core/csv.hpp"
#include "panelcrypt/core/error.hpp"
#include "panelcrypt/diagnostics.hpp"
#include "panelcrypt/estimators.hpp"
#include "panelcrypt/panel_store.hpp"
#include "panelcrypt/pipeline/config.hpp"
#include "panelcrypt/pipeline/design.hpp"
#include "panelcrypt/pipeline/figures.hpp"
#include "panelcrypt/pipeline/simulate.hpp"
#include "panelcrypt/quantreg.hpp"

namespace panelcrypt::pipeline {

// Ordered `[section]` blocks of text lines.
class Manifest {
 public:
  void add(const std::string& section, std::string line) {
    auto it = std::find_if(sections_.begin(), sections_.end(),
                           [&](const auto& s) { return s.first == section; });
    if (it == sections_.end()) {
      sections_.push_back({section, {}});
      it = std::prev(sections_.end());
    }
    it->second.push_back(std::move(line));
  }

  void write(const std::filesystem::path& file) const {
    std::ofstream out(file);
    if (!out) throw Error("cannot write " + file.string());
    for (std::size_t i = 0; i < sections_.size(); ++i) {
      if (i) out << '\n';
      out << '[' << sections_[i].first << "]\n";
      for (const auto& l : sections_[i].second) out << l << '\n';
    }
  }

 private:
  std::vector<std::pair<std::string, std::vector<std::string>>> sections_;
};

struct ReportOutcome {
  std::filesystem::path output_dir;
  std::map<std::string, std::string> failures;  // fragment -> message
  bool ok() const { return failures.empty(); }
};

namespace detail {

using estimators::Covariance;
using estimators::DesignMatrix;
using estimators::Effects;
using estimators::FitResult;
using estimators::ModelSpec;
using estimators::Weights;

class Table {
 public:
  Table(const std::filesystem::path& file, const std::vector<std::string>& header) : out_(file) {
    if (!out_) throw Error("cannot write " + file.string());
    row(header);
  }
  void row(const std::vector<std::string>& cells) {
    csv::Row r;
    for (const auto& c : cells) r.push_back(c);
    out_ << csv::join(r) << '\n';
  }

 private:
  std::ofstream out_;
};

inline std::string cell(double est, double se) {
  const double p = estimators::normal_p_value(est, se);
  return csv::format_fixed(est, 4) + estimators::significance_stars(p) + " (" + csv::format_fixed(se, 4) + ")";
}

inline std::string join_flags(const std::vector<std::string>& flags) {
  std::string s;
  for (const auto& f : flags) s += (s.empty() ? "" : "; ") + f;
  return s.empty() ? "none" : s;
}

struct LabeledFit {
  std::string label;
  FitResult fit;
};

struct LabeledDesign {
  std::string label;
  DesignResult design;
};

inline void record_fit(Manifest& m, const std::string& label, const FitResult& f) {
  m.add("fits", label + ": estimator=" + f.estimator + " nobs=" + std::to_string(f.nobs) +
                    " entities=" + std::to_string(f.n_entities) + " periods=" + std::to_string(f.n_periods) +
                    " flags=" + join_flags(f.flags));
}

inline void record_ledger(Manifest& m, const std::string& label, const DropLedger& l) {
  std::string line = label + ": rows_in=" + std::to_string(l.rows_in) + " rows_used=" + std::to_string(l.rows_used);
  for (const auto& [reason, n] : l.dropped) line += " [" + reason + "=" + std::to_string(n) + "]";
  m.add("ledger", line);
  for (const auto& n : l.notes) m.add("ledger", label + ": " + n);
}

inline void write_ledgers(const std::filesystem::path& file, const std::vector<LabeledDesign>& designs) {
  Table t(file, {"design", "rows_in", "rows_used", "reason", "rows_dropped"});
  for (const auto& d : designs) {
    const auto& l = d.design.ledger;
    if (l.dropped.empty())
      t.row({d.label, std::to_string(l.rows_in), std::to_string(l.rows_used), "", "0"});
    for (const auto& [reason, n] : l.dropped)
      t.row({d.label, std::to_string(l.rows_in), std::to_string(l.rows_used), reason, std::to_string(n)});
  }
}

// Union of coefficient names across fits, in first-seen order with the lag last.
inline std::vector<std::string> term_rows(const std::vector<LabeledFit>& fits) {
  std::vector<std::string> terms;
  for (const auto& f : fits)
    for (const auto& n : f.fit.names)
      if (n != lag_name() && std::find(terms.begin(), terms.end(), n) == terms.end()) terms.push_back(n);
  for (const auto& f : fits)
    if (f.fit.index(lag_name())) {
      terms.push_back(lag_name());
      break;
    }
  return terms;
}

inline void write_coefficients(const std::filesystem::path& file, const std::vector<LabeledFit>& fits) {
  Table t(file, {"model", "term", "estimate", "std_error", "z", "p_value", "stars"});
  for (const auto& f : fits)
    for (std::size_t j = 0; j < f.fit.names.size(); ++j) {
      const auto i = static_cast<Eigen::Index>(j);
      const double est = f.fit.coef(i), se = f.fit.se(i);
      const double z = se > 0.0 ? est / se : 0.0;
      const double p = estimators::normal_p_value(est, se);
      t.row({f.label, f.fit.names[j], num(est), num(se), num(z), num(p), estimators::significance_stars(p)});
    }
}

inline std::vector<std::pair<std::string, std::string>> fit_statistics(const FitResult& f) {
  std::vector<std::pair<std::string, std::string>> s;
  if (f.components) {
    s.push_back({"cross_section_sd", num(f.components->sigma_alpha)});
    s.push_back({"cross_section_rho", num(f.components->rho_cross)});
    s.push_back({"idiosyncratic_sd", num(f.components->sigma_eps)});
    s.push_back({"idiosyncratic_rho", num(f.components->rho_idio)});
  }
  s.push_back({"r_squared", num(f.r2)});
  s.push_back({"adj_r_squared", num(f.adj_r2)});
  s.push_back({"regression_se", num(f.sigma)});
  s.push_back({"ssr", num(f.ssr)});
  s.push_back({"entities", std::to_string(f.n_entities)});
  s.push_back({"periods", std::to_string(f.n_periods)});
  s.push_back({"observations", std::to_string(f.nobs)});
  return s;
}

inline void write_summary(const std::filesystem::path& file, const std::vector<LabeledFit>& fits,
                          const std::vector<std::pair<std::string, std::vector<std::pair<std::string, std::string>>>>& extra) {
  Table t(file, {"model", "statistic", "value"});
  for (const auto& f : fits)
    for (const auto& [k, v] : fit_statistics(f.fit)) t.row({f.label, k, v});
  for (const auto& [label, stats] : extra)
    for (const auto& [k, v] : stats) t.row({label, k, v});
}

// Publication layout: one column per model, "estimate*** (se)" cells.
inline void write_table(const std::filesystem::path& file, const std::vector<LabeledFit>& fits,
                        const std::vector<std::pair<std::string, std::vector<std::string>>>& footer) {
  std::vector<std::string> header{"term"};
  for (const auto& f : fits) header.push_back(f.label);
  Table t(file, header);
  for (const auto& term : term_rows(fits)) {
    std::vector<std::string> r{term};
    for (const auto& f : fits)
      r.push_back(f.fit.index(term) ? cell(f.fit.coefficient(term), f.fit.std_error(term)) : "");
    t.row(r);
  }
  for (const auto& [name, cells] : footer) {
    std::vector<std::string> r{name};
    r.insert(r.end(), cells.begin(), cells.end());
    t.row(r);
  }
}

inline std::vector<std::pair<std::string, std::vector<std::string>>> standard_footer(
    const std::vector<LabeledFit>& fits) {
  std::vector<std::pair<std::string, std::vector<std::string>>> rows{
      {"Cross-section random S.D.", {}}, {"Idiosyncratic random S.D.", {}}, {"Adj. R-squared", {}},
      {"Entities", {}},                  {"Periods", {}},                   {"Observations", {}}};
  for (const auto& f : fits) {
    const auto& c = f.fit.components;
    rows[0].second.push_back(c ? csv::format_fixed(c->sigma_alpha, 4) : "");
    rows[1].second.push_back(c ? csv::format_fixed(c->sigma_eps, 4) : "");
    rows[2].second.push_back(csv::format_fixed(f.fit.adj_r2, 4));
    rows[3].second.push_back(std::to_string(f.fit.n_entities));
    rows[4].second.push_back(std::to_string(f.fit.n_periods));
    rows[5].second.push_back(std::to_string(f.fit.nobs));
  }
  return rows;
}

inline std::vector<std::string> hausman_columns(const DesignMatrix& d) {
  std::vector<std::string> cols = kControls;
  if (d.column(lag_name()) >= 0) cols.push_back(lag_name());
  return cols;
}

// Hausman test on classical, unweighted fixed- and random-effects fits.
inline estimators::HausmanResult classical_hausman(const DesignMatrix& fe_design, const DesignMatrix& re_design) {
  ModelSpec spec;
  spec.covariance = Covariance::classical;
  spec.weights = Weights::none;
  spec.effects = Effects::fixed;
  const auto fe = estimators::fit_effects(fe_design, spec);
  spec.effects = Effects::random;
  const auto re = estimators::fit_effects(re_design, spec);
  return estimators::hausman(fe, re, hausman_columns(fe_design));
}

inline std::string hausman_cell(const estimators::HausmanResult& h) {
  return csv::format_fixed(h.statistic, 4) + " [" + csv::format_fixed(h.p_value, 4) + "]";
}

inline std::vector<std::pair<std::string, std::string>> hausman_stats(const estimators::HausmanResult& h) {
  return {{"hausman_statistic", num(h.statistic)},
          {"hausman_df", std::to_string(h.df)},
          {"hausman_p_value", num(h.p_value)},
          {"hausman_pseudo_inverse", h.pseudo_inverse ? "true" : "false"},
          {"hausman_clamped", h.clamped ? "true" : "false"}};
}

inline std::vector<Series> entity_metric(const StudyData& s,
                                         const std::function<const riskmetrics::MetricSeries&(std::size_t)>& pick) {
  std::vector<Series> out;
  for (std::size_t e = 0; e < s.panel.entity_count(); ++e) out.push_back(pick(e).data);
  return out;
}

inline std::size_t present_total(const std::vector<Series>& v) {
  std::size_t n = 0;
  for (const auto& s : v) n += s.count_present();
  return n;
}

inline double sample_sd(const Eigen::VectorXd& v) {
  if (v.size() < 2) return 0.0;
  const double m = v.mean();
  return std::sqrt((v.array() - m).square().sum() / static_cast<double>(v.size() - 1));
}

// Residuals of a fit grouped into one dated series per entity.
inline std::vector<Series> residuals_by_entity(const DesignMatrix& d, const FitResult& f) {
  std::vector<Series> out(d.entity_names.size());
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    auto& s = out[static_cast<std::size_t>(d.entity[static_cast<std::size_t>(i)])];
    s.dates.push_back(d.dates[static_cast<std::size_t>(i)]);
    s.values.push_back(f.residuals(i));
    s.present.push_back(true);
  }
  std::vector<Series> nonempty;
  for (auto& s : out)
    if (!s.empty()) nonempty.push_back(std::move(s));
  return nonempty;
}

struct Context {
  RunConfig config;
  StudyData study;
  std::filesystem::path tables;
  Manifest manifest;
  std::vector<LabeledDesign> designs;
  FigureInputs figures;
  std::optional<double> volatility_sd;

  DesignResult design(const std::string& label, const std::vector<std::string>& terms, Effects effects,
                      bool dynamic, std::optional<Date> first = {}, std::optional<Date> last = {}) {
    DesignOptions o;
    o.effects = effects;
    o.dynamic = dynamic;
    o.standardize_market_volatility = config.standardize_regressions;
    o.first_date = first;
    o.last_date = last;
    auto d = build_design(study, terms, o);
    designs.push_back({label, d});
    return d;
  }

  ModelSpec spec(Effects effects, bool dynamic) const {
    ModelSpec s;
    s.effects = effects;
    s.dynamic = dynamic;
    s.weights = dynamic ? config.dynamic_weights : config.static_weights;
    s.covariance = config.covariance;
    s.egls_iterations = config.egls_iterations;
    return s;
  }
};

inline void run_diagnostics(Context& ctx) {
  const auto& s = ctx.study;
  const auto& pm = s.metrics;
  {
    Table t(ctx.tables / "unit_roots.csv",
            {"variable", "test", "statistic", "stars", "truncated_statistic", "truncated_stars", "cv_1pct",
             "cv_5pct", "cv_10pct", "observations"});
    const std::vector<std::pair<std::string, std::function<const riskmetrics::MetricSeries&(std::size_t)>>> vars{
        {"PriceRisk", [&](std::size_t e) -> const auto& { return pm.entities[e].price_risk; }},
        {"Illiquidity", [&](std::size_t e) -> const auto& { return pm.entities[e].illiquidity; }},
        {"Size", [&](std::size_t e) -> const auto& { return pm.entities[e].size; }},
        {"Decentralization", [&](std::size_t e) -> const auto& { return s.decentralization.orthogonalized[e]; }},
        {"Attractiveness", [&](std::size_t e) -> const auto& { return pm.entities[e].attractiveness; }}};
    for (const auto& [name, pick] : vars) {
      const auto panel = entity_metric(s, pick);
      try {
        const auto r = diagnostics::cips(panel, ctx.config.max_lag);
        t.row({name, "CIPS", num(r.statistic), r.stars, num(r.truncated_statistic), r.truncated_stars,
               num(r.critical[0]), num(r.critical[1]), num(r.critical[2]), std::to_string(present_total(panel))});
      } catch (const Error& e) {
        ctx.manifest.add("warnings", "unit root " + name + ": " + e.what());
        t.row({name, "CIPS", "", "", "", "", "", "", "", std::to_string(present_total(panel))});
      }
    }
    for (const auto* m : {&pm.market_volatility, &pm.market_shocks}) {
      const std::string name = m == &pm.market_volatility ? "MarketVolatility" : "MarketShocks";
      try {
        const auto r = diagnostics::adf(m->data, ctx.config.max_lag);
        t.row({name, "ADF", num(r.statistic), r.stars, "", "", num(r.critical[0]), num(r.critical[1]),
               num(r.critical[2]), std::to_string(m->data.count_present())});
      } catch (const Error& e) {
        ctx.manifest.add("warnings", "unit root " + name + ": " + e.what());
        t.row({name, "ADF", "", "", "", "", "", "", "", std::to_string(m->data.count_present())});
      }
    }
  }

  auto re = ctx.design("diagnostics_pooled", random_effects_terms(), Effects::pooled, false);
  const auto& d = re.design;
  {
    const std::vector<std::string> vars{"Illiquidity", "Size", "Attractiveness", "Decentralization",
                                        "MarketVolatility", "MarketShocks"};
    Eigen::MatrixXd cols(d.rows(), static_cast<Eigen::Index>(vars.size()));
    for (std::size_t j = 0; j < vars.size(); ++j)
      cols.col(static_cast<Eigen::Index>(j)) = d.regressors.col(d.column(vars[j]));
    const auto corr = diagnostics::correlation_matrix(cols);
    std::vector<std::string> header{"variable"};
    header.insert(header.end(), vars.begin(), vars.end());
    Table t(ctx.tables / "correlations.csv", header);
    for (std::size_t i = 0; i < vars.size(); ++i) {
      std::vector<std::string> r{vars[i]};
      for (std::size_t j = 0; j < vars.size(); ++j)
        r.push_back(num(corr(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))));
      t.row(r);
    }
  }
  {
    std::vector<std::pair<std::string, std::vector<double>>> cols;
    auto column = [&](const std::string& name) {
      const auto& c = d.regressors.col(d.column(name));
      return std::vector<double>(c.data(), c.data() + c.size());
    };
    cols.push_back({"PriceRisk", std::vector<double>(d.response.data(), d.response.data() + d.response.size())});
    cols.push_back({"Size", column("Size")});
    cols.push_back({"Illiquidity", column("Illiquidity")});
    std::vector<double> attention, composite, hyfi;
    for (std::size_t i = 0; i < static_cast<std::size_t>(d.rows()); ++i) {
      const auto e = static_cast<std::size_t>(d.entity[i]);
      const auto& att = pm.entities[e].attention.data;
      if (auto k = att.find(d.dates[i]); k && att.present[*k]) attention.push_back(att.values[*k]);
      composite.push_back(s.decentralization.composite[e]);
    }
    for (const auto& e : s.panel.entities())
      for (std::size_t i = 0; i < e.rows.size(); ++i) hyfi.push_back(e.meta.hyfi ? 1.0 : 0.0);
    cols.push_back({"Attention", attention});
    cols.push_back({"Decentralization", composite});
    cols.push_back({"MarketVolatility", column("MarketVolatility")});
    cols.push_back({"MarketShocks", column("MarketShocks")});
    cols.push_back({"HyFi", hyfi});
    Table t(ctx.tables / "descriptives.csv",
            {"variable", "mean", "median", "maximum", "minimum", "std_dev", "skewness", "kurtosis", "observations"});
    for (const auto& [name, v] : cols) {
      if (v.empty()) {
        t.row({name, "", "", "", "", "", "", "", "0"});
        continue;
      }
      const auto r = diagnostics::describe(v);
      t.row({name, num(r.mean), num(r.median), num(r.maximum), num(r.minimum), num(r.std_dev),
             r.skewness ? num(*r.skewness) : "", r.kurtosis ? num(*r.kurtosis) : "", std::to_string(r.count)});
    }
  }
  {
    auto fe = ctx.design("diagnostics_fe", fixed_effects_terms(), Effects::fixed, false);
    ModelSpec spec;
    spec.effects = Effects::fixed;
    spec.covariance = Covariance::classical;
    const auto fit = estimators::fit_effects(fe.design, spec);
    const auto tests = diagnostics::dependence_tests(residuals_by_entity(fe.design, fit));
    Table t(ctx.tables / "dependence.csv", {"test", "statistic", "p_value", "pairs", "excluded_pairs"});
    for (const auto& r : tests)
      t.row({r.test, num(r.statistic), num(r.p_value), std::to_string(r.pairs), std::to_string(r.excluded.size())});
  }
}

inline void run_baseline(Context& ctx) {
  auto re_s = ctx.design("re_static", random_effects_terms(), Effects::random, false);
  auto fe_s = ctx.design("fe_static", fixed_effects_terms(), Effects::fixed, false);
  auto re_d = ctx.design("re_dynamic", random_effects_terms(), Effects::random, true);
  auto fe_d = ctx.design("fe_dynamic", fixed_effects_terms(), Effects::fixed, true);

  std::vector<LabeledFit> fits;
  fits.push_back({"re_static", estimators::fit_model(re_s.design, ctx.spec(Effects::random, false))});
  fits.push_back({"fe_static", estimators::fit_model(fe_s.design, ctx.spec(Effects::fixed, false))});
  fits.push_back({"re_dynamic", estimators::fit_model(re_d.design, ctx.spec(Effects::random, true))});
  fits.push_back({"fe_dynamic", estimators::fit_model(fe_d.design, ctx.spec(Effects::fixed, true))});
  for (const auto& f : fits) record_fit(ctx.manifest, "baseline/" + f.label, f.fit);

  const auto h_static = classical_hausman(fe_s.design, re_s.design);
  const auto h_dynamic = classical_hausman(fe_d.design, re_d.design);
  {
    Table t(ctx.tables / "hausman.csv", {"comparison", "statistic", "df", "p_value", "pseudo_inverse", "clamped"});
    for (const auto& [label, h] : {std::pair{"static", &h_static}, std::pair{"dynamic", &h_dynamic}})
      t.row({label, num(h->statistic), std::to_string(h->df), num(h->p_value), h->pseudo_inverse ? "true" : "false",
             h->clamped ? "true" : "false"});
  }

  write_coefficients(ctx.tables / "baseline_coefficients.csv", fits);
  write_summary(ctx.tables / "baseline_summary.csv", fits,
                {{"hausman_static", hausman_stats(h_static)}, {"hausman_dynamic", hausman_stats(h_dynamic)}});
  auto footer = standard_footer(fits);
  footer.insert(footer.begin() + 2,
                {"Hausman", {hausman_cell(h_static), hausman_cell(h_static), hausman_cell(h_dynamic),
                             hausman_cell(h_dynamic)}});
  write_table(ctx.tables / "baseline_table.csv", fits, footer);

  {
    Table t(ctx.tables / "long_run.csv", {"model", "term", "short_run", "phi", "long_run"});
    for (const auto& f : fits) {
      if (!f.fit.phi) continue;
      for (std::size_t j = 0; j < f.fit.names.size(); ++j) {
        const auto& n = f.fit.names[j];
        if (n == estimators::kIntercept || n == lag_name()) continue;
        const double b = f.fit.coef(static_cast<Eigen::Index>(j));
        t.row({f.label, n, num(b), num(*f.fit.phi), num(estimators::long_run_effect(b, *f.fit.phi))});
      }
    }
  }

  const auto& fe = fits[1].fit;
  const auto& dfe = fits[3].fit;
  ctx.figures.fe_mv = coef_of(fe, "MarketVolatility");
  ctx.figures.fe_int = coef_of(fe, kInteraction);
  ctx.figures.dfe_intercept = coef_of(dfe, std::string(estimators::kIntercept));
  ctx.figures.dfe_mv = coef_of(dfe, "MarketVolatility");
  ctx.figures.dfe_int = coef_of(dfe, kInteraction);
  ctx.figures.phi = dfe.phi;
  ctx.volatility_sd = sample_sd(fe_d.design.regressors.col(fe_d.design.column("MarketVolatility")));
}

inline void run_quantiles(Context& ctx) {
  auto pooled = ctx.design("quantile", random_effects_terms(), Effects::pooled, false);
  const auto& d = pooled.design;
  quantreg::QuantileOptions opt;
  opt.covariance = ctx.config.quantile_covariance;
  std::vector<double> y(d.response.data(), d.response.data() + d.response.size());

  Table coefs(ctx.tables / "quantile_coefficients.csv", {"tau", "term", "estimate", "std_error", "z", "p_value", "stars"});
  Table summary(ctx.tables / "quantile_summary.csv", {"tau", "statistic", "value"});
  std::vector<std::pair<double, quantreg::QuantileFit>> fits;
  for (double tau : ctx.config.taus) {
    const std::string label = "quantile/" + num(tau);
    try {
      auto f = quantreg::fit_quantile(d, tau, opt);
      const auto qlr = quantreg::quasi_lr(f, d, d.names, opt);
      for (std::size_t j = 0; j < f.names.size(); ++j) {
        const auto i = static_cast<Eigen::Index>(j);
        const double est = f.coef(i), se = f.se(i);
        const double z = se > 0.0 ? est / se : 0.0;
        const double p = estimators::normal_p_value(est, se);
        coefs.row({num(tau), f.names[j], num(est), num(se), num(z), num(p), estimators::significance_stars(p)});
        ctx.figures.quantile_path.push_back({tau, f.names[j], {est, se}});
      }
      const std::vector<std::pair<std::string, std::string>> stats{
          {"pseudo_r_squared", num(f.pseudo_r2)},
          {"dependent_quantile", num(quantreg::sample_quantile_midpoint(y, tau))},
          {"sparsity", num(f.sparsity)},
          {"bandwidth", num(f.bandwidth)},
          {"quasi_lr_statistic", num(qlr.statistic)},
          {"quasi_lr_df", std::to_string(qlr.df)},
          {"quasi_lr_p_value", num(qlr.p_value)},
          {"observations", std::to_string(f.nobs)},
          {"iterations", std::to_string(f.iterations)}};
      for (const auto& [k, v] : stats) summary.row({num(tau), k, v});
      ctx.manifest.add("fits", label + ": nobs=" + std::to_string(f.nobs) + " flags=" + join_flags(f.flags));
      fits.push_back({tau, std::move(f)});
    } catch (const Error& e) {
      ctx.manifest.add("status", label + ": failed: " + e.what());
    }
  }

  std::vector<std::string> header{"term"};
  for (const auto& [tau, f] : fits) header.push_back(num(tau));
  Table t(ctx.tables / "quantile_table.csv", header);
  if (fits.empty()) return;
  for (const auto& term : fits.front().second.names) {
    std::vector<std::string> r{term};
    for (const auto& [tau, f] : fits) r.push_back(cell(f.coefficient(term), f.std_error(term)));
    t.row(r);
  }
  std::vector<std::string> r2{"Pseudo R-squared"}, n{"Observations"};
  for (const auto& [tau, f] : fits) {
    r2.push_back(csv::format_fixed(f.pseudo_r2, 4));
    n.push_back(std::to_string(f.nobs));
  }
  t.row(r2);
  t.row(n);
}

inline std::size_t distinct_dates(const DesignMatrix& d) {
  return std::set<Date>(d.dates.begin(), d.dates.end()).size();
}

inline void run_split(Context& ctx) {
  const Date split = ctx.config.split_date;
  const Date before = split - 1;
  auto full = build_design(ctx.study, fixed_effects_terms(), {});
  const auto [lo, hi] = std::minmax_element(full.design.dates.begin(), full.design.dates.end());
  if (!(*lo < split && split <= *hi))
    throw DomainError("split date " + split.iso() + " is outside the design range " + lo->iso() + " to " + hi->iso());

  std::vector<LabeledFit> fits;
  std::vector<std::pair<std::string, std::vector<std::pair<std::string, std::string>>>> extra;
  for (const auto& [period, first, last] :
       {std::tuple{std::string("pre"), std::optional<Date>{}, std::optional<Date>{before}},
        std::tuple{std::string("post"), std::optional<Date>{split}, std::optional<Date>{}}}) {
    auto re = ctx.design("split_" + period + "_re", random_effects_terms(), Effects::random, false, first, last);
    auto fe = ctx.design("split_" + period + "_fe", fixed_effects_terms(), Effects::fixed, false, first, last);
    fits.push_back({period + "_re", estimators::fit_model(re.design, ctx.spec(Effects::random, false))});
    fits.push_back({period + "_fe", estimators::fit_model(fe.design, ctx.spec(Effects::fixed, false))});
    auto stats = hausman_stats(classical_hausman(fe.design, re.design));
    stats.push_back({"days", std::to_string(distinct_dates(fe.design))});
    stats.push_back({"observations", std::to_string(fe.design.rows())});
    extra.push_back({period, std::move(stats)});
  }
  for (const auto& f : fits) record_fit(ctx.manifest, "split/" + f.label, f.fit);
  write_coefficients(ctx.tables / "split_coefficients.csv", fits);
  write_summary(ctx.tables / "split_summary.csv", fits, extra);
  auto footer = standard_footer(fits);
  std::vector<std::string> days;
  for (const auto& [period, stats] : extra) {
    const auto it = std::find_if(stats.begin(), stats.end(), [](const auto& kv) { return kv.first == "days"; });
    days.push_back(it->second);
    days.push_back(it->second);
  }
  footer.push_back({"Days", days});
  write_table(ctx.tables / "split_table.csv", fits, footer);
  ctx.figures.pre_int = coef_of(fits[1].fit, kInteraction);
  ctx.figures.post_int = coef_of(fits[3].fit, kInteraction);
}

inline PanelDataset load_input(const RunConfig& c, Manifest& m) {
  if (c.panel) {
    m.add("data", "source=panel file=" + c.panel->filename().string());
    return read_panel(*c.panel);
  }
  auto p = parse_synth_params(*c.simulate_params);
  p.seed = c.seed;
  m.add("data", "source=simulation params=" + c.simulate_params->filename().string());
  for (const auto& [k, v] : p.echo()) m.add("data", "synth." + k + "=" + v);
  auto sim = simulate_dgp(p);
  m.add("data", "clipped_price_risk=" + std::to_string(sim.clipped));
  for (const auto& n : sim.notes) m.add("data", n);
  return std::move(sim.panel);
}

inline std::vector<std::string> list_files(const std::filesystem::path& root) {
  std::vector<std::string> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root))
    if (e.is_regular_file()) out.push_back(std::filesystem::relative(e.path(), root).generic_string());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace detail

// Runs every enabled fragment and writes the outputs under config.output_dir.
inline ReportOutcome run_report(const RunConfig& config) {
  config.validate();
  detail::Context ctx;
  ctx.config = config;
  ReportOutcome outcome;
  outcome.output_dir = config.output_dir;
  const auto root = config.output_dir;
  ctx.tables = root / "tables";
  std::filesystem::create_directories(ctx.tables);

  ctx.manifest.add("panelcrypt", "version=" + std::string(kVersion));
  for (const auto& [k, v] : config.echo()) ctx.manifest.add("config", k + "=" + v);

  auto panel = detail::load_input(config, ctx.manifest);
  ctx.manifest.add("data", "entities=" + std::to_string(panel.entity_count()) +
                               " observations=" + std::to_string(panel.observation_count()) +
                               " calendar_days=" + std::to_string(panel.calendar().size()));
  ctx.study = prepare_study(std::move(panel), config.volatility_window);

  const std::vector<std::tuple<std::string, bool, void (*)(detail::Context&)>> fragments{
      {"diagnostics", config.run_diagnostics, &detail::run_diagnostics},
      {"baseline", config.run_baseline, &detail::run_baseline},
      {"quantiles", config.run_quantiles, &detail::run_quantiles},
      {"split", config.run_split, &detail::run_split}};
  for (const auto& [name, enabled, run] : fragments) {
    if (!enabled) {
      ctx.manifest.add("status", name + ": skipped");
      continue;
    }
    try {
      run(ctx);
      ctx.manifest.add("status", name + ": ok");
    } catch (const Error& e) {
      outcome.failures[name] = e.what();
      ctx.manifest.add("status", name + ": failed: " + e.what());
    }
  }

  for (const auto& d : ctx.designs) detail::record_ledger(ctx.manifest, d.label, d.design.ledger);
  detail::write_ledgers(ctx.tables / "drop_ledger.csv", ctx.designs);

  auto fig = ctx.figures;
  if (config.standardize_market_volatility && !config.standardize_regressions && ctx.volatility_sd)
    fig.volatility_scale = *ctx.volatility_sd;
  ctx.manifest.add("figures", "volatility_scale=" + detail::num(fig.volatility_scale));
  try {
    const auto files = emit_figures(fig, root / "figures");
    for (const auto& s : files.skipped) ctx.manifest.add("figures", "skipped " + s);
    if (config.published_coefficients) {
      const auto pub = emit_figures(figure_inputs_from_book(load_coefficients(*config.published_coefficients)),
                                    root / "figures_published");
      for (const auto& s : pub.skipped) ctx.manifest.add("figures", "published skipped " + s);
    }
  } catch (const Error& e) {
    outcome.failures["figures"] = e.what();
    ctx.manifest.add("status", std::string("figures: failed: ") + e.what());
  }

  for (const auto& f : detail::list_files(root))
    if (f != "manifest.txt") ctx.manifest.add("files", f);
  ctx.manifest.write(root / "manifest.txt");
  return outcome;
}

}  // namespace panelcrypt::pipeline
