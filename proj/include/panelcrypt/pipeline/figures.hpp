#pragma once

// Figure data: volatility-response lines by HyFi status, slope bars, the
// quantile coefficient path and the pre/post interaction comparison. Inputs
// come either from fitted models or from a coefficient file.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "panelcrypt/core/csv.hpp"
#include "panelcrypt/core/error.hpp"
#include "panelcrypt/estimators.hpp"

namespace panelcrypt::pipeline {

inline constexpr double kZ95 = 1.96;

struct Coef {
  double estimate = 0.0;
  double se = 0.0;
};

// Blocks of named coefficients, e.g. "fe_dynamic" -> {"MarketVolatility" -> ...}.
using CoefficientBook = std::map<std::string, std::map<std::string, Coef>>;

// block,term,estimate,std_error
inline CoefficientBook load_coefficients(const std::filesystem::path& file) {
  csv::Reader r(file.string());
  csv::Row row;
  if (!r.next(row)) r.fail("empty coefficient file");
  const csv::Header h(row, {"block", "term", "estimate", "std_error"}, r);
  CoefficientBook book;
  while (r.next(row)) {
    if (row.size() != h.size()) r.fail("wrong number of columns");
    const auto est = csv::try_parse_double(row[static_cast<std::size_t>(h.index("estimate"))]);
    const auto se = csv::try_parse_double(row[static_cast<std::size_t>(h.index("std_error"))]);
    if (!est || !se) r.fail("estimate and std_error must be numbers");
    book[row[static_cast<std::size_t>(h.index("block"))]][row[static_cast<std::size_t>(h.index("term"))]] =
        {*est, *se};
  }
  return book;
}

inline std::optional<Coef> lookup(const CoefficientBook& book, const std::string& block,
                                  const std::string& term) {
  auto b = book.find(block);
  if (b == book.end()) return std::nullopt;
  auto t = b->second.find(term);
  if (t == b->second.end()) return std::nullopt;
  return t->second;
}

inline Coef coef_of(const estimators::FitResult& fit, const std::string& term) {
  return {fit.coefficient(term), fit.std_error(term)};
}

struct QuantilePoint {
  double tau = 0.0;
  std::string term;
  Coef coef;
};

struct FigureInputs {
  // Static fixed effects.
  std::optional<Coef> fe_mv, fe_int;
  // Dynamic fixed effects.
  std::optional<Coef> dfe_intercept, dfe_mv, dfe_int;
  std::optional<double> phi;
  std::vector<QuantilePoint> quantile_path;
  std::optional<Coef> pre_int, post_int;
  // Slopes are multiplied by this to express them per standard deviation of
  // market volatility; 1 when the inputs are already on that scale.
  double volatility_scale = 1.0;
};

inline const std::string kInteraction = "HyFi*MarketVolatility";
inline const std::string kLag = "PriceRisk(-1)";

inline FigureInputs figure_inputs_from_book(const CoefficientBook& book) {
  FigureInputs in;
  in.fe_mv = lookup(book, "fe_static", "MarketVolatility");
  in.fe_int = lookup(book, "fe_static", kInteraction);
  in.dfe_intercept = lookup(book, "fe_dynamic", "Intercept");
  in.dfe_mv = lookup(book, "fe_dynamic", "MarketVolatility");
  in.dfe_int = lookup(book, "fe_dynamic", kInteraction);
  if (auto p = lookup(book, "fe_dynamic", kLag)) in.phi = p->estimate;
  for (const auto& [block, terms] : book) {
    if (block.rfind("quantile:", 0) != 0) continue;
    const auto tau = csv::try_parse_double(block.substr(9));
    if (!tau) throw DomainError("bad quantile block name '" + block + "'");
    for (const auto& [term, c] : terms) in.quantile_path.push_back({*tau, term, c});
  }
  in.pre_int = lookup(book, "split_pre_fe", kInteraction);
  in.post_int = lookup(book, "split_post_fe", kInteraction);
  return in;
}

struct FigureFiles {
  std::vector<std::string> written;
  std::vector<std::string> skipped;  // with reason
};

inline std::vector<double> volatility_grid() {
  std::vector<double> g;
  for (int i = -8; i <= 16; ++i) g.push_back(0.25 * i);
  return g;
}

namespace detail {

inline std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream out(p);
  if (!out) throw Error("cannot write " + p.string());
  return out;
}

inline std::string num(double v) { return csv::format_double(v); }

inline void interval_row(std::ostream& out, const Coef& c) {
  out << num(c.estimate) << ',' << num(c.se) << ',' << num(c.estimate - kZ95 * c.se) << ','
      << num(c.estimate + kZ95 * c.se);
}

}  // namespace detail

// Writes fig4..fig7 CSVs into `dir`; figures whose inputs are missing are
// listed in `skipped`.
inline FigureFiles emit_figures(const FigureInputs& in, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  FigureFiles files;
  const double s = in.volatility_scale;

  if (in.dfe_mv && in.dfe_int && in.phi && in.dfe_intercept) {
    const double a = in.dfe_intercept->estimate;
    const double bmv = in.dfe_mv->estimate * s, bint = in.dfe_int->estimate * s;
    const double lr = estimators::long_run_effect(1.0, *in.phi);
    auto out = detail::open_out(dir / "fig4_volatility_response.csv");
    out << "horizon,style,group,x,value\n";
    for (const auto& [horizon, style, f] :
         {std::tuple{"short_run", "solid", 1.0}, std::tuple{"long_run", "dashed", lr}}) {
      for (double x : volatility_grid()) {
        out << horizon << ',' << style << ",non_hyfi," << detail::num(x) << ',' << detail::num(a + bmv * f * x) << '\n';
        out << horizon << ',' << style << ",hyfi," << detail::num(x) << ','
            << detail::num(a + (bmv + bint) * f * x) << '\n';
        out << horizon << ',' << style << ",difference," << detail::num(x) << ','
            << detail::num(bint * f * x) << '\n';
      }
    }
    files.written.push_back("fig4_volatility_response.csv");
  } else {
    files.skipped.push_back("fig4_volatility_response.csv: dynamic fixed-effects fit missing");
  }

  if (in.dfe_mv && in.dfe_int && in.phi) {
    auto out = detail::open_out(dir / "fig5_slopes.csv");
    out << "model,group,slope,std_error,lower,upper\n";
    auto bar = [&](const std::string& model, const Coef& mv, const Coef& inter, double f) {
      const Coef non{mv.estimate * s * f, mv.se * s * f};
      const Coef hy{(mv.estimate + inter.estimate) * s * f,
                    std::sqrt(mv.se * mv.se + inter.se * inter.se) * s * f};
      out << model << ",non_hyfi,";
      detail::interval_row(out, non);
      out << '\n' << model << ",hyfi,";
      detail::interval_row(out, hy);
      out << '\n';
    };
    if (in.fe_mv && in.fe_int) bar("fe_static", *in.fe_mv, *in.fe_int, 1.0);
    bar("fe_dynamic_short_run", *in.dfe_mv, *in.dfe_int, 1.0);
    bar("fe_dynamic_long_run", *in.dfe_mv, *in.dfe_int, estimators::long_run_effect(1.0, *in.phi));
    files.written.push_back("fig5_slopes.csv");
  } else {
    files.skipped.push_back("fig5_slopes.csv: dynamic fixed-effects fit missing");
  }

  if (!in.quantile_path.empty()) {
    auto path = in.quantile_path;
    std::stable_sort(path.begin(), path.end(), [](const QuantilePoint& a, const QuantilePoint& b) {
      return a.term != b.term ? a.term < b.term : a.tau < b.tau;
    });
    auto out = detail::open_out(dir / "fig6_quantile_path.csv");
    out << "term,tau,estimate,std_error,lower,upper\n";
    for (const auto& q : path) {
      out << q.term << ',' << detail::num(q.tau) << ',';
      detail::interval_row(out, q.coef);
      out << '\n';
    }
    files.written.push_back("fig6_quantile_path.csv");
  } else {
    files.skipped.push_back("fig6_quantile_path.csv: no quantile fits");
  }

  if (in.pre_int && in.post_int) {
    auto out = detail::open_out(dir / "fig7_attenuation.csv");
    out << "period,estimate,std_error,lower,upper\n";
    out << "pre,";
    detail::interval_row(out, *in.pre_int);
    out << "\npost,";
    detail::interval_row(out, *in.post_int);
    out << '\n';
    files.written.push_back("fig7_attenuation.csv");
  } else {
    files.skipped.push_back("fig7_attenuation.csv: split fixed-effects fits missing");
  }
  return files;
}

}  // namespace panelcrypt::pipeline
