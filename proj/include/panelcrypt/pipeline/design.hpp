#pragma once

// Regression designs built from a panel: entity-day rows with every
// referenced series present, interaction columns as products, a gap-aware
// lagged response for dynamic models, and a ledger of dropped rows.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "panelcrypt/core/error.hpp"
#include "panelcrypt/decentralization.hpp"
#include "panelcrypt/estimators.hpp"
#include "panelcrypt/panel_store.hpp"
#include "panelcrypt/riskmetrics.hpp"

namespace panelcrypt::pipeline {

inline constexpr std::string_view kResponse = "PriceRisk";

inline constexpr std::array<std::string_view, 7> kBaseTerms{
    "Decentralization", "Attractiveness", "Size", "Illiquidity",
    "MarketVolatility", "MarketShocks",   "HyFi"};

inline const std::vector<std::string> kControls{"Decentralization", "Attractiveness", "Size",
                                                "Illiquidity",      "MarketVolatility", "MarketShocks"};

inline std::vector<std::string> random_effects_terms() {
  auto t = kControls;
  t.push_back("HyFi");
  return t;
}

inline std::vector<std::string> fixed_effects_terms() {
  auto t = kControls;
  t.push_back("HyFi*MarketVolatility");
  return t;
}

inline bool is_time_invariant(std::string_view base) { return base == "HyFi"; }

inline std::vector<std::string> term_factors(const std::string& term) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto star = term.find('*', start);
    out.push_back(term.substr(start, star == std::string::npos ? std::string::npos : star - start));
    if (star == std::string::npos) break;
    start = star + 1;
  }
  for (const auto& f : out)
    if (std::find(kBaseTerms.begin(), kBaseTerms.end(), f) == kBaseTerms.end())
      throw DomainError("unknown regressor '" + f + "' in term '" + term + "'");
  return out;
}

struct StudyData {
  PanelDataset panel;
  riskmetrics::PanelMetrics metrics;
  decentralization::PanelDecentralization decentralization;
};

inline StudyData prepare_study(PanelDataset panel,
                               std::size_t window = riskmetrics::kDefaultVolatilityWindow) {
  StudyData s;
  s.metrics = riskmetrics::compute_metrics(panel, window);
  s.decentralization = decentralization::compute_decentralization(panel, s.metrics);
  s.panel = std::move(panel);
  return s;
}

struct DropLedger {
  std::size_t rows_in = 0;
  std::size_t rows_used = 0;
  std::map<std::string, std::size_t> dropped;  // reason -> rows
  std::vector<std::string> notes;

  std::size_t rows_dropped() const {
    std::size_t n = 0;
    for (const auto& [k, v] : dropped) n += v;
    return n;
  }
  bool conserved() const { return rows_in == rows_used + rows_dropped(); }
};

struct DesignOptions {
  estimators::Effects effects = estimators::Effects::pooled;
  bool dynamic = false;
  bool standardize_market_volatility = false;
  std::optional<Date> first_date;  // inclusive
  std::optional<Date> last_date;   // inclusive
};

struct DesignResult {
  estimators::DesignMatrix design;
  DropLedger ledger;
  std::vector<std::string> terms;  // terms actually used
};

inline std::string lag_name() { return std::string(kResponse) + "(-1)"; }

inline DesignResult build_design(const StudyData& study, const std::vector<std::string>& terms,
                                 const DesignOptions& opt = {}) {
  DesignResult out;
  std::vector<std::vector<std::string>> factors;
  for (const auto& t : terms) {
    auto f = term_factors(t);
    const bool invariant = std::all_of(f.begin(), f.end(), [](const auto& x) { return is_time_invariant(x); });
    if (opt.effects == estimators::Effects::fixed && invariant) {
      out.ledger.notes.push_back(t + " excluded: absorbed by entity fixed effects");
      continue;
    }
    if (std::find(out.terms.begin(), out.terms.end(), t) != out.terms.end())
      throw DomainError("duplicate term '" + t + "'");
    out.terms.push_back(t);
    factors.push_back(std::move(f));
  }
  std::vector<std::string> bases;
  for (const auto& fs : factors)
    for (const auto& f : fs)
      if (std::find(bases.begin(), bases.end(), f) == bases.end()) bases.push_back(f);
  std::sort(bases.begin(), bases.end(), [](const auto& a, const auto& b) {
    return std::find(kBaseTerms.begin(), kBaseTerms.end(), a) <
           std::find(kBaseTerms.begin(), kBaseTerms.end(), b);
  });

  const auto& pm = study.metrics;
  auto market_at = [](const riskmetrics::MetricSeries& m, Date d) -> std::optional<double> {
    if (auto i = m.data.find(d)) return m.data.at(*i);
    return std::nullopt;
  };

  struct Row {
    int entity;
    Date date;
    double y;
    std::map<std::string, double> base;
    double lag;
  };
  std::vector<Row> rows;
  const auto& entities = study.panel.entities();
  for (std::size_t e = 0; e < entities.size(); ++e) {
    const auto& em = pm.entities[e];
    const auto& dec = study.decentralization.orthogonalized[e];
    for (std::size_t i = 0; i < entities[e].rows.size(); ++i) {
      const Date d = entities[e].rows[i].date;
      if ((opt.first_date && d < *opt.first_date) || (opt.last_date && *opt.last_date < d)) continue;
      ++out.ledger.rows_in;
      auto y = em.price_risk.data.at(i);
      if (!y) {
        ++out.ledger.dropped["missing " + std::string(kResponse)];
        continue;
      }
      Row row{static_cast<int>(e), d, *y, {}, 0.0};
      std::optional<std::string> missing;
      for (const auto& b : bases) {
        std::optional<double> v;
        if (b == "Decentralization") v = dec.data.at(i);
        else if (b == "Attractiveness") v = em.attractiveness.data.at(i);
        else if (b == "Size") v = em.size.data.at(i);
        else if (b == "Illiquidity") v = em.illiquidity.data.at(i);
        else if (b == "MarketVolatility") v = market_at(pm.market_volatility, d);
        else if (b == "MarketShocks") v = market_at(pm.market_shocks, d);
        else if (b == "HyFi") v = entities[e].meta.hyfi ? 1.0 : 0.0;
        if (!v) {
          missing = b;
          break;
        }
        row.base[b] = *v;
      }
      if (missing) {
        ++out.ledger.dropped["missing " + *missing];
        continue;
      }
      if (opt.dynamic) {
        std::optional<double> prev;
        if (i > 0 && d - entities[e].rows[i - 1].date == 1) prev = em.price_risk.data.at(i - 1);
        if (!prev) {
          ++out.ledger.dropped["no lagged response"];
          continue;
        }
        row.lag = *prev;
      }
      rows.push_back(std::move(row));
    }
  }
  out.ledger.rows_used = rows.size();
  if (rows.empty()) throw DomainError("design: no complete rows after drops");

  if (opt.standardize_market_volatility &&
      std::find(bases.begin(), bases.end(), "MarketVolatility") != bases.end()) {
    double mean = 0.0;
    for (const auto& r : rows) mean += r.base.at("MarketVolatility");
    mean /= static_cast<double>(rows.size());
    double ss = 0.0;
    for (const auto& r : rows) ss += std::pow(r.base.at("MarketVolatility") - mean, 2);
    const double sd = rows.size() > 1 ? std::sqrt(ss / static_cast<double>(rows.size() - 1)) : 0.0;
    if (!(sd > 0.0)) throw DomainError("design: market volatility is constant and cannot be standardized");
    for (auto& r : rows) r.base["MarketVolatility"] = (r.base["MarketVolatility"] - mean) / sd;
    out.ledger.notes.push_back("MarketVolatility standardized over the design rows");
  }

  auto& dm = out.design;
  dm.response_name = std::string(kResponse);
  dm.names = out.terms;
  if (opt.dynamic) dm.names.push_back(lag_name());
  for (const auto& e : entities) dm.entity_names.push_back(e.meta.symbol);
  const auto n = static_cast<Eigen::Index>(rows.size());
  dm.response.resize(n);
  dm.regressors.resize(n, static_cast<Eigen::Index>(dm.names.size()));
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto& row = rows[static_cast<std::size_t>(r)];
    dm.response(r) = row.y;
    for (std::size_t c = 0; c < factors.size(); ++c) {
      double v = 1.0;
      for (const auto& f : factors[c]) v *= row.base.at(f);
      dm.regressors(r, static_cast<Eigen::Index>(c)) = v;
    }
    if (opt.dynamic) dm.regressors(r, static_cast<Eigen::Index>(factors.size())) = row.lag;
    dm.entity.push_back(row.entity);
    dm.dates.push_back(row.date);
  }
  return out;
}

// Subset of design rows with dates in [first, last].
inline estimators::DesignMatrix restrict_dates(const estimators::DesignMatrix& d,
                                               std::optional<Date> first, std::optional<Date> last) {
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    const Date t = d.dates[static_cast<std::size_t>(i)];
    if ((first && t < *first) || (last && *last < t)) continue;
    keep.push_back(i);
  }
  return d.select_rows(keep);
}

}  // namespace panelcrypt::pipeline
