#pragma once

// Dependent variable and regressors: Parkinson range volatility, log returns,
// Amihud illiquidity (z-scored per entity), market realized volatility,
// log market-cap changes and ln(1+x) transforms of attention and fraud losses.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "panelcrypt/core/csv.hpp"
#include "panelcrypt/core/error.hpp"
#include "panelcrypt/core/series.hpp"
#include "panelcrypt/panel_store.hpp"

namespace panelcrypt::riskmetrics {

// sqrt(2 ln 2), the Parkinson range normalizer.
inline const double kParkinsonScale = std::sqrt(2.0 * std::numbers::ln2);

inline constexpr std::size_t kDefaultVolatilityWindow = 30;

struct MetricSeries {
  std::string entity;  // symbol, or "MARKET" for market-wide series
  std::string name;
  Series data;
  bool degenerate = false;       // z-score of a constant series
  std::size_t invalid_masked = 0;  // entries masked because an input was unusable
};

inline double parkinson(double high, double low, double close) {
  if (!(low > 0.0) || !(close > 0.0)) throw DomainError("parkinson: prices must be positive");
  if (high < low) throw DomainError("parkinson: high below low");
  if (high == low) return 0.0;
  return (high - low) / (close * kParkinsonScale);
}

inline double log_return(double p_now, double p_prev) {
  if (!(p_now > 0.0) || !(p_prev > 0.0)) throw DomainError("log_return: prices must be positive");
  return std::log(p_now / p_prev);
}

// |r| / volume. A nonpositive volume yields no value; the caller masks it.
inline std::optional<double> amihud(double abs_return, double volume) {
  if (!(abs_return >= 0.0)) throw DomainError("amihud: absolute return must be nonnegative");
  if (!(volume > 0.0)) return std::nullopt;
  return abs_return / volume;
}

inline double log1p_metric(double raw) {
  if (!(raw >= 0.0)) throw DomainError("log1p_metric: input must be nonnegative");
  return std::log1p(raw);
}

// Standardizes over the present entries with the sample (n-1) deviation. A
// constant series maps to zeros and sets `degenerate`.
inline MetricSeries zscore_per_entity(const MetricSeries& in) {
  const auto vals = in.data.present_values();
  if (vals.size() < 2)
    throw DomainError("zscore: entity " + in.entity + " has fewer than 2 values for " + in.name);
  double mean = 0.0;
  for (double v : vals) mean += v;
  mean /= static_cast<double>(vals.size());
  double ss = 0.0;
  for (double v : vals) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(vals.size() - 1));

  MetricSeries out{in.entity, in.name, in.data, false, in.invalid_masked};
  const bool constant = !(sd > 0.0) || sd <= 1e-14 * std::abs(mean);
  out.degenerate = constant;
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    if (!out.data.present[i]) continue;
    out.data.values[i] = constant ? 0.0 : (out.data.values[i] - mean) / sd;
  }
  return out;
}

// Log returns between consecutive calendar days. A return across a gap or
// next to a missing price is masked.
inline MetricSeries log_return_series(const Series& prices, std::string entity = {}) {
  MetricSeries out{std::move(entity), "log_return", {}, false, 0};
  for (std::size_t i = 0; i < prices.size(); ++i) {
    std::optional<double> r;
    if (i > 0 && prices.dates[i] - prices.dates[i - 1] == 1 && prices.present[i] &&
        prices.present[i - 1])
      r = log_return(prices.values[i], prices.values[i - 1]);
    out.data.push(prices.dates[i], r);
  }
  return out;
}

// Rolling sample standard deviation of the last `window` log returns. The
// first `window` dates have no full window and are masked.
inline MetricSeries realized_volatility(const Series& index_levels,
                                        std::size_t window = kDefaultVolatilityWindow) {
  if (window < 2) throw DomainError("realized_volatility: window must be at least 2");
  if (index_levels.size() < window + 1)
    throw DomainError("realized_volatility: window larger than series");
  const auto ret = log_return_series(index_levels, std::string(kMarketEntity));
  MetricSeries out{std::string(kMarketEntity), "market_volatility", {}, false, 0};
  for (std::size_t k = 0; k < index_levels.size(); ++k) {
    std::optional<double> rv;
    if (k >= window) {
      bool full = true;
      double mean = 0.0;
      for (std::size_t j = k + 1 - window; j <= k; ++j) {
        if (!ret.data.present[j]) {
          full = false;
          break;
        }
        mean += ret.data.values[j];
      }
      if (full) {
        mean /= static_cast<double>(window);
        double ss = 0.0;
        for (std::size_t j = k + 1 - window; j <= k; ++j) {
          const double d = ret.data.values[j] - mean;
          ss += d * d;
        }
        rv = std::sqrt(ss / static_cast<double>(window - 1));
      }
    }
    out.data.push(index_levels.dates[k], rv);
  }
  return out;
}

// Delta ln(mcap); masked across calendar gaps.
inline MetricSeries size_change(const Series& mcap, std::string entity = {}) {
  for (std::size_t i = 0; i < mcap.size(); ++i)
    if (mcap.present[i] && !(mcap.values[i] > 0.0))
      throw DomainError("size_change: market capitalization must be positive");
  auto out = log_return_series(mcap, std::move(entity));
  out.name = "size";
  return out;
}

inline MetricSeries price_risk_series(const EntityData& e) {
  MetricSeries out{e.meta.symbol, "price_risk", {}, false, 0};
  for (const auto& o : e.rows) {
    const auto h = o.get(Field::high), l = o.get(Field::low), c = o.get(Field::close);
    std::optional<double> v;
    if (h && l && c) v = parkinson(*h, *l, *c);
    out.data.push(o.date, v);
  }
  return out;
}

inline MetricSeries amihud_series(const EntityData& e, const MetricSeries& returns) {
  MetricSeries out{e.meta.symbol, "amihud", {}, false, 0};
  for (std::size_t i = 0; i < e.rows.size(); ++i) {
    const auto vol = e.rows[i].get(Field::volume);
    std::optional<double> v;
    if (returns.data.present[i]) {
      if (vol) v = amihud(std::abs(returns.data.values[i]), *vol);
      if (!v) ++out.invalid_masked;  // zero or missing volume
    }
    out.data.push(e.rows[i].date, v);
  }
  return out;
}

inline MetricSeries log1p_series(const Series& raw, std::string entity, std::string name) {
  MetricSeries out{std::move(entity), std::move(name), {}, false, 0};
  for (std::size_t i = 0; i < raw.size(); ++i) {
    std::optional<double> v;
    if (raw.present[i]) v = log1p_metric(raw.values[i]);
    out.data.push(raw.dates[i], v);
  }
  return out;
}

// All per-entity series share the entity's row dates.
struct EntityMetrics {
  std::string symbol;
  MetricSeries price_risk;
  MetricSeries log_return;
  MetricSeries amihud;
  MetricSeries illiquidity;  // per-entity z-score of amihud
  MetricSeries size;
  MetricSeries attractiveness;  // ln(1 + attention)
  MetricSeries attention;       // raw search interest
  MetricSeries log_mcap;
};

struct PanelMetrics {
  std::vector<EntityMetrics> entities;
  MetricSeries market_volatility;  // on market dates
  MetricSeries market_shocks;      // ln(1 + shock_loss) on market dates
};

inline PanelMetrics compute_metrics(const PanelDataset& panel,
                                    std::size_t window = kDefaultVolatilityWindow) {
  PanelMetrics pm;
  for (const auto& e : panel.entities()) {
    const auto& sym = e.meta.symbol;
    EntityMetrics em;
    em.symbol = sym;
    em.price_risk = price_risk_series(e);
    em.log_return = log_return_series(series(panel, sym, "close"), sym);
    em.amihud = amihud_series(e, em.log_return);
    if (em.amihud.data.count_present() >= 2) {
      em.illiquidity = zscore_per_entity(em.amihud);
    } else {
      em.illiquidity = em.amihud;
      std::fill(em.illiquidity.data.present.begin(), em.illiquidity.data.present.end(), false);
      em.illiquidity.degenerate = true;
    }
    em.illiquidity.name = "illiquidity";
    const auto mcap = series(panel, sym, "mcap");
    em.size = size_change(mcap, sym);
    em.attention = MetricSeries{sym, "attention", series(panel, sym, "attention"), false, 0};
    em.attractiveness = log1p_series(em.attention.data, sym, "attractiveness");
    em.log_mcap = MetricSeries{sym, "log_mcap", {}, false, 0};
    for (std::size_t i = 0; i < mcap.size(); ++i)
      em.log_mcap.data.push(mcap.dates[i], mcap.present[i] ? std::optional<double>(std::log(
                                                                 mcap.values[i]))
                                                           : std::nullopt);
    pm.entities.push_back(std::move(em));
  }
  const auto levels = series(panel, kMarketEntity, "index_level");
  if (levels.size() >= window + 1) {
    pm.market_volatility = realized_volatility(levels, window);
  } else {
    pm.market_volatility = MetricSeries{std::string(kMarketEntity), "market_volatility", {}, false,
                                        0};
    for (auto d : levels.dates) pm.market_volatility.data.push(d, std::nullopt);
  }
  pm.market_shocks = log1p_series(series(panel, kMarketEntity, "shock_loss"),
                                  std::string(kMarketEntity), "market_shocks");
  return pm;
}

// Long format: entity,date,metric,value. Masked values are written as empty
// cells.
inline void write_metrics(const PanelMetrics& pm, const std::filesystem::path& out_file) {
  std::ofstream out(out_file);
  if (!out) throw Error("cannot write " + out_file.string());
  out << "entity,date,metric,value\n";
  auto emit = [&](const MetricSeries& m) {
    for (std::size_t i = 0; i < m.data.size(); ++i) {
      out << csv::quote(m.entity) << ',' << m.data.dates[i].iso() << ',' << m.name << ',';
      if (m.data.present[i]) out << csv::format_double(m.data.values[i]);
      out << '\n';
    }
  };
  for (const auto& e : pm.entities) {
    emit(e.price_risk);
    emit(e.illiquidity);
    emit(e.size);
    emit(e.attractiveness);
  }
  emit(pm.market_volatility);
  emit(pm.market_shocks);
}

}  // namespace panelcrypt::riskmetrics
