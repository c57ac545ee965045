#pragma once

// Gini coefficients of share distributions, the equal-weighted five-component
// decentralization index, and its size-orthogonalized version.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "panelcrypt/core/csv.hpp"
#include "panelcrypt/core/error.hpp"
#include "panelcrypt/core/linalg.hpp"
#include "panelcrypt/core/series.hpp"
#include "panelcrypt/panel_store.hpp"
#include "panelcrypt/riskmetrics.hpp"

namespace panelcrypt::decentralization {

// Population Gini, sum_i sum_j |x_i - x_j| / (2 n^2 mean). Computed from the
// sorted sample as sum_i (2i - n - 1) x_(i) / (n sum x).
inline double gini(std::span<const double> dist) {
  if (dist.empty()) throw DomainError("gini: empty distribution");
  std::vector<double> x(dist.begin(), dist.end());
  for (double v : x)
    if (!(v >= 0.0)) throw DomainError("gini: quantities must be nonnegative");
  std::sort(x.begin(), x.end());
  const double total = std::accumulate(x.begin(), x.end(), 0.0);
  if (!(total > 0.0)) throw DomainError("gini: all quantities are zero");
  const auto n = static_cast<double>(x.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    acc += (2.0 * static_cast<double>(i + 1) - n - 1.0) * x[i];
  return acc / (n * total);
}

inline double composite_index(std::span<const double, 5> components) {
  double sum = 0.0;
  for (double c : components) {
    if (!(c >= 0.0 && c <= 1.0)) throw DomainError("composite_index: component outside [0, 1]");
    sum += c;
  }
  return sum / 5.0;
}

struct Orthogonalized {
  std::vector<double> residuals;  // 0.0 where not present
  std::vector<bool> present;
  double intercept = 0.0;
  double slope = 0.0;
  std::size_t used = 0;
};

// Residuals of the pooled regression of decentralization on a constant and
// ln(mcap), over positions where both are present.
inline Orthogonalized orthogonalize(std::span<const double> decentralization,
                                    std::span<const double> log_mcap,
                                    const std::vector<bool>& present = {}) {
  if (decentralization.size() != log_mcap.size())
    throw DomainError("orthogonalize: series lengths differ");
  if (!present.empty() && present.size() != log_mcap.size())
    throw DomainError("orthogonalize: mask length differs");
  const std::size_t n = log_mcap.size();
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < n; ++i)
    if (present.empty() || present[i]) rows.push_back(i);
  if (rows.size() < 3) throw DomainError("orthogonalize: fewer than 3 joint observations");

  Eigen::MatrixXd X(rows.size(), 2);
  Eigen::VectorXd y(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    X(r, 0) = 1.0;
    X(r, 1) = log_mcap[rows[r]];
    y(r) = decentralization[rows[r]];
  }
  const double lo = X.col(1).minCoeff(), hi = X.col(1).maxCoeff();
  if (!(hi - lo > 1e-12 * std::max(1.0, std::abs(hi))))
    throw DomainError("orthogonalize: ln(mcap) is constant");
  linalg::LeastSquares ls;
  try {
    ls = linalg::least_squares(X, y, {"Intercept", "log_mcap"});
  } catch (const RankDeficiencyError&) {
    throw DomainError("orthogonalize: ln(mcap) is constant");
  }
  Orthogonalized out;
  out.residuals.assign(n, 0.0);
  out.present.assign(n, false);
  out.intercept = ls.beta(0);
  out.slope = ls.beta(1);
  out.used = rows.size();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out.residuals[rows[r]] = ls.residuals(static_cast<Eigen::Index>(r));
    out.present[rows[r]] = true;
  }
  return out;
}

// Static composite per entity and the pooled orthogonalized regressor on each
// entity's row dates.
struct PanelDecentralization {
  std::vector<std::string> symbols;
  std::vector<double> composite;
  std::vector<riskmetrics::MetricSeries> orthogonalized;
  double intercept = 0.0;
  double slope = 0.0;
  std::size_t used = 0;
};

inline PanelDecentralization compute_decentralization(const PanelDataset& panel,
                                                      const riskmetrics::PanelMetrics& metrics) {
  PanelDecentralization out;
  std::vector<double> dec, lnm;
  std::vector<bool> mask;
  for (std::size_t e = 0; e < panel.entity_count(); ++e) {
    const auto& meta = panel.entities()[e].meta;
    const double c = composite_index(meta.gini_components);
    out.symbols.push_back(meta.symbol);
    out.composite.push_back(c);
    const auto& lm = metrics.entities[e].log_mcap.data;
    for (std::size_t i = 0; i < lm.size(); ++i) {
      dec.push_back(c);
      lnm.push_back(lm.values[i]);
      mask.push_back(lm.present[i]);
    }
  }
  const auto orth = orthogonalize(dec, lnm, mask);
  out.intercept = orth.intercept;
  out.slope = orth.slope;
  out.used = orth.used;
  std::size_t pos = 0;
  for (std::size_t e = 0; e < panel.entity_count(); ++e) {
    riskmetrics::MetricSeries ms{out.symbols[e], "decentralization", {}, false, 0};
    const auto& lm = metrics.entities[e].log_mcap.data;
    for (std::size_t i = 0; i < lm.size(); ++i, ++pos)
      ms.data.push(lm.dates[i], orth.present[pos] ? std::optional<double>(orth.residuals[pos])
                                                  : std::nullopt);
    out.orthogonalized.push_back(std::move(ms));
  }
  return out;
}

// entity,date,composite,log_mcap,orthogonalized
inline void write_decentralization(const PanelDecentralization& d,
                                   const riskmetrics::PanelMetrics& metrics,
                                   const std::filesystem::path& out_file) {
  std::ofstream out(out_file);
  if (!out) throw Error("cannot write " + out_file.string());
  out << "entity,date,composite,log_mcap,orthogonalized\n";
  for (std::size_t e = 0; e < d.symbols.size(); ++e) {
    const auto& lm = metrics.entities[e].log_mcap.data;
    const auto& o = d.orthogonalized[e].data;
    for (std::size_t i = 0; i < lm.size(); ++i) {
      out << csv::quote(d.symbols[e]) << ',' << lm.dates[i].iso() << ','
          << csv::format_double(d.composite[e]) << ',';
      if (lm.present[i]) out << csv::format_double(lm.values[i]);
      out << ',';
      if (o.present[i]) out << csv::format_double(o.values[i]);
      out << '\n';
    }
  }
}

}  // namespace panelcrypt::decentralization
