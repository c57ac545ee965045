#pragma once

// Pre-estimation diagnostics: ADF and CADF/CIPS unit-root tests,
// cross-sectional dependence tests, descriptive statistics and pairwise
// correlation matrices.

#include <Eigen/Dense>
#include <boost/math/distributions/normal.hpp>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "panelcrypt/core/error.hpp"
#include "panelcrypt/core/linalg.hpp"
#include "panelcrypt/core/series.hpp"
#include "panelcrypt/estimators.hpp"

namespace panelcrypt::diagnostics {

inline constexpr double kCadfLower = -6.19;
inline constexpr double kCadfUpper = 2.61;
inline constexpr int kDefaultMaxLag = 4;

// Critical values at 1%, 5% and 10%, lower tail.
using CriticalValues = std::array<double, 3>;

struct UnitRootResult {
  double statistic = 0.0;  // ADF t-ratio, or CIPS
  int lags = 0;            // ADF only
  std::size_t nobs = 0;
  std::string deterministic = "constant";
  std::vector<double> cadf;            // per-entity CADF statistics
  std::vector<int> cadf_lags;
  std::vector<double> truncated_cadf;  // bounded to [kCadfLower, kCadfUpper]
  double truncated_statistic = 0.0;
  CriticalValues critical{};
  CriticalValues truncated_critical{};
  std::string stars;
  std::string truncated_stars;
};

struct DependenceResult {
  std::string test;
  double statistic = 0.0;
  double p_value = 1.0;
  std::size_t pairs = 0;
  std::vector<std::pair<std::size_t, std::size_t>> excluded;
};

struct DescribeRow {
  double mean = 0.0, median = 0.0, maximum = 0.0, minimum = 0.0, std_dev = 0.0;
  std::optional<double> skewness, kurtosis;  // undefined for constant series
  std::size_t count = 0;
};

inline double truncate_cadf(double t) { return std::clamp(t, kCadfLower, kCadfUpper); }

// Lower-tail stars: *** below the 1% value, ** below 5%, * below 10%.
inline std::string unit_root_stars(double stat, const CriticalValues& cv) {
  if (stat < cv[0]) return "***";
  if (stat < cv[1]) return "**";
  if (stat < cv[2]) return "*";
  return "";
}

// MacKinnon (2010) response surfaces, constant and no trend, one variable.
inline CriticalValues adf_critical_values(std::size_t nobs) {
  const double T = static_cast<double>(nobs);
  const double i1 = 1.0 / T, i2 = i1 * i1, i3 = i2 * i1;
  return {-3.43035 - 6.5393 * i1 - 16.786 * i2 - 79.433 * i3,
          -2.86154 - 2.8903 * i1 - 4.234 * i2 - 40.040 * i3,
          -2.56677 - 1.5384 * i1 - 2.809 * i2};
}

namespace detail {

using DayMap = std::map<int, double>;

inline DayMap to_day_map(const Series& s) {
  DayMap m;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (s.present[i]) m.emplace(s.dates[i].days(), s.values[i]);
  return m;
}

inline std::optional<double> at(const DayMap& m, int day) {
  auto it = m.find(day);
  if (it == m.end()) return std::nullopt;
  return it->second;
}

inline std::optional<double> diff(const DayMap& m, int day) {
  auto a = at(m, day), b = at(m, day - 1);
  if (!a || !b) return std::nullopt;
  return *a - *b;
}

struct Regression {
  Eigen::VectorXd y;
  Eigen::MatrixXd X;  // intercept first, lagged level second
  std::vector<int> days;
};

// Rows of dy_t = a + rho y_{t-1} [+ c ybar_{t-1} + sum_{j=0..p} d_j dybar_{t-j}]
//                + sum_{j=1..p} g_j dy_{t-j}.
// When `first_day` is set only rows on or after it are kept.
inline Regression build_rows(const DayMap& y, const DayMap* avg, int p,
                             std::optional<int> first_day = std::nullopt) {
  const int extra = avg ? 2 + p : 0;
  const int k = 2 + p + extra;
  std::vector<std::vector<double>> rows;
  std::vector<double> lhs;
  std::vector<int> days;
  for (const auto& [t, v] : y) {
    (void)v;
    if (first_day && t < *first_day) continue;
    auto dy = diff(y, t);
    auto ylag = at(y, t - 1);
    if (!dy || !ylag) continue;
    std::vector<double> row{1.0, *ylag};
    bool ok = true;
    for (int j = 1; j <= p && ok; ++j) {
      auto d = diff(y, t - j);
      if (!d) ok = false;
      else row.push_back(*d);
    }
    if (ok && avg) {
      auto al = at(*avg, t - 1);
      if (!al) ok = false;
      else row.push_back(*al);
      for (int j = 0; j <= p && ok; ++j) {
        auto d = diff(*avg, t - j);
        if (!d) ok = false;
        else row.push_back(*d);
      }
    }
    if (!ok) continue;
    rows.push_back(std::move(row));
    lhs.push_back(*dy);
    days.push_back(t);
  }
  Regression r;
  r.y.resize(static_cast<Eigen::Index>(lhs.size()));
  r.X.resize(static_cast<Eigen::Index>(lhs.size()), k);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    r.y(static_cast<Eigen::Index>(i)) = lhs[i];
    for (int c = 0; c < k; ++c) r.X(static_cast<Eigen::Index>(i), c) = rows[i][static_cast<std::size_t>(c)];
  }
  r.days = std::move(days);
  return r;
}

struct TRatio {
  double t = 0.0;
  double ssr = 0.0;
  std::size_t nobs = 0;
};

inline TRatio lagged_level_t(const Regression& r) {
  const auto n = r.X.rows(), k = r.X.cols();
  if (n <= k) throw DomainError("unit-root regression: too few observations");
  const auto ls = linalg::least_squares(r.X, r.y);
  const double s2 = ls.ssr / static_cast<double>(n - k);
  const double se = std::sqrt(s2 * ls.xtx_inv(1, 1));
  if (!(se > 0.0)) throw DomainError("unit-root regression: zero residual variance");
  return {ls.beta(1) / se, ls.ssr, static_cast<std::size_t>(n)};
}

struct LagChoice {
  int lags = 0;
  TRatio fit;
};

// AIC over 0..max_lag on the sample common to all candidate lags, then the
// chosen lag re-estimated on its full available sample.
inline LagChoice select_and_fit(const DayMap& y, const DayMap* avg, int max_lag) {
  const auto longest = build_rows(y, avg, max_lag);
  if (longest.y.size() == 0) throw DomainError("unit-root regression: no usable observations");
  const int first = longest.days.front();
  int best = 0;
  double best_aic = std::numeric_limits<double>::infinity();
  for (int p = 0; p <= max_lag; ++p) {
    auto r = build_rows(y, avg, p, first);
    const auto n = static_cast<double>(r.y.size());
    if (r.X.rows() <= r.X.cols()) continue;
    const auto ls = linalg::least_squares(r.X, r.y);
    const double aic = std::log(ls.ssr / n) + 2.0 * static_cast<double>(r.X.cols()) / n;
    if (aic < best_aic) {
      best_aic = aic;
      best = p;
    }
  }
  return {best, lagged_level_t(build_rows(y, avg, best))};
}

inline DayMap cross_section_average(const std::vector<DayMap>& panel) {
  std::map<int, std::pair<double, int>> acc;
  for (const auto& m : panel)
    for (const auto& [d, v] : m) {
      auto& a = acc[d];
      a.first += v;
      a.second += 1;
    }
  DayMap out;
  for (const auto& [d, a] : acc) out.emplace(d, a.first / a.second);
  return out;
}

inline double lower_quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto i = static_cast<std::size_t>(std::floor(pos));
  const double f = pos - static_cast<double>(i);
  return i + 1 < v.size() ? v[i] + f * (v[i + 1] - v[i]) : v[i];
}

}  // namespace detail

inline void check_series_length(std::size_t n, int max_lag) {
  if (max_lag < 0) throw DomainError("max_lag must be nonnegative");
  if (n <= static_cast<std::size_t>(max_lag) + 3)
    throw DomainError("unit-root test: series too short for the lag order");
}

// ADF with a constant; consecutive calendar days only (gaps break the
// differences, they are not bridged).
inline UnitRootResult adf(const Series& series, int max_lag = kDefaultMaxLag) {
  check_series_length(series.count_present(), max_lag);
  const auto m = detail::to_day_map(series);
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& [d, v] : m) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (!(hi > lo)) throw DomainError("unit-root test: zero-variance series");
  const auto choice = detail::select_and_fit(m, nullptr, max_lag);
  UnitRootResult out;
  out.statistic = choice.fit.t;
  out.lags = choice.lags;
  out.nobs = choice.fit.nobs;
  out.critical = adf_critical_values(out.nobs);
  out.stars = unit_root_stars(out.statistic, out.critical);
  return out;
}

// Values treated as consecutive days.
inline UnitRootResult adf(const std::vector<double>& values, int max_lag = kDefaultMaxLag) {
  Series s;
  Date d(2000, 1, 1);
  for (double v : values) s.push(d = d + 1, v);
  return adf(s, max_lag);
}

struct CadfStatistics {
  std::vector<double> cadf;
  std::vector<int> lags;
  std::size_t mean_nobs = 0;
};

inline CadfStatistics cadf_statistics(const std::vector<Series>& panel, int max_lag = kDefaultMaxLag) {
  if (panel.size() < 2) throw DomainError("CIPS: need at least 2 entities");
  std::vector<detail::DayMap> maps;
  for (const auto& s : panel) {
    check_series_length(s.count_present(), max_lag);
    maps.push_back(detail::to_day_map(s));
  }
  const auto avg = detail::cross_section_average(maps);
  CadfStatistics out;
  std::size_t total = 0;
  for (const auto& m : maps) {
    detail::LagChoice c;
    try {
      c = detail::select_and_fit(m, &avg, max_lag);
    } catch (const DomainError& e) {
      throw DomainError(std::string("CIPS: insufficient overlap with the cross-section average (") +
                        e.what() + ")");
    }
    out.cadf.push_back(c.fit.t);
    out.lags.push_back(c.lags);
    total += c.fit.nobs;
  }
  out.mean_nobs = (total + maps.size() / 2) / maps.size();
  return out;
}

struct CipsCriticalValues {
  CriticalValues plain{};
  CriticalValues truncated{};
};

// Lower-tail quantiles of CIPS under independent Gaussian random walks with
// CADF lag order 0, from a fixed-seed simulation. Results are cached per
// (N, T).
inline CipsCriticalValues cips_critical_values(std::size_t N, std::size_t T, int replications = 400) {
  static std::mutex mu;
  static std::map<std::tuple<std::size_t, std::size_t, int>, CipsCriticalValues> cache;
  {
    const std::lock_guard lock(mu);
    if (auto it = cache.find({N, T, replications}); it != cache.end()) return it->second;
  }
  if (N < 2 || T < 8) throw DomainError("CIPS critical values: need N >= 2 and T >= 8");
  std::mt19937_64 rng(0x5eedc1b5ULL ^ (N * 1000003ULL) ^ T);
  std::normal_distribution<double> nd;
  std::vector<double> plain, trunc;
  std::vector<detail::DayMap> maps(N);
  for (int r = 0; r < replications; ++r) {
    for (auto& m : maps) {
      m.clear();
      double y = 0.0;
      for (std::size_t t = 0; t < T; ++t) m.emplace(static_cast<int>(t), y += nd(rng));
    }
    const auto avg = detail::cross_section_average(maps);
    double s = 0.0, st = 0.0;
    for (const auto& m : maps) {
      const double t = detail::lagged_level_t(detail::build_rows(m, &avg, 0)).t;
      s += t;
      st += truncate_cadf(t);
    }
    plain.push_back(s / static_cast<double>(N));
    trunc.push_back(st / static_cast<double>(N));
  }
  CipsCriticalValues cv;
  const std::array<double, 3> levels{0.01, 0.05, 0.10};
  for (std::size_t i = 0; i < 3; ++i) {
    cv.plain[i] = detail::lower_quantile(plain, levels[i]);
    cv.truncated[i] = detail::lower_quantile(trunc, levels[i]);
  }
  const std::lock_guard lock(mu);
  cache.emplace(std::make_tuple(N, T, replications), cv);
  return cv;
}

inline UnitRootResult cips_from_cadf(std::vector<double> cadf, std::size_t T) {
  if (cadf.empty()) throw DomainError("CIPS: no CADF statistics");
  UnitRootResult out;
  out.cadf = std::move(cadf);
  double s = 0.0, st = 0.0;
  for (double t : out.cadf) {
    s += t;
    out.truncated_cadf.push_back(truncate_cadf(t));
    st += out.truncated_cadf.back();
  }
  const double n = static_cast<double>(out.cadf.size());
  out.statistic = s / n;
  out.truncated_statistic = st / n;
  out.nobs = T;
  if (out.cadf.size() >= 2 && T >= 8) {
    const auto cv = cips_critical_values(out.cadf.size(), T);
    out.critical = cv.plain;
    out.truncated_critical = cv.truncated;
    out.stars = unit_root_stars(out.statistic, cv.plain);
    out.truncated_stars = unit_root_stars(out.truncated_statistic, cv.truncated);
  }
  return out;
}

inline UnitRootResult cips(const std::vector<Series>& panel, int max_lag = kDefaultMaxLag) {
  const auto c = cadf_statistics(panel, max_lag);
  auto out = cips_from_cadf(c.cadf, c.mean_nobs);
  out.cadf_lags = c.lags;
  return out;
}

namespace detail {

struct Overlap {
  std::vector<double> a, b;
};

inline Overlap overlap(const Series& x, const Series& y) {
  Overlap o;
  std::size_t i = 0, j = 0;
  while (i < x.size() && j < y.size()) {
    if (x.dates[i] < y.dates[j]) ++i;
    else if (y.dates[j] < x.dates[i]) ++j;
    else {
      if (x.present[i] && y.present[j]) {
        o.a.push_back(x.values[i]);
        o.b.push_back(y.values[j]);
      }
      ++i;
      ++j;
    }
  }
  return o;
}

inline std::optional<double> pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (!(saa > 0.0) || !(sbb > 0.0)) return std::nullopt;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

}  // namespace detail

// Breusch-Pagan LM, Pesaran scaled LM, bias-corrected scaled LM and Pesaran
// CD over pairwise overlapping samples. Pairs with fewer than 3 common
// observations (or a constant side) are excluded and listed.
inline std::vector<DependenceResult> dependence_tests(const std::vector<Series>& residuals) {
  const std::size_t N = residuals.size();
  if (N < 2) throw DomainError("dependence tests: need at least 2 entities");
  double lm = 0.0, scaled = 0.0, cd = 0.0, tsum = 0.0;
  std::size_t pairs = 0;
  std::vector<std::pair<std::size_t, std::size_t>> excluded;
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = i + 1; j < N; ++j) {
      const auto o = detail::overlap(residuals[i], residuals[j]);
      std::optional<double> rho;
      if (o.a.size() >= 3) rho = detail::pearson(o.a, o.b);
      if (!rho) {
        excluded.emplace_back(i, j);
        continue;
      }
      const double T = static_cast<double>(o.a.size());
      lm += T * *rho * *rho;
      scaled += T * *rho * *rho - 1.0;
      cd += std::sqrt(T) * *rho;
      tsum += T;
      ++pairs;
    }
  if (pairs == 0) throw DomainError("dependence tests: no pair has sufficient overlap");
  const double M = static_cast<double>(pairs);
  const double Tbar = tsum / M;
  const double Nd = static_cast<double>(N);
  const boost::math::normal_distribution<double> nd;
  auto upper = [&](double z) { return boost::math::cdf(boost::math::complement(nd, z)); };

  std::vector<DependenceResult> out;
  out.push_back({"BP-LM", lm, estimators::chi2_survival(lm, M), pairs, excluded});
  const double slm = scaled / std::sqrt(2.0 * M);
  out.push_back({"scaled-LM", slm, upper(slm), pairs, excluded});
  const double bc = slm - Nd / (2.0 * (Tbar - 1.0));
  out.push_back({"bias-corrected-LM", bc, upper(bc), pairs, excluded});
  const double cds = cd / std::sqrt(M);
  out.push_back({"Pesaran-CD", cds, std::min(1.0, 2.0 * upper(std::abs(cds))), pairs, excluded});
  return out;
}

inline DescribeRow describe(const std::vector<double>& values) {
  std::vector<double> v;
  for (double x : values)
    if (std::isfinite(x)) v.push_back(x);
  if (v.size() < 2) throw DomainError("describe: need at least 2 values");
  DescribeRow r;
  r.count = v.size();
  const double n = static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += x;
  r.mean = s / n;
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double x : v) {
    const double d = x - r.mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  r.std_dev = std::sqrt(m2 * n / (n - 1.0));
  if (m2 > 0.0) {
    r.skewness = m3 / std::pow(m2, 1.5);
    r.kurtosis = m4 / (m2 * m2);
  }
  std::sort(v.begin(), v.end());
  r.minimum = v.front();
  r.maximum = v.back();
  const std::size_t h = v.size() / 2;
  r.median = v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
  return r;
}

inline DescribeRow describe(const Series& s) { return describe(s.present_values()); }

// Pearson correlations over pairwise-complete observations.
inline Eigen::MatrixXd correlation_matrix(const std::vector<Series>& series,
                                          const std::vector<std::string>& names = {}) {
  const auto k = static_cast<Eigen::Index>(series.size());
  Eigen::MatrixXd C = Eigen::MatrixXd::Identity(k, k);
  auto label = [&](Eigen::Index i) {
    return static_cast<std::size_t>(i) < names.size() ? names[static_cast<std::size_t>(i)]
                                                      : "#" + std::to_string(i);
  };
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = i + 1; j < k; ++j) {
      const auto o = detail::overlap(series[static_cast<std::size_t>(i)], series[static_cast<std::size_t>(j)]);
      if (o.a.size() < 3)
        throw DomainError("correlation: fewer than 3 common observations for " + label(i) + " and " +
                          label(j));
      const auto rho = detail::pearson(o.a, o.b);
      if (!rho) throw DomainError("correlation: zero variance in pair " + label(i) + ", " + label(j));
      C(i, j) = C(j, i) = *rho;
    }
  return C;
}

// Column correlations of a fully observed matrix.
inline Eigen::MatrixXd correlation_matrix(const Eigen::MatrixXd& columns) {
  const auto k = columns.cols();
  Eigen::MatrixXd C = Eigen::MatrixXd::Identity(k, k);
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = i + 1; j < k; ++j) {
      const std::vector<double> a(columns.col(i).data(), columns.col(i).data() + columns.rows());
      const std::vector<double> b(columns.col(j).data(), columns.col(j).data() + columns.rows());
      if (a.size() < 3) throw DomainError("correlation: fewer than 3 observations");
      const auto rho = detail::pearson(a, b);
      if (!rho) throw DomainError("correlation: zero-variance column");
      C(i, j) = C(j, i) = *rho;
    }
  return C;
}

}  // namespace panelcrypt::diagnostics
