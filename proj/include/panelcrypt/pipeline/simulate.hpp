#pragma once

// Seeded synthetic panels for the price-risk equation
//   PR_it = b0 + alpha_i + sum_k b_k X_kit + phi PR_i,t-1 + eps_it,
// alpha_i ~ N(0, sigma_alpha^2), eps_it ~ N(0, sigma_i^2) with sigma_i spaced
// geometrically across entities. Raw OHLCV, market-cap, attention and market
// files are generated so that the metric pipeline recomputes the regressors;
// high/low are then set so the Parkinson estimate equals the generated price
// risk (clipped to [kMinPriceRisk, kMaxPriceRisk]).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "panelcrypt/core/csv.hpp"
#include "panelcrypt/core/date.hpp"
#include "panelcrypt/core/error.hpp"
#include "panelcrypt/estimators.hpp"
#include "panelcrypt/panel_store.hpp"
#include "panelcrypt/pipeline/config.hpp"
#include "panelcrypt/pipeline/design.hpp"
#include "panelcrypt/riskmetrics.hpp"

namespace panelcrypt::pipeline {

inline constexpr double kMinPriceRisk = 1e-4;
inline constexpr double kMaxPriceRisk = 1.6;

struct SynthParams {
  std::size_t entities = 18;
  std::size_t periods = 1789;  // design days; one extra leading day is generated
  Date start{2020, 1, 1};
  double intercept = 0.0491;
  // Slopes keyed by design term; defaults follow the static fixed-effects fit.
  std::map<std::string, double> beta{{"Decentralization", 0.0749},  {"Attractiveness", 0.0004},
                                     {"Size", -0.1139},             {"Illiquidity", 0.0349},
                                     {"MarketVolatility", 0.4797},  {"MarketShocks", -0.0003},
                                     {"HyFi*MarketVolatility", -0.3422}};
  double sigma_alpha = 0.0148;
  double sigma_min = 0.01;
  double sigma_max = 0.05;
  double phi = 0.0;
  double hyfi_share = 4.0 / 18.0;
  std::uint64_t seed = 1;
  std::size_t volatility_window = riskmetrics::kDefaultVolatilityWindow;

  void validate() const {
    if (entities < 2) throw DomainError("synthetic panel needs at least 2 entities");
    if (periods < 10) throw DomainError("synthetic panel needs at least 10 periods");
    if (!(std::abs(phi) < 1.0)) throw DomainError("phi must satisfy |phi| < 1");
    if (!(sigma_alpha >= 0.0)) throw DomainError("sigma_alpha must be nonnegative");
    if (!(sigma_min > 0.0) || !(sigma_max >= sigma_min))
      throw DomainError("sigma schedule needs 0 < sigma_min <= sigma_max");
    if (!(hyfi_share >= 0.0 && hyfi_share <= 1.0)) throw DomainError("hyfi_share must lie in [0, 1]");
    for (const auto& [term, b] : beta) {
      term_factors(term);
      if (!std::isfinite(b)) throw DomainError("beta." + term + " must be finite");
    }
  }

  std::vector<std::string> terms() const {
    std::vector<std::string> out;
    for (const auto& [t, b] : beta) out.push_back(t);
    std::sort(out.begin(), out.end(), [](const std::string& a, const std::string& b) {
      auto rank = [](const std::string& t) {
        auto it = std::find(kBaseTerms.begin(), kBaseTerms.end(), term_factors(t).front());
        return std::pair(t.find('*') != std::string::npos, it - kBaseTerms.begin());
      };
      return rank(a) < rank(b) || (rank(a) == rank(b) && a < b);
    });
    return out;
  }

  double entity_sigma(std::size_t e) const {
    if (entities == 1) return sigma_min;
    const double f = static_cast<double>(e) / static_cast<double>(entities - 1);
    return sigma_min * std::pow(sigma_max / sigma_min, f);
  }

  std::vector<std::pair<std::string, std::string>> echo() const {
    std::vector<std::pair<std::string, std::string>> out{
        {"entities", std::to_string(entities)},
        {"periods", std::to_string(periods)},
        {"start_date", start.iso()},
        {"intercept", csv::format_double(intercept)},
        {"sigma_alpha", csv::format_double(sigma_alpha)},
        {"sigma_min", csv::format_double(sigma_min)},
        {"sigma_max", csv::format_double(sigma_max)},
        {"phi", csv::format_double(phi)},
        {"hyfi_share", csv::format_double(hyfi_share)},
        {"seed", std::to_string(seed)},
        {"volatility_window", std::to_string(volatility_window)}};
    for (const auto& [t, b] : beta) out.emplace_back("beta." + t, csv::format_double(b));
    return out;
  }
};

inline SynthParams parse_synth_params(const std::filesystem::path& file) {
  KeyReader r(read_key_values(file), file);
  SynthParams p;
  p.entities = r.unsigned_integer("entities", p.entities);
  p.periods = r.unsigned_integer("periods", p.periods);
  if (auto d = r.date("start_date")) p.start = *d;
  p.intercept = r.number("intercept", p.intercept);
  p.sigma_alpha = r.number("sigma_alpha", p.sigma_alpha);
  p.sigma_min = r.number("sigma_min", p.sigma_min);
  p.sigma_max = r.number("sigma_max", p.sigma_max);
  p.phi = r.number("phi", p.phi);
  p.hyfi_share = r.number("hyfi_share", p.hyfi_share);
  p.seed = r.unsigned_integer("seed", p.seed);
  p.volatility_window = r.unsigned_integer("volatility_window", p.volatility_window);
  bool any_beta = false;
  std::map<std::string, double> beta;
  for (const auto& [k, v] : r.values()) {
    if (k.rfind("beta.", 0) != 0) continue;
    any_beta = true;
    auto d = csv::try_parse_double(v.value);
    if (!d) r.fail(k, "expected a number");
    beta[k.substr(5)] = *d;
  }
  if (any_beta) p.beta = beta;
  r.reject_unknown("beta.");
  try {
    p.validate();
  } catch (const DomainError& e) {
    throw LoadError(file.string(), 0, e.what());
  }
  return p;
}

struct Simulation {
  PanelDataset panel;
  // Design on the generated regressors with the unclipped response; carries
  // the lagged response column when phi != 0.
  estimators::DesignMatrix design;
  std::vector<double> alpha;
  std::vector<double> sigma;
  std::size_t clipped = 0;
  std::vector<std::string> notes;
};

inline Simulation simulate_dgp(const SynthParams& p) {
  p.validate();
  std::mt19937_64 rng(p.seed);
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> u01;
  const double scale = riskmetrics::kParkinsonScale;

  // Market: stochastic log-volatility index and sparse heavy-tailed fraud losses,
  // starting far enough ahead for a full volatility window on the first day.
  const std::size_t lead = p.volatility_window + 1;
  const std::size_t days = p.periods + 1;
  std::vector<MarketRow> market;
  double level = 10000.0, h = 0.0;
  for (std::size_t t = 0; t < lead + days; ++t) {
    h = 0.97 * h + 0.2 * z(rng);
    if (t > 0) level *= std::exp(0.03 * std::exp(h) * z(rng));
    const double loss = u01(rng) < 0.35 ? std::exp(14.0 + 2.5 * z(rng)) : 0.0;
    market.push_back({p.start + static_cast<int>(t) - static_cast<int>(lead), level, loss});
  }

  Simulation sim;
  const auto n_hyfi = static_cast<std::size_t>(std::lround(p.hyfi_share * static_cast<double>(p.entities)));
  std::vector<EntityData> entities;
  for (std::size_t e = 0; e < p.entities; ++e) {
    EntityMeta meta;
    char sym[16];
    std::snprintf(sym, sizeof sym, "S%02zu", e + 1);
    meta.symbol = sym;
    meta.hyfi = e < n_hyfi;
    meta.category = meta.hyfi ? "hyfi" : "token";
    meta.listing_date = p.start;
    // Larger entities are more decentralized, so the orthogonalized index
    // keeps within-entity variation in every draw.
    const double rank = p.entities > 1 ? static_cast<double>(e) / static_cast<double>(p.entities - 1) : 0.5;
    for (auto& g : meta.gini_components) g = 0.35 + 0.5 * rank + 0.1 * (u01(rng) - 0.5);
    EntityData ed{meta, {}};
    double close = 100.0 * static_cast<double>(e + 1), mcap = 1e9 * static_cast<double>(e + 1);
    double attention = 20.0;
    for (std::size_t t = 0; t < days; ++t) {
      Observation o;
      o.date = p.start + static_cast<int>(t);
      const double r = t == 0 ? 0.0 : 0.04 * z(rng);
      const double prev_close = close;
      close *= std::exp(r);
      mcap *= std::exp(r + 0.01 * z(rng));
      attention = std::clamp(attention + 0.1 * (20.0 - attention) + 3.0 * z(rng), 0.0, 100.0);
      const double amihud = std::exp(-18.0 + 0.8 * z(rng));
      const double abs_ret = t == 0 ? 0.0 : std::abs(std::log(close / prev_close));
      o.set(Field::open, close);
      o.set(Field::close, close);
      o.set(Field::high, close);
      o.set(Field::low, close);
      o.set(Field::volume, abs_ret > 0.0 ? abs_ret / amihud : 1e8);
      o.set(Field::mcap, mcap);
      o.set(Field::attention, std::round(attention));
      ed.rows.push_back(o);
    }
    entities.push_back(std::move(ed));
  }

  // Regressors as the metric pipeline sees them.
  const StudyData study = prepare_study(PanelDataset(entities, market), p.volatility_window);
  auto built = build_design(study, p.terms(), {});
  auto& design = built.design;

  for (std::size_t e = 0; e < p.entities; ++e) {
    sim.alpha.push_back(p.sigma_alpha * z(rng));
    sim.sigma.push_back(p.entity_sigma(e));
  }
  Eigen::VectorXd b(design.cols());
  for (Eigen::Index j = 0; j < design.cols(); ++j) b(j) = p.beta.at(design.names[static_cast<std::size_t>(j)]);
  const Eigen::VectorXd xb = design.regressors * b;

  // Response per entity in date order; the leading day has no regressors and
  // starts at the entity's stationary level.
  std::vector<std::map<int, double>> pr(p.entities);
  std::vector<Eigen::Index> first_row(p.entities, -1);
  for (Eigen::Index r = 0; r < design.rows(); ++r) {
    const auto e = static_cast<std::size_t>(design.entity[static_cast<std::size_t>(r)]);
    if (first_row[e] < 0) first_row[e] = r;
  }
  Eigen::VectorXd y(design.rows()), lag(design.rows());
  for (std::size_t e = 0; e < p.entities; ++e) {
    const double base = p.intercept + sim.alpha[e];
    double prev = base / (1.0 - p.phi) + sim.sigma[e] * z(rng);
    pr[e][p.start.days()] = prev;
    for (Eigen::Index r = first_row[e]; r >= 0 && r < design.rows() &&
                                         design.entity[static_cast<std::size_t>(r)] == static_cast<int>(e);
         ++r) {
      const double v = base + xb(r) + p.phi * prev + sim.sigma[e] * z(rng);
      lag(r) = prev;
      y(r) = v;
      pr[e][design.dates[static_cast<std::size_t>(r)].days()] = v;
      prev = v;
    }
  }
  design.response = y;
  if (p.phi != 0.0) design = design.with_column(lag_name(), lag);

  // Raw high/low reproducing the generated (clipped) price risk.
  for (std::size_t e = 0; e < p.entities; ++e) {
    for (auto& o : entities[e].rows) {
      auto it = pr[e].find(o.date.days());
      if (it == pr[e].end()) continue;
      double v = it->second;
      if (v < kMinPriceRisk || v > kMaxPriceRisk) {
        ++sim.clipped;
        v = std::clamp(v, kMinPriceRisk, kMaxPriceRisk);
      }
      const double c = *o.get(Field::close);
      const double range = v * c * scale;
      const double low = c - std::min(0.5 * range, 0.45 * c);
      o.set(Field::low, low);
      o.set(Field::high, low + range);
    }
  }
  sim.panel = PanelDataset(std::move(entities), std::move(market));
  sim.design = std::move(design);
  sim.notes = {
      "market index: log returns 0.03*exp(h_t)*z_t with h_t = 0.97 h_t-1 + 0.2 z",
      "market shock loss: exp(14 + 2.5 z) with probability 0.35, else 0",
      "close: log returns N(0, 0.04^2); open = close",
      "mcap: log change = close log return + N(0, 0.01^2)",
      "attention: mean-reverting to 20, innovations N(0, 9), clamped to [0, 100], rounded",
      "volume: |log return| / exp(-18 + 0.8 z)",
      "gini components: 0.35 + 0.5 * size rank + U(-0.05, 0.05) per entity and dimension",
      "price risk clipped to [" + csv::format_double(kMinPriceRisk) + ", " +
          csv::format_double(kMaxPriceRisk) + "]: " + std::to_string(sim.clipped) + " rows"};
  return sim;
}

inline void write_simulation(const Simulation& sim, const SynthParams& p, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_panel(sim.panel, dir / "panel.csv");
  std::ofstream m(dir / "manifest.txt");
  if (!m) throw Error("cannot write " + (dir / "manifest.txt").string());
  m << "panelcrypt simulate\nversion = " << kVersion << "\n\n[params]\n";
  for (const auto& [k, v] : p.echo()) m << k << " = " << v << '\n';
  m << "\n[processes]\n";
  for (const auto& n : sim.notes) m << n << '\n';
  m << "\n[entities]\n";
  for (std::size_t e = 0; e < sim.alpha.size(); ++e)
    m << sim.panel.entities()[e].meta.symbol << " alpha = " << csv::format_double(sim.alpha[e])
      << " sigma = " << csv::format_double(sim.sigma[e])
      << " hyfi = " << (sim.panel.entities()[e].meta.hyfi ? 1 : 0) << '\n';
  m << "\n[files]\npanel.csv\n";
}

}  // namespace panelcrypt::pipeline
