#pragma once

// Flat `key = value` run configuration. Lines starting with '#' are comments;
// list values are comma separated; relative paths resolve against the
// directory of the config file.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "panelcrypt/core/csv.hpp"
#include "panelcrypt/core/date.hpp"
#include "panelcrypt/core/error.hpp"
#include "panelcrypt/estimators.hpp"
#include "panelcrypt/quantreg.hpp"

namespace panelcrypt::pipeline {

inline constexpr std::string_view kVersion = "0.1.0";

struct KeyValue {
  std::string value;
  std::size_t line = 0;
};

using KeyValues = std::map<std::string, KeyValue>;

inline KeyValues read_key_values(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw LoadError(file.string(), 0, "cannot open file");
  KeyValues out;
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto s = csv::trim(raw);
    if (s.empty() || s.front() == '#') continue;
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw LoadError(file.string(), line, "expected key = value");
    auto key = csv::trim(std::string_view(s).substr(0, eq));
    auto value = csv::trim(std::string_view(s).substr(eq + 1));
    if (key.empty()) throw LoadError(file.string(), line, "empty key");
    if (out.count(key)) throw LoadError(file.string(), line, "duplicate key '" + key + "'");
    out.emplace(std::move(key), KeyValue{std::move(value), line});
  }
  return out;
}

// Typed access that remembers which keys were consumed so unknown keys can be
// reported.
class KeyReader {
 public:
  KeyReader(KeyValues kv, std::filesystem::path file) : kv_(std::move(kv)), file_(std::move(file)) {}

  std::optional<std::string> text(const std::string& key) {
    auto it = kv_.find(key);
    if (it == kv_.end()) return std::nullopt;
    used_.push_back(key);
    return it->second.value;
  }

  double number(const std::string& key, double fallback) {
    auto v = text(key);
    if (!v) return fallback;
    auto d = csv::try_parse_double(*v);
    if (!d) fail(key, "expected a number");
    return *d;
  }

  std::uint64_t unsigned_integer(const std::string& key, std::uint64_t fallback) {
    auto v = text(key);
    if (!v) return fallback;
    try {
      std::size_t pos = 0;
      const auto n = std::stoull(*v, &pos);
      if (pos != v->size() || v->front() == '-') fail(key, "expected a nonnegative integer");
      return n;
    } catch (const std::logic_error&) {
      fail(key, "expected a nonnegative integer");
    }
  }

  bool boolean(const std::string& key, bool fallback) {
    auto v = text(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1" || *v == "yes") return true;
    if (*v == "false" || *v == "0" || *v == "no") return false;
    fail(key, "expected true or false");
  }

  std::vector<double> numbers(const std::string& key, std::vector<double> fallback) {
    auto v = text(key);
    if (!v) return fallback;
    std::vector<double> out;
    for (const auto& cell : csv::split(*v)) {
      auto d = csv::try_parse_double(csv::trim(cell));
      if (!d) fail(key, "expected a comma separated list of numbers");
      out.push_back(*d);
    }
    return out;
  }

  std::optional<std::filesystem::path> path(const std::string& key) {
    auto v = text(key);
    if (!v || v->empty()) return std::nullopt;
    std::filesystem::path p(*v);
    return (p.is_absolute() ? p : file_.parent_path() / p).lexically_normal();
  }

  std::optional<Date> date(const std::string& key) {
    auto v = text(key);
    if (!v) return std::nullopt;
    auto d = try_parse_date(*v);
    if (!d) fail(key, "expected a date");
    return d;
  }

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    auto it = kv_.find(key);
    throw LoadError(file_.string(), it == kv_.end() ? 0 : it->second.line, key + ": " + what);
  }

  // Keys starting with `open_prefix` are accepted without having been read.
  void reject_unknown(std::string_view open_prefix = {}) const {
    for (const auto& [k, v] : kv_)
      if (std::find(used_.begin(), used_.end(), k) == used_.end() &&
          (open_prefix.empty() || k.rfind(open_prefix, 0) != 0))
        throw LoadError(file_.string(), v.line, "unknown key '" + k + "'");
  }

  const KeyValues& values() const noexcept { return kv_; }

 private:
  KeyValues kv_;
  std::filesystem::path file_;
  std::vector<std::string> used_;
};

inline estimators::Weights parse_weights(const std::string& s) {
  if (s.empty() || s == "none") return estimators::Weights::none;
  if (s == "egls" || s == "cross_section") return estimators::Weights::cross_section_egls;
  throw DomainError("weights must be 'none' or 'egls'");
}

inline estimators::Covariance parse_covariance(const std::string& s) {
  if (s.empty() || s == "white") return estimators::Covariance::white;
  if (s == "classical") return estimators::Covariance::classical;
  throw DomainError("covariance must be 'white' or 'classical'");
}

inline quantreg::QrCovariance parse_qr_covariance(const std::string& s) {
  if (s.empty() || s == "sandwich") return quantreg::QrCovariance::sandwich;
  if (s == "iid") return quantreg::QrCovariance::iid;
  throw DomainError("quantile_covariance must be 'sandwich' or 'iid'");
}

inline std::string_view to_string(estimators::Weights w) {
  return w == estimators::Weights::none ? "none" : "egls";
}
inline std::string_view to_string(estimators::Covariance c) {
  return c == estimators::Covariance::white ? "white" : "classical";
}
inline std::string_view to_string(quantreg::QrCovariance c) {
  return c == quantreg::QrCovariance::sandwich ? "sandwich" : "iid";
}

inline estimators::Effects parse_effects(const std::string& s) {
  if (s == "pooled") return estimators::Effects::pooled;
  if (s == "fixed") return estimators::Effects::fixed;
  if (s == "random") return estimators::Effects::random;
  throw DomainError("effects must be 'pooled', 'fixed' or 'random'");
}

// Model specification for single fits from the command line.
struct FitConfig {
  estimators::ModelSpec model;  // empty regressors: the default set for the effects
  bool standardize_market_volatility = false;
  std::size_t volatility_window = 30;
  quantreg::QuantileOptions quantile;
};

inline FitConfig parse_fit_config(const std::filesystem::path& file) {
  KeyReader r(read_key_values(file), file);
  FitConfig c;
  try {
    if (auto v = r.text("effects")) c.model.effects = parse_effects(*v);
    if (auto v = r.text("weights")) c.model.weights = parse_weights(*v);
    if (auto v = r.text("covariance")) c.model.covariance = parse_covariance(*v);
    c.model.dynamic = r.boolean("dynamic", c.model.dynamic);
    c.model.ar1 = r.boolean("ar1", c.model.ar1);
    c.model.sur = r.boolean("sur", c.model.sur);
    c.model.egls_iterations =
        static_cast<int>(r.unsigned_integer("egls_iterations", static_cast<std::uint64_t>(c.model.egls_iterations)));
    if (auto v = r.text("regressors"))
      for (const auto& t : csv::split(*v))
        if (auto term = csv::trim(t); !term.empty()) c.model.regressors.push_back(term);
    c.standardize_market_volatility = r.boolean("standardize_market_volatility", c.standardize_market_volatility);
    c.volatility_window = r.unsigned_integer("volatility_window", c.volatility_window);
    if (auto v = r.text("quantile_covariance")) c.quantile.covariance = parse_qr_covariance(*v);
    c.quantile.bandwidth_alpha = r.number("bandwidth_alpha", c.quantile.bandwidth_alpha);
  } catch (const DomainError& e) {
    throw LoadError(file.string(), 0, e.what());
  }
  r.reject_unknown();
  if (c.model.egls_iterations < 1) r.fail("egls_iterations", "must be >= 1");
  if (c.volatility_window < 2) r.fail("volatility_window", "must be >= 2");
  if (!(c.quantile.bandwidth_alpha > 0.0 && c.quantile.bandwidth_alpha < 1.0))
    r.fail("bandwidth_alpha", "must lie in (0, 1)");
  return c;
}

struct RunConfig {
  std::optional<std::filesystem::path> panel;            // consolidated panel file
  std::optional<std::filesystem::path> simulate_params;  // synthesize instead of loading
  std::optional<std::filesystem::path> published_coefficients;
  std::filesystem::path output_dir = "report";
  std::uint64_t seed = 1;
  std::size_t volatility_window = 30;
  int max_lag = 4;
  std::vector<double> taus{0.10, 0.25, 0.50, 0.75, 0.90};
  Date split_date{2022, 5, 7};
  bool run_diagnostics = true;
  bool run_baseline = true;
  bool run_quantiles = true;
  bool run_split = true;
  estimators::Weights static_weights = estimators::Weights::cross_section_egls;
  estimators::Weights dynamic_weights = estimators::Weights::none;
  estimators::Covariance covariance = estimators::Covariance::white;
  quantreg::QrCovariance quantile_covariance = quantreg::QrCovariance::sandwich;
  int egls_iterations = 1;
  bool standardize_market_volatility = true;  // figures
  bool standardize_regressions = false;       // fits

  void validate() const {
    if (!panel && !simulate_params) throw DomainError("config: set either panel or simulate_params");
    if (panel && simulate_params) throw DomainError("config: panel and simulate_params are exclusive");
    for (double t : taus)
      if (!(t > 0.0 && t < 1.0)) throw DomainError("config: taus must lie in (0, 1)");
    if (volatility_window < 2) throw DomainError("config: volatility_window must be >= 2");
    if (max_lag < 0) throw DomainError("config: max_lag must be >= 0");
    if (egls_iterations < 1) throw DomainError("config: egls_iterations must be >= 1");
  }

  // Deterministic echo for the manifest; paths are reduced to file names.
  std::vector<std::pair<std::string, std::string>> echo() const {
    auto p = [](const std::optional<std::filesystem::path>& x) {
      return x ? x->filename().string() : std::string{};
    };
    std::string tau_list;
    for (std::size_t i = 0; i < taus.size(); ++i)
      tau_list += (i ? "," : "") + csv::format_double(taus[i]);
    auto b = [](bool v) { return std::string(v ? "true" : "false"); };
    return {{"covariance", std::string(to_string(covariance))},
            {"dynamic_weights", std::string(to_string(dynamic_weights))},
            {"egls_iterations", std::to_string(egls_iterations)},
            {"max_lag", std::to_string(max_lag)},
            {"panel", p(panel)},
            {"published_coefficients", p(published_coefficients)},
            {"quantile_covariance", std::string(to_string(quantile_covariance))},
            {"run_baseline", b(run_baseline)},
            {"run_diagnostics", b(run_diagnostics)},
            {"run_quantiles", b(run_quantiles)},
            {"run_split", b(run_split)},
            {"seed", std::to_string(seed)},
            {"simulate_params", p(simulate_params)},
            {"split_date", split_date.iso()},
            {"standardize_market_volatility", b(standardize_market_volatility)},
            {"standardize_regressions", b(standardize_regressions)},
            {"static_weights", std::string(to_string(static_weights))},
            {"taus", tau_list},
            {"volatility_window", std::to_string(volatility_window)}};
  }
};

inline RunConfig parse_run_config(const std::filesystem::path& file) {
  KeyReader r(read_key_values(file), file);
  RunConfig c;
  try {
    c.panel = r.path("panel");
    c.simulate_params = r.path("simulate_params");
    c.published_coefficients = r.path("published_coefficients");
    if (auto out = r.path("output_dir")) c.output_dir = *out;
    c.seed = r.unsigned_integer("seed", c.seed);
    c.volatility_window = r.unsigned_integer("volatility_window", c.volatility_window);
    c.max_lag = static_cast<int>(r.unsigned_integer("max_lag", static_cast<std::uint64_t>(c.max_lag)));
    c.taus = r.numbers("taus", c.taus);
    if (auto d = r.date("split_date")) c.split_date = *d;
    c.run_diagnostics = r.boolean("run_diagnostics", c.run_diagnostics);
    c.run_baseline = r.boolean("run_baseline", c.run_baseline);
    c.run_quantiles = r.boolean("run_quantiles", c.run_quantiles);
    c.run_split = r.boolean("run_split", c.run_split);
    if (auto v = r.text("static_weights")) c.static_weights = parse_weights(*v);
    if (auto v = r.text("dynamic_weights")) c.dynamic_weights = parse_weights(*v);
    if (auto v = r.text("covariance")) c.covariance = parse_covariance(*v);
    if (auto v = r.text("quantile_covariance")) c.quantile_covariance = parse_qr_covariance(*v);
    c.egls_iterations =
        static_cast<int>(r.unsigned_integer("egls_iterations", static_cast<std::uint64_t>(c.egls_iterations)));
    c.standardize_market_volatility =
        r.boolean("standardize_market_volatility", c.standardize_market_volatility);
    c.standardize_regressions = r.boolean("standardize_regressions", c.standardize_regressions);
  } catch (const DomainError& e) {
    throw LoadError(file.string(), 0, e.what());
  }
  r.reject_unknown();
  c.validate();
  return c;
}

}  // namespace panelcrypt::pipeline
