#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "panelcrypt/panelcrypt.hpp"

namespace fs = std::filesystem;
using namespace panelcrypt;

namespace {

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw Error("cannot write " + p.string());
  return out;
}

PanelDataset panel_with_meta(PanelDataset panel, const std::optional<fs::path>& meta_file) {
  if (!meta_file) return panel;
  std::map<std::string, EntityMeta> metas;
  for (auto& m : load_meta(*meta_file)) metas[m.symbol] = m;
  std::vector<EntityData> entities = panel.entities();
  for (auto& e : entities) {
    auto it = metas.find(e.meta.symbol);
    if (it == metas.end()) throw DomainError("no metadata for entity '" + e.meta.symbol + "'");
    e.meta = it->second;
  }
  return PanelDataset(std::move(entities), panel.market());
}

std::vector<std::string> default_terms(estimators::Effects e) {
  return e == estimators::Effects::fixed ? pipeline::fixed_effects_terms() : pipeline::random_effects_terms();
}

void write_fit(const estimators::FitResult& f, const fs::path& dir) {
  fs::create_directories(dir);
  {
    auto out = open_out(dir / "coefficients.csv");
    out << "term,estimate,std_error,z,p_value,stars\n";
    for (std::size_t j = 0; j < f.names.size(); ++j) {
      const auto i = static_cast<Eigen::Index>(j);
      const double p = estimators::normal_p_value(f.coef(i), f.se(i));
      out << csv::quote(f.names[j]) << ',' << csv::format_double(f.coef(i)) << ','
          << csv::format_double(f.se(i)) << ',' << csv::format_double(f.se(i) > 0 ? f.coef(i) / f.se(i) : 0.0)
          << ',' << csv::format_double(p) << ',' << estimators::significance_stars(p) << '\n';
    }
  }
  {
    auto out = open_out(dir / "covariance.csv");
    out << "term";
    for (const auto& n : f.names) out << ',' << csv::quote(n);
    out << '\n';
    for (std::size_t r = 0; r < f.names.size(); ++r) {
      out << csv::quote(f.names[r]);
      for (std::size_t c = 0; c < f.names.size(); ++c)
        out << ',' << csv::format_double(f.cov(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)));
      out << '\n';
    }
  }
  auto out = open_out(dir / "summary.txt");
  out << "Estimator: " << f.estimator << '\n';
  for (std::size_t j = 0; j < f.names.size(); ++j) {
    const auto i = static_cast<Eigen::Index>(j);
    const double p = estimators::normal_p_value(f.coef(i), f.se(i));
    out << f.names[j] << "  " << csv::format_fixed(f.coef(i), 4) << estimators::significance_stars(p) << " ("
        << csv::format_fixed(f.se(i), 4) << ")\n";
  }
  if (f.components) {
    out << "Cross-section random S.D. " << csv::format_fixed(f.components->sigma_alpha, 4) << "  rho "
        << csv::format_fixed(f.components->rho_cross, 4) << '\n';
    out << "Idiosyncratic random S.D. " << csv::format_fixed(f.components->sigma_eps, 4) << "  rho "
        << csv::format_fixed(f.components->rho_idio, 4) << '\n';
  }
  if (f.phi) out << "Long-run multiplier " << csv::format_fixed(estimators::long_run_effect(1.0, *f.phi), 4) << '\n';
  out << "R-squared " << csv::format_fixed(f.r2, 4) << '\n';
  out << "Adj. R-squared " << csv::format_fixed(f.adj_r2, 4) << '\n';
  out << "Entities " << f.n_entities << '\n';
  out << "Periods " << f.n_periods << '\n';
  out << "Observations " << f.nobs << '\n';
  for (const auto& fl : f.flags) out << "Flag: " << fl << '\n';
}

pipeline::StudyData load_study(const fs::path& panel_file, std::size_t window) {
  return pipeline::prepare_study(read_panel(panel_file), window);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Panel econometrics for cryptocurrency price risk"};
  app.set_version_flag("--version", std::string(pipeline::kVersion));
  app.require_subcommand(1);

  fs::path entities_dir, meta_file, market_file, out_path, panel_file, dist_file, spec_file, config_file,
      params_file, coef_file;
  std::optional<fs::path> meta_override;
  std::size_t window = riskmetrics::kDefaultVolatilityWindow;
  std::vector<double> taus{0.10, 0.25, 0.50, 0.75, 0.90};
  std::optional<std::uint64_t> seed;
  int max_lag = diagnostics::kDefaultMaxLag;

  auto* ingest = app.add_subcommand("ingest", "Consolidate entity, metadata and market files into one panel CSV");
  ingest->add_option("--entities", entities_dir, "Directory of per-entity CSV files")->required()->check(CLI::ExistingDirectory);
  ingest->add_option("--meta", meta_file, "Entity metadata CSV")->required()->check(CLI::ExistingFile);
  ingest->add_option("--market", market_file, "Market CSV")->required()->check(CLI::ExistingFile);
  ingest->add_option("--out", out_path, "Output panel CSV")->required();

  auto* metrics = app.add_subcommand("metrics", "Compute risk metrics in long format");
  metrics->add_option("--panel", panel_file)->required()->check(CLI::ExistingFile);
  metrics->add_option("--out", out_path)->required();
  metrics->add_option("--window", window, "Market volatility window in days");

  auto* gini = app.add_subcommand("gini", "Gini coefficient of a distribution, one value per line");
  gini->add_option("--dist", dist_file)->required()->check(CLI::ExistingFile);

  auto* dec = app.add_subcommand("decentralization", "Composite and orthogonalized decentralization");
  dec->add_option("--panel", panel_file)->required()->check(CLI::ExistingFile);
  dec->add_option("--meta", meta_override, "Metadata overriding the panel's own")->check(CLI::ExistingFile);
  dec->add_option("--out", out_path)->required();
  dec->add_option("--window", window);

  auto* fit = app.add_subcommand("fit", "Fit a pooled, fixed- or random-effects panel model");
  fit->add_option("--panel", panel_file)->required()->check(CLI::ExistingFile);
  fit->add_option("--spec", spec_file, "Model specification file")->required()->check(CLI::ExistingFile);
  fit->add_option("--out", out_path, "Output directory")->required();

  auto* quantile = app.add_subcommand("quantile", "Pooled quantile regressions");
  quantile->add_option("--panel", panel_file)->required()->check(CLI::ExistingFile);
  quantile->add_option("--spec", spec_file)->required()->check(CLI::ExistingFile);
  quantile->add_option("--taus", taus)->delimiter(',');
  quantile->add_option("--out", out_path)->required();

  auto* diagnose = app.add_subcommand("diagnose", "Unit-root, dependence, correlation and descriptive tables");
  diagnose->add_option("--panel", panel_file)->required()->check(CLI::ExistingFile);
  diagnose->add_option("--out", out_path)->required();
  diagnose->add_option("--max-lag", max_lag);
  diagnose->add_option("--window", window);

  auto* report = app.add_subcommand("report", "Run the full pipeline from a run configuration");
  report->add_option("--config", config_file)->required()->check(CLI::ExistingFile);

  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic panel from a known process");
  simulate->add_option("--params", params_file)->required()->check(CLI::ExistingFile);
  simulate->add_option("--seed", seed);
  simulate->add_option("--out", out_path)->required();

  auto* figures = app.add_subcommand("figures", "Figure data from a coefficient file");
  figures->add_option("--coefficients", coef_file)->required()->check(CLI::ExistingFile);
  figures->add_option("--out", out_path)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest) {
      const auto files = entity_files_in(entities_dir);
      write_panel(load_panel(files, market_file, meta_file), out_path);
    } else if (*metrics) {
      const auto panel = read_panel(panel_file);
      riskmetrics::write_metrics(riskmetrics::compute_metrics(panel, window), out_path);
    } else if (*gini) {
      std::ifstream in(dist_file);
      std::vector<double> v;
      std::string line;
      std::size_t n = 0;
      while (std::getline(in, line)) {
        ++n;
        const auto s = csv::trim(line);
        if (s.empty()) continue;
        auto d = csv::try_parse_double(s);
        if (!d) throw LoadError(dist_file.string(), n, "expected a number");
        v.push_back(*d);
      }
      std::cout << csv::format_double(decentralization::gini(v)) << '\n';
    } else if (*dec) {
      const auto study = pipeline::prepare_study(panel_with_meta(read_panel(panel_file), meta_override), window);
      decentralization::write_decentralization(study.decentralization, study.metrics, out_path);
    } else if (*fit) {
      auto cfg = pipeline::parse_fit_config(spec_file);
      const auto study = load_study(panel_file, cfg.volatility_window);
      pipeline::DesignOptions o;
      o.effects = cfg.model.effects;
      o.dynamic = cfg.model.dynamic;
      o.standardize_market_volatility = cfg.standardize_market_volatility;
      const auto terms = cfg.model.regressors.empty() ? default_terms(cfg.model.effects) : cfg.model.regressors;
      const auto d = pipeline::build_design(study, terms, o);
      const auto result = estimators::fit_model(d.design, cfg.model);
      write_fit(result, out_path);
      for (const auto& n : d.ledger.notes) std::cerr << "note: " << n << '\n';
    } else if (*quantile) {
      auto cfg = pipeline::parse_fit_config(spec_file);
      const auto study = load_study(panel_file, cfg.volatility_window);
      pipeline::DesignOptions o;
      o.standardize_market_volatility = cfg.standardize_market_volatility;
      const auto terms =
          cfg.model.regressors.empty() ? pipeline::random_effects_terms() : cfg.model.regressors;
      const auto d = pipeline::build_design(study, terms, o);
      fs::create_directories(out_path);
      auto path = open_out(out_path / "quantile_path.csv");
      path << "tau,term,estimate,se\n";
      for (double tau : taus) {
        const auto q = quantreg::fit_quantile(d.design, tau, cfg.quantile);
        auto out = open_out(out_path / ("quantile_" + csv::format_fixed(tau, 2) + ".csv"));
        out << "term,estimate,std_error,z,p_value,stars\n";
        for (std::size_t j = 0; j < q.names.size(); ++j) {
          const auto i = static_cast<Eigen::Index>(j);
          const double p = estimators::normal_p_value(q.coef(i), q.se(i));
          out << csv::quote(q.names[j]) << ',' << csv::format_double(q.coef(i)) << ','
              << csv::format_double(q.se(i)) << ','
              << csv::format_double(q.se(i) > 0 ? q.coef(i) / q.se(i) : 0.0) << ',' << csv::format_double(p)
              << ',' << estimators::significance_stars(p) << '\n';
          path << csv::format_double(tau) << ',' << csv::quote(q.names[j]) << ','
               << csv::format_double(q.coef(i)) << ',' << csv::format_double(q.se(i)) << '\n';
        }
        out << "# pseudo_r_squared," << csv::format_double(q.pseudo_r2) << '\n';
        for (const auto& f : q.flags) std::cerr << "tau " << tau << ": " << f << '\n';
      }
    } else if (*diagnose) {
      pipeline::RunConfig c;
      c.panel = panel_file;
      c.output_dir = out_path;
      c.max_lag = max_lag;
      c.volatility_window = window;
      c.run_baseline = c.run_quantiles = c.run_split = false;
      const auto r = pipeline::run_report(c);
      for (const auto& [k, v] : r.failures) std::cerr << k << ": " << v << '\n';
      return r.ok() ? 0 : 1;
    } else if (*report) {
      const auto r = pipeline::run_report(pipeline::parse_run_config(config_file));
      for (const auto& [k, v] : r.failures) std::cerr << k << ": " << v << '\n';
      std::cout << r.output_dir.string() << '\n';
      return r.ok() ? 0 : 1;
    } else if (*simulate) {
      auto p = pipeline::parse_synth_params(params_file);
      if (seed) p.seed = *seed;
      pipeline::write_simulation(pipeline::simulate_dgp(p), p, out_path);
    } else if (*figures) {
      const auto files =
          pipeline::emit_figures(pipeline::figure_inputs_from_book(pipeline::load_coefficients(coef_file)), out_path);
      for (const auto& s : files.skipped) std::cerr << "skipped " << s << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
