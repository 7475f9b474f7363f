#include "rrmar/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>

#include "rrmar/format.hpp"
#include "rrmar/io.hpp"

namespace rrmar {

namespace {

namespace fs = std::filesystem;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<std::string> out;
};

struct DataFlags {
  std::string path;
  std::vector<std::string> transforms;  // LABEL=kind
  std::vector<std::string> row_order;
  std::vector<std::string> col_order;
  bool no_demean = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON run configuration (flags override it)");
  cmd->add_option("--seed", c.seed, "Master seed");
  cmd->add_option("--threads", c.threads, "Worker threads (0 = all cores)");
  cmd->add_option("--out", c.out, "Output directory");
}

void add_data(CLI::App* cmd, DataFlags& d) {
  cmd->add_option("--data", d.path, "Long CSV with header time,row,col,value");
  cmd->add_option("--transform", d.transforms, "Per-row transform LABEL=none|diff|logdiff (repeatable)");
  cmd->add_option("--row-order", d.row_order, "Row labels in N1 order")->delimiter(',');
  cmd->add_option("--col-order", d.col_order, "Column labels in N2 order")->delimiter(',');
  cmd->add_flag("--no-demean", d.no_demean, "Keep series means");
}

RunConfig base_config(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_run_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (c.threads) cfg.threads = *c.threads;
  if (c.out) cfg.out = *c.out;
  return cfg;
}

void apply_data(const DataFlags& d, RunConfig& cfg) {
  if (!d.path.empty()) cfg.data.path = d.path;
  if (!d.row_order.empty()) cfg.data.row_order = d.row_order;
  if (!d.col_order.empty()) cfg.data.col_order = d.col_order;
  if (d.no_demean) cfg.data.demean = false;
  for (const auto& t : d.transforms) {
    const auto eq = t.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--transform expects LABEL=kind, got '" + t + "'");
    cfg.data.transforms[t.substr(0, eq)] = parse_transform(t.substr(eq + 1));
  }
  if (cfg.data.path.empty()) throw ConfigError("no data file: pass --data or set data.path in the config");
}

std::string out_dir(const RunConfig& cfg) {
  fs::create_directories(cfg.out);
  return cfg.out;
}

std::string join(const std::string& dir, const std::string& file) { return (fs::path(dir) / file).string(); }

std::array<int, 2> pair_of(const std::vector<int>& v, const char* flag) {
  if (v.size() != 2) throw ConfigError(std::string(flag) + " expects two comma-separated integers");
  return {v[0], v[1]};
}

int cmd_simulate(RunConfig cfg, const std::vector<int>& dims, const std::vector<int>& ranks, std::optional<int> lags,
                 std::optional<Index> t_len, std::optional<double> snr, std::optional<Index> burn_in,
                 std::ostream& out) {
  DgpSpec& s = cfg.simulate;
  if (!dims.empty()) {
    const auto d = pair_of(dims, "--dims");
    s.dims.n1 = d[0];
    s.dims.n2 = d[1];
  }
  if (!ranks.empty()) {
    const auto r = pair_of(ranks, "--ranks");
    s.dims.r1 = r[0];
    s.dims.r2 = r[1];
  } else if (cfg.ranks) {
    s.dims.r1 = (*cfg.ranks)[0];
    s.dims.r2 = (*cfg.ranks)[1];
  }
  if (lags) s.dims.p = *lags;
  else if (cfg.lags) s.dims.p = *cfg.lags;
  if (t_len) s.t_len = *t_len;
  if (snr) s.snr = *snr;
  if (burn_in) s.burn_in = *burn_in;
  s.seed = cfg.seed;
  const SimulatedData sim = simulate(s);
  const std::string dir = out_dir(cfg);
  write_text(join(dir, "series.csv"), export_long_csv(sim.series));
  Json truth = {{"schema", kSchemaVersion}, {"kind", "truth"}, {"seed", cfg.seed}, {"t", s.t_len},
                {"snr", s.snr},            {"burn_in", s.burn_in}, {"params", params_to_json(sim.truth)}};
  write_text(join(dir, "truth.json"), truth.dump(2) + "\n");
  out << "simulated " << sim.series.size() << " matrices of size " << s.dims.n1 << "x" << s.dims.n2 << " (ranks "
      << s.dims.r1 << "," << s.dims.r2 << ", " << s.dims.p << " lag" << (s.dims.p == 1 ? "" : "s") << ") to "
      << join(dir, "series.csv") << "\n";
  return kExitOk;
}

int cmd_fit(RunConfig cfg, const DataFlags& data, const std::vector<int>& ranks, std::optional<int> lags,
            std::ostream& out) {
  apply_data(data, cfg);
  const Dataset ds = ingest(cfg.data);
  std::array<int, 2> r{};
  if (!ranks.empty()) r = pair_of(ranks, "--ranks");
  else if (cfg.ranks) r = *cfg.ranks;
  else throw ConfigError("fit needs --ranks r1,r2");
  const Dims dims{static_cast<int>(ds.series.rows()), static_cast<int>(ds.series.cols()), r[0], r[1],
                  lags ? *lags : cfg.lags.value_or(1)};
  FitConfig fc = cfg.fit;
  fc.seed = cfg.seed;
  fc.threads = cfg.threads;
  const FitResult res = fit(ds.series, dims, fc);
  const std::string report = render_report(comovement_report(res, ds.row_labels, ds.col_labels));
  const std::string dir = out_dir(cfg);
  write_text(join(dir, "fit.json"), fit_to_json(res, ds.row_labels, ds.col_labels).dump(2) + "\n");
  write_text(join(dir, "report.txt"), report);
  out << "log-likelihood " << format_fixed(res.loglik, 4) << " on " << res.n_obs << " observations, "
      << res.diagnostics.n_starts_converged << " starts converged\n";
  for (const auto& w : res.diagnostics.warnings) out << "warning: " << w << "\n";
  out << report;
  return kExitOk;
}

int cmd_select(RunConfig cfg, const DataFlags& data, std::optional<int> lags, std::optional<int> lag_max,
               const std::string& criterion, std::optional<int> fix_r1, std::ostream& out) {
  apply_data(data, cfg);
  if (lags && lag_max) throw ConfigError("pass either --lags or --lag-max, not both");
  const Dataset ds = ingest(cfg.data);
  const int n1 = static_cast<int>(ds.series.rows()), n2 = static_cast<int>(ds.series.cols());
  if (!criterion.empty()) cfg.criterion = parse_criterion(criterion);
  IntRange lag_range{cfg.lag_min, cfg.lag_max.value_or(cfg.lags ? *cfg.lags : 3)};
  if (cfg.lags && !cfg.lag_max) lag_range = {*cfg.lags, *cfg.lags};
  if (lags) lag_range = {*lags, *lags};
  if (lag_max) lag_range = {1, *lag_max};
  IntRange r1 = cfg.r1_range.value_or(IntRange{1, n1});
  const IntRange r2 = cfg.r2_range.value_or(IntRange{1, n2});
  if (fix_r1) r1 = {*fix_r1, *fix_r1};
  SelectConfig sc = cfg.select;
  sc.final_fit = cfg.fit;
  sc.seed = cfg.seed;
  sc.threads = cfg.threads;
  sc.refit_criterion = cfg.criterion;
  const SelectionGrid g = select_ranks(ds.series, n1, n2, r1, r2, lag_range, sc);
  const std::string dir = out_dir(cfg);
  write_text(join(dir, "grid.csv"), grid_csv(g));
  write_text(join(dir, "grid.json"), grid_to_json(g).dump(2) + "\n");
  if (g.winner_fit) {
    write_text(join(dir, "winner_fit.json"), fit_to_json(*g.winner_fit, ds.row_labels, ds.col_labels).dump(2) + "\n");
    write_text(join(dir, "winner_report.txt"),
               render_report(comovement_report(*g.winner_fit, ds.row_labels, ds.col_labels)));
  }
  out << render_grid(g, cfg.criterion);
  for (Criterion k : {Criterion::AIC, Criterion::BIC}) {
    const GridEntry& e = g.best(k);
    out << to_string(k) << " selects ranks (" << e.r1 << "," << e.r2 << ") with " << e.p << " lags\n";
  }
  return kExitOk;
}

int cmd_decompose(const std::string& path, std::optional<std::string> out_path, std::ostream& out) {
  Json j;
  try {
    j = Json::parse(read_text(path));
  } catch (const Json::parse_error& e) {
    throw DataError("'" + path + "' is not valid JSON: " + e.what());
  }
  const SavedFit saved = fit_from_json(j);
  const std::string report = render_report(comovement_report(saved.fit, saved.row_labels, saved.col_labels));
  if (out_path) {
    fs::create_directories(*out_path);
    write_text(join(*out_path, "report.txt"), report);
  }
  out << report;
  return kExitOk;
}

int cmd_mc(RunConfig cfg, const std::string& design, std::optional<int> reps, const std::vector<Index>& t_list,
           std::ostream& out, std::ostream& err) {
  ExperimentSpec spec = cfg.experiment;
  if (!design.empty()) {
    const ExperimentSpec fresh = default_experiment(parse_design(design));
    if (fresh.design != spec.design) spec = fresh;
  }
  if (reps) spec.replications = *reps;
  if (!t_list.empty()) spec.t_list = t_list;
  spec.seed = cfg.seed;
  spec.threads = cfg.threads;
  const ExperimentResult res = run_experiment(spec);
  const std::string dir = out_dir(cfg);
  write_text(join(dir, "experiment.json"), experiment_to_json(res).dump(2) + "\n");
  if (is_selection_design(spec.design)) {
    const std::string table = render_selection_table(res);
    write_text(join(dir, "selection_table.txt"), table);
    write_text(join(dir, "selection.csv"), selection_csv(res));
    out << table;
  } else {
    write_text(join(dir, "coverage.csv"), coverage_csv(res));
    write_text(join(dir, "draws.csv"), draws_csv(res));
    write_text(join(dir, "density.csv"), density_csv(res));
    out << "scenario  T     coefficient     coverage (se)        mean bias\n";
    for (const auto& s : res.scenarios)
      for (size_t j = 0; j < s.labels.size(); ++j) {
        const Index k = static_cast<Index>(j);
        char line[160];
        std::snprintf(line, sizeof line, "%-9s %-5lld %-15s %.3f (%.3f)        %+.4f\n", s.scenario.name.c_str(),
                      static_cast<long long>(s.t), s.labels[j].c_str(), s.coverage(k), s.coverage_se(k),
                      s.mean_bias(k));
        out << line;
      }
  }
  err << "experiment finished in " << format_fixed(res.runtime_seconds, 1) << " s\n";
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Reduced-rank matrix autoregression: simulate, fit, select ranks, run experiments", "rrmar"};
  app.require_subcommand(1);

  Common c_sim, c_fit, c_sel, c_mc;
  DataFlags d_fit, d_sel;

  auto* sim = app.add_subcommand("simulate", "Simulate a series from a random DGP at a fixed SNR");
  add_common(sim, c_sim);
  std::vector<int> sim_dims, sim_ranks;
  std::optional<int> sim_lags;
  std::optional<Index> sim_t, sim_burn;
  std::optional<double> sim_snr;
  sim->add_option("--dims", sim_dims, "N1,N2")->delimiter(',');
  sim->add_option("--ranks", sim_ranks, "r1,r2")->delimiter(',');
  sim->add_option("--lags", sim_lags, "Lag order p");
  sim->add_option("--t", sim_t, "Number of matrices kept");
  sim->add_option("--snr", sim_snr, "Signal-to-noise ratio");
  sim->add_option("--burn-in", sim_burn, "Discarded initial matrices");

  auto* fitc = app.add_subcommand("fit", "Fit one model by maximum likelihood");
  add_common(fitc, c_fit);
  add_data(fitc, d_fit);
  std::vector<int> fit_ranks;
  std::optional<int> fit_lags;
  fitc->add_option("--ranks", fit_ranks, "r1,r2")->delimiter(',');
  fitc->add_option("--lags", fit_lags, "Lag order p");

  auto* sel = app.add_subcommand("select", "Select ranks (and lags) by AIC/BIC over a grid");
  add_common(sel, c_sel);
  add_data(sel, d_sel);
  std::optional<int> sel_lags, sel_lag_max, sel_fix_r1;
  std::string sel_criterion;
  sel->add_option("--lags", sel_lags, "Fix the lag order");
  sel->add_option("--lag-max", sel_lag_max, "Select the lag order from 1..P");
  sel->add_option("--criterion", sel_criterion, "aic or bic (winner refit and table order)");
  sel->add_option("--fix-r1", sel_fix_r1, "Slice mode: fix r1 and select r2 only");

  auto* dec = app.add_subcommand("decompose", "Render the co-movement equations of a saved fit");
  std::string dec_path;
  std::optional<std::string> dec_out;
  dec->add_option("fit", dec_path, "fit.json written by `rrmar fit`")->required();
  dec->add_option("--out", dec_out, "Also write report.txt to this directory");

  auto* mc = app.add_subcommand("mc", "Run a simulation experiment");
  add_common(mc, c_mc);
  std::string mc_design;
  std::optional<int> mc_reps;
  std::vector<Index> mc_t;
  mc->add_option("--design", mc_design,
                 "density_delta, density_gamma, coverage, rank_table, rank_lag_table or appendix_3x6");
  mc->add_option("--replications", mc_reps, "Number of replications");
  mc->add_option("--t-list", mc_t, "Sample sizes, comma separated")->delimiter(',');

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*sim) return cmd_simulate(base_config(c_sim), sim_dims, sim_ranks, sim_lags, sim_t, sim_snr, sim_burn, out);
    if (*fitc) return cmd_fit(base_config(c_fit), d_fit, fit_ranks, fit_lags, out);
    if (*sel) return cmd_select(base_config(c_sel), d_sel, sel_lags, sel_lag_max, sel_criterion, sel_fix_r1, out);
    if (*dec) return cmd_decompose(dec_path, dec_out, out);
    if (*mc) return cmd_mc(base_config(c_mc), mc_design, mc_reps, mc_t, out, err);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DataError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DimensionError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NonFiniteError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitUsage;
}

}  // namespace rrmar
