#include "rrmar/montecarlo.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <sstream>

#include "rrmar/format.hpp"
#include "rrmar/parallel.hpp"
#include "rrmar/simulate.hpp"

namespace rrmar {

namespace {

using u64 = std::uint64_t;

constexpr double kMaxFailureShare = 0.10;

struct Draw {
  bool ok = false;
  std::vector<double> estimate, truth;
  std::vector<bool> covered;
};

struct Pick {
  bool ok = false;
  int r1[2] = {0, 0};  // indexed by criterion: AIC, BIC
  int r2[2] = {0, 0};
  int p[2] = {0, 0};
};

// Entries of the target block in row-major order, matching confidence_intervals.
std::vector<double> target_values(const PseudoStructParams& ps, Target target) {
  const Mat& m = target == Target::Delta ? ps.delta_star : ps.gamma_star;
  std::vector<double> out;
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) out.push_back(m(i, j));
  return out;
}

std::vector<std::string> target_labels(const Dims& truth, Target target) {
  const bool delta = target == Target::Delta;
  const int rows = delta ? truth.r1 : truth.r2;
  const int cols = delta ? truth.n1 - truth.r1 : truth.n2 - truth.r2;
  std::vector<std::string> out;
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j)
      out.push_back(std::string(delta ? "delta*" : "gamma*") + "[" + std::to_string(i) + "," + std::to_string(j) + "]");
  return out;
}

DgpSpec dgp_for(const ExperimentSpec& spec) {
  DgpSpec d;
  d.dims = spec.truth;
  d.snr = spec.snr;
  d.burn_in = spec.burn_in;
  return d;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
double sd_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

void check_failures(int failed, int total, const std::string& what) {
  if (static_cast<double>(failed) > kMaxFailureShare * total)
    throw ExperimentFailed(what + ": " + std::to_string(failed) + " of " + std::to_string(total) +
                           " replications failed (more than 10%)");
}

Draw fit_draw(const MatrixSeries& y, const ExperimentSpec& spec, const Scenario& sc, const PseudoStructParams& truth,
              u64 seed) {
  Draw d;
  FitConfig fc = spec.fit;
  fc.seed = seed;
  fc.threads = 1;
  const Dims dims{spec.truth.n1, spec.truth.n2, sc.r1, sc.r2, spec.truth.p};
  try {
    const FitResult r = fit(y, dims, fc);
    const auto cis = confidence_intervals(r, spec.ci_level);
    const bool want_delta = spec.target == Target::Delta;
    d.truth = target_values(truth, spec.target);
    for (const auto& ci : cis) {
      if (ci.is_delta != want_delta) continue;
      if (!ci.available) return Draw{};
      const size_t k = d.estimate.size();
      d.estimate.push_back(ci.estimate);
      d.covered.push_back(ci.covers(d.truth[k]));
    }
    d.ok = d.estimate.size() == d.truth.size();
  } catch (const NumericalError&) {
    // counted as a failed replication
  }
  return d;
}

ExperimentResult run_estimation(const ExperimentSpec& spec) {
  const size_t n_t = spec.t_list.size(), n_sc = spec.scenarios.size();
  const int reps = spec.replications;
  PseudoStructParams fixed;
  if (!spec.redraw) {
    Rng rng(derive_seed(spec.seed, {0}));
    fixed = draw_dgp(dgp_for(spec), rng);
  }

  // slots[rep][t][scenario]
  std::vector<std::vector<std::vector<Draw>>> slots(static_cast<size_t>(reps));
  parallel_for(reps, spec.threads, [&](int rep) {
    auto& out = slots[static_cast<size_t>(rep)];
    out.assign(n_t, std::vector<Draw>(n_sc));
    PseudoStructParams truth = fixed;
    if (spec.redraw) {
      Rng rng(derive_seed(spec.seed, {0, static_cast<u64>(rep)}));
      try {
        truth = draw_dgp(dgp_for(spec), rng);
      } catch (const NumericalError&) {
        return;
      }
    }
    for (size_t ti = 0; ti < n_t; ++ti) {
      const Index t = spec.t_list[ti];
      Rng rng(derive_seed(spec.seed, {1, static_cast<u64>(rep), static_cast<u64>(t)}));
      const MatrixSeries y = simulate_series(truth, t, spec.burn_in, rng);
      for (size_t s = 0; s < n_sc; ++s)
        out[ti][s] = fit_draw(y, spec, spec.scenarios[s], truth,
                              derive_seed(spec.seed, {2, static_cast<u64>(rep), static_cast<u64>(t), s}));
    }
  });

  ExperimentResult res;
  res.spec = spec;
  const auto labels = target_labels(spec.truth, spec.target);
  const Index k = static_cast<Index>(labels.size());
  for (size_t s = 0; s < n_sc; ++s)
    for (size_t ti = 0; ti < n_t; ++ti) {
      ScenarioResult sr;
      sr.scenario = spec.scenarios[s];
      sr.t = spec.t_list[ti];
      sr.labels = labels;
      std::vector<const Draw*> ok;
      for (int rep = 0; rep < reps; ++rep) {
        const Draw& d = slots[static_cast<size_t>(rep)][ti][s];
        if (d.ok)
          ok.push_back(&d);
        else
          ++sr.n_failed;
      }
      check_failures(sr.n_failed, reps, "scenario " + sr.scenario.name + " at T=" + std::to_string(sr.t));
      const Index n = static_cast<Index>(ok.size());
      sr.estimates.resize(n, k);
      sr.truths.resize(n, k);
      sr.coverage = Vec::Zero(k);
      for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < k; ++j) {
          sr.estimates(i, j) = ok[static_cast<size_t>(i)]->estimate[static_cast<size_t>(j)];
          sr.truths(i, j) = ok[static_cast<size_t>(i)]->truth[static_cast<size_t>(j)];
          if (ok[static_cast<size_t>(i)]->covered[static_cast<size_t>(j)]) sr.coverage(j) += 1.0;
        }
      const double nn = static_cast<double>(std::max<Index>(n, 1));
      sr.coverage /= nn;
      sr.coverage_se = (sr.coverage.array() * (1.0 - sr.coverage.array()) / nn).sqrt().matrix();
      sr.mean_bias = n > 0 ? Vec((sr.estimates - sr.truths).colwise().mean().transpose()) : Vec::Zero(k);
      res.scenarios.push_back(std::move(sr));
    }
  return res;
}

ExperimentResult run_selection(const ExperimentSpec& spec) {
  const size_t n_t = spec.t_list.size();
  const int reps = spec.replications;
  const Dims& tr = spec.truth;
  const bool lags = spec.design == Design::RankLagTable;
  const IntRange r1_range = spec.fixed_r1 ? IntRange{*spec.fixed_r1, *spec.fixed_r1} : IntRange{1, tr.n1};
  const IntRange r2_range{1, tr.n2};
  const IntRange lag_range = lags ? IntRange{1, spec.lag_max} : IntRange{tr.p, tr.p};
  PseudoStructParams fixed;
  if (!spec.redraw) {
    Rng rng(derive_seed(spec.seed, {0}));
    fixed = draw_dgp(dgp_for(spec), rng);
  }

  std::vector<std::vector<Pick>> slots(static_cast<size_t>(reps));
  parallel_for(reps, spec.threads, [&](int rep) {
    auto& out = slots[static_cast<size_t>(rep)];
    out.assign(n_t, Pick{});
    PseudoStructParams truth = fixed;
    if (spec.redraw) {
      Rng rng(derive_seed(spec.seed, {0, static_cast<u64>(rep)}));
      try {
        truth = draw_dgp(dgp_for(spec), rng);
      } catch (const NumericalError&) {
        return;
      }
    }
    for (size_t ti = 0; ti < n_t; ++ti) {
      const Index t = spec.t_list[ti];
      Rng rng(derive_seed(spec.seed, {1, static_cast<u64>(rep), static_cast<u64>(t)}));
      const MatrixSeries y = simulate_series(truth, t, spec.burn_in, rng);
      SelectConfig sc = spec.selection;
      sc.refit_winner = false;
      sc.threads = 1;
      sc.seed = derive_seed(spec.seed, {2, static_cast<u64>(rep), static_cast<u64>(t)});
      try {
        const SelectionGrid g = select_ranks(y, tr.n1, tr.n2, r1_range, r2_range, lag_range, sc);
        Pick& pk = out[ti];
        for (int c = 0; c < 2; ++c) {
          const GridEntry& e = g.best(c == 0 ? Criterion::AIC : Criterion::BIC);
          pk.r1[c] = e.r1;
          pk.r2[c] = e.r2;
          pk.p[c] = e.p;
        }
        pk.ok = true;
      } catch (const NumericalError&) {
        // failed replication
      }
    }
  });

  ExperimentResult res;
  res.spec = spec;
  for (int c = 0; c < 2; ++c)
    for (size_t ti = 0; ti < n_t; ++ti) {
      SelectionRow row;
      row.criterion = c == 0 ? Criterion::AIC : Criterion::BIC;
      row.t = spec.t_list[ti];
      row.has_lag = lags;
      std::vector<double> r1, r2, p;
      int joint = 0;
      for (int rep = 0; rep < reps; ++rep) {
        const Pick& pk = slots[static_cast<size_t>(rep)][ti];
        if (!pk.ok) {
          ++row.n_failed;
          continue;
        }
        r1.push_back(pk.r1[c]);
        r2.push_back(pk.r2[c]);
        p.push_back(pk.p[c]);
        if (pk.r1[c] == tr.r1 && pk.r2[c] == tr.r2 && pk.p[c] == tr.p) ++joint;
      }
      check_failures(row.n_failed, reps, to_string(row.criterion) + " selection at T=" + std::to_string(row.t));
      row.n_success = static_cast<int>(r1.size());
      auto freq = [&](const std::vector<double>& v, int target) {
        return v.empty() ? 0.0
                         : static_cast<double>(std::count(v.begin(), v.end(), static_cast<double>(target))) /
                               static_cast<double>(v.size());
      };
      row.avg_r1 = mean_of(r1);
      row.avg_r2 = mean_of(r2);
      row.std_r1 = sd_of(r1);
      row.std_r2 = sd_of(r2);
      row.freq_r1 = freq(r1, tr.r1);
      row.freq_r2 = freq(r2, tr.r2);
      row.avg_p = mean_of(p);
      row.std_p = sd_of(p);
      row.freq_p = freq(p, tr.p);
      row.freq_joint = row.n_success > 0 ? static_cast<double>(joint) / row.n_success : 0.0;
      res.selection.push_back(row);
    }
  return res;
}

}  // namespace

std::string to_string(Design d) {
  switch (d) {
    case Design::DensityDelta: return "density_delta";
    case Design::DensityGamma: return "density_gamma";
    case Design::Coverage: return "coverage";
    case Design::RankTable: return "rank_table";
    case Design::RankLagTable: return "rank_lag_table";
    case Design::Appendix3x6: return "appendix_3x6";
  }
  return "?";
}

Design parse_design(const std::string& text) {
  for (Design d : {Design::DensityDelta, Design::DensityGamma, Design::Coverage, Design::RankTable,
                   Design::RankLagTable, Design::Appendix3x6})
    if (to_string(d) == text) return d;
  throw ConfigError("unknown design '" + text + "'");
}

bool is_selection_design(Design d) { return d == Design::RankTable || d == Design::RankLagTable; }

void ExperimentSpec::validate() const {
  truth.validate();
  if (replications < 1) throw ConfigError("replications must be at least 1");
  if (t_list.empty()) throw ConfigError("T list is empty");
  const int p_max = design == Design::RankLagTable ? std::max(lag_max, truth.p) : truth.p;
  for (Index t : t_list)
    if (t <= p_max + 1) throw ConfigError("T too small for the lag order");
  if (!(snr > 0.0)) throw ConfigError("snr must be positive");
  if (burn_in < 0) throw ConfigError("burn-in must be nonnegative");
  if (!(ci_level > 0.0 && ci_level < 1.0)) throw ConfigError("ci_level must be in (0, 1)");
  if (threads < 0) throw ConfigError("threads must be nonnegative");
  if (is_selection_design(design)) {
    selection.cell_fit.validate();
    if (fixed_r1 && (*fixed_r1 < 1 || *fixed_r1 > truth.n1)) throw ConfigError("fixed r1 out of range");
    if (design == Design::RankLagTable && lag_max < truth.p) throw ConfigError("lag_max below the true lag order");
    return;
  }
  fit.validate();
  if (scenarios.empty()) throw ConfigError("an estimation design needs at least one rank scenario");
  for (const auto& s : scenarios) {
    if (s.r1 < 1 || s.r1 > truth.n1 || s.r2 < 1 || s.r2 > truth.n2)
      throw DimensionError("scenario '" + s.name + "' has ranks out of range");
    // The target block must keep the shape of the truth to be comparable.
    if (target == Target::Delta && s.r1 != truth.r1)
      throw ConfigError("scenario '" + s.name + "' must keep r1 at the true value for delta*");
    if (target == Target::Gamma && s.r2 != truth.r2)
      throw ConfigError("scenario '" + s.name + "' must keep r2 at the true value for gamma*");
  }
  if (target == Target::Delta && truth.r1 == truth.n1) throw ConfigError("delta* is empty at full r1");
  if (target == Target::Gamma && truth.r2 == truth.n2) throw ConfigError("gamma* is empty at full r2");
}

ExperimentSpec default_experiment(Design d, std::uint64_t seed) {
  ExperimentSpec s;
  s.design = d;
  s.seed = seed;
  switch (d) {
    case Design::DensityDelta:
    case Design::Coverage:
      s.truth = Dims{3, 4, 2, 2, 1};
      s.scenarios = {{"correct", 2, 2}, {"under", 2, 1}, {"over", 2, 3}};
      s.target = Target::Delta;
      break;
    case Design::DensityGamma:
      s.truth = Dims{3, 4, 2, 3, 1};
      s.scenarios = {{"correct", 2, 3}, {"under", 1, 3}, {"over", 3, 3}};
      s.target = Target::Gamma;
      break;
    case Design::Appendix3x6:
      s.truth = Dims{3, 6, 2, 5, 1};
      s.scenarios = {{"correct", 2, 5}, {"under", 2, 1}, {"over", 2, 6}};
      s.target = Target::Delta;
      break;
    case Design::RankTable:
    case Design::RankLagTable:
      s.truth = Dims{3, 4, 1, 1, 1};
      s.replications = 100;
      s.redraw = true;
      break;
  }
  return s;
}

ExperimentResult run_experiment(const ExperimentSpec& spec) {
  spec.validate();
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentResult res = is_selection_design(spec.design) ? run_selection(spec) : run_estimation(spec);
  res.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

DensityExport kernel_density_export(const std::vector<double>& draws, int grid) {
  if (draws.size() < 10) throw ConfigError("kernel density needs at least 10 draws");
  if (grid < 2) throw ConfigError("kernel density grid needs at least 2 points");
  for (double v : draws)
    if (!std::isfinite(v)) throw NonFiniteError("kernel density draws must be finite");
  DensityExport out;
  const double m = mean_of(draws);
  const double s = sd_of(draws);
  const double n = static_cast<double>(draws.size());
  if (!(s > 1e-300 * std::max(1.0, std::abs(m)))) {
    out.degenerate = true;
    out.x = {m};
    return out;
  }
  const double h = 1.06 * s * std::pow(n, -0.2);
  out.bandwidth = h;
  const double lo = m - 4.0 * s, hi = m + 4.0 * s;
  const double norm = 1.0 / (n * h * std::sqrt(2.0 * std::numbers::pi));
  for (int i = 0; i < grid; ++i) {
    const double x = lo + (hi - lo) * i / (grid - 1);
    double acc = 0.0;
    for (double v : draws) {
      const double z = (x - v) / h;
      acc += std::exp(-0.5 * z * z);
    }
    out.x.push_back(x);
    out.density.push_back(acc * norm);
  }
  return out;
}

std::string format_pair(double a, double b) { return "(" + format_fixed(a, 2) + ", " + format_fixed(b, 2) + ")"; }

std::string format_pair_lag(double a, double b, double c) { return format_pair(a, b) + " / " + format_fixed(c, 2); }

std::string render_selection_table(const ExperimentResult& result) {
  const Dims& tr = result.spec.truth;
  std::ostringstream os;
  os << "True ranks (" << tr.r1 << ", " << tr.r2 << ")";
  if (result.spec.design == Design::RankLagTable) os << " / lag " << tr.p;
  os << ", N1 x N2 = " << tr.n1 << " x " << tr.n2 << "\n";
  const bool lag = result.spec.design == Design::RankLagTable;
  auto cell = [&](double a, double b, double c) { return lag ? format_pair_lag(a, b, c) : format_pair(a, b); };
  os << "criterion  T     Average Rank          Std. Rank             Freq. Correct         failed\n";
  for (const auto& row : result.selection) {
    char head[32];
    std::snprintf(head, sizeof head, "%-10s %-5lld ", to_string(row.criterion).c_str(), static_cast<long long>(row.t));
    char line[256];
    std::snprintf(line, sizeof line, "%s%-21s %-21s %-21s %d\n", head, cell(row.avg_r1, row.avg_r2, row.avg_p).c_str(),
                  cell(row.std_r1, row.std_r2, row.std_p).c_str(), cell(row.freq_r1, row.freq_r2, row.freq_p).c_str(),
                  row.n_failed);
    os << line;
  }
  return os.str();
}

std::string selection_csv(const ExperimentResult& result) {
  std::ostringstream os;
  os << "criterion,t,avg_r1,avg_r2,avg_p,std_r1,std_r2,std_p,freq_r1,freq_r2,freq_p,freq_joint,n_success,n_failed\n";
  for (const auto& r : result.selection)
    os << to_string(r.criterion) << ',' << r.t << ',' << format_number(r.avg_r1) << ',' << format_number(r.avg_r2)
       << ',' << format_number(r.avg_p) << ',' << format_number(r.std_r1) << ',' << format_number(r.std_r2) << ','
       << format_number(r.std_p) << ',' << format_number(r.freq_r1) << ',' << format_number(r.freq_r2) << ','
       << format_number(r.freq_p) << ',' << format_number(r.freq_joint) << ',' << r.n_success << ',' << r.n_failed
       << '\n';
  return os.str();
}

std::string coverage_csv(const ExperimentResult& result) {
  std::ostringstream os;
  os << "scenario,r1,r2,t,coefficient,coverage,coverage_se,mean_bias,n_success,n_failed\n";
  for (const auto& s : result.scenarios)
    for (size_t j = 0; j < s.labels.size(); ++j) {
      const Index k = static_cast<Index>(j);
      os << s.scenario.name << ',' << s.scenario.r1 << ',' << s.scenario.r2 << ',' << s.t << ",\"" << s.labels[j]
         << "\"," << format_number(s.coverage(k)) << ',' << format_number(s.coverage_se(k)) << ','
         << format_number(s.mean_bias(k)) << ',' << s.n_success() << ',' << s.n_failed << '\n';
    }
  return os.str();
}

std::string draws_csv(const ExperimentResult& result) {
  std::ostringstream os;
  os << "scenario,t,replicate,coefficient,estimate,truth\n";
  for (const auto& s : result.scenarios)
    for (Index i = 0; i < s.estimates.rows(); ++i)
      for (size_t j = 0; j < s.labels.size(); ++j) {
        const Index k = static_cast<Index>(j);
        os << s.scenario.name << ',' << s.t << ',' << i << ",\"" << s.labels[j] << "\","
           << format_number(s.estimates(i, k)) << ',' << format_number(s.truths(i, k)) << '\n';
      }
  return os.str();
}

std::string density_csv(const ExperimentResult& result, int grid) {
  std::ostringstream os;
  os << "scenario,t,coefficient,degenerate,bandwidth,x,density\n";
  for (const auto& s : result.scenarios) {
    if (s.estimates.rows() < 10) continue;
    for (size_t j = 0; j < s.labels.size(); ++j) {
      const Vec col = s.estimates.col(static_cast<Index>(j));
      const DensityExport d = kernel_density_export(std::vector<double>(col.data(), col.data() + col.size()), grid);
      const std::string head = s.scenario.name + ',' + std::to_string(s.t) + ",\"" + s.labels[j] + "\"," +
                               (d.degenerate ? "1" : "0") + ',' + format_number(d.bandwidth) + ',';
      if (d.degenerate) {
        os << head << format_number(d.x[0]) << ",inf\n";
        continue;
      }
      for (size_t i = 0; i < d.x.size(); ++i) os << head << format_number(d.x[i]) << ',' << format_number(d.density[i]) << '\n';
    }
  }
  return os.str();
}

}  // namespace rrmar
