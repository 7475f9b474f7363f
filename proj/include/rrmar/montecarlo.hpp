#pragma once

// Simulation experiments: sampling distributions and CI coverage of the
// structural coefficients under rank misspecification, and frequency tables
// for rank and lag selection.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rrmar/estimate.hpp"
#include "rrmar/select.hpp"

namespace rrmar {

enum class Design { DensityDelta, DensityGamma, Coverage, RankTable, RankLagTable, Appendix3x6 };

std::string to_string(Design d);
Design parse_design(const std::string& text);

/// Estimation designs fit fixed rank scenarios; table designs run a selection grid.
bool is_selection_design(Design d);

enum class Target { Delta, Gamma };

/// Fitted ranks for one arm of an estimation design.
struct Scenario {
  std::string name;  ///< "correct", "under" or "over"
  int r1 = 0;
  int r2 = 0;
};

struct ExperimentSpec {
  Design design = Design::DensityDelta;
  Dims truth;  ///< N1, N2, true ranks and lag order of the DGP
  std::vector<Scenario> scenarios;
  Target target = Target::Delta;
  std::vector<Index> t_list{100, 250};
  int replications = 1000;
  std::uint64_t seed = 0;
  double snr = 0.7;
  Index burn_in = 50;
  /// Draw a new DGP per replication (default for tables) or fix one per seed.
  bool redraw = false;
  double ci_level = 0.95;
  FitConfig fit;            ///< estimation designs
  SelectConfig selection;   ///< table designs; refit_winner is ignored
  int lag_max = 2;          ///< rank_lag_table upper lag
  std::optional<int> fixed_r1;  ///< slice mode: fix r1 and select r2 only
  int threads = 1;

  /// Throws ConfigError / DimensionError.
  void validate() const;
};

/// The reference settings of each design (1000 replications for estimation
/// designs, 100 for tables); callers scale replications down as needed.
ExperimentSpec default_experiment(Design d, std::uint64_t seed = 0);

struct ScenarioResult {
  Scenario scenario;
  Index t = 0;
  std::vector<std::string> labels;  ///< coefficient names, e.g. "delta*[1,1]"
  Mat estimates;  ///< successful replications x coefficients
  Mat truths;     ///< true values aligned with estimates
  Vec coverage;
  Vec coverage_se;  ///< sqrt(c (1 - c) / R)
  Vec mean_bias;
  int n_failed = 0;
  int n_success() const { return static_cast<int>(estimates.rows()); }
};

struct SelectionRow {
  Criterion criterion = Criterion::BIC;
  Index t = 0;
  double avg_r1 = 0.0, avg_r2 = 0.0;
  double std_r1 = 0.0, std_r2 = 0.0;
  double freq_r1 = 0.0, freq_r2 = 0.0;
  bool has_lag = false;
  double avg_p = 0.0, std_p = 0.0, freq_p = 0.0;
  double freq_joint = 0.0;  ///< all selected orders correct
  int n_success = 0;
  int n_failed = 0;
};

struct ExperimentResult {
  ExperimentSpec spec;
  std::vector<ScenarioResult> scenarios;  ///< one per (scenario, T)
  std::vector<SelectionRow> selection;    ///< one per (criterion, T)
  double runtime_seconds = 0.0;           ///< not part of any export
};

/// A replication that failed in more than 10% of the cases of any arm.
class ExperimentFailed : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Runs every replication. Replications run in parallel and are merged by
/// index with per-replication seeds, so the result does not depend on threads.
ExperimentResult run_experiment(const ExperimentSpec& spec);

struct DensityExport {
  std::vector<double> x;
  std::vector<double> density;
  double bandwidth = 0.0;
  bool degenerate = false;  ///< zero sample variance: a spike at x[0], density empty
};

/// Gaussian kernel density with bandwidth 1.06 s n^(-1/5) on `grid` evenly
/// spaced points over mean +- 4 s. Requires at least 10 draws and grid >= 2.
DensityExport kernel_density_export(const std::vector<double>& draws, int grid = 512);

/// "(a, b)" with two decimals.
std::string format_pair(double a, double b);
/// "(a, b) / c" with two decimals.
std::string format_pair_lag(double a, double b, double c);

/// Plain-text table in the conventional layout: one block per criterion and T
/// with Average Rank, Std. Rank and Freq. Correct.
std::string render_selection_table(const ExperimentResult& result);

/// CSV exports (17 significant digits, fixed column order).
std::string selection_csv(const ExperimentResult& result);
std::string coverage_csv(const ExperimentResult& result);
std::string draws_csv(const ExperimentResult& result);
std::string density_csv(const ExperimentResult& result, int grid = 512);

}  // namespace rrmar
