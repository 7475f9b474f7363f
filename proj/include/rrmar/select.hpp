#pragma once

// Rank and lag selection by AIC/BIC over a grid of candidate models.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rrmar/estimate.hpp"

namespace rrmar {

enum class Criterion { AIC, BIC };

std::string to_string(Criterion c);
Criterion parse_criterion(const std::string& text);

/// Free factor parameters r1 N1 (1+p) - r1^2 + r2 N2 (1+p) - r2^2
/// (covariances excluded). Throws DimensionError for ranks out of range.
long phi(int r1, int r2, int n1, int n2, int p);

/// -2 loglik + c_T phi with c_T = 2 (AIC) or ln T (BIC). Requires T > p.
double information_criterion(double loglik, int r1, int r2, int p, int n1, int n2, double t, Criterion kind);

struct IntRange {
  int lo = 1;
  int hi = 1;
  bool contains(int v) const { return v >= lo && v <= hi; }
};

struct SelectConfig {
  /// Per-cell budget; the seed is replaced by one derived from (seed, r1, r2, p).
  FitConfig cell_fit = [] {
    FitConfig c;
    c.n_starts = 40;
    c.keep = 5;
    return c;
  }();
  /// Budget for refitting the winner.
  FitConfig final_fit;
  bool refit_winner = true;
  Criterion refit_criterion = Criterion::BIC;
  std::uint64_t seed = 0;
  int threads = 1;
  /// Tolerance for the nesting check on the maximized log-likelihood.
  double nesting_tol = 1e-4;
};

struct GridEntry {
  int r1 = 0;
  int r2 = 0;
  int p = 0;
  double loglik = 0.0;  ///< NaN when the fit failed
  long phi = 0;
  double aic = 0.0;
  double bic = 0.0;
  bool converged = false;
  bool nesting_violation = false;  ///< a nested smaller cell fits better even after a refit
  bool refit_for_nesting = false;
  double grad_norm = 0.0;
  int n_starts_converged = 0;
  std::string message;

  /// Eligible for the argmin.
  bool usable() const { return converged && !nesting_violation; }
};

struct SelectionGrid {
  int n1 = 0;
  int n2 = 0;
  Index t_eff = 0;  ///< common effective sample size of every cell
  std::vector<GridEntry> entries;
  int argmin_aic = -1;
  int argmin_bic = -1;
  std::optional<FitResult> winner_fit;  ///< full-budget refit of the refit_criterion winner

  const GridEntry& best(Criterion c) const;
};

/// No cell produced a usable fit.
class SelectionFailed : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

/// Fits every (r1, r2, p) in the ranges. All cells use the same effective
/// sample: the first max(p) observations serve as presample for every lag
/// order, so log-likelihoods are comparable across p. A degenerate range
/// (lo == hi) fixes that dimension, which gives the slice mode.
SelectionGrid select_ranks(const MatrixSeries& data, int n1, int n2, IntRange r1_range, IntRange r2_range,
                           IntRange lag_range, const SelectConfig& config);

/// Recomputes argmins from the entries (ties go to the smaller phi, then the
/// earlier entry).
void update_argmins(SelectionGrid& grid);

}  // namespace rrmar
