#pragma once

// Multi-start maximum likelihood for the pseudo-structural model and the
// inference built on the observed information.

#include <cstdint>
#include <string>
#include <vector>

#include "rrmar/errors.hpp"
#include "rrmar/likelihood.hpp"
#include "rrmar/optimize.hpp"

namespace rrmar {

enum class InitMode { Random, RrmarWarm, Mixed };

std::string to_string(InitMode mode);
InitMode parse_init_mode(const std::string& text);

struct FitConfig {
  int n_starts = 100;     ///< K
  int keep = 10;          ///< L, starts continued to convergence
  int screen_iters = 5;   ///< quasi-Newton iterations per start in the screening stage
  double tol = 1e-10;     ///< on the successive log-likelihood change
  int max_iters = 1000;
  std::uint64_t seed = 0;
  /// Mixed: start 0 is the warm start, about K/4 jittered copies of it, the rest random.
  InitMode init_mode = InitMode::Mixed;
  int threads = 1;

  /// Throws ConfigError unless 1 <= keep <= n_starts, tol > 0, iteration counts positive.
  void validate() const;
};

/// Acceptance threshold on the gradient: max |g_i| <= kGradAccept * (1 + |loglik|).
inline constexpr double kGradAccept = 1e-4;

struct StartRecord {
  int id = 0;
  std::string origin;  ///< "warm", "jitter", "random" or "supplied"
  double screen_loglik = 0.0;
  bool continued = false;
  double final_loglik = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  bool hessian_checked = false;
  bool saddle = false;
  bool accepted = false;
  std::string message;
};

struct FitDiagnostics {
  double grad_norm = 0.0;        ///< max |g_i| at the returned estimate
  double hessian_min_eig = 0.0;  ///< on the complement of the gauge directions
  int n_starts_converged = 0;    ///< continued starts passing the gradient test
  int chosen_start_id = -1;
  bool saddle_flag = false;
  bool projected = false;  ///< information was clamped to PSD
  std::vector<std::string> warnings;
  std::vector<StartRecord> starts;
};

struct FitResult {
  ThetaVector theta_hat;
  PseudoStructParams params;
  double loglik = 0.0;
  Index n_obs = 0;  ///< effective sample size T - p
  InformationResult info;
  /// Generalized inverse of the information on the gauge complement. Entries
  /// touching an unidentified direction are NaN.
  Mat covariance;
  /// Covariance block of (delta* row-major, gamma* row-major).
  Mat cov_structural;
  Mat se_delta;  ///< r1 x (N1-r1), NaN when unavailable
  Mat se_gamma;  ///< r2 x (N2-r2)
  FitDiagnostics diagnostics;
};

/// No continued start produced an acceptable maximizer.
class EstimationFailed : public NumericalError {
 public:
  EstimationFailed(const std::string& what, std::vector<StartRecord> starts)
      : NumericalError(what), starts(std::move(starts)) {}
  std::vector<StartRecord> starts;
};

/// Runs the three stages: screen K starts for a few iterations, continue the
/// best L (plus any supplied starts) to convergence, then take the highest
/// log-likelihood that passes the gradient and saddle checks.
FitResult fit(const MatrixSeries& data, const Dims& dims, const FitConfig& config,
              const std::vector<Vec>& supplied_starts = {});

/// Warm start: OLS VAR, nearest Kronecker factors, truncated SVD, a few
/// alternating least-squares sweeps, flip-flop covariances, then rotation.
/// Throws NonRotatableError if the fitted U1/U2 cannot be normalized.
PseudoStructParams rrmar_warm_start(const MatrixSeries& data, const Dims& dims, int als_sweeps = 20);

/// Fills covariance, SEs and diagnostics from info at theta.
void attach_inference(FitResult& result);

/// Standard normal quantile by rational approximation (relative error below 1.2e-9).
double normal_quantile(double p);
double normal_cdf(double x);

struct ConfidenceInterval {
  std::string name;  ///< e.g. "delta*[1,0]"
  bool is_delta = true;
  int row = 0;
  int col = 0;
  double estimate = 0.0;
  double se = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  bool available = false;

  bool covers(double value) const { return available && lower <= value && value <= upper; }
};

/// estimate +/- z_{(1+level)/2} SE for every entry of delta* then gamma*.
std::vector<ConfidenceInterval> confidence_intervals(const FitResult& fit, double level = 0.95);

struct EquationTerm {
  std::string label;
  double coefficient = 0.0;
  double se = 0.0;  ///< NaN when unavailable; 0 for the normalized term
  double p_value = 0.0;
  bool normalized = false;  ///< the unit coefficient fixed by the normalization
};

struct ComovementEquation {
  std::vector<EquationTerm> terms;
};

struct ComovementReport {
  std::vector<std::string> row_labels;
  std::vector<std::string> col_labels;
  std::vector<ComovementEquation> row_equations;
  std::vector<ComovementEquation> column_equations;
  std::vector<ComovementEquation> joint_equations;
};

/// Builds the row, column and joint equations. cov_structural is the
/// covariance of (delta* row-major, gamma* row-major). Empty labels default
/// to r1..rN / c1..cN.
ComovementReport comovement_report(const PseudoStructParams& params, const Mat& cov_structural,
                                   std::vector<std::string> row_labels = {},
                                   std::vector<std::string> col_labels = {});
ComovementReport comovement_report(const FitResult& fit, std::vector<std::string> row_labels = {},
                                   std::vector<std::string> col_labels = {});

/// Plain-text rendering: coefficients to 3 decimals, SEs in parentheses.
std::string render_report(const ComovementReport& report);

}  // namespace rrmar
