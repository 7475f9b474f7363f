#pragma once

// Conditional Gaussian log-likelihood of the pseudo-structural system and the
// unconstrained parameter vector it is maximized over.
//
// The additive constant -(T-p) N1 N2 / 2 * log(2 pi) is omitted throughout.

#include <optional>
#include <vector>

#include "rrmar/model.hpp"

namespace rrmar {

/// Offsets of each parameter group inside theta.
///
///   delta*   r1 x (N1-r1), row-major
///   gamma*   r2 x (N2-r2), row-major
///   per lag  vec(U3_j) then vec(U4_j)
///   sigma1   Cholesky factor L1 column by column: log L1(j,j), then the
///            multipliers L1(i,j) / L1(j,j) for i > j; L1(0,0) == 1 is not stored
///   sigma2   L2 in the same form
struct PackingLayout {
  Dims dims;
  Index delta = 0;
  Index gamma = 0;
  Index lags = 0;
  Index sigma1 = 0;
  Index sigma2 = 0;
  Index size = 0;

  explicit PackingLayout(const Dims& d);
  PackingLayout() = default;

  Index u3(int j) const { return lags + j * (dims.n1 * dims.r1 + dims.n2 * dims.r2); }
  Index u4(int j) const { return u3(j) + dims.n1 * dims.r1; }
  Index delta_size() const { return static_cast<Index>(dims.r1) * (dims.n1 - dims.r1); }
  Index gamma_size() const { return static_cast<Index>(dims.r2) * (dims.n2 - dims.r2); }
  Index sigma1_size() const { return static_cast<Index>(dims.n1) * (dims.n1 + 1) / 2 - 1; }
  Index sigma2_size() const { return static_cast<Index>(dims.n2) * (dims.n2 + 1) / 2; }
  /// Number of coordinates excluding covariances; equals the IC parameter count.
  Index coefficient_size() const { return sigma1; }
  bool is_covariance(Index i) const { return i >= sigma1; }
  bool is_lag_factor(Index i) const { return i >= lags && i < sigma1; }
};

struct ThetaVector {
  Vec values;
  PackingLayout layout;
};

/// Packs params after rescaling (Sigma1, Sigma2) -> (Sigma1 / s, Sigma2 * s), s = Sigma1(0,0).
ThetaVector pack(const PseudoStructParams& params);
PseudoStructParams unpack(const ThetaVector& theta);
PseudoStructParams unpack(const Vec& values, const PackingLayout& layout);

/// Rescale so that sigma1(0,0) == 1; Sigma2 (x) Sigma1 is unchanged.
void normalize_covariance_scale(PseudoStructParams& params);

struct LogLikValue {
  double value = 0.0;
  std::optional<Vec> gradient;
  std::optional<Vec> per_observation;
};

/// Direct evaluation: residuals Omega y*_t - sum_j Pi_j y_{t-j} weighed by the
/// covariance of Omega vecb(E_t), factorized by Cholesky. Per-t terms are summed
/// in increasing t. Throws NotPositiveDefinite, DimensionError.
LogLikValue loglik(const ThetaVector& theta, const MatrixSeries& data, bool per_observation = false);

/// Lagged second moments of vec(Y_t) for t = p+1..T.
struct SufficientStats {
  int p = 0;
  Index n_eff = 0;
  Mat syy;  ///< sum y_t y_t^T, N x N
  Mat syx;  ///< sum y_t x_t^T, N x Np, x_t = (y_{t-1}; ...; y_{t-p})
  Mat sxx;  ///< sum x_t x_t^T, Np x Np

  SufficientStats(const MatrixSeries& data, int p);
};

/// Fast evaluator with an analytic gradient; agrees with loglik() to rounding.
/// Residuals are formed directly from the stacked data rather than from
/// second moments, which keeps nearly noiseless samples accurate.
class LikelihoodModel {
 public:
  LikelihoodModel(const MatrixSeries& data, const Dims& dims);

  const PackingLayout& layout() const { return layout_; }
  const SufficientStats& stats() const { return stats_; }
  const Dims& dims() const { return layout_.dims; }
  Index n_eff() const { return stats_.n_eff; }

  /// Log-likelihood; fills grad when non-null. Returns -inf if the covariance
  /// coordinates overflow.
  double evaluate(const Vec& theta, Vec* grad = nullptr) const;
  double value(const Vec& theta) const { return evaluate(theta, nullptr); }
  Vec gradient(const Vec& theta) const;

 private:
  PackingLayout layout_;
  SufficientStats stats_;
  Mat y_;  ///< N x (T-p), columns vec(Y_t)
  Mat x_;  ///< Np x (T-p), columns (vec Y_{t-1}; ...; vec Y_{t-p})
};

/// Analytic gradient (LikelihoodModel route).
Vec grad_loglik(const ThetaVector& theta, const MatrixSeries& data);

/// Central differences with h_i = eps^(1/3) (1 + |theta_i|) on the likelihood value.
Vec grad_loglik_fd(const LikelihoodModel& model, const Vec& theta);

/// Directions along which the likelihood is flat: for each lag,
/// d/dc (c U3_j, U4_j / c) at c = 1. Columns of a size x p matrix.
Mat gauge_directions(const Vec& theta, const PackingLayout& layout);

struct InformationResult {
  Mat raw;        ///< symmetrized negative Hessian
  Mat info;       ///< raw, projected to PSD when only tiny negatives occur
  double min_eigenvalue = 0.0;  ///< on the complement of the gauge directions
  double norm = 0.0;            ///< spectral norm of raw
  bool saddle = false;          ///< min_eigenvalue < -kSaddleTol * norm
  bool projected = false;
};
inline constexpr double kSaddleTol = 1e-6;

/// Negative Hessian by central differences of the analytic gradient.
/// Throws NumericalError on non-finite entries.
InformationResult observed_information(const LikelihoodModel& model, const Vec& theta);
InformationResult observed_information(const ThetaVector& theta, const MatrixSeries& data);

}  // namespace rrmar
