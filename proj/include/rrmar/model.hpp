#pragma once

// Reduced-rank matrix autoregression in its reduced (factor) form and in the
// pseudo-structural form, plus the conversions and derived matrices.
//
// Reduced form, p lags, shared (U1, U2):
//   Y_t = sum_j U1 U3_j^T Y_{t-j} U4_j U2^T + E_t,  vec(E_t) ~ N(0, Sigma2 (x) Sigma1)
// Pseudo-structural normalization:
//   delta = [I_{N1-r1}; delta*],  gamma = [I_{N2-r2}; gamma*]
//   U1 = [-delta*^T; I_{r1}],     U2 = [-gamma*^T; I_{r2}]

#include <optional>
#include <string>
#include <vector>

#include "rrmar/linalg.hpp"

namespace rrmar {

struct Dims {
  int n1 = 0;
  int n2 = 0;
  int r1 = 0;
  int r2 = 0;
  int p = 1;

  int n() const { return n1 * n2; }
  /// Throws DimensionError unless 1 <= r1 <= n1, 1 <= r2 <= n2, p >= 1.
  void validate() const;
  bool operator==(const Dims&) const = default;
};

/// A length-T sequence of N1 x N2 observations.
struct MatrixSeries {
  std::vector<Mat> obs;

  Index size() const { return static_cast<Index>(obs.size()); }
  Index rows() const { return obs.empty() ? 0 : obs.front().rows(); }
  Index cols() const { return obs.empty() ? 0 : obs.front().cols(); }
  const Mat& operator[](Index t) const { return obs[static_cast<size_t>(t)]; }
  /// Throws if shapes are ragged or entries are not finite.
  void validate() const;
};

struct LagFactors {
  Mat u3;  ///< N1 x r1
  Mat u4;  ///< N2 x r2
};

struct RRMarParams {
  Mat u1;  ///< N1 x r1
  Mat u2;  ///< N2 x r2
  std::vector<LagFactors> lags;
  Mat sigma1;
  Mat sigma2;

  Dims dims() const;
};

struct PseudoStructParams {
  Dims dims;
  Mat delta_star;  ///< r1 x (N1-r1)
  Mat gamma_star;  ///< r2 x (N2-r2)
  std::vector<LagFactors> lags;
  Mat sigma1;
  Mat sigma2;

  /// [I; delta*], N1 x (N1-r1)
  Mat delta() const;
  /// [I; gamma*], N2 x (N2-r2)
  Mat gamma() const;
  /// Shape, finiteness and covariance checks (not stationarity).
  void validate() const;
};

/// Number of stored free entries excluding covariances:
/// r1 N1 (1+p) - r1^2 + r2 N2 (1+p) - r2^2.
long free_parameter_count(const PseudoStructParams& params);

/// Contemporaneous matrix of the pseudo-structural system in vecb ordering.
/// Block rows act on (Y11, Y21, Y12, Y22) equations in that order, so the
/// result is unit upper-triangular and det = 1.
Mat build_omega(const Mat& delta_star, const Mat& gamma_star, const Dims& dims);

/// Pi_j for every lag: zero except the bottom r1 r2 rows, which hold
/// (U4_j (x) U3_j)^T; columns follow vec(Y_{t-j}).
std::vector<Mat> build_pi(const std::vector<LagFactors>& lags, const Dims& dims);

/// Rotation to the identity-bottom normalization. Lag factors absorb the
/// rotations so every A_j is unchanged. Throws NonRotatableError when a
/// bottom block is singular.
PseudoStructParams rrmar_to_pseudo(const RRMarParams& params);

RRMarParams pseudo_to_reduced(const PseudoStructParams& params);

/// A_j = (U2 (x) U1)(U4_j (x) U3_j)^T for each lag.
std::vector<Mat> coefficient_matrices(const RRMarParams& params);
std::vector<Mat> coefficient_matrices(const PseudoStructParams& params);

/// pN x pN block companion of y_t = sum_j A_j y_{t-j} + e_t.
Mat companion_matrix(const std::vector<Mat>& coefficients);
Mat companion_matrix(const PseudoStructParams& params);

/// Structural companion pair: lhs = blockdiag(Omega P, I, ...),
/// rhs = [Pi_1 ... Pi_p; I 0; ...]. lhs^{-1} rhs equals companion_matrix.
struct StructuralCompanion {
  Mat lhs;
  Mat rhs;
};
StructuralCompanion structural_companion(const PseudoStructParams& params);

bool is_stationary(const PseudoStructParams& params, double margin = 0.0);

/// Row permutation putting an invertible r x r set of rows of u (N x r) at the
/// bottom, chosen by full-pivot LU; the remaining rows keep their order.
std::vector<int> rotatable_ordering(const Mat& u);

/// Scale each lag pair so the top-left entry of U3_j is +1 (skipped when it is 0).
/// Pi_j is unchanged.
std::vector<LagFactors> canonicalize_lags(const std::vector<LagFactors>& lags);

/// The three annihilated series of the pseudo-structural system, per t:
/// row-specific delta^T Y_t, column-specific Y_t gamma, joint delta^T Y_t gamma.
struct StructuralResiduals {
  std::vector<Mat> row;
  std::vector<Mat> column;
  std::vector<Mat> joint;
};
StructuralResiduals structural_residuals(const MatrixSeries& series, const PseudoStructParams& params);

}  // namespace rrmar
