#pragma once

// Dense kernels shared by the model, likelihood and simulation code.
//
// Matrices are Eigen::MatrixXd (column-major storage). vec() stacks columns
// top to bottom, which coincides with the storage order.

#include <vector>

#include <Eigen/Dense>

#include "rrmar/random.hpp"

namespace rrmar {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using Index = Eigen::Index;

/// Throws NonFiniteError naming `what` if any entry is NaN or infinite.
void require_finite(const Mat& m, const char* what);

/// Source-to-target index map: vecb(Y)[target_of[s]] == vec(Y)[s].
struct PermutationSpec {
  std::vector<Index> target_of;

  Index size() const { return static_cast<Index>(target_of.size()); }
  bool is_bijection() const;
  PermutationSpec inverse() const;
  /// Permutation matrix P with (P * v)[target_of[s]] = v[s].
  Mat matrix() const;
  Vec apply(const Vec& v) const;
};

Mat kron(const Mat& a, const Mat& b);

Vec vec(const Mat& m);
Mat unvec(const Vec& v, Index rows, Index cols);

/// Block vectorization (vec(Y11), vec(Y21), vec(Y12), vec(Y22)) of the partition
/// with Y11 of size (rows-r1) x (cols-r2) in the top-left corner.
Vec vecb(const Mat& m, Index r1, Index r2);
Mat unvecb(const Vec& v, Index rows, Index cols, Index r1, Index r2);

PermutationSpec vecb_permutation(Index n1, Index n2, Index r1, Index r2);

/// Default relative rank threshold max(rows, cols) * eps.
double default_rank_tol(const Mat& m);

/// Numerical rank from the SVD; singular values <= tol * sigma_max count as zero.
Index numerical_rank(const Mat& m, double tol = -1.0);

/// Orthonormal basis B of the left null space of m (B^T m = 0), computed from a
/// full SVD. Width is rows(m) - rank(m); a full-row-rank input gives a 0-column
/// matrix. tol < 0 selects default_rank_tol.
Mat null_space_basis(const Mat& m, double tol = -1.0);

/// Orthonormal basis of the column space of m.
Mat column_space_basis(const Mat& m, double tol = -1.0);

/// The three complementary pieces of N((U2 (x) U1)^T).
struct KronNullBases {
  Mat column_specific;  ///< N(U2^T) (x) C(U1), width (N2-r2)*r1
  Mat row_specific;     ///< C(U2) (x) N(U1^T), width r2*(N1-r1)
  Mat joint;            ///< N(U2^T) (x) N(U1^T), width (N2-r2)*(N1-r1)
};

KronNullBases kron_null_decomposition(const Mat& u1, const Mat& u2);

/// Largest eigenvalue modulus (dense eigen-decomposition).
double spectral_radius(const Mat& m);

/// Frobenius-nearest PSD matrix by eigenvalue clamping. When a clamp happens,
/// 1e-12 is added to the diagonal; PSD inputs come back as their symmetric part.
Mat nearest_psd(const Mat& m);
inline constexpr double kPsdJitter = 1e-12;

/// Lower Cholesky factor; throws NotPositiveDefinite.
Mat cholesky_lower(const Mat& m, const char* what = "matrix");

/// log|m| for symmetric positive definite m (via Cholesky).
double log_det_spd(const Mat& m);

/// Draw E with vec(E) ~ N(vec(mean), sigma2 (x) sigma1) as mean + L1 Z L2^T.
Mat sample_matrix_normal(Rng& rng, const Mat& mean, const Mat& sigma1, const Mat& sigma2);

/// Same draw with precomputed lower Cholesky factors.
Mat sample_matrix_normal_chol(Rng& rng, const Mat& mean, const Mat& chol1, const Mat& chol2);

}  // namespace rrmar
