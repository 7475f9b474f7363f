#include "rrmar/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "rrmar/errors.hpp"

namespace rrmar {

void require_finite(const Mat& m, const char* what) {
  if (!m.allFinite()) throw NonFiniteError(std::string(what) + " contains non-finite entries");
}

bool PermutationSpec::is_bijection() const {
  std::vector<char> seen(target_of.size(), 0);
  for (Index t : target_of) {
    if (t < 0 || t >= size() || seen[t]) return false;
    seen[t] = 1;
  }
  return true;
}

PermutationSpec PermutationSpec::inverse() const {
  PermutationSpec inv;
  inv.target_of.resize(target_of.size());
  for (Index s = 0; s < size(); ++s) inv.target_of[target_of[s]] = s;
  return inv;
}

Mat PermutationSpec::matrix() const {
  Mat p = Mat::Zero(size(), size());
  for (Index s = 0; s < size(); ++s) p(target_of[s], s) = 1.0;
  return p;
}

Vec PermutationSpec::apply(const Vec& v) const {
  if (v.size() != size()) throw DimensionError("permutation length does not match vector");
  Vec out(v.size());
  for (Index s = 0; s < size(); ++s) out(target_of[s]) = v(s);
  return out;
}

Mat kron(const Mat& a, const Mat& b) {
  Mat out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index j = 0; j < a.cols(); ++j)
    for (Index i = 0; i < a.rows(); ++i)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

Vec vec(const Mat& m) { return Eigen::Map<const Vec>(m.data(), m.size()); }

Mat unvec(const Vec& v, Index rows, Index cols) {
  if (v.size() != rows * cols) throw DimensionError("unvec: length does not match shape");
  return Eigen::Map<const Mat>(v.data(), rows, cols);
}

namespace {

void check_ranks(Index n1, Index n2, Index r1, Index r2) {
  if (r1 < 0 || r1 > n1 || r2 < 0 || r2 > n2)
    throw DimensionError("rank out of range: (" + std::to_string(r1) + "," + std::to_string(r2) +
                         ") for a " + std::to_string(n1) + "x" + std::to_string(n2) + " matrix");
}

}  // namespace

PermutationSpec vecb_permutation(Index n1, Index n2, Index r1, Index r2) {
  check_ranks(n1, n2, r1, r2);
  const Index a = n1 - r1;
  const Index b = n2 - r2;
  const Index off21 = a * b;
  const Index off12 = off21 + r1 * b;
  const Index off22 = off12 + a * r2;
  PermutationSpec p;
  p.target_of.resize(n1 * n2);
  for (Index j = 0; j < n2; ++j) {
    for (Index i = 0; i < n1; ++i) {
      Index t;
      if (i < a && j < b)
        t = i + a * j;
      else if (j < b)
        t = off21 + (i - a) + r1 * j;
      else if (i < a)
        t = off12 + i + a * (j - b);
      else
        t = off22 + (i - a) + r1 * (j - b);
      p.target_of[i + n1 * j] = t;
    }
  }
  return p;
}

Vec vecb(const Mat& m, Index r1, Index r2) {
  check_ranks(m.rows(), m.cols(), r1, r2);
  const Index a = m.rows() - r1;
  const Index b = m.cols() - r2;
  Vec out(m.size());
  Index k = 0;
  auto put = [&](const Mat& blk) {
    out.segment(k, blk.size()) = vec(blk);
    k += blk.size();
  };
  put(m.topLeftCorner(a, b));
  put(m.bottomLeftCorner(r1, b));
  put(m.topRightCorner(a, r2));
  put(m.bottomRightCorner(r1, r2));
  return out;
}

Mat unvecb(const Vec& v, Index rows, Index cols, Index r1, Index r2) {
  if (v.size() != rows * cols) throw DimensionError("unvecb: length does not match shape");
  return unvec(vecb_permutation(rows, cols, r1, r2).inverse().apply(v), rows, cols);
}

double default_rank_tol(const Mat& m) {
  return static_cast<double>(std::max(m.rows(), m.cols())) * std::numeric_limits<double>::epsilon();
}

Index numerical_rank(const Mat& m, double tol) {
  if (m.size() == 0) return 0;
  if (tol < 0) tol = default_rank_tol(m);
  Eigen::JacobiSVD<Mat> svd(m);
  const Vec& s = svd.singularValues();
  if (s.size() == 0 || s(0) == 0.0) return 0;
  Index r = 0;
  for (Index i = 0; i < s.size(); ++i)
    if (s(i) > tol * s(0)) ++r;
  return r;
}

Mat null_space_basis(const Mat& m, double tol) {
  if (m.rows() == 0) return Mat(0, 0);
  if (m.cols() == 0) return Mat::Identity(m.rows(), m.rows());
  if (tol < 0) tol = default_rank_tol(m);
  Eigen::JacobiSVD<Mat> svd(m, Eigen::ComputeFullU);
  const Vec& s = svd.singularValues();
  Index rank = 0;
  if (s.size() > 0 && s(0) > 0.0)
    for (Index i = 0; i < s.size(); ++i)
      if (s(i) > tol * s(0)) ++rank;
  return svd.matrixU().rightCols(m.rows() - rank);
}

Mat column_space_basis(const Mat& m, double tol) {
  if (m.rows() == 0 || m.cols() == 0) return Mat(m.rows(), 0);
  if (tol < 0) tol = default_rank_tol(m);
  Eigen::JacobiSVD<Mat> svd(m, Eigen::ComputeFullU);
  const Vec& s = svd.singularValues();
  Index rank = 0;
  if (s(0) > 0.0)
    for (Index i = 0; i < s.size(); ++i)
      if (s(i) > tol * s(0)) ++rank;
  return svd.matrixU().leftCols(rank);
}

KronNullBases kron_null_decomposition(const Mat& u1, const Mat& u2) {
  if (numerical_rank(u1) != u1.cols()) throw DimensionError("kron_null_decomposition: U1 is rank deficient");
  if (numerical_rank(u2) != u2.cols()) throw DimensionError("kron_null_decomposition: U2 is rank deficient");
  const Mat c1 = column_space_basis(u1);
  const Mat c2 = column_space_basis(u2);
  const Mat n1 = null_space_basis(u1);
  const Mat n2 = null_space_basis(u2);
  return {kron(n2, c1), kron(c2, n1), kron(n2, n1)};
}

double spectral_radius(const Mat& m) {
  if (m.rows() != m.cols()) throw DimensionError("spectral_radius: matrix is not square");
  if (m.size() == 0) return 0.0;
  Eigen::EigenSolver<Mat> es(m, false);
  if (es.info() != Eigen::Success) throw NumericalError("spectral_radius: eigen-decomposition failed");
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

Mat nearest_psd(const Mat& m) {
  if (m.rows() != m.cols()) throw DimensionError("nearest_psd: matrix is not square");
  const Mat sym = 0.5 * (m + m.transpose());
  if (sym.size() == 0) return sym;
  Eigen::SelfAdjointEigenSolver<Mat> es(sym);
  if (es.info() != Eigen::Success) throw NumericalError("nearest_psd: eigen-decomposition failed");
  if (es.eigenvalues().minCoeff() >= 0.0) return sym;
  const Vec clamped = es.eigenvalues().cwiseMax(0.0);
  Mat out = es.eigenvectors() * clamped.asDiagonal() * es.eigenvectors().transpose();
  out = 0.5 * (out + out.transpose());
  out.diagonal().array() += kPsdJitter;
  return out;
}

Mat cholesky_lower(const Mat& m, const char* what) {
  if (m.rows() != m.cols()) throw DimensionError(std::string(what) + " is not square");
  Eigen::LLT<Mat> llt(m);
  if (llt.info() != Eigen::Success) throw NotPositiveDefinite(std::string(what) + " is not positive definite");
  Mat l = llt.matrixL();
  if (!l.allFinite()) throw NotPositiveDefinite(std::string(what) + " is not positive definite");
  return l;
}

double log_det_spd(const Mat& m) {
  const Mat l = cholesky_lower(m);
  return 2.0 * l.diagonal().array().log().sum();
}

Mat sample_matrix_normal_chol(Rng& rng, const Mat& mean, const Mat& chol1, const Mat& chol2) {
  if (chol1.rows() != mean.rows() || chol2.rows() != mean.cols())
    throw DimensionError("sample_matrix_normal: covariance shapes do not match the mean");
  const Mat z = standard_normal(rng, mean.rows(), mean.cols());
  return mean + chol1 * z * chol2.transpose();
}

Mat sample_matrix_normal(Rng& rng, const Mat& mean, const Mat& sigma1, const Mat& sigma2) {
  return sample_matrix_normal_chol(rng, mean, cholesky_lower(sigma1, "sigma1"), cholesky_lower(sigma2, "sigma2"));
}

}  // namespace rrmar
