#include "rrmar/model.hpp"

#include <algorithm>
#include <string>

#include "rrmar/errors.hpp"

namespace rrmar {

namespace {

std::string shape(const Mat& m) { return std::to_string(m.rows()) + "x" + std::to_string(m.cols()); }

void expect_shape(const Mat& m, Index rows, Index cols, const char* what) {
  if (m.rows() != rows || m.cols() != cols)
    throw DimensionError(std::string(what) + " has shape " + shape(m) + ", expected " + std::to_string(rows) + "x" +
                         std::to_string(cols));
}

void check_covariance(const Mat& s, Index n, const char* what) {
  expect_shape(s, n, n, what);
  require_finite(s, what);
  if (!s.isApprox(s.transpose(), 1e-10) && (s - s.transpose()).norm() > 1e-12)
    throw DimensionError(std::string(what) + " is not symmetric");
  cholesky_lower(s, what);
}

bool invertible(const Mat& b) {
  if (b.size() == 0) return true;
  Eigen::FullPivLU<Mat> lu(b);
  lu.setThreshold(1e-12);
  return lu.isInvertible();
}

}  // namespace

void Dims::validate() const {
  if (n1 < 1 || n2 < 1) throw DimensionError("dimensions must be positive");
  if (r1 < 1 || r1 > n1 || r2 < 1 || r2 > n2)
    throw DimensionError("ranks (" + std::to_string(r1) + "," + std::to_string(r2) + ") out of range for " +
                         std::to_string(n1) + "x" + std::to_string(n2));
  if (p < 1) throw DimensionError("lag order must be at least 1");
}

void MatrixSeries::validate() const {
  for (const Mat& y : obs) {
    if (y.rows() != rows() || y.cols() != cols()) throw DimensionError("matrix series has ragged shapes");
    require_finite(y, "matrix series");
  }
}

Dims RRMarParams::dims() const {
  Dims d{static_cast<int>(u1.rows()), static_cast<int>(u2.rows()), static_cast<int>(u1.cols()),
         static_cast<int>(u2.cols()), static_cast<int>(lags.size())};
  return d;
}

Mat PseudoStructParams::delta() const {
  const int a = dims.n1 - dims.r1;
  Mat d(dims.n1, a);
  d.topRows(a).setIdentity();
  d.bottomRows(dims.r1) = delta_star;
  return d;
}

Mat PseudoStructParams::gamma() const {
  const int b = dims.n2 - dims.r2;
  Mat g(dims.n2, b);
  g.topRows(b).setIdentity();
  g.bottomRows(dims.r2) = gamma_star;
  return g;
}

void PseudoStructParams::validate() const {
  dims.validate();
  expect_shape(delta_star, dims.r1, dims.n1 - dims.r1, "delta_star");
  expect_shape(gamma_star, dims.r2, dims.n2 - dims.r2, "gamma_star");
  require_finite(delta_star, "delta_star");
  require_finite(gamma_star, "gamma_star");
  if (static_cast<int>(lags.size()) != dims.p) throw DimensionError("number of lag factor pairs does not match p");
  for (const auto& l : lags) {
    expect_shape(l.u3, dims.n1, dims.r1, "u3");
    expect_shape(l.u4, dims.n2, dims.r2, "u4");
    require_finite(l.u3, "u3");
    require_finite(l.u4, "u4");
  }
  check_covariance(sigma1, dims.n1, "sigma1");
  check_covariance(sigma2, dims.n2, "sigma2");
}

long free_parameter_count(const PseudoStructParams& params) {
  long count = params.delta_star.size() + params.gamma_star.size();
  for (const auto& l : params.lags) count += l.u3.size() + l.u4.size();
  return count;
}

Mat build_omega(const Mat& delta_star, const Mat& gamma_star, const Dims& dims) {
  const Index a = dims.n1 - dims.r1;
  const Index b = dims.n2 - dims.r2;
  const Index r1 = dims.r1;
  const Index r2 = dims.r2;
  expect_shape(delta_star, r1, a, "delta_star");
  expect_shape(gamma_star, r2, b, "gamma_star");

  const Index o21 = a * b;        // Y21 block offset
  const Index o12 = o21 + r1 * b;  // Y12
  const Index o22 = o12 + a * r2;  // Y22
  const Index n = dims.n();
  const Mat dt = delta_star.transpose();  // a x r1
  const Mat gt = gamma_star.transpose();  // b x r2

  Mat omega = Mat::Identity(n, n);
  // delta^T Y gamma: Y11 + delta*^T Y21 + Y12 gamma* + delta*^T Y22 gamma*
  omega.block(0, o21, a * b, r1 * b) = kron(Mat::Identity(b, b), dt);
  omega.block(0, o12, a * b, a * r2) = kron(gt, Mat::Identity(a, a));
  omega.block(0, o22, a * b, r1 * r2) = kron(gt, dt);
  // Y gamma (bottom rows): Y21 + Y22 gamma*
  omega.block(o21, o22, r1 * b, r1 * r2) = kron(gt, Mat::Identity(r1, r1));
  // delta^T Y (right cols): Y12 + delta*^T Y22
  omega.block(o12, o22, a * r2, r1 * r2) = kron(Mat::Identity(r2, r2), dt);
  return omega;
}

std::vector<Mat> build_pi(const std::vector<LagFactors>& lags, const Dims& dims) {
  if (lags.empty()) throw DimensionError("build_pi: at least one lag is required");
  const Index n = dims.n();
  const Index k = static_cast<Index>(dims.r1) * dims.r2;
  std::vector<Mat> pis;
  pis.reserve(lags.size());
  for (const auto& l : lags) {
    expect_shape(l.u3, dims.n1, dims.r1, "u3");
    expect_shape(l.u4, dims.n2, dims.r2, "u4");
    Mat pi = Mat::Zero(n, n);
    pi.bottomRows(k) = kron(l.u4, l.u3).transpose();
    pis.push_back(std::move(pi));
  }
  return pis;
}

std::vector<int> rotatable_ordering(const Mat& u) {
  const Index n = u.rows();
  const Index r = u.cols();
  Eigen::FullPivLU<Mat> lu(u);
  const auto& idx = lu.permutationP().indices();
  std::vector<int> front, back;
  for (Index i = 0; i < n; ++i) (idx(i) < r ? back : front).push_back(static_cast<int>(i));
  front.insert(front.end(), back.begin(), back.end());
  return front;
}

PseudoStructParams rrmar_to_pseudo(const RRMarParams& params) {
  const Dims d = params.dims();
  d.validate();
  const Mat b1 = params.u1.bottomRows(d.r1);
  const Mat b2 = params.u2.bottomRows(d.r2);
  const bool ok1 = invertible(b1);
  const bool ok2 = invertible(b2);
  if (!ok1 || !ok2) {
    std::vector<int> rows(d.n1), cols(d.n2);
    for (int i = 0; i < d.n1; ++i) rows[i] = i;
    for (int j = 0; j < d.n2; ++j) cols[j] = j;
    if (!ok1) rows = rotatable_ordering(params.u1);
    if (!ok2) cols = rotatable_ordering(params.u2);
    throw NonRotatableError(std::string("bottom block of ") + (!ok1 ? "U1" : "U2") +
                                " is singular; reorder rows/columns so an invertible block sits at the bottom",
                            rows, cols);
  }
  PseudoStructParams out;
  out.dims = d;
  const Mat b1inv = b1.fullPivLu().inverse();
  const Mat b2inv = b2.fullPivLu().inverse();
  out.delta_star = -(params.u1.topRows(d.n1 - d.r1) * b1inv).transpose();
  out.gamma_star = -(params.u2.topRows(d.n2 - d.r2) * b2inv).transpose();
  out.lags.reserve(params.lags.size());
  for (const auto& l : params.lags) out.lags.push_back({l.u3 * b1.transpose(), l.u4 * b2.transpose()});
  out.sigma1 = params.sigma1;
  out.sigma2 = params.sigma2;
  return out;
}

RRMarParams pseudo_to_reduced(const PseudoStructParams& params) {
  const Dims& d = params.dims;
  RRMarParams out;
  out.u1.resize(d.n1, d.r1);
  out.u1.topRows(d.n1 - d.r1) = -params.delta_star.transpose();
  out.u1.bottomRows(d.r1).setIdentity();
  out.u2.resize(d.n2, d.r2);
  out.u2.topRows(d.n2 - d.r2) = -params.gamma_star.transpose();
  out.u2.bottomRows(d.r2).setIdentity();
  out.lags = params.lags;
  out.sigma1 = params.sigma1;
  out.sigma2 = params.sigma2;
  return out;
}

std::vector<Mat> coefficient_matrices(const RRMarParams& params) {
  const Mat k = kron(params.u2, params.u1);
  std::vector<Mat> out;
  out.reserve(params.lags.size());
  for (const auto& l : params.lags) out.push_back(k * kron(l.u4, l.u3).transpose());
  return out;
}

std::vector<Mat> coefficient_matrices(const PseudoStructParams& params) {
  return coefficient_matrices(pseudo_to_reduced(params));
}

Mat companion_matrix(const std::vector<Mat>& coefficients) {
  if (coefficients.empty()) throw DimensionError("companion_matrix: no lags");
  const Index n = coefficients.front().rows();
  const Index p = static_cast<Index>(coefficients.size());
  Mat c = Mat::Zero(n * p, n * p);
  for (Index j = 0; j < p; ++j) c.block(0, j * n, n, n) = coefficients[j];
  if (p > 1) c.bottomLeftCorner(n * (p - 1), n * (p - 1)).setIdentity();
  return c;
}

Mat companion_matrix(const PseudoStructParams& params) { return companion_matrix(coefficient_matrices(params)); }

StructuralCompanion structural_companion(const PseudoStructParams& params) {
  const Dims& d = params.dims;
  const Index n = d.n();
  const Index p = d.p;
  const Mat omega_p =
      build_omega(params.delta_star, params.gamma_star, d) * vecb_permutation(d.n1, d.n2, d.r1, d.r2).matrix();
  const auto pis = build_pi(params.lags, d);
  StructuralCompanion sc{Mat::Identity(n * p, n * p), Mat::Zero(n * p, n * p)};
  sc.lhs.topLeftCorner(n, n) = omega_p;
  for (Index j = 0; j < p; ++j) sc.rhs.block(0, j * n, n, n) = pis[j];
  if (p > 1) sc.rhs.bottomLeftCorner(n * (p - 1), n * (p - 1)).setIdentity();
  return sc;
}

bool is_stationary(const PseudoStructParams& params, double margin) {
  return spectral_radius(companion_matrix(params)) < 1.0 - margin;
}

std::vector<LagFactors> canonicalize_lags(const std::vector<LagFactors>& lags) {
  std::vector<LagFactors> out = lags;
  for (auto& l : out) {
    if (l.u3.size() == 0) continue;
    const double c = l.u3(0, 0);
    if (c == 0.0) continue;
    l.u3 /= c;
    l.u4 *= c;
  }
  return out;
}

StructuralResiduals structural_residuals(const MatrixSeries& series, const PseudoStructParams& params) {
  const Dims& d = params.dims;
  if (series.rows() != d.n1 || series.cols() != d.n2)
    throw DimensionError("structural_residuals: series is " + std::to_string(series.rows()) + "x" +
                         std::to_string(series.cols()) + ", model is " + std::to_string(d.n1) + "x" +
                         std::to_string(d.n2));
  const Mat delta = params.delta();
  const Mat gamma = params.gamma();
  StructuralResiduals out;
  out.row.reserve(series.obs.size());
  out.column.reserve(series.obs.size());
  out.joint.reserve(series.obs.size());
  for (const Mat& y : series.obs) {
    out.row.push_back(delta.transpose() * y);
    out.column.push_back(y * gamma);
    out.joint.push_back(delta.transpose() * y * gamma);
  }
  return out;
}

}  // namespace rrmar
