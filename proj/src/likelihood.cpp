#include "rrmar/likelihood.hpp"

#include <cmath>
#include <limits>

#include "rrmar/errors.hpp"

namespace rrmar {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Column j of L is exp(th_jj) * (1, m_{j+1,j}, ..., m_{n-1,j}) below the
// diagonal: a log scale per column and scale-free multipliers.
Mat cholesky_factor_from(const Vec& th, Index offset, int n, bool pin_first) {
  Mat l = Mat::Zero(n, n);
  Index k = offset;
  for (int j = 0; j < n; ++j) {
    const double scale = (pin_first && j == 0) ? 1.0 : std::exp(th(k++));
    l(j, j) = scale;
    for (int i = j + 1; i < n; ++i) l(i, j) = th(k++) * scale;
  }
  return l;
}

void store_cholesky_factor(const Mat& l, Vec& th, Index offset, bool pin_first) {
  Index k = offset;
  for (Index j = 0; j < l.cols(); ++j) {
    if (!(pin_first && j == 0)) th(k++) = std::log(l(j, j));
    for (Index i = j + 1; i < l.rows(); ++i) th(k++) = l(i, j) / l(j, j);
  }
}

// Chain rule for dL (lower triangle) into the theta coordinates of a factor.
void scatter_cholesky_gradient(const Mat& dl, const Mat& l, Vec& grad, Index offset, bool pin_first) {
  Index k = offset;
  for (Index j = 0; j < l.cols(); ++j) {
    if (!(pin_first && j == 0)) {
      double g = 0.0;
      for (Index i = j; i < l.rows(); ++i) g += dl(i, j) * l(i, j);
      grad(k++) = g;
    }
    for (Index i = j + 1; i < l.rows(); ++i) grad(k++) = dl(i, j) * l(j, j);
  }
}

// Gradients of a scalar f with respect to X and Y, given D = df/dK and K = kron(X, Y).
void kron_gradient(const Mat& d, const Mat& x, const Mat& y, Mat& dx, Mat& dy) {
  const Index p = y.rows();
  const Index q = y.cols();
  dx.resize(x.rows(), x.cols());
  dy = Mat::Zero(p, q);
  for (Index j = 0; j < x.cols(); ++j) {
    for (Index i = 0; i < x.rows(); ++i) {
      const auto blk = d.block(i * p, j * q, p, q);
      dx(i, j) = blk.cwiseProduct(y).sum();
      dy.noalias() += x(i, j) * blk;
    }
  }
}

Mat lower_inverse(const Mat& l) {
  return l.triangularView<Eigen::Lower>().solve(Mat::Identity(l.rows(), l.cols()));
}

}  // namespace

PackingLayout::PackingLayout(const Dims& d) : dims(d) {
  d.validate();
  delta = 0;
  gamma = delta + delta_size();
  lags = gamma + gamma_size();
  sigma1 = lags + static_cast<Index>(d.p) * (d.n1 * d.r1 + d.n2 * d.r2);
  sigma2 = sigma1 + sigma1_size();
  size = sigma2 + sigma2_size();
}

void normalize_covariance_scale(PseudoStructParams& params) {
  const double s = params.sigma1(0, 0);
  if (!(s > 0.0)) throw NotPositiveDefinite("sigma1(0,0) must be positive");
  params.sigma1 /= s;
  params.sigma2 *= s;
}

ThetaVector pack(const PseudoStructParams& in) {
  in.validate();
  PseudoStructParams params = in;
  normalize_covariance_scale(params);
  const Dims& d = params.dims;
  PackingLayout layout(d);
  Vec th(layout.size);
  const int a = d.n1 - d.r1;
  const int b = d.n2 - d.r2;
  for (int r = 0; r < d.r1; ++r)
    for (int c = 0; c < a; ++c) th(layout.delta + r * a + c) = params.delta_star(r, c);
  for (int r = 0; r < d.r2; ++r)
    for (int c = 0; c < b; ++c) th(layout.gamma + r * b + c) = params.gamma_star(r, c);
  for (int j = 0; j < d.p; ++j) {
    th.segment(layout.u3(j), params.lags[j].u3.size()) = vec(params.lags[j].u3);
    th.segment(layout.u4(j), params.lags[j].u4.size()) = vec(params.lags[j].u4);
  }
  Mat l1 = cholesky_lower(params.sigma1, "sigma1");
  l1(0, 0) = 1.0;
  store_cholesky_factor(l1, th, layout.sigma1, true);
  store_cholesky_factor(cholesky_lower(params.sigma2, "sigma2"), th, layout.sigma2, false);
  return {th, layout};
}

PseudoStructParams unpack(const Vec& th, const PackingLayout& layout) {
  if (th.size() != layout.size) throw DimensionError("theta length does not match its layout");
  const Dims& d = layout.dims;
  const int a = d.n1 - d.r1;
  const int b = d.n2 - d.r2;
  PseudoStructParams out;
  out.dims = d;
  out.delta_star.resize(d.r1, a);
  for (int r = 0; r < d.r1; ++r)
    for (int c = 0; c < a; ++c) out.delta_star(r, c) = th(layout.delta + r * a + c);
  out.gamma_star.resize(d.r2, b);
  for (int r = 0; r < d.r2; ++r)
    for (int c = 0; c < b; ++c) out.gamma_star(r, c) = th(layout.gamma + r * b + c);
  for (int j = 0; j < d.p; ++j) {
    LagFactors l;
    l.u3 = unvec(th.segment(layout.u3(j), d.n1 * d.r1), d.n1, d.r1);
    l.u4 = unvec(th.segment(layout.u4(j), d.n2 * d.r2), d.n2, d.r2);
    out.lags.push_back(std::move(l));
  }
  const Mat l1 = cholesky_factor_from(th, layout.sigma1, d.n1, true);
  const Mat l2 = cholesky_factor_from(th, layout.sigma2, d.n2, false);
  out.sigma1 = l1 * l1.transpose();
  out.sigma2 = l2 * l2.transpose();
  return out;
}

PseudoStructParams unpack(const ThetaVector& theta) { return unpack(theta.values, theta.layout); }

LogLikValue loglik(const ThetaVector& theta, const MatrixSeries& data, bool per_observation) {
  const PackingLayout& layout = theta.layout;
  const Dims& d = layout.dims;
  if (data.rows() != d.n1 || data.cols() != d.n2) throw DimensionError("loglik: data shape does not match dims");
  if (data.size() <= d.p) throw DimensionError("loglik: need T > p observations");

  const Index n = d.n();
  const Mat l1 = cholesky_factor_from(theta.values, layout.sigma1, d.n1, true);
  const Mat l2 = cholesky_factor_from(theta.values, layout.sigma2, d.n2, false);
  if (!l1.allFinite() || !l2.allFinite()) throw NotPositiveDefinite("covariance coordinates overflow");
  const PseudoStructParams params = unpack(theta);

  const Mat omega = build_omega(params.delta_star, params.gamma_star, d);
  const PermutationSpec perm = vecb_permutation(d.n1, d.n2, d.r1, d.r2);
  const Mat p_mat = perm.matrix();
  const Mat omega_p = omega * p_mat;
  const std::vector<Mat> pis = build_pi(params.lags, d);

  // Covariance of Omega e*_t with e*_t = vecb(E_t) = P vec(E_t).
  const Mat sigma = kron(params.sigma2, params.sigma1);
  const Mat v = omega_p * sigma * omega_p.transpose();
  const Eigen::LLT<Mat> llt(0.5 * (v + v.transpose()));
  if (llt.info() != Eigen::Success) throw NotPositiveDefinite("structural error covariance is not positive definite");

  const double logdet1 = 2.0 * l1.diagonal().array().log().sum();
  const double logdet2 = 2.0 * l2.diagonal().array().log().sum();
  const double per_t_const = -0.5 * (d.n2 * logdet1 + d.n1 * logdet2);

  const Index t_count = data.size();
  Vec terms(t_count - d.p);
  Vec r(n);
  for (Index t = d.p; t < t_count; ++t) {
    r.noalias() = omega_p * vec(data[t]);
    for (int j = 0; j < d.p; ++j) r.noalias() -= pis[j] * vec(data[t - 1 - j]);
    const Vec z = llt.matrixL().solve(r);
    terms(t - d.p) = per_t_const - 0.5 * z.squaredNorm();
  }
  LogLikValue out;
  double total = 0.0;
  for (Index i = 0; i < terms.size(); ++i) total += terms(i);
  out.value = total;
  if (per_observation) out.per_observation = terms;
  return out;
}

SufficientStats::SufficientStats(const MatrixSeries& data, int lags) : p(lags) {
  data.validate();
  if (data.size() <= p) throw DimensionError("need T > p observations");
  const Index n = data.rows() * data.cols();
  n_eff = data.size() - p;
  syy = Mat::Zero(n, n);
  syx = Mat::Zero(n, n * p);
  sxx = Mat::Zero(n * p, n * p);
  Vec x(n * p);
  for (Index t = p; t < data.size(); ++t) {
    const Vec y = vec(data[t]);
    for (int j = 0; j < p; ++j) x.segment(j * n, n) = vec(data[t - 1 - j]);
    syy.noalias() += y * y.transpose();
    syx.noalias() += y * x.transpose();
    sxx.noalias() += x * x.transpose();
  }
}

LikelihoodModel::LikelihoodModel(const MatrixSeries& data, const Dims& dims)
    : layout_(dims), stats_(data, dims.p) {
  if (data.rows() != dims.n1 || data.cols() != dims.n2)
    throw DimensionError("likelihood: data shape does not match dims");
  const Index n = dims.n();
  const int p = dims.p;
  y_.resize(n, stats_.n_eff);
  x_.resize(n * p, stats_.n_eff);
  for (Index t = p; t < data.size(); ++t) {
    y_.col(t - p) = vec(data[t]);
    for (int j = 0; j < p; ++j) x_.col(t - p).segment(j * n, n) = vec(data[t - 1 - j]);
  }
}

double LikelihoodModel::evaluate(const Vec& th, Vec* grad) const {
  const PackingLayout& lay = layout_;
  const Dims& d = lay.dims;
  if (th.size() != lay.size) throw DimensionError("theta length does not match its layout");
  const int n1 = d.n1, n2 = d.n2, r1 = d.r1, r2 = d.r2, p = d.p;
  const int a = n1 - r1;
  const int b = n2 - r2;
  const Index n = d.n();
  const Index k = static_cast<Index>(r1) * r2;
  const double n_eff = static_cast<double>(stats_.n_eff);

  Mat u1(n1, r1);
  u1.bottomRows(r1).setIdentity();
  for (int r = 0; r < r1; ++r)
    for (int c = 0; c < a; ++c) u1(c, r) = -th(lay.delta + r * a + c);
  Mat u2(n2, r2);
  u2.bottomRows(r2).setIdentity();
  for (int r = 0; r < r2; ++r)
    for (int c = 0; c < b; ++c) u2(c, r) = -th(lay.gamma + r * b + c);

  const Mat kk = kron(u2, u1);
  Mat c_stack(n * p, k);
  for (int j = 0; j < p; ++j) {
    const Eigen::Map<const Mat> u3(th.data() + lay.u3(j), n1, r1);
    const Eigen::Map<const Mat> u4(th.data() + lay.u4(j), n2, r2);
    c_stack.middleRows(j * n, n) = kron(u4, u3);
  }
  const Mat a_mat = kk * c_stack.transpose();  // N x Np

  const Mat l1 = cholesky_factor_from(th, lay.sigma1, n1, true);
  const Mat l2 = cholesky_factor_from(th, lay.sigma2, n2, false);
  if (!l1.allFinite() || !l2.allFinite() || (l1.diagonal().array() <= 0.0).any() ||
      (l2.diagonal().array() <= 0.0).any())
    return kNegInf;
  const Mat l1inv = lower_inverse(l1);
  const Mat l2inv = lower_inverse(l2);
  const Mat w1 = l1inv.transpose() * l1inv;
  const Mat w2 = l2inv.transpose() * l2inv;

  Mat e = y_;
  e.noalias() -= a_mat * x_;
  Mat see(n, n);
  see.setZero();
  see.selfadjointView<Eigen::Lower>().rankUpdate(e);
  see.triangularView<Eigen::StrictlyUpper>() = see.transpose();

  Mat p1 = Mat::Zero(n1, n1);
  Mat p2(n2, n2);
  for (int l = 0; l < n2; ++l) {
    for (int j = 0; j < n2; ++j) {
      const auto blk = see.block(j * n1, l * n1, n1, n1);
      p1.noalias() += w2(j, l) * blk;
      p2(j, l) = w1.cwiseProduct(blk).sum();
    }
  }
  const double quad = w1.cwiseProduct(p1).sum();
  const double logdet1 = 2.0 * l1.diagonal().array().log().sum();
  const double logdet2 = 2.0 * l2.diagonal().array().log().sum();
  const double value = -0.5 * n_eff * (n2 * logdet1 + n1 * logdet2) - 0.5 * quad;
  if (!std::isfinite(value)) return kNegInf;
  if (grad == nullptr) return value;

  grad->resize(lay.size);
  const Mat w = kron(w2, w1);
  const Mat ga = w * (e * x_.transpose());  // dl/dA
  const Mat dk = ga * c_stack;                // dl/d(U2 (x) U1)
  const Mat dc = ga.transpose() * kk;         // dl/d[B_1; ...; B_p]
  Mat du1, du2;
  kron_gradient(dk, u2, u1, du2, du1);
  for (int r = 0; r < r1; ++r)
    for (int c = 0; c < a; ++c) (*grad)(lay.delta + r * a + c) = -du1(c, r);
  for (int r = 0; r < r2; ++r)
    for (int c = 0; c < b; ++c) (*grad)(lay.gamma + r * b + c) = -du2(c, r);
  for (int j = 0; j < p; ++j) {
    const Eigen::Map<const Mat> u3(th.data() + lay.u3(j), n1, r1);
    const Eigen::Map<const Mat> u4(th.data() + lay.u4(j), n2, r2);
    Mat du3, du4;
    kron_gradient(dc.middleRows(j * n, n), u4, u3, du4, du3);
    grad->segment(lay.u3(j), du3.size()) = vec(du3);
    grad->segment(lay.u4(j), du4.size()) = vec(du4);
  }
  const Mat sigma1 = l1 * l1.transpose();
  const Mat sigma2 = l2 * l2.transpose();
  const Mat g1 = 0.5 * w1 * (p1 - n_eff * n2 * sigma1) * w1;
  const Mat g2 = 0.5 * w2 * (p2 - n_eff * n1 * sigma2) * w2;
  scatter_cholesky_gradient(2.0 * g1 * l1, l1, *grad, lay.sigma1, true);
  scatter_cholesky_gradient(2.0 * g2 * l2, l2, *grad, lay.sigma2, false);
  return value;
}

Vec LikelihoodModel::gradient(const Vec& theta) const {
  Vec g;
  evaluate(theta, &g);
  return g;
}

Vec grad_loglik(const ThetaVector& theta, const MatrixSeries& data) {
  return LikelihoodModel(data, theta.layout.dims).gradient(theta.values);
}

Vec grad_loglik_fd(const LikelihoodModel& model, const Vec& theta) {
  const double base = std::cbrt(std::numeric_limits<double>::epsilon());
  Vec g(theta.size());
  Vec work = theta;
  for (Index i = 0; i < theta.size(); ++i) {
    const double h = base * (1.0 + std::abs(theta(i)));
    work(i) = theta(i) + h;
    const double fp = model.value(work);
    work(i) = theta(i) - h;
    const double fm = model.value(work);
    work(i) = theta(i);
    g(i) = (fp - fm) / (2.0 * h);
  }
  return g;
}

Mat gauge_directions(const Vec& theta, const PackingLayout& layout) {
  const Dims& d = layout.dims;
  Mat g = Mat::Zero(layout.size, d.p);
  for (int j = 0; j < d.p; ++j) {
    g.col(j).segment(layout.u3(j), d.n1 * d.r1) = theta.segment(layout.u3(j), d.n1 * d.r1);
    g.col(j).segment(layout.u4(j), d.n2 * d.r2) = -theta.segment(layout.u4(j), d.n2 * d.r2);
  }
  return g;
}

InformationResult observed_information(const LikelihoodModel& model, const Vec& theta) {
  const Index m = theta.size();
  const double base = std::cbrt(std::numeric_limits<double>::epsilon());
  Mat hess(m, m);
  Vec work = theta;
  for (Index i = 0; i < m; ++i) {
    const double h = base * (1.0 + std::abs(theta(i)));
    work(i) = theta(i) + h;
    const Vec gp = model.gradient(work);
    work(i) = theta(i) - h;
    const Vec gm = model.gradient(work);
    work(i) = theta(i);
    hess.col(i) = (gp - gm) / (2.0 * h);
  }
  if (!hess.allFinite()) throw NumericalError("observed information has non-finite entries");

  InformationResult out;
  out.raw = -0.5 * (hess + hess.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> full(out.raw, Eigen::EigenvaluesOnly);
  out.norm = full.eigenvalues().cwiseAbs().maxCoeff();

  const Mat q = null_space_basis(gauge_directions(theta, model.layout()));
  const Mat reduced = q.transpose() * out.raw * q;
  Eigen::SelfAdjointEigenSolver<Mat> es(reduced, Eigen::EigenvaluesOnly);
  out.min_eigenvalue = es.eigenvalues().size() > 0 ? es.eigenvalues().minCoeff() : 0.0;
  out.saddle = out.min_eigenvalue < -kSaddleTol * out.norm;
  out.projected = full.eigenvalues().minCoeff() < 0.0;
  out.info = out.projected ? nearest_psd(out.raw) : out.raw;
  return out;
}

InformationResult observed_information(const ThetaVector& theta, const MatrixSeries& data) {
  return observed_information(LikelihoodModel(data, theta.layout.dims), theta.values);
}

}  // namespace rrmar
